#include "linescan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "linescan/parallel.hpp"

namespace linescan {

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::TopToBottom: return "T2B";
    case Direction::BottomToTop: return "B2T";
    case Direction::LeftToRight: return "L2R";
    case Direction::RightToLeft: return "R2L";
  }
  return "?";
}

Direction parse_direction(std::string_view name) {
  for (Direction d : kDirections) {
    if (name == direction_name(d)) return d;
  }
  if (name == "TopToBottom") return Direction::TopToBottom;
  if (name == "BottomToTop") return Direction::BottomToTop;
  if (name == "LeftToRight") return Direction::LeftToRight;
  if (name == "RightToLeft") return Direction::RightToLeft;
  throw std::invalid_argument("unknown direction '" + std::string(name) + "'");
}

std::string_view precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view name) {
  if (name == "f32" || name == "float") return Precision::F32;
  if (name == "f64" || name == "double") return Precision::F64;
  throw std::invalid_argument("unknown precision '" + std::string(name) + "'");
}

std::string to_string(const Shape4& shape) {
  return std::to_string(shape.n) + "x" + std::to_string(shape.c) + "x" + std::to_string(shape.h) +
         "x" + std::to_string(shape.w);
}

std::string to_string(Layout layout) {
  if (layout.is_canonical()) return "Canonical";
  return "ScanMajor(" + std::string(direction_name(layout.direction())) + ")";
}

Index checked_size(const Shape4& shape) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw std::invalid_argument("tensor dims must be >= 1, got " + to_string(shape));
  }
  Index total = 1;
  for (Index dim : {shape.n, shape.c, shape.h, shape.w}) {
    if (dim > kMaxElements || total > kMaxElements / dim) {
      throw std::length_error("tensor " + to_string(shape) + " exceeds the 2^31 element index space");
    }
    total *= dim;
  }
  return total;
}

ScanGeometry::ScanGeometry(const Shape4& shape, Direction d)
    : direction(d),
      n(shape.n),
      c(shape.c),
      h(shape.h),
      w(shape.w),
      steps(is_vertical(d) ? shape.h : shape.w),
      positions(is_vertical(d) ? shape.w : shape.h) {}

Index layout_offset(const Shape4& shape, Layout layout, Index n, Index c, Index i, Index j) {
  if (layout.is_canonical()) return ((n * shape.c + c) * shape.h + i) * shape.w + j;
  const Direction d = layout.direction();
  Index step = 0;
  Index pos = 0;
  if (is_vertical(d)) {
    step = is_reversed(d) ? shape.h - 1 - i : i;
    pos = j;
  } else {
    step = is_reversed(d) ? shape.w - 1 - j : j;
    pos = i;
  }
  const Index positions = is_vertical(d) ? shape.w : shape.h;
  return ((step * shape.n + n) * shape.c + c) * positions + pos;
}

SliceView slice_view(const Shape4& shape, Layout layout, Direction d, Index n, Index c) {
  const ScanGeometry g(shape, d);
  auto at = [&](Index s, Index r) {
    return layout_offset(shape, layout, n, c, g.row(s, r), g.col(s, r));
  };
  SliceView view;
  view.origin = at(0, 0);
  view.step = g.steps > 1 ? at(1, 0) - view.origin : 0;
  view.pos = g.positions > 1 ? at(0, 1) - view.origin : 0;
  return view;
}

template <typename Scalar>
Tensor4<Scalar> make_tensor(const Shape4& shape, const Fill& fill) {
  Tensor4<Scalar> t(shape);
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, Zero>) {
          t.data().setZero();
        } else if constexpr (std::is_same_v<F, Constant>) {
          t.data().setConstant(static_cast<Scalar>(f.value));
        } else {
          Rng& rng = f.rng.get();
          for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<Scalar>(rng.uniform(f.lo, f.hi));
        }
      },
      fill);
  return t;
}

namespace {

// Copies src into dst slice by slice; layouts are arbitrary, logical content preserved.
template <typename Scalar>
void copy_logical(const Tensor4<Scalar>& src, Tensor4<Scalar>& dst) {
  const Shape4& shape = src.shape();
  // Iterate in dst's preferred scan order so writes are unit-stride.
  const Direction d = dst.layout().is_canonical() ? Direction::TopToBottom : dst.layout().direction();
  const ScanGeometry g(shape, d);
  const Scalar* in = src.data().data();
  Scalar* out = dst.data().data();
  parallel_for(shape.n * shape.c, [&](std::int64_t slice) {
    const Index n = slice / shape.c;
    const Index c = slice % shape.c;
    const SliceView sv = src.slice(d, n, c);
    const SliceView dv = dst.slice(d, n, c);
    for (Index s = 0; s < g.steps; ++s) {
      const Scalar* srow = in + sv.origin + s * sv.step;
      Scalar* drow = out + dv.origin + s * dv.step;
      for (Index r = 0; r < g.positions; ++r) drow[r * dv.pos] = srow[r * sv.pos];
    }
  });
}

}  // namespace

template <typename Scalar>
Tensor4<Scalar> to_layout(const Tensor4<Scalar>& t, Layout layout) {
  if (t.layout() == layout) return t;
  Tensor4<Scalar> out(t.shape(), layout);
  copy_logical(t, out);
  return out;
}

template <typename Scalar>
Tensor4<Scalar> to_scan_layout(const Tensor4<Scalar>& t, Direction d) {
  if (!t.layout().is_canonical()) {
    throw std::invalid_argument("to_scan_layout expects a Canonical tensor, got " + to_string(t.layout()));
  }
  return to_layout(t, Layout::scan_major(d));
}

template <typename Scalar>
Tensor4<Scalar> from_scan_layout(const Tensor4<Scalar>& t) {
  if (t.layout().is_canonical()) {
    throw std::invalid_argument("from_scan_layout called on a Canonical tensor");
  }
  return to_layout(t, Layout::canonical());
}

template <typename Scalar>
bool audit_layout(const Tensor4<Scalar>& t) {
  const Shape4& s = t.shape();
  if (t.size() != s.n * s.c * s.h * s.w) return false;
  std::vector<bool> seen(static_cast<std::size_t>(t.size()), false);
  for (Index n = 0; n < s.n; ++n)
    for (Index c = 0; c < s.c; ++c)
      for (Index i = 0; i < s.h; ++i)
        for (Index j = 0; j < s.w; ++j) {
          const Index off = t.offset(n, c, i, j);
          if (off < 0 || off >= t.size() || seen[static_cast<std::size_t>(off)]) return false;
          seen[static_cast<std::size_t>(off)] = true;
        }
  // Innermost axis: columns for Canonical, the pass's parallel axis for ScanMajor.
  if (t.layout().is_canonical()) {
    return s.w < 2 || t.offset(0, 0, 0, 1) - t.offset(0, 0, 0, 0) == 1;
  }
  const SliceView v = t.slice(t.layout().direction(), 0, 0);
  const ScanGeometry g(s, t.layout().direction());
  return g.positions < 2 || v.pos == 1;
}

template <typename Scalar>
double max_abs_diff(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (a.layout() == b.layout()) {
    return static_cast<double>((a.data() - b.data()).abs().maxCoeff());
  }
  const Tensor4<Scalar> bb = to_layout(b, a.layout());
  return static_cast<double>((a.data() - bb.data()).abs().maxCoeff());
}

template <typename Scalar>
bool logically_equal(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  if (!(a.shape() == b.shape())) return false;
  if (a.layout() == b.layout()) return (a.data() == b.data()).all();
  const Tensor4<Scalar> bb = to_layout(b, a.layout());
  return (a.data() == bb.data()).all();
}

#define LINESCAN_INSTANTIATE(S)                                                     \
  template Tensor4<S> make_tensor<S>(const Shape4&, const Fill&);                   \
  template Tensor4<S> to_layout<S>(const Tensor4<S>&, Layout);                      \
  template Tensor4<S> to_scan_layout<S>(const Tensor4<S>&, Direction);              \
  template Tensor4<S> from_scan_layout<S>(const Tensor4<S>&);                       \
  template bool audit_layout<S>(const Tensor4<S>&);                                 \
  template double max_abs_diff<S>(const Tensor4<S>&, const Tensor4<S>&);            \
  template bool logically_equal<S>(const Tensor4<S>&, const Tensor4<S>&);

LINESCAN_INSTANTIATE(float)
LINESCAN_INSTANTIATE(double)
#undef LINESCAN_INSTANTIATE

}  // namespace linescan
