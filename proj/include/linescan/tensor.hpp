#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>

#include <Eigen/Core>

#include "linescan/rng.hpp"

namespace linescan {

using Index = Eigen::Index;

/// Hard cap on elements per tensor; keeps every offset inside 32 bits.
inline constexpr Index kMaxElements = Index{1} << 31;

enum class Direction { TopToBottom, BottomToTop, LeftToRight, RightToLeft };

/// Fixed enumeration order; also the merge order of the directional passes.
inline constexpr std::array<Direction, 4> kDirections = {
    Direction::TopToBottom, Direction::BottomToTop, Direction::LeftToRight,
    Direction::RightToLeft};

constexpr bool is_vertical(Direction d) {
  return d == Direction::TopToBottom || d == Direction::BottomToTop;
}
constexpr bool is_reversed(Direction d) {
  return d == Direction::BottomToTop || d == Direction::RightToLeft;
}
constexpr int direction_index(Direction d) { return static_cast<int>(d); }

std::string_view direction_name(Direction d);
Direction parse_direction(std::string_view name);

enum class Precision { F32, F64 };

std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view name);

template <typename Scalar>
constexpr Precision precision_of() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>,
                "linescan tensors hold float or double");
  return std::is_same_v<Scalar, float> ? Precision::F32 : Precision::F64;
}

struct Shape4 {
  Index n = 1;
  Index c = 1;
  Index h = 1;
  Index w = 1;

  Index size() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& shape);

/// Validates dims >= 1 and the element cap; returns the element count.
Index checked_size(const Shape4& shape);

// A directional pass sees the tensor as `steps` sequential lines of
// `positions` values each. Vertical passes scan rows (steps = H,
// positions = W); horizontal passes scan columns. Reversed passes visit the
// scan axis back to front; the parallel axis keeps its natural order.
struct ScanGeometry {
  ScanGeometry(const Shape4& shape, Direction direction);

  Index row(Index step, Index pos) const {
    if (is_vertical(direction)) return is_reversed(direction) ? h - 1 - step : step;
    return pos;
  }
  Index col(Index step, Index pos) const {
    if (is_vertical(direction)) return pos;
    return is_reversed(direction) ? w - 1 - step : step;
  }

  Direction direction;
  Index n, c, h, w;
  Index steps;
  Index positions;
};

class Layout {
 public:
  enum class Kind { Canonical, ScanMajor };

  static constexpr Layout canonical() { return Layout(Kind::Canonical, Direction::TopToBottom); }
  static constexpr Layout scan_major(Direction d) { return Layout(Kind::ScanMajor, d); }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_canonical() const { return kind_ == Kind::Canonical; }
  /// Only meaningful for ScanMajor.
  constexpr Direction direction() const { return direction_; }

  constexpr bool operator==(const Layout& other) const {
    return kind_ == other.kind_ && (kind_ == Kind::Canonical || direction_ == other.direction_);
  }

 private:
  constexpr Layout(Kind kind, Direction d) : kind_(kind), direction_(d) {}
  Kind kind_;
  Direction direction_;
};

std::string to_string(Layout layout);

/// Physical offset of logical element (n, c, i, j).
///   Canonical:     ((n*C + c)*H + i)*W + j
///   ScanMajor(d):  ((s*N + n)*C + c)*P + r, with (s, r) the step/position of (i, j) under d
Index layout_offset(const Shape4& shape, Layout layout, Index n, Index c, Index i, Index j);

// Affine addressing of one (n, c) slice in scan order: offset(s, r) = origin + s*step + r*pos.
// Every layout is affine in (step, position) for every direction.
struct SliceView {
  Index origin = 0;
  Index step = 0;
  Index pos = 0;

  Index at(Index s, Index r) const { return origin + s * step + r * pos; }
};

SliceView slice_view(const Shape4& shape, Layout layout, Direction d, Index n, Index c);

template <typename Scalar>
class Tensor4 {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor4() = default;

  /// Contents are uninitialized.
  explicit Tensor4(const Shape4& shape, Layout layout = Layout::canonical())
      : shape_(shape), layout_(layout), data_(checked_size(shape)) {}

  const Shape4& shape() const { return shape_; }
  Layout layout() const { return layout_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  Index offset(Index n, Index c, Index i, Index j) const {
    if (layout_.is_canonical()) return ((n * shape_.c + c) * shape_.h + i) * shape_.w + j;
    return layout_offset(shape_, layout_, n, c, i, j);
  }

  Scalar& operator()(Index n, Index c, Index i, Index j) { return data_[offset(n, c, i, j)]; }
  const Scalar& operator()(Index n, Index c, Index i, Index j) const {
    return data_[offset(n, c, i, j)];
  }

  SliceView slice(Direction d, Index n, Index c) const {
    return slice_view(shape_, layout_, d, n, c);
  }

  void set_zero() { data_.setZero(); }

 private:
  Shape4 shape_{0, 0, 0, 0};
  Layout layout_ = Layout::canonical();
  Storage data_;
};

struct Zero {};
struct Constant {
  double value;
};
struct SeededUniform {
  std::reference_wrapper<Rng> rng;
  double lo;
  double hi;
};
using Fill = std::variant<Zero, Constant, SeededUniform>;

/// Canonical tensor filled per `fill`. Uniform fills draw in canonical order.
template <typename Scalar>
Tensor4<Scalar> make_tensor(const Shape4& shape, const Fill& fill);

template <typename Scalar>
Tensor4<Scalar> make_tensor(Index n, Index c, Index h, Index w, const Fill& fill) {
  return make_tensor<Scalar>(Shape4{n, c, h, w}, fill);
}

/// Physical transposition so the parallel axis of `d` is unit-stride.
template <typename Scalar>
Tensor4<Scalar> to_scan_layout(const Tensor4<Scalar>& t, Direction d);

template <typename Scalar>
Tensor4<Scalar> from_scan_layout(const Tensor4<Scalar>& t);

/// Copy of `t` in `layout` (plain copy if already there).
template <typename Scalar>
Tensor4<Scalar> to_layout(const Tensor4<Scalar>& t, Layout layout);

/// Walks all logical indices: offsets must form a permutation of [0, size)
/// and the expected innermost axis must be unit-stride.
template <typename Scalar>
bool audit_layout(const Tensor4<Scalar>& t);

/// Max |a - b| under logical indexing; layouts may differ.
template <typename Scalar>
double max_abs_diff(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b);

/// Exact logical equality; layouts may differ.
template <typename Scalar>
bool logically_equal(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b);

}  // namespace linescan
