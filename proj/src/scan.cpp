#include "linescan/scan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "linescan/parallel.hpp"

namespace linescan {

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::S0_NaivePerStep: return "S0";
    case Stage::S1_Fused: return "S1";
    case Stage::S2_ContiguousLayout: return "S2";
    case Stage::S3_TileReuse: return "S3";
    case Stage::S4_ChannelBlocked: return "S4";
    case Stage::S5_Compact: return "S5";
  }
  return "?";
}

std::string_view stage_long_name(Stage stage) {
  switch (stage) {
    case Stage::S0_NaivePerStep: return "S0_NaivePerStep";
    case Stage::S1_Fused: return "S1_Fused";
    case Stage::S2_ContiguousLayout: return "S2_ContiguousLayout";
    case Stage::S3_TileReuse: return "S3_TileReuse";
    case Stage::S4_ChannelBlocked: return "S4_ChannelBlocked";
    case Stage::S5_Compact: return "S5_Compact";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kStages) {
    if (name == stage_name(s) || name == stage_long_name(s)) return s;
  }
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

Layout native_layout(Stage stage, Direction d) {
  return stage_index(stage) < stage_index(Stage::S2_ContiguousLayout) ? Layout::canonical()
                                                                      : Layout::scan_major(d);
}

std::vector<Segment> scan_segments(Index steps, Index kchunk) {
  if (kchunk < 0) throw std::invalid_argument("kchunk must be >= 0");
  const Index len = kchunk == 0 ? steps : std::min(kchunk, steps);
  std::vector<Segment> segs;
  for (Index b = 0; b < steps; b += len) segs.push_back({b, std::min(b + len, steps)});
  return segs;
}

template <typename Scalar>
void validate_plan(const ScanPlan<Scalar>& plan, Index channels) {
  if (plan.kchunk < 0) throw std::invalid_argument("kchunk must be >= 0");
  if (plan.c_slice < 1) throw std::invalid_argument("c_slice must be >= 1");
  if (plan.stage == Stage::S5_Compact && plan.weight_mode != WeightMode::Shared) {
    throw std::invalid_argument("stage S5_Compact requires Shared weights");
  }
  if (plan.proxy) {
    const ProxyConfig<Scalar>& p = *plan.proxy;
    if (plan.weight_mode != WeightMode::Shared) throw std::invalid_argument("proxy requires Shared weights");
    if (p.c_proxy < 1 || p.c_proxy > channels) {
      throw std::invalid_argument("c_proxy " + std::to_string(p.c_proxy) + " outside [1, " +
                                  std::to_string(channels) + "]");
    }
    if (p.down.rows() != p.c_proxy || p.down.cols() != channels) {
      throw std::invalid_argument("proxy down matrix must be c_proxy x C");
    }
    if (p.up.rows() != channels || p.up.cols() != p.c_proxy) {
      throw std::invalid_argument("proxy up matrix must be C x c_proxy");
    }
  }
}

StabilityError::StabilityError(const StabilityViolation& v)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "stability bound violated at (n " << v.n << ", c " << v.c << ", step " << v.step
           << "): ||h|| = " << v.norm << " > " << v.bound;
        return os.str();
      }()),
      violation(v) {}

namespace {

template <typename Scalar>
struct Pass {
  ScanGeometry g;
  Shape4 shape;
  Layout layout;
  std::vector<Segment> segs;
  bool shared;
  Index c_slice;
  const Scalar* x;
  const Scalar* lam;
  const Scalar* u;
  const BandWeights<Scalar>* w;
  Scalar* y;
  Scalar* h;

  Index weight_channel(Index c) const { return shared ? 0 : c; }
  SliceView view(Index n, Index c) const { return slice_view(shape, layout, g.direction, n, c); }
};

// S0: one dispatch per step. Each step reads h_{s-1} back from the hidden tensor.
template <typename Scalar>
void run_per_step(const Pass<Scalar>& p) {
  const Index P = p.g.positions;
  const Index C = p.g.c;
  const Index seg_len = p.segs.front().end - p.segs.front().begin;
  std::vector<SliceView> views(static_cast<std::size_t>(p.g.n * C));
  for (Index k = 0; k < p.g.n * C; ++k) views[static_cast<std::size_t>(k)] = p.view(k / C, k % C);

  for (Index s = 0; s < p.g.steps; ++s) {
    const bool start = s % seg_len == 0;
    parallel_for(p.g.n * C, [&](std::int64_t k) {
      const Index n = k / C;
      const Index c = k % C;
      const SliceView& v = views[static_cast<std::size_t>(k)];
      const Scalar* wrow = p.w->row(s, n, p.weight_channel(c));
      const Index base = v.origin + s * v.step;
      const Index prev = base - v.step;
      for (Index r = 0; r < P; ++r) {
        const Scalar pl = (!start && r > 0) ? p.h[prev + (r - 1) * v.pos] : Scalar(0);
        const Scalar pc = !start ? p.h[prev + r * v.pos] : Scalar(0);
        const Scalar pr = (!start && r + 1 < P) ? p.h[prev + (r + 1) * v.pos] : Scalar(0);
        const Index at = base + r * v.pos;
        const Scalar t = wrow[3 * r] * pl + wrow[3 * r + 1] * pc + wrow[3 * r + 2] * pr + p.lam[at] * p.x[at];
        p.h[at] = t;
        p.y[at] = p.u[at] * t;
      }
    });
  }
}

// One slice, all steps of one segment, hidden state double-buffered locally.
template <typename Scalar, bool kUnitStride>
void fused_slice(const Pass<Scalar>& p, Segment seg, Index n, Index c, Scalar* prev, Scalar* cur) {
  const Index P = p.g.positions;
  const SliceView v = p.view(n, c);
  const Index stride = kUnitStride ? 1 : v.pos;
  std::fill(prev, prev + P, Scalar(0));
  for (Index s = seg.begin; s < seg.end; ++s) {
    const Scalar* __restrict wrow = p.w->row(s, n, p.weight_channel(c));
    const Index base = v.origin + s * v.step;
    const Scalar* __restrict xs = p.x + base;
    const Scalar* __restrict ls = p.lam + base;
    const Scalar* __restrict us = p.u + base;
    Scalar* __restrict hs = p.h + base;
    Scalar* __restrict ys = p.y + base;
    const Scalar* __restrict pv = prev;
    Scalar* __restrict cv = cur;
    auto emit = [&](Index r, Scalar pl, Scalar pr) {
      const Index at = r * stride;
      const Scalar t = wrow[3 * r] * pl + wrow[3 * r + 1] * pv[r] + wrow[3 * r + 2] * pr + ls[at] * xs[at];
      cv[r] = t;
      hs[at] = t;
      ys[at] = us[at] * t;
    };
    if (P == 1) {
      emit(0, Scalar(0), Scalar(0));
    } else {
      emit(0, Scalar(0), pv[1]);
      for (Index r = 1; r + 1 < P; ++r) emit(r, pv[r - 1], pv[r + 1]);
      emit(P - 1, pv[P - 2], Scalar(0));
    }
    std::swap(prev, cur);
  }
}

// S1 / S2: one task per (segment, n, c).
template <typename Scalar, bool kUnitStride>
void run_fused(const Pass<Scalar>& p) {
  const Index C = p.g.c;
  const Index S = static_cast<Index>(p.segs.size());
  const Index P = p.g.positions;
  parallel_for(S * p.g.n * C, [&](std::int64_t task) {
    const Index c = task % C;
    const Index n = (task / C) % p.g.n;
    const Segment seg = p.segs[static_cast<std::size_t>(task / (C * p.g.n))];
    std::vector<Scalar> buffers(static_cast<std::size_t>(2 * P));
    fused_slice<Scalar, kUnitStride>(p, seg, n, c, buffers.data(), buffers.data() + P);
  });
}

// Branch-free line update from a zero-padded previous line (pv[-1] == pv[P] == 0).
template <typename Scalar>
inline void padded_line(const Scalar* __restrict wrow, const Scalar* __restrict pv, const Scalar* __restrict xs,
                        const Scalar* __restrict ls, const Scalar* __restrict us, Scalar* __restrict cv,
                        Scalar* __restrict hs, Scalar* __restrict ys, Index P) {
  for (Index r = 0; r < P; ++r) {
    const Scalar t = wrow[3 * r] * pv[r - 1] + wrow[3 * r + 1] * pv[r] + wrow[3 * r + 2] * pv[r + 1] + ls[r] * xs[r];
    cv[r] = t;
    hs[r] = t;
    ys[r] = us[r] * t;
  }
}

// Same update with channel-shared weights already split into three planes.
template <typename Scalar>
inline void padded_line_planar(const Scalar* __restrict wl, const Scalar* __restrict wc, const Scalar* __restrict wr,
                               const Scalar* __restrict pv, const Scalar* __restrict xs, const Scalar* __restrict ls,
                               const Scalar* __restrict us, Scalar* __restrict cv, Scalar* __restrict hs,
                               Scalar* __restrict ys, Index P) {
  for (Index r = 0; r < P; ++r) {
    const Scalar t = wl[r] * pv[r - 1] + wc[r] * pv[r] + wr[r] * pv[r + 1] + ls[r] * xs[r];
    cv[r] = t;
    hs[r] = t;
    ys[r] = us[r] * t;
  }
}

// S3-S5: one task per (segment, n, channel tile). Scratch holds two padded
// lines per tile channel.
template <typename Scalar>
void run_tiled(const Pass<Scalar>& p, Stage stage) {
  const Index C = p.g.c;
  const Index N = p.g.n;
  const Index P = p.g.positions;
  const Index tile = std::min(p.c_slice, C);
  const Index tiles = (C + tile - 1) / tile;
  const Index S = static_cast<Index>(p.segs.size());
  const Index padded = P + 2;

  parallel_for(S * N * tiles, [&](std::int64_t task) {
    const Index t = task % tiles;
    const Index n = (task / tiles) % N;
    const Segment seg = p.segs[static_cast<std::size_t>(task / (tiles * N))];
    const Index c0 = t * tile;
    const Index width = std::min(tile, C - c0);

    std::vector<Scalar> scratch(static_cast<std::size_t>(2 * width * padded), Scalar(0));
    auto line = [&](int buffer, Index lc) { return scratch.data() + (buffer * width + lc) * padded + 1; };
    std::vector<SliceView> views(static_cast<std::size_t>(width));
    for (Index lc = 0; lc < width; ++lc) views[static_cast<std::size_t>(lc)] = p.view(n, c0 + lc);

    if (stage == Stage::S3_TileReuse) {
      for (Index lc = 0; lc < width; ++lc) {
        const SliceView& v = views[static_cast<std::size_t>(lc)];
        std::fill(line(0, lc), line(0, lc) + P, Scalar(0));
        int front = 0;
        for (Index s = seg.begin; s < seg.end; ++s) {
          const Index base = v.origin + s * v.step;
          padded_line(p.w->row(s, n, p.weight_channel(c0 + lc)), line(front, lc), p.x + base, p.lam + base,
                      p.u + base, line(1 - front, lc), p.h + base, p.y + base, P);
          front = 1 - front;
        }
      }
      return;
    }

    std::vector<Scalar> planes;
    if (stage == Stage::S5_Compact) planes.resize(static_cast<std::size_t>(3 * P));
    int front = 0;
    for (Index s = seg.begin; s < seg.end; ++s) {
      if (stage == Stage::S5_Compact) {
        const Scalar* wrow = p.w->row(s, n, 0);
        Scalar* wl = planes.data();
        Scalar* wc = wl + P;
        Scalar* wr = wc + P;
        for (Index r = 0; r < P; ++r) {
          wl[r] = wrow[3 * r];
          wc[r] = wrow[3 * r + 1];
          wr[r] = wrow[3 * r + 2];
        }
      }
      for (Index lc = 0; lc < width; ++lc) {
        const SliceView& v = views[static_cast<std::size_t>(lc)];
        const Index base = v.origin + s * v.step;
        if (stage == Stage::S5_Compact) {
          padded_line_planar(planes.data(), planes.data() + P, planes.data() + 2 * P, line(front, lc), p.x + base,
                             p.lam + base, p.u + base, line(1 - front, lc), p.h + base, p.y + base, P);
        } else {
          padded_line(p.w->row(s, n, p.weight_channel(c0 + lc)), line(front, lc), p.x + base, p.lam + base,
                      p.u + base, line(1 - front, lc), p.h + base, p.y + base, P);
        }
      }
      front = 1 - front;
    }
  });
}

template <typename Scalar>
void check_inputs(const Tensor4<Scalar>& x, const BandWeights<Scalar>& w, const Tensor4<Scalar>& lambda,
                  const Tensor4<Scalar>& u, const ScanPlan<Scalar>& plan) {
  if (x.empty()) throw std::invalid_argument("scan: empty input tensor");
  if (!(lambda.shape() == x.shape()) || !(u.shape() == x.shape())) {
    throw std::invalid_argument("scan: lambda " + to_string(lambda.shape()) + " and u " + to_string(u.shape()) +
                                " must match x " + to_string(x.shape()));
  }
  validate_plan(plan, x.shape().c);
  const Index channels = plan.weight_mode == WeightMode::Shared ? 1 : x.shape().c;
  const BandShape expected = band_shape_for(x.shape(), plan.direction, channels);
  if (!(w.shape() == expected)) {
    throw std::invalid_argument("scan: weights " + to_string(w.shape()) + " do not match expected " +
                                to_string(expected) + " for direction " + std::string(direction_name(plan.direction)));
  }
}

template <typename Scalar>
const Tensor4<Scalar>& in_layout(const Tensor4<Scalar>& t, Layout layout, Tensor4<Scalar>& storage) {
  if (t.layout() == layout) return t;
  storage = to_layout(t, layout);
  return storage;
}

}  // namespace

template <typename Scalar>
void scan_forward_into(const Tensor4<Scalar>& x, const BandWeights<Scalar>& w, const Tensor4<Scalar>& lambda,
                       const Tensor4<Scalar>& u, const ScanPlan<Scalar>& plan, ScanOutput<Scalar>& out) {
  check_inputs(x, w, lambda, u, plan);
  if (plan.proxy) throw std::invalid_argument("scan: proxy plans go through gspn_proxy_apply");
  const Layout native = native_layout(plan.stage, plan.direction);
  for (const Tensor4<Scalar>* t : {&x, &lambda, &u, static_cast<const Tensor4<Scalar>*>(&out.y), static_cast<const Tensor4<Scalar>*>(&out.hidden)}) {
    if (!(t->layout() == native)) {
      throw std::invalid_argument("scan_forward_into: tensor in " + to_string(t->layout()) + ", stage " +
                                  std::string(stage_name(plan.stage)) + " needs " + to_string(native));
    }
  }
  if (!(out.y.shape() == x.shape()) || !(out.hidden.shape() == x.shape())) {
    throw std::invalid_argument("scan_forward_into: output tensors must match x");
  }
  check_row_stochastic(w);

  const ScanGeometry g(x.shape(), plan.direction);
  Pass<Scalar> p{g,
                 x.shape(),
                 native,
                 scan_segments(g.steps, plan.kchunk),
                 plan.weight_mode == WeightMode::Shared,
                 plan.c_slice,
                 x.data().data(),
                 lambda.data().data(),
                 u.data().data(),
                 &w,
                 out.y.data().data(),
                 out.hidden.data().data()};

  switch (plan.stage) {
    case Stage::S0_NaivePerStep: run_per_step(p); break;
    case Stage::S1_Fused: run_fused<Scalar, false>(p); break;
    case Stage::S2_ContiguousLayout: run_fused<Scalar, true>(p); break;
    case Stage::S3_TileReuse:
    case Stage::S4_ChannelBlocked:
    case Stage::S5_Compact: run_tiled(p, plan.stage); break;
  }

  if (plan.checked) {
    if (auto v = find_stability_violation(x, lambda, out.hidden, plan.direction, plan.kchunk)) {
      throw StabilityError(*v);
    }
  }
}

template <typename Scalar>
ScanOutput<Scalar> scan_forward(const Tensor4<Scalar>& x, const BandWeights<Scalar>& w, const Tensor4<Scalar>& lambda,
                                const Tensor4<Scalar>& u, const ScanPlan<Scalar>& plan) {
  check_inputs(x, w, lambda, u, plan);
  const Layout native = native_layout(plan.stage, plan.direction);
  Tensor4<Scalar> xs, ls, us;
  ScanOutput<Scalar> out{Tensor4<Scalar>(x.shape(), native), Tensor4<Scalar>(x.shape(), native)};
  scan_forward_into(in_layout(x, native, xs), w, in_layout(lambda, native, ls), in_layout(u, native, us), plan, out);
  if (!(x.layout() == native)) {
    out.y = to_layout(out.y, x.layout());
    out.hidden = to_layout(out.hidden, x.layout());
  }
  return out;
}

template <typename Scalar>
ScanGradients<Scalar> scan_backward(const Tensor4<Scalar>& x, const BandWeights<Scalar>& w,
                                    const Tensor4<Scalar>& lambda, const Tensor4<Scalar>& u,
                                    const ScanOutput<Scalar>& forward, const ScanPlan<Scalar>& plan,
                                    const Tensor4<Scalar>& grad_y) {
  check_inputs(x, w, lambda, u, plan);
  if (forward.hidden.empty()) throw std::invalid_argument("scan_backward: forward hidden history is missing");
  if (!(forward.hidden.shape() == x.shape()) || !(grad_y.shape() == x.shape())) {
    throw std::invalid_argument("scan_backward: hidden and grad_y must match x " + to_string(x.shape()));
  }

  const Layout sm = Layout::scan_major(plan.direction);
  Tensor4<Scalar> xb, lb, ub, hb, gb;
  const Tensor4<Scalar>& xs = in_layout(x, sm, xb);
  const Tensor4<Scalar>& ls = in_layout(lambda, sm, lb);
  const Tensor4<Scalar>& us = in_layout(u, sm, ub);
  const Tensor4<Scalar>& hs = in_layout(forward.hidden, sm, hb);
  const Tensor4<Scalar>& gys = in_layout(grad_y, sm, gb);

  const ScanGeometry g(x.shape(), plan.direction);
  const Index N = g.n, C = g.c, P = g.positions;
  const bool shared = plan.weight_mode == WeightMode::Shared;
  const std::vector<Segment> segs = scan_segments(g.steps, plan.kchunk);

  ScanGradients<Scalar> out{Tensor4<Scalar>(x.shape(), sm), Tensor4<Scalar>(x.shape(), sm),
                            Tensor4<Scalar>(x.shape(), sm), BandGrad<Scalar>(w.shape())};

  auto at = [&](Index s, Index n, Index c) { return ((s * N + n) * C + c) * P; };

  auto slice_backward = [&](Segment seg, Index n, Index c, Scalar* g_cur, Scalar* g_next) {
    const Index cw = shared ? 0 : c;
    std::fill(g_next, g_next + P, Scalar(0));
    for (Index s = seg.end - 1; s >= seg.begin; --s) {
      const Index base = at(s, n, c);
      const Scalar* gy = gys.data().data() + base;
      const Scalar* uu = us.data().data() + base;
      const Scalar* wn = s + 1 < seg.end ? w.row(s + 1, n, cw) : nullptr;
      for (Index q = 0; q < P; ++q) {
        Scalar acc = gy[q] * uu[q];
        if (wn) {
          if (q + 1 < P) acc += wn[3 * (q + 1) + kLeft] * g_next[q + 1];
          acc += wn[3 * q + kCenter] * g_next[q];
          if (q > 0) acc += wn[3 * (q - 1) + kRight] * g_next[q - 1];
        }
        g_cur[q] = acc;
      }
      const Scalar* hh = hs.data().data() + base;
      const Scalar* xx = xs.data().data() + base;
      const Scalar* ll = ls.data().data() + base;
      for (Index q = 0; q < P; ++q) {
        out.grad_u.data()[base + q] = gy[q] * hh[q];
        out.grad_x.data()[base + q] = ll[q] * g_cur[q];
        out.grad_lambda.data()[base + q] = xx[q] * g_cur[q];
      }
      if (s > seg.begin) {
        const Scalar* hp = hs.data().data() + at(s - 1, n, c);
        Scalar* gw = out.grad_w.row(s, n, cw);
        for (Index r = 0; r < P; ++r) {
          for (int k = 0; k < kBands; ++k) {
            if (band_valid(r, k, P)) gw[3 * r + k] += g_cur[r] * hp[r + k - 1];
          }
        }
      }
      std::swap(g_cur, g_next);
    }
  };

  const Index S = static_cast<Index>(segs.size());
  if (shared) {
    // Channels accumulate into the same weight rows; keep them in one task, fixed order.
    parallel_for(S * N, [&](std::int64_t task) {
      const Index n = task % N;
      const Segment seg = segs[static_cast<std::size_t>(task / N)];
      std::vector<Scalar> buf(static_cast<std::size_t>(2 * P));
      for (Index c = 0; c < C; ++c) slice_backward(seg, n, c, buf.data(), buf.data() + P);
    });
  } else {
    parallel_for(S * N * C, [&](std::int64_t task) {
      const Index c = task % C;
      const Index n = (task / C) % N;
      const Segment seg = segs[static_cast<std::size_t>(task / (C * N))];
      std::vector<Scalar> buf(static_cast<std::size_t>(2 * P));
      slice_backward(seg, n, c, buf.data(), buf.data() + P);
    });
  }

  if (!(x.layout() == sm)) {
    out.grad_x = to_layout(out.grad_x, x.layout());
    out.grad_lambda = to_layout(out.grad_lambda, x.layout());
    out.grad_u = to_layout(out.grad_u, x.layout());
  }
  return out;
}

template <typename Scalar>
std::optional<StabilityViolation> find_stability_violation(const Tensor4<Scalar>& x, const Tensor4<Scalar>& lambda,
                                                           const Tensor4<Scalar>& hidden, Direction d, Index kchunk) {
  const ScanGeometry g(x.shape(), d);
  const std::vector<Segment> segs = scan_segments(g.steps, kchunk);
  const double slack = 64.0 * std::numeric_limits<Scalar>::epsilon();
  std::vector<std::optional<StabilityViolation>> found(static_cast<std::size_t>(g.n * g.c));
  parallel_for(g.n * g.c, [&](std::int64_t k) {
    const Index n = k / g.c;
    const Index c = k % g.c;
    const SliceView xv = x.slice(d, n, c), lv = lambda.slice(d, n, c), hv = hidden.slice(d, n, c);
    for (const Segment& seg : segs) {
      double prev = 0;
      for (Index s = seg.begin; s < seg.end; ++s) {
        double inj = 0, norm = 0;
        for (Index r = 0; r < g.positions; ++r) {
          inj = std::max(inj, std::abs(static_cast<double>(lambda.data()[lv.at(s, r)]) *
                                       static_cast<double>(x.data()[xv.at(s, r)])));
          norm = std::max(norm, std::abs(static_cast<double>(hidden.data()[hv.at(s, r)])));
        }
        const double bound = prev + inj;
        if (!(norm <= bound * (1.0 + slack))) {
          found[static_cast<std::size_t>(k)] = StabilityViolation{n, c, s, norm, bound};
          return;
        }
        prev = norm;
      }
    }
  });
  for (auto& v : found) {
    if (v) return v;
  }
  return std::nullopt;
}

#define LINESCAN_INSTANTIATE(S)                                                                                   \
  template void validate_plan<S>(const ScanPlan<S>&, Index);                                                     \
  template ScanOutput<S> scan_forward<S>(const Tensor4<S>&, const BandWeights<S>&, const Tensor4<S>&,            \
                                         const Tensor4<S>&, const ScanPlan<S>&);                                 \
  template void scan_forward_into<S>(const Tensor4<S>&, const BandWeights<S>&, const Tensor4<S>&,                \
                                     const Tensor4<S>&, const ScanPlan<S>&, ScanOutput<S>&);                     \
  template ScanGradients<S> scan_backward<S>(const Tensor4<S>&, const BandWeights<S>&, const Tensor4<S>&,        \
                                             const Tensor4<S>&, const ScanOutput<S>&, const ScanPlan<S>&,        \
                                             const Tensor4<S>&);                                                 \
  template std::optional<StabilityViolation> find_stability_violation<S>(const Tensor4<S>&, const Tensor4<S>&,  \
                                                                         const Tensor4<S>&, Direction, Index);

LINESCAN_INSTANTIATE(float)
LINESCAN_INSTANTIATE(double)
#undef LINESCAN_INSTANTIATE

}  // namespace linescan
