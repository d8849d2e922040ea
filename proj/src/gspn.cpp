#include "linescan/gspn.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

#include "linescan/parallel.hpp"

namespace linescan {

template <typename Scalar>
Tensor4<Scalar> merge_directions(const std::array<Tensor4<Scalar>, 4>& outputs, MergeMode mode) {
  const Tensor4<Scalar>& first = outputs[0];
  for (const Tensor4<Scalar>& t : outputs) {
    if (!(t.shape() == first.shape())) {
      throw std::invalid_argument("merge_directions: shape " + to_string(t.shape()) + " vs " +
                                  to_string(first.shape()));
    }
  }
  Tensor4<Scalar> merged = first;
  for (std::size_t k = 1; k < outputs.size(); ++k) {
    if (outputs[k].layout() == merged.layout()) {
      merged.data() += outputs[k].data();
    } else {
      merged.data() += to_layout(outputs[k], merged.layout()).data();
    }
  }
  if (mode == MergeMode::Mean) merged.data() *= Scalar(0.25);
  return merged;
}

template <typename Scalar>
Tensor4<Scalar> gspn_apply(const Tensor4<Scalar>& x, const DirectionalParams<Scalar>& params,
                           const ScanPlan<Scalar>& plan_template, MergeMode mode, bool concurrent) {
  std::array<Tensor4<Scalar>, 4> outputs;
  std::array<std::exception_ptr, 4> errors;
  auto pass = [&](int k) {
    try {
      ScanPlan<Scalar> plan = plan_template;
      plan.direction = kDirections[static_cast<std::size_t>(k)];
      const DirectionParams<Scalar>& p = params[static_cast<std::size_t>(k)];
      outputs[static_cast<std::size_t>(k)] = scan_forward(x, p.w, p.lambda, p.u, plan).y;
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  };
  const int workers = std::min(4, worker_count());
  if (concurrent && workers > 1 && !omp_in_parallel()) {
#pragma omp parallel for num_threads(workers) schedule(static, 1)
    for (int k = 0; k < 4; ++k) pass(k);
  } else {
    for (int k = 0; k < 4; ++k) pass(k);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return merge_directions(outputs, mode);
}

template <typename Scalar>
void proxy_mix_into(const Tensor4<Scalar>& in, const Matrix<Scalar>& mix, Tensor4<Scalar>& out) {
  const Shape4& s = in.shape();
  if (mix.cols() != s.c) {
    throw std::invalid_argument("proxy matrix has " + std::to_string(mix.cols()) + " columns, input has " +
                                std::to_string(s.c) + " channels");
  }
  const Shape4 expected{s.n, mix.rows(), s.h, s.w};
  if (!(out.shape() == expected) || !(out.layout() == in.layout())) {
    throw std::invalid_argument("proxy output must be " + to_string(expected) + " in " + to_string(in.layout()));
  }
  // Both layouts store channels as the second-fastest axis over blocks of Q
  // pixels: Canonical blocks are images (Q = H*W), ScanMajor blocks are lines (Q = P).
  const Index q = in.layout().is_canonical() ? s.h * s.w : ScanGeometry(s, in.layout().direction()).positions;
  const Index blocks = in.size() / (s.c * q);
  const Index cin = s.c;
  const Index cout = mix.rows();
  parallel_for(blocks, [&](std::int64_t b) {
    Eigen::Map<const Matrix<Scalar>> src(in.data().data() + b * cin * q, q, cin);
    Eigen::Map<Matrix<Scalar>> dst(out.data().data() + b * cout * q, q, cout);
    dst.noalias() = src * mix.transpose();
  });
}

template <typename Scalar>
Tensor4<Scalar> proxy_down(const Tensor4<Scalar>& x, const Matrix<Scalar>& down) {
  if (down.cols() != x.shape().c) {
    throw std::invalid_argument("proxy_down: matrix is " + std::to_string(down.rows()) + "x" +
                                std::to_string(down.cols()) + ", input has " + std::to_string(x.shape().c) +
                                " channels");
  }
  Tensor4<Scalar> out(Shape4{x.shape().n, down.rows(), x.shape().h, x.shape().w}, x.layout());
  proxy_mix_into(x, down, out);
  return out;
}

template <typename Scalar>
Tensor4<Scalar> proxy_up(const Tensor4<Scalar>& x_proxy, const Matrix<Scalar>& up) {
  if (up.cols() != x_proxy.shape().c) {
    throw std::invalid_argument("proxy_up: matrix is " + std::to_string(up.rows()) + "x" +
                                std::to_string(up.cols()) + ", input has " + std::to_string(x_proxy.shape().c) +
                                " channels");
  }
  Tensor4<Scalar> out(Shape4{x_proxy.shape().n, up.rows(), x_proxy.shape().h, x_proxy.shape().w}, x_proxy.layout());
  proxy_mix_into(x_proxy, up, out);
  return out;
}

template <typename Scalar>
Tensor4<Scalar> gspn_proxy_apply(const Tensor4<Scalar>& x, const DirectionalParams<Scalar>& params,
                                 const ScanPlan<Scalar>& plan, MergeMode mode, bool concurrent) {
  if (!plan.proxy) throw std::invalid_argument("gspn_proxy_apply: plan has no proxy config");
  validate_plan(plan, x.shape().c);
  ScanPlan<Scalar> inner = plan;
  inner.proxy.reset();
  const Tensor4<Scalar> compressed = proxy_down(x, plan.proxy->down);
  const Tensor4<Scalar> merged = gspn_apply(compressed, params, inner, mode, concurrent);
  return proxy_up(merged, plan.proxy->up);
}

template <typename Scalar>
Matrix<Scalar> random_projection(Index rows, Index cols, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix<Scalar> m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(rng.uniform(-scale, scale));
  return m;
}

template <typename Scalar>
ProxyConfig<Scalar> random_proxy(Index channels, Index c_proxy, Rng& rng) {
  ProxyConfig<Scalar> p;
  p.c_proxy = c_proxy;
  p.down = random_projection<Scalar>(c_proxy, channels, rng);
  p.up = random_projection<Scalar>(channels, c_proxy, rng);
  return p;
}

template <typename Scalar>
ProxyConfig<Scalar> identity_proxy(Index channels) {
  ProxyConfig<Scalar> p;
  p.c_proxy = channels;
  p.down = Matrix<Scalar>::Identity(channels, channels);
  p.up = Matrix<Scalar>::Identity(channels, channels);
  return p;
}

template <typename Scalar>
DirectionalParams<Scalar> random_directional_params(const Shape4& shape, WeightMode mode, Rng& rng) {
  DirectionalParams<Scalar> params;
  const Index channels = mode == WeightMode::Shared ? 1 : shape.c;
  for (Direction d : kDirections) {
    DirectionParams<Scalar>& p = params[static_cast<std::size_t>(direction_index(d))];
    p.w = normalize_bands(random_logits<Scalar>(band_shape_for(shape, d, channels), rng));
    p.lambda = make_tensor<Scalar>(shape, SeededUniform{rng, 0.0, 1.0});
    p.u = make_tensor<Scalar>(shape, SeededUniform{rng, -1.0, 1.0});
  }
  return params;
}

#define LINESCAN_INSTANTIATE(S)                                                                                 \
  template Tensor4<S> merge_directions<S>(const std::array<Tensor4<S>, 4>&, MergeMode);                        \
  template Tensor4<S> gspn_apply<S>(const Tensor4<S>&, const DirectionalParams<S>&, const ScanPlan<S>&,        \
                                    MergeMode, bool);                                                          \
  template void proxy_mix_into<S>(const Tensor4<S>&, const Matrix<S>&, Tensor4<S>&);                           \
  template Tensor4<S> proxy_down<S>(const Tensor4<S>&, const Matrix<S>&);                                      \
  template Tensor4<S> proxy_up<S>(const Tensor4<S>&, const Matrix<S>&);                                        \
  template Tensor4<S> gspn_proxy_apply<S>(const Tensor4<S>&, const DirectionalParams<S>&, const ScanPlan<S>&,  \
                                          MergeMode, bool);                                                    \
  template Matrix<S> random_projection<S>(Index, Index, Rng&);                                                 \
  template ProxyConfig<S> random_proxy<S>(Index, Index, Rng&);                                                 \
  template ProxyConfig<S> identity_proxy<S>(Index);                                                            \
  template DirectionalParams<S> random_directional_params<S>(const Shape4&, WeightMode, Rng&);

LINESCAN_INSTANTIATE(float)
LINESCAN_INSTANTIATE(double)
#undef LINESCAN_INSTANTIATE

}  // namespace linescan
