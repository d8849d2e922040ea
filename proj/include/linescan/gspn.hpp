#pragma once

#include <array>

#include "linescan/scan.hpp"

namespace linescan {

enum class MergeMode { Sum, Mean };

/// Parameters of one directional pass.
template <typename Scalar>
struct DirectionParams {
  BandWeights<Scalar> w;
  Tensor4<Scalar> lambda;
  Tensor4<Scalar> u;
};

/// Indexed by direction_index(); order follows kDirections.
template <typename Scalar>
using DirectionalParams = std::array<DirectionParams<Scalar>, 4>;

/// Element-wise sum (or mean) accumulated in T2B, B2T, L2R, R2L order.
/// Result is in the first tensor's layout.
template <typename Scalar>
Tensor4<Scalar> merge_directions(const std::array<Tensor4<Scalar>, 4>& outputs, MergeMode mode = MergeMode::Sum);

/// Four directional scan_forward passes merged. `plan_template.direction` is
/// ignored. With `concurrent`, passes run in parallel; the result is identical.
template <typename Scalar>
Tensor4<Scalar> gspn_apply(const Tensor4<Scalar>& x, const DirectionalParams<Scalar>& params,
                           const ScanPlan<Scalar>& plan_template, MergeMode mode = MergeMode::Sum,
                           bool concurrent = true);

/// x_proxy[:, p] = sum_c down(p, c) * x[:, c] per pixel. Keeps x's layout.
template <typename Scalar>
Tensor4<Scalar> proxy_down(const Tensor4<Scalar>& x, const Matrix<Scalar>& down);

/// x[:, c] = sum_p up(c, p) * x_proxy[:, p] per pixel. Keeps the input's layout.
template <typename Scalar>
Tensor4<Scalar> proxy_up(const Tensor4<Scalar>& x_proxy, const Matrix<Scalar>& up);

/// Writes into a preallocated tensor of the right shape and layout.
template <typename Scalar>
void proxy_mix_into(const Tensor4<Scalar>& in, const Matrix<Scalar>& mix, Tensor4<Scalar>& out);

/// proxy_up(gspn_apply(proxy_down(x, down), params, ...), up) with down/up from
/// plan.proxy; params carry channel-shared weights and C_proxy-channel lambda/u.
template <typename Scalar>
Tensor4<Scalar> gspn_proxy_apply(const Tensor4<Scalar>& x, const DirectionalParams<Scalar>& params,
                                 const ScanPlan<Scalar>& plan, MergeMode mode = MergeMode::Sum,
                                 bool concurrent = true);

/// Seeded projection with entries uniform in [-1/sqrt(cols), 1/sqrt(cols)).
template <typename Scalar>
Matrix<Scalar> random_projection(Index rows, Index cols, Rng& rng);

/// Proxy config with seeded down/up projections.
template <typename Scalar>
ProxyConfig<Scalar> random_proxy(Index channels, Index c_proxy, Rng& rng);

/// Identity down/up (c_proxy == channels).
template <typename Scalar>
ProxyConfig<Scalar> identity_proxy(Index channels);

/// Seeded parameters for the four passes over `shape`: logits uniform in
/// [-2, 2) normalized, lambda in [0, 1), u in [-1, 1). Draw order is fixed.
template <typename Scalar>
DirectionalParams<Scalar> random_directional_params(const Shape4& shape, WeightMode mode, Rng& rng);

}  // namespace linescan
