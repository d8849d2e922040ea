#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "linescan/normalization.hpp"
#include "linescan/tensor.hpp"

namespace linescan {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class WeightMode { PerChannel, Shared };

// Implementation ladder. All stages compute the same recurrence; they differ
// only in dispatch granularity, memory layout, and scratch reuse.
//   S0  one parallel dispatch per scan step; hidden state round-trips through the output tensor
//   S1  one dispatch per slice, all steps fused, hidden state in a per-slice buffer
//   S2  S1 on the ScanMajor layout (parallel axis unit-stride)
//   S3  S2 with the previous line staged in a zero-padded scratch shared by a c_slice tile
//   S4  S3 with the whole positions x c_slice tile advanced one step at a time
//   S5  S4 with channel-shared weights staged once per step for the tile
enum class Stage {
  S0_NaivePerStep,
  S1_Fused,
  S2_ContiguousLayout,
  S3_TileReuse,
  S4_ChannelBlocked,
  S5_Compact,
};

inline constexpr std::array<Stage, 6> kStages = {
    Stage::S0_NaivePerStep,  Stage::S1_Fused,          Stage::S2_ContiguousLayout,
    Stage::S3_TileReuse,     Stage::S4_ChannelBlocked, Stage::S5_Compact};

std::string_view stage_name(Stage stage);       // "S0" ... "S5"
std::string_view stage_long_name(Stage stage);  // "S0_NaivePerStep" ...
Stage parse_stage(std::string_view name);       // accepts either form
constexpr int stage_index(Stage stage) { return static_cast<int>(stage); }

/// Layout the stage's kernels read and write.
Layout native_layout(Stage stage, Direction d);

inline constexpr Index kDefaultProxyChannels = 8;

template <typename Scalar>
struct ProxyConfig {
  Index c_proxy = kDefaultProxyChannels;
  Matrix<Scalar> down;  // c_proxy x C
  Matrix<Scalar> up;    // C x c_proxy
};

template <typename Scalar>
struct ScanPlan {
  Direction direction = Direction::TopToBottom;
  WeightMode weight_mode = WeightMode::PerChannel;
  Index kchunk = 0;  // 0: one global segment
  std::optional<ProxyConfig<Scalar>> proxy;
  Stage stage = Stage::S1_Fused;
  Index c_slice = 4;
  bool checked = false;  // verify the per-step stability bound after the pass
};

/// Throws std::invalid_argument when the plan is inconsistent with `channels`.
template <typename Scalar>
void validate_plan(const ScanPlan<Scalar>& plan, Index channels);

struct Segment {
  Index begin;
  Index end;
};

/// Segments of the scan axis. The hidden state resets at each segment start;
/// a trailing remainder forms a shorter final segment.
std::vector<Segment> scan_segments(Index steps, Index kchunk);

template <typename Scalar>
struct ScanOutput {
  Tensor4<Scalar> y;
  Tensor4<Scalar> hidden;
};

template <typename Scalar>
struct ScanGradients {
  Tensor4<Scalar> grad_x;
  Tensor4<Scalar> grad_lambda;
  Tensor4<Scalar> grad_u;
  BandGrad<Scalar> grad_w;  // w.r.t. normalized weights
};

/// One directional pass:
///   h_s = W_s h_{s-1} + lambda_s * x_s   (h reset to 0 at segment starts)
///   y_s = u_s * h_s
/// Inputs may be in any layout; results come back in x's layout.
template <typename Scalar>
ScanOutput<Scalar> scan_forward(const Tensor4<Scalar>& x, const BandWeights<Scalar>& w,
                                const Tensor4<Scalar>& lambda, const Tensor4<Scalar>& u,
                                const ScanPlan<Scalar>& plan);

/// Allocation-free variant. x, lambda, u and both outputs must already be in
/// native_layout(plan.stage, plan.direction) with x's shape.
template <typename Scalar>
void scan_forward_into(const Tensor4<Scalar>& x, const BandWeights<Scalar>& w,
                       const Tensor4<Scalar>& lambda, const Tensor4<Scalar>& u,
                       const ScanPlan<Scalar>& plan, ScanOutput<Scalar>& out);

/// Reverse-mode pass given the forward hidden history.
template <typename Scalar>
ScanGradients<Scalar> scan_backward(const Tensor4<Scalar>& x, const BandWeights<Scalar>& w,
                                    const Tensor4<Scalar>& lambda, const Tensor4<Scalar>& u,
                                    const ScanOutput<Scalar>& forward, const ScanPlan<Scalar>& plan,
                                    const Tensor4<Scalar>& grad_y);

struct StabilityViolation {
  Index n;
  Index c;
  Index step;
  double norm;   // ||h_s||_inf
  double bound;  // ||h_{s-1}||_inf + ||lambda_s * x_s||_inf
};

class StabilityError : public std::runtime_error {
 public:
  explicit StabilityError(const StabilityViolation& v);
  StabilityViolation violation;
};

/// First (n, c, step) in scan order where ||h_s|| exceeds ||h_{s-1}|| + ||lambda_s x_s||
/// beyond rounding slack, or nullopt.
template <typename Scalar>
std::optional<StabilityViolation> find_stability_violation(const Tensor4<Scalar>& x,
                                                           const Tensor4<Scalar>& lambda,
                                                           const Tensor4<Scalar>& hidden, Direction d,
                                                           Index kchunk);

}  // namespace linescan
