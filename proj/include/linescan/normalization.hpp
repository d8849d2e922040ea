#pragma once

#include <string>

#include <Eigen/Core>

#include "linescan/tensor.hpp"

namespace linescan {

/// Band slots of one output position: neighbor r-1, r, r+1 on the parallel axis.
enum Band : int { kLeft = 0, kCenter = 1, kRight = 2 };
inline constexpr int kBands = 3;

/// Logical shape [steps, n, channels, positions, 3]. Steps are in scan order
/// (step 0 is the first line a pass visits, whatever its direction).
struct BandShape {
  Index steps = 1;
  Index n = 1;
  Index channels = 1;
  Index positions = 1;

  Index size() const { return steps * n * channels * positions * kBands; }
  bool operator==(const BandShape&) const = default;
};

std::string to_string(const BandShape& shape);

/// Whether band `k` at position `r` points inside [0, positions).
constexpr bool band_valid(Index r, int k, Index positions) {
  return (k != kLeft || r > 0) && (k != kRight || r + 1 < positions);
}

struct LogitRole {};
struct WeightRole {};
struct GradRole {};

/// Dense band array; Role keeps logits, normalized weights, and gradients apart.
template <typename Scalar, typename Role>
class Bands {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Bands() = default;
  explicit Bands(const BandShape& shape) : shape_(shape), values_(Storage::Zero(checked(shape))) {}

  const BandShape& shape() const { return shape_; }
  Index size() const { return values_.size(); }

  Storage& values() { return values_; }
  const Storage& values() const { return values_; }

  Index offset(Index step, Index n, Index ch, Index r, int k = 0) const {
    return (((step * shape_.n + n) * shape_.channels + ch) * shape_.positions + r) * kBands + k;
  }
  Scalar& operator()(Index step, Index n, Index ch, Index r, int k) {
    return values_[offset(step, n, ch, r, k)];
  }
  const Scalar& operator()(Index step, Index n, Index ch, Index r, int k) const {
    return values_[offset(step, n, ch, r, k)];
  }
  /// First of the positions*3 contiguous values of one (step, n, channel) row.
  const Scalar* row(Index step, Index n, Index ch) const { return values_.data() + offset(step, n, ch, 0); }
  Scalar* row(Index step, Index n, Index ch) { return values_.data() + offset(step, n, ch, 0); }

 private:
  static Index checked(const BandShape& s) {
    (void)checked_size(Shape4{s.steps * s.n, s.channels, s.positions, kBands});
    return s.size();
  }

  BandShape shape_{0, 0, 0, 0};
  Storage values_;
};

template <typename Scalar>
using RawBandLogits = Bands<Scalar, LogitRole>;
template <typename Scalar>
using BandWeights = Bands<Scalar, WeightRole>;
template <typename Scalar>
using BandGrad = Bands<Scalar, GradRole>;

/// Band shape a directional pass over `shape` needs; channels is C or 1.
BandShape band_shape_for(const Shape4& shape, Direction d, Index channels);

/// Logits from raw values; rejects NaN/Inf naming the flat index.
template <typename Scalar>
RawBandLogits<Scalar> make_logits(const BandShape& shape, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& values);

/// Uniform logits in [lo, hi), drawn in storage order.
template <typename Scalar>
RawBandLogits<Scalar> random_logits(const BandShape& shape, Rng& rng, double lo = -2.0, double hi = 2.0);

/// Masked softmax over the in-range neighbors of every position. Out-of-range
/// slots are exactly zero; in-range slots sum to one.
template <typename Scalar>
BandWeights<Scalar> normalize_bands(const RawBandLogits<Scalar>& logits);

/// Softmax Jacobian-vector product per position, restricted to in-range slots:
/// dlogit_k = weight_k * (grad_k - sum_j weight_j * grad_j). Masked grads are ignored.
template <typename Scalar>
BandGrad<Scalar> normalize_bands_backward(const RawBandLogits<Scalar>& logits,
                                          const BandGrad<Scalar>& grad_weights);

/// Throws std::invalid_argument (with the offending position) unless every
/// entry is nonnegative, masked slots are zero, and rows sum to 1 within `tol`.
template <typename Scalar>
void check_row_stochastic(const BandWeights<Scalar>& w, double tol = 1e-6);

}  // namespace linescan
