#pragma once

#include <functional>

#include <Eigen/Dense>

#include "linescan/normalization.hpp"
#include "linescan/tensor.hpp"

// Brute-force references for the scan engine. Always double precision, dense
// matrices, no recurrences: the point is to be obviously right, not fast.
namespace linescan::oracle {

/// One (n, c) slice in scan order: row s is line s, column r is position r.
using SliceMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Guardrail on steps * positions for dense construction.
inline constexpr Index kMaxDenseDim = 4096;

struct DenseGlobalOperator {
  Index steps = 0;
  Index block_dim = 0;
  bool per_channel = true;
  Eigen::MatrixXd matrix;  // (steps * block_dim)^2, block (i, j) maps line j of x to line i of h

  auto block(Index i, Index j) const { return matrix.block(i * block_dim, j * block_dim, block_dim, block_dim); }
};

/// Extracts the (n, c) slice of t as seen by a pass in direction d.
template <typename Scalar>
SliceMatrix extract_slice(const Tensor4<Scalar>& t, Direction d, Index n, Index c);

/// Dense positions x positions propagation matrix of one step:
/// M(r, r + delta) = w(step, n, channel, r, delta + 1).
Eigen::MatrixXd step_matrix(const BandWeights<double>& w, Index step, Index n, Index channel);

/// Block lower-triangular G with G_ii = Diag(lambda_i) and
/// G_ij = W_i W_{i-1} ... W_{j+1} Diag(lambda_j) for j < i in the same kchunk
/// segment; every other block is exactly zero.
DenseGlobalOperator build_dense_operator(const BandWeights<double>& w, Index n, Index channel,
                                         const SliceMatrix& lambda, Index kchunk = 0);

/// y = u * (G vec(x)), reshaped to steps x positions.
SliceMatrix dense_apply(const DenseGlobalOperator& g, const SliceMatrix& x, const SliceMatrix& u);

/// y_i = u_i * sum_{j <= i} (prod_{t=j+1..i} W_t) Diag(lambda_j) x_j by explicit summation.
SliceMatrix linear_attention_reference(const SliceMatrix& x, const BandWeights<double>& w, Index n, Index channel,
                                       const SliceMatrix& lambda, const SliceMatrix& u, Index kchunk = 0);

/// Central differences (f(x + eps e_k) - f(x - eps e_k)) / (2 eps) per coordinate.
/// Throws std::domain_error if f returns a non-finite value.
Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& at,
                                 double eps = 1e-6);

/// max |a - b| / max(max |a|, max |b|, floor): the relative error used by the gradient checks.
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-300);

}  // namespace linescan::oracle
