#include "linescan/oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "linescan/scan.hpp"

namespace linescan::oracle {

namespace {

void check_dense_size(Index steps, Index positions) {
  if (steps * positions > kMaxDenseDim) {
    throw std::length_error("dense oracle limited to steps*positions <= " + std::to_string(kMaxDenseDim) + ", got " +
                            std::to_string(steps * positions));
  }
}

Index segment_of(Index step, Index steps, Index kchunk) {
  const Index len = kchunk == 0 ? steps : std::min(kchunk, steps);
  return step / len;
}

}  // namespace

template <typename Scalar>
SliceMatrix extract_slice(const Tensor4<Scalar>& t, Direction d, Index n, Index c) {
  const ScanGeometry g(t.shape(), d);
  SliceMatrix m(g.steps, g.positions);
  for (Index s = 0; s < g.steps; ++s)
    for (Index r = 0; r < g.positions; ++r) m(s, r) = static_cast<double>(t(n, c, g.row(s, r), g.col(s, r)));
  return m;
}

template SliceMatrix extract_slice<float>(const Tensor4<float>&, Direction, Index, Index);
template SliceMatrix extract_slice<double>(const Tensor4<double>&, Direction, Index, Index);

Eigen::MatrixXd step_matrix(const BandWeights<double>& w, Index step, Index n, Index channel) {
  const Index p = w.shape().positions;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
  for (Index r = 0; r < p; ++r)
    for (int k = 0; k < kBands; ++k) {
      const Index col = r + k - 1;
      if (col >= 0 && col < p) m(r, col) = w(step, n, channel, r, k);
    }
  return m;
}

DenseGlobalOperator build_dense_operator(const BandWeights<double>& w, Index n, Index channel,
                                         const SliceMatrix& lambda, Index kchunk) {
  const Index steps = w.shape().steps;
  const Index p = w.shape().positions;
  check_dense_size(steps, p);
  if (lambda.rows() != steps || lambda.cols() != p) {
    throw std::invalid_argument("build_dense_operator: lambda slice must be steps x positions");
  }
  if (kchunk < 0) throw std::invalid_argument("kchunk must be >= 0");

  DenseGlobalOperator g;
  g.steps = steps;
  g.block_dim = p;
  g.per_channel = w.shape().channels != 1;
  g.matrix = Eigen::MatrixXd::Zero(steps * p, steps * p);
  for (Index j = 0; j < steps; ++j) {
    Eigen::MatrixXd acc = lambda.row(j).transpose().asDiagonal();
    g.matrix.block(j * p, j * p, p, p) = acc;
    for (Index i = j + 1; i < steps && segment_of(i, steps, kchunk) == segment_of(j, steps, kchunk); ++i) {
      acc = step_matrix(w, i, n, channel) * acc;
      g.matrix.block(i * p, j * p, p, p) = acc;
    }
  }
  return g;
}

SliceMatrix dense_apply(const DenseGlobalOperator& g, const SliceMatrix& x, const SliceMatrix& u) {
  if (x.size() != g.steps * g.block_dim || u.size() != x.size()) {
    throw std::invalid_argument("dense_apply: expected " + std::to_string(g.steps * g.block_dim) +
                                " values, got x " + std::to_string(x.size()) + ", u " + std::to_string(u.size()));
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), x.size());
  const Eigen::VectorXd hv = g.matrix * xv;
  SliceMatrix y(g.steps, g.block_dim);
  Eigen::Map<Eigen::VectorXd>(y.data(), y.size()) = hv.cwiseProduct(Eigen::Map<const Eigen::VectorXd>(u.data(), u.size()));
  return y;
}

SliceMatrix linear_attention_reference(const SliceMatrix& x, const BandWeights<double>& w, Index n, Index channel,
                                       const SliceMatrix& lambda, const SliceMatrix& u, Index kchunk) {
  const Index steps = w.shape().steps;
  const Index p = w.shape().positions;
  check_dense_size(steps, p);
  if (x.rows() != steps || x.cols() != p || lambda.rows() != steps || lambda.cols() != p || u.rows() != steps ||
      u.cols() != p) {
    throw std::invalid_argument("linear_attention_reference: slices must be steps x positions");
  }
  SliceMatrix y(steps, p);
  for (Index i = 0; i < steps; ++i) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p);
    for (Index j = 0; j <= i; ++j) {
      if (segment_of(i, steps, kchunk) != segment_of(j, steps, kchunk)) continue;
      Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(p, p);
      for (Index t = j + 1; t <= i; ++t) prod = step_matrix(w, t, n, channel) * prod;
      const Eigen::VectorXd injected = lambda.row(j).transpose().cwiseProduct(x.row(j).transpose());
      sum += prod * injected;
    }
    y.row(i) = u.row(i).cwiseProduct(sum.transpose());
  }
  return y;
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& at,
                                 double eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite_diff_grad: eps must be > 0");
  Eigen::VectorXd grad(at.size());
  Eigen::VectorXd probe = at;
  for (Index k = 0; k < at.size(); ++k) {
    probe[k] = at[k] + eps;
    const double plus = f(probe);
    probe[k] = at[k] - eps;
    const double minus = f(probe);
    probe[k] = at[k];
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw std::domain_error("finite_diff_grad: non-finite function value at coordinate " + std::to_string(k));
    }
    grad[k] = (plus - minus) / (2 * eps);
  }
  return grad;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
  if (a.size() == 0) return 0.0;
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace linescan::oracle
