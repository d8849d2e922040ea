#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "linescan/oracle.hpp"
#include "linescan/rng.hpp"
#include "linescan/scan.hpp"

using namespace linescan;
using oracle::SliceMatrix;

namespace {

SliceMatrix random_slice(Index rows, Index cols, Rng& rng, double lo, double hi) {
  SliceMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Tridiagonal step matrix written out by hand from the band layout.
Eigen::MatrixXd manual_step(const BandWeights<double>& w, Index step, Index positions) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(positions, positions);
  for (Index r = 0; r < positions; ++r) {
    if (r > 0) m(r, r - 1) = w(step, 0, 0, r, kLeft);
    m(r, r) = w(step, 0, 0, r, kCenter);
    if (r + 1 < positions) m(r, r + 1) = w(step, 0, 0, r, kRight);
  }
  return m;
}

}  // namespace

TEST_CASE("single step operator is the lambda diagonal") {
  Rng rng(1);
  const auto w = normalize_bands(random_logits<double>(BandShape{1, 1, 1, 4}, rng));
  const SliceMatrix lambda = random_slice(1, 4, rng, 0, 1);
  const auto g = oracle::build_dense_operator(w, 0, 0, lambda);
  CHECK(g.steps == 1);
  CHECK(g.block_dim == 4);
  const Eigen::MatrixXd expected = lambda.row(0).transpose().asDiagonal();
  CHECK(g.matrix == expected);
}

TEST_CASE("zero lambda gives a zero operator") {
  Rng rng(2);
  const auto w = normalize_bands(random_logits<double>(BandShape{4, 1, 1, 3}, rng));
  const auto g = oracle::build_dense_operator(w, 0, 0, SliceMatrix::Zero(4, 3));
  CHECK((g.matrix.array() == 0.0).all());
}

TEST_CASE("block (2,0) is the product of the step matrices") {
  Rng rng(3);
  const auto w = normalize_bands(random_logits<double>(BandShape{3, 1, 1, 2}, rng));
  const SliceMatrix lambda = random_slice(3, 2, rng, 0, 1);
  const auto g = oracle::build_dense_operator(w, 0, 0, lambda);
  const Eigen::MatrixXd lambda0 = lambda.row(0).transpose().asDiagonal();
  const Eigen::MatrixXd expected = manual_step(w, 2, 2) * manual_step(w, 1, 2) * lambda0;
  CHECK((Eigen::MatrixXd(g.block(2, 0)) - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(oracle::step_matrix(w, 1, 0, 0) == manual_step(w, 1, 2));
}

TEST_CASE("operator structure") {
  Rng rng(4);
  const Index steps = 5, p = 4;
  const auto w = normalize_bands(random_logits<double>(BandShape{steps, 1, 1, p}, rng));
  const SliceMatrix ones = SliceMatrix::Ones(steps, p);
  const auto g = oracle::build_dense_operator(w, 0, 0, ones);
  for (Index i = 0; i < steps; ++i)
    for (Index j = 0; j < steps; ++j) {
      const Eigen::MatrixXd b = g.block(i, j);
      if (j > i) {
        CHECK((b.array() == 0.0).all());
      } else {
        CHECK((b.array() >= 0.0).all());
        CHECK((b.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-14);
      }
    }

  const auto chunked = oracle::build_dense_operator(w, 0, 0, ones, 2);
  CHECK((Eigen::MatrixXd(chunked.block(2, 1)).array() == 0.0).all());
  CHECK((Eigen::MatrixXd(chunked.block(4, 3)).array() == 0.0).all());
  CHECK((Eigen::MatrixXd(chunked.block(3, 2)).array() != 0.0).any());
}

TEST_CASE("dense_apply trivial cases and length checks") {
  Rng rng(5);
  const auto w = normalize_bands(random_logits<double>(BandShape{3, 1, 1, 2}, rng));
  const SliceMatrix lambda = random_slice(3, 2, rng, 0, 1);
  const auto g = oracle::build_dense_operator(w, 0, 0, lambda);
  const SliceMatrix u = random_slice(3, 2, rng, -1, 1);
  CHECK((oracle::dense_apply(g, SliceMatrix::Zero(3, 2), u).array() == 0.0).all());
  CHECK_THROWS_AS(oracle::dense_apply(g, SliceMatrix::Zero(2, 2), u), std::invalid_argument);

  const auto w1 = normalize_bands(random_logits<double>(BandShape{1, 1, 1, 3}, rng));
  const SliceMatrix l1 = random_slice(1, 3, rng, 0, 1);
  const SliceMatrix x1 = random_slice(1, 3, rng, -1, 1);
  const SliceMatrix u1 = random_slice(1, 3, rng, -1, 1);
  const SliceMatrix y = oracle::dense_apply(oracle::build_dense_operator(w1, 0, 0, l1), x1, u1);
  CHECK((y.array() - u1.array() * l1.array() * x1.array()).abs().maxCoeff() <= 1e-16);
}

TEST_CASE("guardrail on the dense size") {
  const BandWeights<double> w(BandShape{65, 1, 1, 64});
  CHECK_THROWS_AS(oracle::build_dense_operator(w, 0, 0, SliceMatrix::Zero(65, 64)), std::length_error);
  CHECK_THROWS_AS(oracle::linear_attention_reference(SliceMatrix::Zero(65, 64), w, 0, 0, SliceMatrix::Zero(65, 64),
                                                     SliceMatrix::Zero(65, 64)),
                  std::length_error);
}

TEST_CASE("linear attention trivial cases") {
  Rng rng(6);
  const auto w1 = normalize_bands(random_logits<double>(BandShape{1, 1, 1, 3}, rng));
  const SliceMatrix x = random_slice(1, 3, rng, -1, 1);
  const SliceMatrix l = random_slice(1, 3, rng, 0, 1);
  const SliceMatrix u = random_slice(1, 3, rng, -1, 1);
  CHECK((oracle::linear_attention_reference(x, w1, 0, 0, l, u).array() - u.array() * l.array() * x.array())
            .abs()
            .maxCoeff() <= 1e-16);

  // Only line 0 injects: y_i = u_i * (W_i ... W_1) lambda_0 x_0.
  const Index steps = 4, p = 3;
  const auto w = normalize_bands(random_logits<double>(BandShape{steps, 1, 1, p}, rng));
  SliceMatrix lam = SliceMatrix::Zero(steps, p);
  lam.row(0) = random_slice(1, p, rng, 0, 1);
  const SliceMatrix xs = random_slice(steps, p, rng, -1, 1);
  const SliceMatrix us = random_slice(steps, p, rng, -1, 1);
  const SliceMatrix y = oracle::linear_attention_reference(xs, w, 0, 0, lam, us);
  Eigen::VectorXd h = lam.row(0).transpose().cwiseProduct(xs.row(0).transpose());
  for (Index i = 0; i < steps; ++i) {
    if (i > 0) h = manual_step(w, i, p) * h;
    CHECK((y.row(i).transpose() - us.row(i).transpose().cwiseProduct(h)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("random L=4, P=3: linear attention equals scan_forward") {
  Rng rng(7);
  const Shape4 shape{1, 1, 4, 3};
  const auto x = make_tensor<double>(shape, SeededUniform{rng, -1.0, 1.0});
  const auto lambda = make_tensor<double>(shape, SeededUniform{rng, 0.0, 1.0});
  const auto u = make_tensor<double>(shape, SeededUniform{rng, -1.0, 1.0});
  const auto w = normalize_bands(random_logits<double>(band_shape_for(shape, Direction::TopToBottom, 1), rng));
  ScanPlan<double> plan;
  plan.weight_mode = WeightMode::Shared;
  const auto out = scan_forward(x, w, lambda, u, plan);
  const Direction d = Direction::TopToBottom;
  const SliceMatrix ref = oracle::linear_attention_reference(oracle::extract_slice(x, d, 0, 0), w, 0, 0,
                                                             oracle::extract_slice(lambda, d, 0, 0),
                                                             oracle::extract_slice(u, d, 0, 0));
  CHECK((ref - oracle::extract_slice(out.y, d, 0, 0)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("finite differences") {
  const Eigen::VectorXd at = Eigen::VectorXd::LinSpaced(5, -1.0, 2.0);
  const auto zero = oracle::finite_diff_grad([](const Eigen::VectorXd&) { return 3.0; }, at);
  CHECK((zero.array() == 0.0).all());

  const auto grad = oracle::finite_diff_grad([](const Eigen::VectorXd& v) { return 0.5 * v.squaredNorm(); }, at);
  CHECK(oracle::relative_error(grad, at) < 1e-8);

  const auto blows_up = [](const Eigen::VectorXd& v) {
    return v[3] > 1.0 ? std::numeric_limits<double>::infinity() : v[3];
  };
  CHECK_THROWS_AS(oracle::finite_diff_grad(blows_up, at), std::domain_error);
  CHECK_THROWS_AS(oracle::finite_diff_grad([](const Eigen::VectorXd&) { return 0.0; }, at, 0.0),
                  std::invalid_argument);
}

TEST_CASE("finite differences of the squared scan output on a 2x2 instance") {
  Rng rng(8);
  const Shape4 shape{1, 1, 2, 2};
  const auto lambda = make_tensor<double>(shape, SeededUniform{rng, 0.0, 1.0});
  const auto u = make_tensor<double>(shape, SeededUniform{rng, -1.0, 1.0});
  const auto x = make_tensor<double>(shape, SeededUniform{rng, -1.0, 1.0});
  const auto w = normalize_bands(random_logits<double>(band_shape_for(shape, Direction::LeftToRight, 1), rng));
  ScanPlan<double> plan;
  plan.direction = Direction::LeftToRight;
  auto loss = [&](const Eigen::VectorXd& v) {
    Tensor4<double> xt(shape);
    xt.data() = v.array();
    return scan_forward(xt, w, lambda, u, plan).y.data().square().sum();
  };
  const auto fwd = scan_forward(x, w, lambda, u, plan);
  Tensor4<double> gy = fwd.y;
  gy.data() *= 2.0;
  const auto g = scan_backward(x, w, lambda, u, fwd, plan, gy);
  const auto fd = oracle::finite_diff_grad(loss, x.data().matrix());
  CHECK(oracle::relative_error(g.grad_x.data().matrix(), fd) < 1e-6);
}

TEST_CASE("relative error") {
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, -4;
  b << 1, 2.5, -4;
  CHECK(oracle::relative_error(a, b) == doctest::Approx(0.125));
  CHECK(oracle::relative_error(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)) == 0.0);
  CHECK_THROWS_AS(oracle::relative_error(a, Eigen::VectorXd::Zero(2)), std::invalid_argument);
}
