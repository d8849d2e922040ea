#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "linescan/normalization.hpp"
#include "linescan/oracle.hpp"
#include "linescan/parallel.hpp"
#include "linescan/rng.hpp"

using namespace linescan;

namespace {

RawBandLogits<double> constant_logits(const BandShape& shape, double v) {
  Eigen::ArrayXd values = Eigen::ArrayXd::Constant(shape.size(), v);
  return make_logits<double>(shape, values);
}

}  // namespace

TEST_CASE("equal logits at an interior position give thirds") {
  const auto w = normalize_bands(constant_logits(BandShape{1, 1, 1, 3}, 0.7));
  for (int k = 0; k < kBands; ++k) CHECK(w(0, 0, 0, 1, k) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("equal logits at an edge give halves with the missing band masked") {
  const auto w = normalize_bands(constant_logits(BandShape{1, 1, 1, 3}, -4.0));
  CHECK(w(0, 0, 0, 0, kLeft) == 0.0);
  CHECK(w(0, 0, 0, 0, kCenter) == 0.5);
  CHECK(w(0, 0, 0, 0, kRight) == 0.5);
  CHECK(w(0, 0, 0, 2, kLeft) == 0.5);
  CHECK(w(0, 0, 0, 2, kCenter) == 0.5);
  CHECK(w(0, 0, 0, 2, kRight) == 0.0);
}

TEST_CASE("single-position rows put all weight on the center") {
  const auto w = normalize_bands(constant_logits(BandShape{2, 1, 2, 1}, 3.0));
  CHECK(w(1, 0, 1, 0, kCenter) == 1.0);
  CHECK(w(1, 0, 1, 0, kLeft) == 0.0);
  CHECK(w(1, 0, 1, 0, kRight) == 0.0);
}

TEST_CASE("hand-evaluated softmax (0, ln 2, 0)") {
  RawBandLogits<double> logits(BandShape{1, 1, 1, 3});
  logits(0, 0, 0, 1, kCenter) = std::log(2.0);
  const auto w = normalize_bands(logits);
  CHECK(w(0, 0, 0, 1, kLeft) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w(0, 0, 0, 1, kCenter) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w(0, 0, 0, 1, kRight) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("large logits stay finite") {
  RawBandLogits<double> logits(BandShape{1, 1, 1, 3});
  logits(0, 0, 0, 1, kLeft) = 1000;
  logits(0, 0, 0, 1, kCenter) = 999;
  const auto w = normalize_bands(logits);
  CHECK(std::isfinite(w(0, 0, 0, 1, kLeft)));
  CHECK(w(0, 0, 0, 1, kLeft) + w(0, 0, 0, 1, kCenter) + w(0, 0, 0, 1, kRight) == doctest::Approx(1.0));
}

TEST_CASE("non-finite logits are rejected with their index") {
  const BandShape shape{1, 1, 1, 2};
  Eigen::ArrayXd values = Eigen::ArrayXd::Zero(shape.size());
  values[4] = std::numeric_limits<double>::quiet_NaN();
  try {
    (void)make_logits<double>(shape, values);
    FAIL("expected rejection");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
  RawBandLogits<double> logits(shape);
  logits(0, 0, 0, 1, kRight) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(normalize_bands(logits), std::domain_error);
}

TEST_CASE("row stochastic on random instances") {
  Rng rng(21);
  const BandShape shape{5, 2, 3, 7};
  const auto w = normalize_bands(random_logits<double>(shape, rng, -6, 6));
  CHECK_NOTHROW(check_row_stochastic(w, 1e-12));
  for (Index s = 0; s < shape.steps; ++s)
    for (Index n = 0; n < shape.n; ++n)
      for (Index ch = 0; ch < shape.channels; ++ch)
        for (Index r = 0; r < shape.positions; ++r) {
          double sum = 0;
          for (int k = 0; k < kBands; ++k) {
            CHECK(w(s, n, ch, r, k) >= 0.0);
            if (!band_valid(r, k, shape.positions)) CHECK(w(s, n, ch, r, k) == 0.0);
            sum += w(s, n, ch, r, k);
          }
          CHECK(std::abs(sum - 1.0) <= 1e-12);
        }

  Rng frng(22);
  const auto wf = normalize_bands(random_logits<float>(shape, frng));
  CHECK_NOTHROW(check_row_stochastic(wf, 1e-6));
}

TEST_CASE("check_row_stochastic names the offending position") {
  auto w = normalize_bands(constant_logits(BandShape{2, 1, 1, 4}, 0.0));
  w(1, 0, 0, 2, kRight) += 0.01;
  try {
    check_row_stochastic(w);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find("position 2") != std::string::npos);
  }
  auto masked = normalize_bands(constant_logits(BandShape{1, 1, 1, 2}, 0.0));
  masked(0, 0, 0, 0, kLeft) = 0.1;
  masked(0, 0, 0, 0, kCenter) -= 0.1;
  CHECK_THROWS_AS(check_row_stochastic(masked), std::invalid_argument);
}

TEST_CASE("shift invariance per position") {
  Rng rng(4);
  const BandShape shape{3, 1, 2, 5};
  const auto logits = random_logits<double>(shape, rng);
  RawBandLogits<double> shifted = logits;
  for (Index s = 0; s < shape.steps; ++s)
    for (Index ch = 0; ch < shape.channels; ++ch)
      for (Index r = 0; r < shape.positions; ++r) {
        const double c = rng.uniform(-1, 1);
        for (int k = 0; k < kBands; ++k) shifted(s, 0, ch, r, k) += c;
      }
  const auto a = normalize_bands(logits);
  const auto b = normalize_bands(shifted);
  CHECK((a.values() - b.values()).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("backward trivial cases") {
  Rng rng(8);
  const BandShape shape{2, 1, 1, 3};
  const auto logits = random_logits<double>(shape, rng);
  BandGrad<double> zero(shape);
  CHECK((normalize_bands_backward(logits, zero).values() == 0.0).all());

  // Uniform weights with a constant grad: shift invariance gives zero.
  const auto uniform = constant_logits(shape, 0.0);
  BandGrad<double> ones(shape);
  ones.values().setOnes();
  CHECK(normalize_bands_backward(uniform, ones).values().abs().maxCoeff() < 1e-16);

  BandGrad<double> wrong(BandShape{1, 1, 1, 3});
  CHECK_THROWS_AS(normalize_bands_backward(logits, wrong), std::invalid_argument);
}

TEST_CASE("backward matches finite differences on every small shape") {
  for (Index steps = 1; steps <= 4; ++steps) {
    for (Index positions = 1; positions <= 5; ++positions) {
      Rng rng(static_cast<std::uint64_t>(100 * steps + positions));
      const BandShape shape{steps, 1, 2, positions};
      const auto logits = random_logits<double>(shape, rng);
      BandGrad<double> grad(shape);
      for (Index k = 0; k < grad.size(); ++k) grad.values()[k] = rng.uniform(-1, 1);

      const auto analytic = normalize_bands_backward(logits, grad);
      auto f = [&](const Eigen::VectorXd& v) {
        RawBandLogits<double> l(shape);
        l.values() = v.array();
        const auto w = normalize_bands(l);
        double acc = 0;
        for (Index k = 0; k < w.size(); ++k) acc += w.values()[k] * grad.values()[k];
        return acc;
      };
      // Masked grads are ignored, so compare against the loss restricted to valid slots.
      auto f_valid = [&](const Eigen::VectorXd& v) {
        RawBandLogits<double> l(shape);
        l.values() = v.array();
        const auto w = normalize_bands(l);
        double acc = 0;
        for (Index s = 0; s < steps; ++s)
          for (Index ch = 0; ch < 2; ++ch)
            for (Index r = 0; r < positions; ++r)
              for (int k = 0; k < kBands; ++k)
                if (band_valid(r, k, positions)) acc += w(s, 0, ch, r, k) * grad(s, 0, ch, r, k);
        return acc;
      };
      const Eigen::VectorXd at = logits.values().matrix();
      const Eigen::VectorXd fd = oracle::finite_diff_grad(f_valid, at, 1e-6);
      CHECK(oracle::relative_error(analytic.values().matrix(), fd) < 1e-7);
      // Masked slots are exactly zero in the normalized weights, so both losses coincide.
      CHECK(f(at) == doctest::Approx(f_valid(at)).epsilon(1e-15));
      for (Index r = 0; r < positions; ++r)
        for (int k = 0; k < kBands; ++k)
          if (!band_valid(r, k, positions)) CHECK(analytic(0, 0, 0, r, k) == 0.0);
    }
  }
}

TEST_CASE("normalization is independent of worker count") {
  Rng rng(30);
  const auto logits = random_logits<double>(BandShape{16, 2, 4, 33}, rng);
  BandWeights<double> a, b;
  {
    ScopedWorkers w(1);
    a = normalize_bands(logits);
  }
  {
    ScopedWorkers w(8);
    b = normalize_bands(logits);
  }
  CHECK((a.values() == b.values()).all());
}
