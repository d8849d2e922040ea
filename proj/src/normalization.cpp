#include "linescan/normalization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "linescan/parallel.hpp"

namespace linescan {

std::string to_string(const BandShape& s) {
  std::ostringstream os;
  os << "[" << s.steps << ", " << s.n << ", " << s.channels << ", " << s.positions << ", 3]";
  return os.str();
}

BandShape band_shape_for(const Shape4& shape, Direction d, Index channels) {
  const ScanGeometry g(shape, d);
  return BandShape{g.steps, g.n, channels, g.positions};
}

template <typename Scalar>
RawBandLogits<Scalar> make_logits(const BandShape& shape, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& values) {
  RawBandLogits<Scalar> logits(shape);
  if (values.size() != logits.size()) {
    throw std::invalid_argument("logit array has " + std::to_string(values.size()) + " values, shape " +
                                to_string(shape) + " needs " + std::to_string(logits.size()));
  }
  for (Index k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw std::domain_error("non-finite logit at flat index " + std::to_string(k));
    }
  }
  logits.values() = values;
  return logits;
}

template <typename Scalar>
RawBandLogits<Scalar> random_logits(const BandShape& shape, Rng& rng, double lo, double hi) {
  RawBandLogits<Scalar> logits(shape);
  for (Index k = 0; k < logits.size(); ++k) logits.values()[k] = static_cast<Scalar>(rng.uniform(lo, hi));
  return logits;
}

template <typename Scalar>
BandWeights<Scalar> normalize_bands(const RawBandLogits<Scalar>& logits) {
  const BandShape& s = logits.shape();
  for (Index k = 0; k < logits.size(); ++k) {
    if (!std::isfinite(logits.values()[k])) {
      throw std::domain_error("non-finite logit at flat index " + std::to_string(k));
    }
  }
  BandWeights<Scalar> w(s);
  const Index rows = s.steps * s.n * s.channels;
  parallel_for(rows, [&](std::int64_t row) {
    const Scalar* in = logits.values().data() + row * s.positions * kBands;
    Scalar* out = w.values().data() + row * s.positions * kBands;
    for (Index r = 0; r < s.positions; ++r) {
      const Scalar* l = in + r * kBands;
      Scalar* o = out + r * kBands;
      Scalar peak = -std::numeric_limits<Scalar>::infinity();
      for (int k = 0; k < kBands; ++k) {
        if (band_valid(r, k, s.positions)) peak = std::max(peak, l[k]);
      }
      Scalar total = 0;
      for (int k = 0; k < kBands; ++k) {
        o[k] = band_valid(r, k, s.positions) ? std::exp(l[k] - peak) : Scalar(0);
        total += o[k];
      }
      for (int k = 0; k < kBands; ++k) o[k] /= total;
    }
  });
  return w;
}

template <typename Scalar>
BandGrad<Scalar> normalize_bands_backward(const RawBandLogits<Scalar>& logits,
                                          const BandGrad<Scalar>& grad_weights) {
  if (!(logits.shape() == grad_weights.shape())) {
    throw std::invalid_argument("normalize_bands_backward: logits " + to_string(logits.shape()) +
                                " vs grad " + to_string(grad_weights.shape()));
  }
  const BandWeights<Scalar> w = normalize_bands(logits);
  const BandShape& s = logits.shape();
  BandGrad<Scalar> out(s);
  const Index rows = s.steps * s.n * s.channels;
  parallel_for(rows, [&](std::int64_t row) {
    const Index base = row * s.positions * kBands;
    for (Index r = 0; r < s.positions; ++r) {
      const Scalar* wk = w.values().data() + base + r * kBands;
      const Scalar* gk = grad_weights.values().data() + base + r * kBands;
      Scalar* dk = out.values().data() + base + r * kBands;
      Scalar dot = 0;
      for (int k = 0; k < kBands; ++k) {
        if (band_valid(r, k, s.positions)) dot += wk[k] * gk[k];
      }
      for (int k = 0; k < kBands; ++k) {
        dk[k] = band_valid(r, k, s.positions) ? wk[k] * (gk[k] - dot) : Scalar(0);
      }
    }
  });
  return out;
}

namespace {

template <typename Scalar>
bool row_ok(const Scalar* row, Index positions, double tol) {
  for (Index r = 0; r < positions; ++r) {
    const Scalar* v = row + r * kBands;
    double sum = 0;
    for (int k = 0; k < kBands; ++k) {
      if (!(v[k] >= 0) || (!band_valid(r, k, positions) && v[k] != 0)) return false;
      sum += static_cast<double>(v[k]);
    }
    if (!(std::abs(sum - 1.0) <= tol)) return false;
  }
  return true;
}

template <typename Scalar>
[[noreturn]] void report_bad_row(const BandWeights<Scalar>& w, Index step, Index n, Index ch, double tol) {
  const Index positions = w.shape().positions;
  const Scalar* row = w.row(step, n, ch);
  for (Index r = 0; r < positions; ++r) {
    const Scalar* v = row + r * kBands;
    double sum = 0;
    for (int k = 0; k < kBands; ++k) {
      if (!(v[k] >= 0) || (!band_valid(r, k, positions) && v[k] != 0)) {
        std::ostringstream os;
        os << "band weight out of range at (step " << step << ", n " << n << ", channel " << ch
           << ", position " << r << ", band " << k << "): " << v[k];
        throw std::invalid_argument(os.str());
      }
      sum += static_cast<double>(v[k]);
    }
    if (!(std::abs(sum - 1.0) <= tol)) {
      std::ostringstream os;
      os << "band weights not row-stochastic at (step " << step << ", n " << n << ", channel " << ch
         << ", position " << r << "): row sum " << sum;
      throw std::invalid_argument(os.str());
    }
  }
  throw std::logic_error("report_bad_row: row is valid");
}

}  // namespace

template <typename Scalar>
void check_row_stochastic(const BandWeights<Scalar>& w, double tol) {
  const BandShape& s = w.shape();
  const Index rows = s.steps * s.n * s.channels;
  std::vector<char> ok(static_cast<std::size_t>(rows), 1);
  parallel_for(rows, [&](std::int64_t row) {
    ok[static_cast<std::size_t>(row)] = row_ok(w.values().data() + row * s.positions * kBands, s.positions, tol);
  });
  for (Index row = 0; row < rows; ++row) {
    if (ok[static_cast<std::size_t>(row)]) continue;
    const Index ch = row % s.channels;
    const Index n = (row / s.channels) % s.n;
    const Index step = row / (s.channels * s.n);
    report_bad_row(w, step, n, ch, tol);
  }
}

#define LINESCAN_INSTANTIATE(S)                                                                      \
  template RawBandLogits<S> make_logits<S>(const BandShape&, const Eigen::Array<S, Eigen::Dynamic, 1>&); \
  template RawBandLogits<S> random_logits<S>(const BandShape&, Rng&, double, double);                 \
  template BandWeights<S> normalize_bands<S>(const RawBandLogits<S>&);                                \
  template BandGrad<S> normalize_bands_backward<S>(const RawBandLogits<S>&, const BandGrad<S>&);       \
  template void check_row_stochastic<S>(const BandWeights<S>&, double);

LINESCAN_INSTANTIATE(float)
LINESCAN_INSTANTIATE(double)
#undef LINESCAN_INSTANTIATE

}  // namespace linescan
