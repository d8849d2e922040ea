#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "linescan/scan.hpp"

namespace linescan::bench {

/// A single direction, or all four merged through gspn_apply.
struct DirectionChoice {
  bool all = false;
  Direction direction = Direction::TopToBottom;

  static DirectionChoice single(Direction d) { return {false, d}; }
  static DirectionChoice four() { return {true, Direction::TopToBottom}; }
  bool operator==(const DirectionChoice&) const = default;
};

std::string direction_label(const DirectionChoice& d);  // "T2B" ... or "all"
DirectionChoice parse_direction_choice(std::string_view text);

// Stages S0-S4 run per-channel weights; S5 runs channel-shared weights and,
// when c_proxy > 0, the proxy-compressed path.
struct MeasureSpec {
  Stage stage = Stage::S1_Fused;
  DirectionChoice direction = DirectionChoice::single(Direction::LeftToRight);
  Shape4 dims;
  Precision precision = Precision::F32;
  Index kchunk = 0;
  Index c_slice = 4;
  Index c_proxy = 0;  // only used by S5; 0 disables the proxy
  int repeats = 5;
  int warmup = 2;
  std::uint64_t seed = 0;
};

struct Timing {
  std::int64_t median_ns = 0;
  std::int64_t min_ns = 0;
  std::int64_t p90_ns = 0;
};

/// Order statistics over samples: median (mean of the middle pair when even),
/// minimum, nearest-rank 90th percentile.
Timing summarize(std::vector<std::int64_t> samples_ns);

struct Measurement {
  Stage stage = Stage::S0_NaivePerStep;
  std::string direction = "L2R";
  Shape4 dims;
  Precision precision = Precision::F32;
  Index kchunk = 0;
  Index c_slice = 4;
  Index c_proxy = 0;
  int workers = 1;
  int repeats = 5;
  std::uint64_t seed = 0;
  Timing timing;
  std::int64_t bytes_est = 0;
  double throughput_bps = 0;
  std::optional<std::string> error;  // set when the measurement was aborted
};

/// Analytic bytes moved by one call of the stage's defined access pattern.
///   S0:     x, lambda, u, w read once; h_{s-1} re-read (3 neighbors) from memory; h, y written
///   S1-S4:  x, lambda, u, w read once; h, y written; h_{s-1} stays in a local buffer
///   S5:     as S4 but weights shared across channels; with a proxy, the scan runs on
///           c_proxy channels and the two projections add their reads and writes
/// Four-direction runs add one pass per direction plus the merge.
std::int64_t estimate_bytes(const MeasureSpec& spec);

class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Times `repeats` runs after `warmup` discarded runs. Inputs come from `seed`.
/// Every run's output must equal the first bit-for-bit, else MeasurementError.
Measurement time_stage(const MeasureSpec& spec);

struct BenchConfig {
  std::vector<Shape4> dims;
  std::vector<Stage> stages;
  std::vector<DirectionChoice> directions{DirectionChoice::single(Direction::LeftToRight)};
  Precision precision = Precision::F32;
  int repeats = 5;
  int warmup = 2;
  Index kchunk = 0;
  Index c_slice = 4;
  std::optional<Index> c_proxy;  // unset: default proxy width, clamped to C
  std::string out;
  std::uint64_t seed = 0;
};

/// Throws std::invalid_argument when repeats < 5, warmup < 2, or dims are not positive.
void validate_config(const BenchConfig& config);

/// c_proxy recorded for `stage` at `channels`: 0 before S5, else the configured
/// value or min(kDefaultProxyChannels, channels).
Index resolved_c_proxy(const BenchConfig& config, Stage stage, Index channels);

/// dims x stages x directions in that nesting order. Aborted measurements are
/// kept with their error set. `on_measurement` sees each result as it lands.
std::vector<Measurement> run_sweep(const BenchConfig& config,
                                   const std::function<void(const Measurement&)>& on_measurement = {});

struct CostModel {
  static constexpr std::int64_t kDefaultCapacity = 108 * 32;  // resident blocks on a 108-SM GPU
  std::int64_t capacity = kDefaultCapacity;
  double t_wave = 1.0;  // seconds per wave
};

/// t_wave * ceil(active_slices / capacity).
double predict_saturation(const CostModel& model, std::int64_t active_slices);

struct LadderRow {
  Stage stage;
  bool present = false;
  std::int64_t median_ns = 0;
  double speedup_vs_first = 0;  // cumulative, against S0 (or the first present stage)
  double speedup_vs_prev = 0;   // against the previous present stage
};

struct Ladder {
  std::array<LadderRow, 6> rows;
};

/// Stage ladder S0 -> S5. All measurements must share dims and precision.
Ladder compare_stages(const std::vector<Measurement>& measurements);

}  // namespace linescan::bench
