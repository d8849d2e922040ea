#include "linescan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "linescan/gspn.hpp"
#include "linescan/parallel.hpp"

namespace linescan::bench {

std::string direction_label(const DirectionChoice& d) {
  return d.all ? std::string("all") : std::string(direction_name(d.direction));
}

DirectionChoice parse_direction_choice(std::string_view text) {
  if (text == "all") return DirectionChoice::four();
  return DirectionChoice::single(parse_direction(text));
}

Timing summarize(std::vector<std::int64_t> samples) {
  if (samples.empty()) throw std::invalid_argument("summarize: no samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  Timing t;
  t.min_ns = samples.front();
  t.median_ns = n % 2 == 1 ? samples[n / 2] : (samples[n / 2 - 1] + samples[n / 2]) / 2;
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n)));
  t.p90_ns = samples[std::max<std::size_t>(rank, 1) - 1];
  return t;
}

std::int64_t estimate_bytes(const MeasureSpec& spec) {
  const Shape4& d = spec.dims;
  const bool compact = spec.stage == Stage::S5_Compact;
  const bool proxy = compact && spec.c_proxy > 0;
  const std::int64_t pixels = d.n * d.h * d.w;
  const std::int64_t full = pixels * d.c;
  const std::int64_t scanned = pixels * (proxy ? spec.c_proxy : d.c);
  const std::int64_t weights = 3 * pixels * (compact ? 1 : d.c);

  const std::int64_t per_pass = spec.stage == Stage::S0_NaivePerStep ? 8 * scanned + weights : 5 * scanned + weights;
  const std::int64_t passes = spec.direction.all ? 4 : 1;
  std::int64_t elements = passes * per_pass;
  if (spec.direction.all) elements += 5 * scanned;   // read four outputs, write the merge
  if (proxy) elements += 2 * (full + scanned);      // down and up projections
  const std::int64_t element_bytes = spec.precision == Precision::F32 ? 4 : 8;
  return elements * element_bytes;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename Scalar>
Timing time_typed(const MeasureSpec& spec) {
  Rng rng(spec.seed);
  const Shape4& dims = spec.dims;
  const bool compact = spec.stage == Stage::S5_Compact;
  const bool use_proxy = compact && spec.c_proxy > 0;
  if (use_proxy && spec.c_proxy > dims.c) {
    throw MeasurementError("c_proxy " + std::to_string(spec.c_proxy) + " exceeds C = " + std::to_string(dims.c));
  }
  const Shape4 scanned{dims.n, use_proxy ? spec.c_proxy : dims.c, dims.h, dims.w};
  const WeightMode mode = compact ? WeightMode::Shared : WeightMode::PerChannel;

  ScanPlan<Scalar> plan;
  plan.stage = spec.stage;
  plan.weight_mode = mode;
  plan.kchunk = spec.kchunk;
  plan.c_slice = spec.c_slice;

  Tensor4<Scalar> x = make_tensor<Scalar>(dims, SeededUniform{rng, -1.0, 1.0});
  BandWeights<Scalar> w;
  Tensor4<Scalar> lambda, u, compressed, expanded, merged;
  ProxyConfig<Scalar> proxy;
  ScanOutput<Scalar> out;
  DirectionalParams<Scalar> params;
  std::function<void()> run;
  const Tensor4<Scalar>* result = nullptr;
  const Tensor4<Scalar>* hidden = nullptr;

  if (!spec.direction.all) {
    const Direction d = spec.direction.direction;
    plan.direction = d;
    const Layout native = native_layout(spec.stage, d);
    lambda = to_layout(make_tensor<Scalar>(scanned, SeededUniform{rng, 0.0, 1.0}), native);
    u = to_layout(make_tensor<Scalar>(scanned, SeededUniform{rng, -1.0, 1.0}), native);
    w = normalize_bands(random_logits<Scalar>(band_shape_for(dims, d, compact ? 1 : scanned.c), rng));
    x = to_layout(x, native);
    out = ScanOutput<Scalar>{Tensor4<Scalar>(scanned, native), Tensor4<Scalar>(scanned, native)};
    if (use_proxy) {
      proxy = random_proxy<Scalar>(dims.c, spec.c_proxy, rng);
      compressed = Tensor4<Scalar>(scanned, native);
      expanded = Tensor4<Scalar>(dims, native);
      run = [&] {
        proxy_mix_into(x, proxy.down, compressed);
        scan_forward_into(compressed, w, lambda, u, plan, out);
        proxy_mix_into(out.y, proxy.up, expanded);
      };
      result = &expanded;
    } else {
      run = [&] { scan_forward_into(x, w, lambda, u, plan, out); };
      result = &out.y;
      hidden = &out.hidden;
    }
  } else {
    params = random_directional_params<Scalar>(scanned, mode, rng);
    if (use_proxy) {
      plan.proxy = random_proxy<Scalar>(dims.c, spec.c_proxy, rng);
      run = [&] { merged = gspn_proxy_apply(x, params, plan); };
    } else {
      run = [&] { merged = gspn_apply(x, params, plan); };
    }
    result = &merged;
  }

  run();
  const Tensor4<Scalar> reference = *result;
  const Tensor4<Scalar> reference_hidden = hidden ? *hidden : Tensor4<Scalar>();
  auto check = [&](int k) {
    bool same = (result->data() == reference.data()).all();
    if (same && hidden) same = (hidden->data() == reference_hidden.data()).all();
    if (!same) {
      throw MeasurementError("stage " + std::string(stage_name(spec.stage)) + " output of run " + std::to_string(k) +
                             " differs from the first run");
    }
  };
  for (int k = 1; k < spec.warmup; ++k) {
    run();
    check(k);
  }

  std::vector<std::int64_t> samples;
  samples.reserve(static_cast<std::size_t>(spec.repeats));
  for (int k = 0; k < spec.repeats; ++k) {
    const auto t0 = Clock::now();
    run();
    const auto t1 = Clock::now();
    samples.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    check(spec.warmup + k);
  }
  return summarize(std::move(samples));
}

}  // namespace

Measurement time_stage(const MeasureSpec& spec) {
  if (spec.repeats < 1) throw std::invalid_argument("time_stage: repeats must be >= 1");
  if (spec.warmup < 1) throw std::invalid_argument("time_stage: warmup must be >= 1");
  (void)checked_size(spec.dims);

  Measurement m;
  m.stage = spec.stage;
  m.direction = direction_label(spec.direction);
  m.dims = spec.dims;
  m.precision = spec.precision;
  m.kchunk = spec.kchunk;
  m.c_slice = spec.c_slice;
  m.c_proxy = spec.stage == Stage::S5_Compact ? spec.c_proxy : 0;
  m.workers = worker_count();
  m.repeats = spec.repeats;
  m.seed = spec.seed;
  m.bytes_est = estimate_bytes(spec);
  m.timing = spec.precision == Precision::F32 ? time_typed<float>(spec) : time_typed<double>(spec);
  m.throughput_bps = m.timing.median_ns > 0 ? static_cast<double>(m.bytes_est) / (m.timing.median_ns * 1e-9) : 0.0;
  return m;
}

void validate_config(const BenchConfig& config) {
  if (config.repeats < 5) throw std::invalid_argument("repeats must be >= 5, got " + std::to_string(config.repeats));
  if (config.warmup < 2) throw std::invalid_argument("warmup must be >= 2, got " + std::to_string(config.warmup));
  if (config.kchunk < 0) throw std::invalid_argument("kchunk must be >= 0");
  if (config.c_slice < 1) throw std::invalid_argument("c_slice must be >= 1");
  if (config.c_proxy && *config.c_proxy < 0) throw std::invalid_argument("c_proxy must be >= 0");
  for (const Shape4& d : config.dims) (void)checked_size(d);
}

Index resolved_c_proxy(const BenchConfig& config, Stage stage, Index channels) {
  if (stage != Stage::S5_Compact) return 0;
  if (config.c_proxy) return *config.c_proxy;
  return std::min(kDefaultProxyChannels, channels);
}

std::vector<Measurement> run_sweep(const BenchConfig& config,
                                   const std::function<void(const Measurement&)>& on_measurement) {
  validate_config(config);
  std::vector<Measurement> results;
  const std::size_t total = config.dims.size() * config.stages.size() * config.directions.size();
  for (const Shape4& dims : config.dims) {
    for (Stage stage : config.stages) {
      for (const DirectionChoice& dir : config.directions) {
        MeasureSpec spec;
        spec.stage = stage;
        spec.direction = dir;
        spec.dims = dims;
        spec.precision = config.precision;
        spec.kchunk = config.kchunk;
        spec.c_slice = config.c_slice;
        spec.c_proxy = resolved_c_proxy(config, stage, dims.c);
        spec.repeats = config.repeats;
        spec.warmup = config.warmup;
        spec.seed = config.seed;

        Measurement m;
        try {
          m = time_stage(spec);
        } catch (const std::exception& e) {
          m.stage = stage;
          m.direction = direction_label(dir);
          m.dims = dims;
          m.precision = config.precision;
          m.kchunk = config.kchunk;
          m.c_slice = config.c_slice;
          m.c_proxy = spec.c_proxy;
          m.workers = worker_count();
          m.repeats = config.repeats;
          m.seed = config.seed;
          m.bytes_est = estimate_bytes(spec);
          m.error = e.what();
        }
        results.push_back(m);

        std::ostringstream line;
        line << "[" << results.size() << "/" << total << "] " << stage_name(stage) << " " << m.direction << " "
             << to_string(dims) << " " << precision_name(config.precision);
        if (m.error) {
          line << " ABORTED: " << *m.error;
        } else {
          line << " median " << std::fixed << std::setprecision(3) << m.timing.median_ns * 1e-6 << " ms";
        }
        std::clog << line.str() << std::endl;
        if (on_measurement) on_measurement(m);
      }
    }
  }
  return results;
}

double predict_saturation(const CostModel& model, std::int64_t active_slices) {
  if (model.capacity < 1) throw std::invalid_argument("CostModel capacity must be >= 1");
  if (!(model.t_wave > 0)) throw std::invalid_argument("CostModel t_wave must be > 0");
  if (active_slices < 1) throw std::invalid_argument("predict_saturation: active_slices must be >= 1");
  const std::int64_t waves = (active_slices + model.capacity - 1) / model.capacity;
  return model.t_wave * static_cast<double>(waves);
}

Ladder compare_stages(const std::vector<Measurement>& measurements) {
  for (const Measurement& m : measurements) {
    if (!(m.dims == measurements.front().dims) || m.precision != measurements.front().precision) {
      throw std::invalid_argument("compare_stages: measurements must share dims and precision");
    }
  }
  Ladder ladder;
  for (Stage s : kStages) ladder.rows[static_cast<std::size_t>(stage_index(s))].stage = s;
  for (const Measurement& m : measurements) {
    LadderRow& row = ladder.rows[static_cast<std::size_t>(stage_index(m.stage))];
    if (m.error || row.present) continue;
    row.present = true;
    row.median_ns = m.timing.median_ns;
  }
  const LadderRow* first = nullptr;
  const LadderRow* prev = nullptr;
  for (LadderRow& row : ladder.rows) {
    if (!row.present) continue;
    if (!first) first = &row;
    const double median = static_cast<double>(std::max<std::int64_t>(row.median_ns, 1));
    row.speedup_vs_first = static_cast<double>(std::max<std::int64_t>(first->median_ns, 1)) / median;
    row.speedup_vs_prev = prev ? static_cast<double>(std::max<std::int64_t>(prev->median_ns, 1)) / median : 1.0;
    prev = &row;
  }
  return ladder;
}

}  // namespace linescan::bench
