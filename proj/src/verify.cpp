#include "linescan/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <utility>

#include "linescan/gspn.hpp"
#include "linescan/oracle.hpp"
#include "linescan/rng.hpp"
#include "linescan/scan.hpp"

namespace linescan::verify {

namespace {

struct Instance {
  Shape4 dims{0, 0, 0, 0};
  Direction direction = Direction::TopToBottom;
  Index kchunk = 0;
  WeightMode mode = WeightMode::PerChannel;
  Tensor4<double> x, lambda, u;
  RawBandLogits<double> logits;
  BandWeights<double> w;

  Index steps() const { return ScanGeometry(dims, direction).steps; }
  Index weight_channel(Index c) const { return mode == WeightMode::Shared ? 0 : c; }
};

Instance make_instance(const Shape4& dims, Direction d, Index kchunk, WeightMode mode, Rng& rng) {
  Instance inst;
  inst.dims = dims;
  inst.direction = d;
  inst.kchunk = kchunk;
  inst.mode = mode;
  inst.x = make_tensor<double>(dims, SeededUniform{rng, -1.0, 1.0});
  inst.lambda = make_tensor<double>(dims, SeededUniform{rng, 0.0, 1.0});
  inst.u = make_tensor<double>(dims, SeededUniform{rng, -1.0, 1.0});
  inst.logits = random_logits<double>(band_shape_for(dims, d, mode == WeightMode::Shared ? 1 : dims.c), rng);
  inst.w = normalize_bands(inst.logits);
  return inst;
}

ScanPlan<double> plan_for(const Instance& inst, Stage stage) {
  ScanPlan<double> plan;
  plan.direction = inst.direction;
  plan.weight_mode = inst.mode;
  plan.kchunk = inst.kchunk;
  plan.stage = stage;
  return plan;
}

Index half_length(Index steps) { return (steps + 1) / 2; }

// Swaps the center and right bands at position 0 of the last step whose weights
// the scan actually reads. Rows stay stochastic, so validation still accepts them.
bool inject(BandWeights<double>& w, Index kchunk) {
  const BandShape& s = w.shape();
  if (s.positions < 2) return false;
  std::vector<bool> starts(static_cast<std::size_t>(s.steps), false);
  for (const Segment& seg : scan_segments(s.steps, kchunk)) starts[static_cast<std::size_t>(seg.begin)] = true;
  for (Index step = s.steps - 1; step >= 1; --step) {
    if (starts[static_cast<std::size_t>(step)]) continue;
    std::swap(w(step, 0, 0, 0, kCenter), w(step, 0, 0, 0, kRight));
    return true;
  }
  return false;
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string describe(const Instance& inst) {
  std::ostringstream os;
  os << "direction " << direction_name(inst.direction) << ", kchunk " << inst.kchunk << ", "
     << (inst.mode == WeightMode::Shared ? "shared" : "per-channel") << " weights";
  return os.str();
}

Eigen::VectorXd flat(const Tensor4<double>& t) {
  const Tensor4<double> c = t.layout().is_canonical() ? t : to_layout(t, Layout::canonical());
  return c.data().matrix();
}

}  // namespace

Scope parse_scope(std::string_view name) {
  if (name == "all") return Scope::All;
  if (name == "oracle") return Scope::Oracle;
  if (name == "grad") return Scope::Grad;
  if (name == "stages") return Scope::Stages;
  throw std::invalid_argument("unknown scope '" + std::string(name) + "' (expected all, oracle, grad or stages)");
}

std::string_view scope_name(Scope scope) {
  switch (scope) {
    case Scope::All: return "all";
    case Scope::Oracle: return "oracle";
    case Scope::Grad: return "grad";
    case Scope::Stages: return "stages";
  }
  return "?";
}

SuiteResult oracle_suite(std::uint64_t seed, bool inject_fault, std::ostream& log) {
  constexpr int kInstances = 200;
  SuiteResult result;
  result.name = "oracle";
  bool fault_pending = inject_fault;
  for (int k = 0; k < kInstances; ++k) {
    const std::uint64_t iseed = Rng::derive(seed, static_cast<std::uint64_t>(k));
    Rng rng(iseed);
    const Shape4 dims{rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 8), rng.uniform_int(1, 8)};
    const Direction d = kDirections[static_cast<std::size_t>(k % 4)];
    const WeightMode mode = rng.uniform_int(0, 1) ? WeightMode::Shared : WeightMode::PerChannel;
    const Index steps = ScanGeometry(dims, d).steps;
    const Index kchunk = (k / 4) % 2 == 0 ? 0 : half_length(steps);
    Instance inst = make_instance(dims, d, kchunk, mode, rng);
    const int stage_count = mode == WeightMode::Shared ? 6 : 5;
    const Stage stage = kStages[static_cast<std::size_t>(k % stage_count)];

    BandWeights<double> engine_w = inst.w;
    if (fault_pending && inject(engine_w, kchunk)) fault_pending = false;
    const ScanOutput<double> out = scan_forward(inst.x, engine_w, inst.lambda, inst.u, plan_for(inst, stage));

    double err = 0;
    for (Index n = 0; n < dims.n; ++n) {
      for (Index c = 0; c < dims.c; ++c) {
        const oracle::SliceMatrix lam = oracle::extract_slice(inst.lambda, d, n, c);
        const oracle::DenseGlobalOperator g =
            oracle::build_dense_operator(inst.w, n, inst.weight_channel(c), lam, kchunk);
        const oracle::SliceMatrix ref =
            oracle::dense_apply(g, oracle::extract_slice(inst.x, d, n, c), oracle::extract_slice(inst.u, d, n, c));
        const oracle::SliceMatrix got = oracle::extract_slice(out.y, d, n, c);
        err = std::max(err, (ref - got).cwiseAbs().maxCoeff());
      }
    }
    ++result.cases;
    result.worst = std::max(result.worst, err);
    if (!(err < 1e-12)) {
      result.failure = Counterexample{iseed, k, dims,
                                      describe(inst) + ", stage " + std::string(stage_name(stage)) +
                                          ": max |scan_forward - dense_apply| = " + sci(err)};
      return result;
    }
  }
  log << "oracle: " << result.cases << " instances, max |scan_forward - dense_apply| = " << sci(result.worst) << '\n';
  return result;
}

SuiteResult three_way_suite(std::uint64_t seed, bool inject_fault, std::ostream& log) {
  constexpr int kInstances = 50;
  SuiteResult result;
  result.name = "three-way";
  bool fault_pending = inject_fault;
  for (int k = 0; k < kInstances; ++k) {
    const std::uint64_t iseed = Rng::derive(seed ^ 0x3A3A3A3A3A3A3A3AULL, static_cast<std::uint64_t>(k));
    Rng rng(iseed);
    const Direction d = kDirections[static_cast<std::size_t>(k % 4)];
    const Index steps = rng.uniform_int(1, 6);
    const Index positions = rng.uniform_int(1, 6);
    const Shape4 dims = is_vertical(d) ? Shape4{1, 1, steps, positions} : Shape4{1, 1, positions, steps};
    const Index kchunk = k % 3 == 2 ? half_length(steps) : 0;
    Instance inst = make_instance(dims, d, kchunk, WeightMode::Shared, rng);

    BandWeights<double> engine_w = inst.w;
    if (fault_pending && inject(engine_w, kchunk)) fault_pending = false;
    const ScanOutput<double> out =
        scan_forward(inst.x, engine_w, inst.lambda, inst.u, plan_for(inst, Stage::S5_Compact));

    const oracle::SliceMatrix x = oracle::extract_slice(inst.x, d, 0, 0);
    const oracle::SliceMatrix lam = oracle::extract_slice(inst.lambda, d, 0, 0);
    const oracle::SliceMatrix u = oracle::extract_slice(inst.u, d, 0, 0);
    const oracle::SliceMatrix engine = oracle::extract_slice(out.y, d, 0, 0);
    const oracle::SliceMatrix attention = oracle::linear_attention_reference(x, inst.w, 0, 0, lam, u, kchunk);
    const oracle::SliceMatrix dense = oracle::dense_apply(oracle::build_dense_operator(inst.w, 0, 0, lam, kchunk), x, u);
    const double err = std::max({(engine - attention).cwiseAbs().maxCoeff(), (engine - dense).cwiseAbs().maxCoeff(),
                                 (attention - dense).cwiseAbs().maxCoeff()});
    ++result.cases;
    result.worst = std::max(result.worst, err);
    if (!(err < 1e-10)) {
      result.failure =
          Counterexample{iseed, k, dims, describe(inst) + ": max pairwise disagreement = " + sci(err)};
      return result;
    }
  }
  log << "three-way: " << result.cases << " instances, max pairwise disagreement = " << sci(result.worst) << '\n';
  return result;
}

namespace {

// Loss sum(y * probe) over the packed parameters [x, lambda, u, logits].
struct GradProblem {
  Instance inst;
  ScanPlan<double> plan;
  Tensor4<double> probe;

  Eigen::VectorXd pack() const {
    const Index e = inst.x.size();
    Eigen::VectorXd v(3 * e + inst.logits.size());
    v << inst.x.data().matrix(), inst.lambda.data().matrix(), inst.u.data().matrix(), inst.logits.values().matrix();
    return v;
  }

  double loss(const Eigen::VectorXd& v) const {
    const Index e = inst.x.size();
    Tensor4<double> x(inst.dims), lambda(inst.dims), u(inst.dims);
    x.data() = v.segment(0, e).array();
    lambda.data() = v.segment(e, e).array();
    u.data() = v.segment(2 * e, e).array();
    RawBandLogits<double> logits(inst.logits.shape());
    logits.values() = v.segment(3 * e, inst.logits.size()).array();
    const ScanOutput<double> out = scan_forward(x, normalize_bands(logits), lambda, u, plan);
    return (out.y.data() * probe.data()).sum();
  }
};

}  // namespace

SuiteResult grad_suite(std::uint64_t seed, bool inject_fault, std::ostream& log) {
  SuiteResult result;
  result.name = "grad";
  bool fault_pending = inject_fault;
  int shape_index = 0;
  for (Index n = 1; n <= 3; ++n) {
    for (Index c = 1; c <= 3; ++c) {
      for (Index h = 1; h <= 4; ++h) {
        for (Index w = 1; w <= 4; ++w, ++shape_index) {
          const Shape4 dims{n, c, h, w};
          const Direction d = kDirections[static_cast<std::size_t>(shape_index % 4)];
          double shape_worst = 0;
          for (int variant = 0; variant < 4; ++variant) {
            const std::uint64_t iseed =
                Rng::derive(seed ^ 0x6A6A6A6A6A6A6A6AULL, static_cast<std::uint64_t>(4 * shape_index + variant));
            Rng rng(iseed);
            const WeightMode mode = variant % 2 ? WeightMode::Shared : WeightMode::PerChannel;
            const Index steps = ScanGeometry(dims, d).steps;
            const Index kchunk = variant / 2 ? half_length(steps) : 0;

            GradProblem problem{make_instance(dims, d, kchunk, mode, rng), {}, {}};
            problem.plan = plan_for(problem.inst, Stage::S1_Fused);
            problem.probe = make_tensor<double>(dims, SeededUniform{rng, -1.0, 1.0});
            const Instance& inst = problem.inst;

            BandWeights<double> engine_w = inst.w;
            if (fault_pending && inject(engine_w, kchunk)) fault_pending = false;
            const ScanOutput<double> fwd = scan_forward(inst.x, engine_w, inst.lambda, inst.u, problem.plan);
            const ScanGradients<double> g =
                scan_backward(inst.x, engine_w, inst.lambda, inst.u, fwd, problem.plan, problem.probe);
            const BandGrad<double> glogits = normalize_bands_backward(inst.logits, g.grad_w);

            const Eigen::VectorXd fd =
                oracle::finite_diff_grad([&](const Eigen::VectorXd& v) { return problem.loss(v); }, problem.pack(), 1e-6);
            const std::pair<const char*, Eigen::VectorXd> groups[] = {
                {"x", flat(g.grad_x)},
                {"lambda", flat(g.grad_lambda)},
                {"u", flat(g.grad_u)},
                {"logits", glogits.values().matrix()},
            };
            Index offset = 0;
            for (const auto& [name, analytic] : groups) {
              const double err = oracle::relative_error(analytic, fd.segment(offset, analytic.size()));
              offset += analytic.size();
              shape_worst = std::max(shape_worst, err);
              ++result.cases;
              if (!(err < 1e-6)) {
                result.failure = Counterexample{iseed, 4 * shape_index + variant, dims,
                                                describe(inst) + ": relative error of d/d" + name + " = " + sci(err)};
                return result;
              }
            }
          }
          result.worst = std::max(result.worst, shape_worst);
          log << "grad " << to_string(dims) << " " << direction_name(d) << ": max relative error " << sci(shape_worst)
              << '\n';
        }
      }
    }
  }
  log << "grad: " << shape_index << " shapes, max relative error = " << sci(result.worst) << '\n';
  return result;
}

SuiteResult stages_suite(std::uint64_t seed, bool inject_fault, std::ostream& log) {
  constexpr int kConfigs = 50;
  SuiteResult result;
  result.name = "stages";
  bool fault_pending = inject_fault;
  for (int k = 0; k < kConfigs; ++k) {
    const std::uint64_t iseed = Rng::derive(seed ^ 0x5C5C5C5C5C5C5C5CULL, static_cast<std::uint64_t>(k));
    Rng rng(iseed);
    const Shape4 dims{rng.uniform_int(1, 4), rng.uniform_int(1, 8), rng.uniform_int(1, 64), rng.uniform_int(1, 64)};
    const Direction d = kDirections[static_cast<std::size_t>(rng.uniform_int(0, 3))];
    const WeightMode mode = k % 2 ? WeightMode::Shared : WeightMode::PerChannel;
    const Index steps = ScanGeometry(dims, d).steps;
    const Index kchunk = rng.uniform_int(0, 1) ? rng.uniform_int(1, steps) : 0;
    const Index c_slice = rng.uniform_int(1, 8);
    Instance inst = make_instance(dims, d, kchunk, mode, rng);

    ScanPlan<double> plan = plan_for(inst, Stage::S0_NaivePerStep);
    plan.c_slice = c_slice;
    const ScanOutput<double> ref = scan_forward(inst.x, inst.w, inst.lambda, inst.u, plan);
    BandWeights<double> engine_w = inst.w;
    if (fault_pending && inject(engine_w, kchunk)) fault_pending = false;

    const int stage_count = mode == WeightMode::Shared ? 6 : 5;
    for (int s = 1; s < stage_count; ++s) {
      plan.stage = kStages[static_cast<std::size_t>(s)];
      const ScanOutput<double> out = scan_forward(inst.x, engine_w, inst.lambda, inst.u, plan);
      const double err = std::max(max_abs_diff(ref.y, out.y), max_abs_diff(ref.hidden, out.hidden));
      ++result.cases;
      result.worst = std::max(result.worst, err);
      if (!(err <= 1e-12)) {
        result.failure = Counterexample{iseed, k, dims,
                                        describe(inst) + ", c_slice " + std::to_string(c_slice) + ": stage " +
                                            std::string(stage_name(plan.stage)) + " differs from S0 by " + sci(err)};
        return result;
      }
    }

    if (mode == WeightMode::Shared) {
      const DirectionalParams<double> params = random_directional_params<double>(dims, WeightMode::Shared, rng);
      ScanPlan<double> s4 = plan;
      s4.stage = Stage::S4_ChannelBlocked;
      ScanPlan<double> s5 = plan;
      s5.stage = Stage::S5_Compact;
      s5.proxy = identity_proxy<double>(dims.c);
      const double err = max_abs_diff(gspn_apply(inst.x, params, s4), gspn_proxy_apply(inst.x, params, s5));
      ++result.cases;
      result.worst = std::max(result.worst, err);
      if (!(err <= 1e-12)) {
        result.failure = Counterexample{iseed, k, dims,
                                        describe(inst) + ": S5 with identity proxy differs from S4 by " + sci(err)};
        return result;
      }
    }
  }
  log << "stages: " << result.cases << " comparisons, max |S_k - S0| = " << sci(result.worst) << '\n';
  return result;
}

SuiteResult stability_suite(std::uint64_t seed, std::ostream& log) {
  SuiteResult result;
  result.name = "stability";
  {
    Rng rng(Rng::derive(seed ^ 0x7E7E7E7E7E7E7E7EULL, 0));
    const BandShape shape{10, 1, 10, 100};  // 10^4 positions
    const BandWeights<double> w = normalize_bands(random_logits<double>(shape, rng, -8.0, 8.0));
    for (Index s = 0; s < shape.steps; ++s) {
      for (Index ch = 0; ch < shape.channels; ++ch) {
        for (Index r = 0; r < shape.positions; ++r) {
          double sum = 0;
          for (int k = 0; k < kBands; ++k) sum += w(s, 0, ch, r, k);
          const double err = std::abs(sum - 1.0);
          ++result.cases;
          result.worst = std::max(result.worst, err);
          if (!(err <= 1e-12)) {
            result.failure = Counterexample{seed, 0, Shape4{1, shape.channels, shape.steps, shape.positions},
                                            "row sum at step " + std::to_string(s) + ", channel " +
                                                std::to_string(ch) + ", position " + std::to_string(r) + " off by " +
                                                sci(err)};
            return result;
          }
        }
      }
    }
  }
  for (int k = 0; k < 100; ++k) {
    const std::uint64_t iseed = Rng::derive(seed ^ 0x7E7E7E7E7E7E7E7EULL, static_cast<std::uint64_t>(k + 1));
    Rng rng(iseed);
    const Shape4 dims{rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 16), rng.uniform_int(1, 16)};
    const Direction d = kDirections[static_cast<std::size_t>(k % 4)];
    const WeightMode mode = k % 2 ? WeightMode::Shared : WeightMode::PerChannel;
    const Index kchunk = k % 3 == 0 ? half_length(ScanGeometry(dims, d).steps) : 0;
    const Instance inst = make_instance(dims, d, kchunk, mode, rng);
    const ScanOutput<double> out = scan_forward(inst.x, inst.w, inst.lambda, inst.u, plan_for(inst, Stage::S1_Fused));
    ++result.cases;
    if (const auto v = find_stability_violation(inst.x, inst.lambda, out.hidden, d, kchunk)) {
      result.failure = Counterexample{iseed, k, dims,
                                      describe(inst) + ": ||h|| = " + sci(v->norm) + " exceeds bound " +
                                          sci(v->bound) + " at step " + std::to_string(v->step)};
      return result;
    }
  }
  log << "stability: 10000 row sums within " << sci(result.worst) << " of 1, 100 instances within the per-step bound\n";
  return result;
}

std::string repro_command(const Options& options, std::string_view suite) {
  std::string scope(scope_name(options.scope));
  if (options.scope == Scope::All && (suite == "oracle" || suite == "three-way")) scope = "oracle";
  if (options.scope == Scope::All && suite == "grad") scope = "grad";
  if (options.scope == Scope::All && suite == "stages") scope = "stages";
  std::string cmd = "linescan verify --scope " + scope + " --seed " + std::to_string(options.seed);
  if (options.inject_fault) cmd += " --inject-fault";
  return cmd;
}

bool run(const Options& options, std::ostream& out) {
  out << "verify scope=" << scope_name(options.scope) << " seed=" << options.seed
      << (options.inject_fault ? " (fault injected)" : "") << '\n';
  const bool all = options.scope == Scope::All;
  std::vector<SuiteResult> results;
  auto record = [&](SuiteResult r) {
    out << r.name << ": " << (r.passed() ? "PASS" : "FAIL") << '\n';
    results.push_back(std::move(r));
    return results.back().passed();
  };
  bool ok = true;
  if (all || options.scope == Scope::Oracle) {
    ok = record(oracle_suite(options.seed, options.inject_fault, out)) && ok;
    if (ok) ok = record(three_way_suite(options.seed, options.inject_fault, out)) && ok;
  }
  if (ok && (all || options.scope == Scope::Grad)) ok = record(grad_suite(options.seed, options.inject_fault, out));
  if (ok && (all || options.scope == Scope::Stages)) ok = record(stages_suite(options.seed, options.inject_fault, out));
  if (ok && all) ok = record(stability_suite(options.seed, out));

  for (const SuiteResult& r : results) {
    if (r.passed()) continue;
    const Counterexample& cx = *r.failure;
    out << "counterexample: suite " << r.name << ", instance " << cx.instance << ", instance seed " << hex(cx.instance_seed)
        << ", dims " << to_string(cx.dims) << '\n'
        << "  " << cx.detail << '\n'
        << "reproduce: " << repro_command(options, r.name) << '\n';
    break;
  }
  out << (ok ? "verify: all suites passed" : "verify: FAILED") << '\n';
  return ok;
}

}  // namespace linescan::verify
