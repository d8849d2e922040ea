#include "commands.hpp"

#include <map>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "linescan/config.hpp"
#include "linescan/parallel.hpp"
#include "linescan/report.hpp"
#include "linescan/verify.hpp"

namespace linescan::cli {

namespace {

using bench::BenchConfig;
using bench::ReportFormat;

// Flags shared by bench and sweep, kept as text so they go through the same
// parser as config files and fail with the same messages.
struct SweepFlags {
  std::map<std::string, std::string> settings;
  std::string format;

  void attach(CLI::App& cmd) {
    static constexpr std::pair<const char*, const char*> kFlags[] = {
        {"--dims", "dims"},       {"--stages", "stages"}, {"--directions", "directions"},
        {"--precision", "precision"}, {"--repeats", "repeats"}, {"--warmup", "warmup"},
        {"--kchunk", "kchunk"},   {"--c-slice", "c_slice"}, {"--c-proxy", "c_proxy"},
        {"--seed", "seed"},       {"--out", "out"},
    };
    for (const auto& [flag, key] : kFlags) {
      const std::string k = key;
      cmd.add_option_function<std::string>(
          flag, [this, k](const std::string& v) { settings[k] = v; }, "Sets `" + k + "`");
    }
    cmd.add_option("--format", format, "Report format: csv or json (default from the --out extension)");
  }

  void apply(BenchConfig& config) const {
    for (const auto& [key, value] : settings) bench::apply_setting(config, key, value);
  }
};

ReportFormat output_format(const std::string& flag, const std::string& path) {
  if (!flag.empty()) return bench::parse_report_format(flag);
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) return ReportFormat::JSON;
  return ReportFormat::CSV;
}

int run_benchmarks(const BenchConfig& config, const std::string& format_flag, std::ostream& out, std::ostream& err) {
  ReportFormat format;
  try {
    bench::validate_config(config);
    format = output_format(format_flag, config.out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  std::ostream& echo = config.out.empty() ? err : out;
  echo << "# resolved config\n" << bench::describe_config(config) << "workers = " << worker_count() << '\n';
  echo.flush();

  std::vector<bench::Measurement> results;
  try {
    if (!config.out.empty()) bench::emit_report(results, format, config.out);
    std::vector<bench::Measurement> partial;
    results = bench::run_sweep(config, [&](const bench::Measurement& m) {
      partial.push_back(m);
      if (!config.out.empty()) bench::emit_report(partial, format, config.out);
    });
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  if (config.out.empty()) {
    if (format == ReportFormat::CSV) {
      bench::write_csv(out, results);
    } else {
      bench::write_json(out, results);
    }
  } else {
    out << "wrote " << results.size() << " measurement(s) to " << config.out << '\n';
  }
  int aborted = 0;
  for (const bench::Measurement& m : results) aborted += m.error ? 1 : 0;
  if (aborted > 0) err << aborted << " measurement(s) aborted; see the error markers in the report\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Line-scan propagation: verification, benchmarks and reports", "linescan"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::optional<int> workers;
  app.add_option("--workers", workers, "Worker threads (default: LINESCAN_WORKERS, else logical cores)");

  verify::Options verify_options;
  std::string scope = "all";
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the seeded property suites");
  verify_cmd->add_option("--scope", scope, "all, oracle, grad or stages")->capture_default_str();
  verify_cmd->add_option("--seed", verify_options.seed, "Base seed")->capture_default_str();
  verify_cmd->add_flag("--inject-fault", verify_options.inject_fault)->group("");

  std::string config_path;
  SweepFlags bench_flags;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run the sweep described by a config file");
  bench_cmd->add_option("--config", config_path, "Config file (key = value)")->required();
  bench_flags.attach(*bench_cmd);

  SweepFlags sweep_flags;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a sweep described by flags");
  sweep_flags.attach(*sweep_cmd);

  std::string report_input;
  std::string report_format = "text";
  CLI::App* report_cmd = app.add_subcommand("report", "Print the stage ladder of a saved report");
  report_cmd->add_option("input", report_input, "CSV or JSON report")->required();
  report_cmd->add_option("--format", report_format, "text or json")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (workers) {
    if (*workers < 1) {
      err << "error: --workers must be >= 1, got " << *workers << '\n';
      return kExitUsage;
    }
    set_worker_count(*workers);
  }

  if (*verify_cmd) {
    try {
      verify_options.scope = verify::parse_scope(scope);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
    return verify::run(verify_options, out) ? kExitOk : kExitVerifyFailed;
  }

  if (*bench_cmd || *sweep_cmd) {
    BenchConfig config;
    const SweepFlags& flags = *bench_cmd ? bench_flags : sweep_flags;
    try {
      if (*bench_cmd) {
        config = bench::load_config(config_path);
      } else {
        config.stages.assign(kStages.begin(), kStages.end());
      }
      flags.apply(config);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
    return run_benchmarks(config, flags.format, out, err);
  }

  std::vector<bench::Measurement> measurements;
  try {
    if (report_format != "text" && report_format != "json") {
      throw std::invalid_argument("unknown report format '" + report_format + "' (expected text or json)");
    }
    measurements = bench::read_report(report_input);
    if (report_format == "json") {
      bench::write_json(out, measurements);
    } else {
      bench::print_ladders(out, measurements);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace linescan::cli
