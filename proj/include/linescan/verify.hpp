#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "linescan/tensor.hpp"

// Seeded property suites that check the engine against the dense oracle, finite
// differences, and itself across stages. Output is independent of worker count.
namespace linescan::verify {

enum class Scope { All, Oracle, Grad, Stages };

Scope parse_scope(std::string_view name);
std::string_view scope_name(Scope scope);

struct Options {
  Scope scope = Scope::All;
  std::uint64_t seed = 0;
  bool inject_fault = false;  // swap two bands of one position in the engine's weights
};

struct Counterexample {
  std::uint64_t instance_seed = 0;
  int instance = 0;
  Shape4 dims{0, 0, 0, 0};
  std::string detail;
};

struct SuiteResult {
  std::string name;
  int cases = 0;
  double worst = 0;  // largest error seen; meaning depends on the suite
  std::optional<Counterexample> failure;
  bool passed() const { return !failure; }
};

/// Suites in a fixed order. Each writes its progress lines to `log`.
SuiteResult oracle_suite(std::uint64_t seed, bool inject_fault, std::ostream& log);
SuiteResult three_way_suite(std::uint64_t seed, bool inject_fault, std::ostream& log);
SuiteResult grad_suite(std::uint64_t seed, bool inject_fault, std::ostream& log);
SuiteResult stages_suite(std::uint64_t seed, bool inject_fault, std::ostream& log);
SuiteResult stability_suite(std::uint64_t seed, std::ostream& log);

/// The command line that reproduces a run with `options`.
std::string repro_command(const Options& options, std::string_view suite);

/// Runs the selected suites, printing one pass/fail line per suite and, for the
/// first failure, its counterexample and reproduction command. True iff all pass.
bool run(const Options& options, std::ostream& out);

}  // namespace linescan::verify
