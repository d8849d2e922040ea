#pragma once

#include <iosfwd>

namespace linescan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;

/// Parses and runs one subcommand: verify, bench, sweep or report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace linescan::cli
