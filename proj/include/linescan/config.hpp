#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "linescan/bench.hpp"

namespace linescan::bench {

/// A config or flag value that cannot be used. The message names the offending token.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Shape4 parse_dims(std::string_view token);                         // "4x8x256x256"
std::vector<Shape4> parse_dims_list(std::string_view text);        // ';' or ',' separated
std::vector<Stage> parse_stage_list(std::string_view text);        // "S0,S2" or "all"
std::vector<DirectionChoice> parse_direction_list(std::string_view text);  // "L2R,all"

/// Applies one `key = value` setting to `config`.
void apply_setting(BenchConfig& config, std::string_view key, std::string_view value);

/// Flat `key = value` text. Blank lines and lines starting with '#' are skipped.
BenchConfig parse_config(std::istream& is, const std::string& source = "<config>");
BenchConfig load_config(const std::string& path);

/// The resolved config as `key = value` lines, parseable by parse_config.
std::string describe_config(const BenchConfig& config);

}  // namespace linescan::bench
