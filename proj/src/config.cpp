#include "linescan/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace linescan::bench {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> tokens(std::string_view text, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t pos = text.find_first_of(seps, start);
    const std::string_view tok = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!tok.empty()) out.push_back(tok);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_integer(std::string_view key, std::string_view text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("malformed value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

}  // namespace

Shape4 parse_dims(std::string_view token) {
  const std::string_view t = trim(token);
  Index v[4];
  std::size_t start = 0;
  for (int k = 0; k < 4; ++k) {
    const std::size_t pos = k < 3 ? t.find_first_of("xX", start) : t.size();
    if (pos == std::string_view::npos) throw ConfigError("malformed dims '" + std::string(t) + "' (expected NxCxHxW)");
    const std::string_view part = t.substr(start, pos - start);
    const auto res = std::from_chars(part.data(), part.data() + part.size(), v[k]);
    if (part.empty() || res.ec != std::errc() || res.ptr != part.data() + part.size() || v[k] < 1) {
      throw ConfigError("malformed dims '" + std::string(t) + "' (expected NxCxHxW)");
    }
    start = pos + 1;
  }
  const Shape4 shape{v[0], v[1], v[2], v[3]};
  try {
    (void)checked_size(shape);
  } catch (const std::exception& e) {
    throw ConfigError("dims '" + std::string(t) + "': " + e.what());
  }
  return shape;
}

std::vector<Shape4> parse_dims_list(std::string_view text) {
  std::vector<Shape4> out;
  for (std::string_view tok : tokens(text, ";,")) out.push_back(parse_dims(tok));
  return out;
}

std::vector<Stage> parse_stage_list(std::string_view text) {
  std::vector<Stage> out;
  for (std::string_view tok : tokens(text, ",;")) {
    if (tok == "all") {
      out.insert(out.end(), kStages.begin(), kStages.end());
      continue;
    }
    try {
      out.push_back(parse_stage(tok));
    } catch (const std::invalid_argument&) {
      throw ConfigError("unknown stage '" + std::string(tok) + "'");
    }
  }
  return out;
}

std::vector<DirectionChoice> parse_direction_list(std::string_view text) {
  std::vector<DirectionChoice> out;
  for (std::string_view tok : tokens(text, ",;")) {
    try {
      out.push_back(parse_direction_choice(tok));
    } catch (const std::invalid_argument&) {
      throw ConfigError("unknown direction '" + std::string(tok) + "'");
    }
  }
  return out;
}

void apply_setting(BenchConfig& config, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "dims") {
    config.dims = parse_dims_list(value);
  } else if (key == "stages") {
    config.stages = parse_stage_list(value);
  } else if (key == "directions") {
    config.directions = parse_direction_list(value);
  } else if (key == "precision") {
    try {
      config.precision = parse_precision(value);
    } catch (const std::invalid_argument&) {
      throw ConfigError("unknown precision '" + std::string(value) + "'");
    }
  } else if (key == "repeats") {
    config.repeats = parse_integer<int>(key, value);
  } else if (key == "warmup") {
    config.warmup = parse_integer<int>(key, value);
  } else if (key == "kchunk") {
    config.kchunk = parse_integer<Index>(key, value);
  } else if (key == "c_slice") {
    config.c_slice = parse_integer<Index>(key, value);
  } else if (key == "c_proxy") {
    config.c_proxy = parse_integer<Index>(key, value);
  } else if (key == "seed") {
    config.seed = parse_integer<std::uint64_t>(key, value);
  } else if (key == "out") {
    config.out = std::string(value);
  } else {
    throw ConfigError("unknown key '" + std::string(key) + "'");
  }
}

BenchConfig parse_config(std::istream& is, const std::string& source) {
  BenchConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value, got '" + std::string(t) + "'");
    }
    try {
      apply_setting(config, trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

BenchConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is, path);
}

std::string describe_config(const BenchConfig& config) {
  std::ostringstream os;
  os << "dims = ";
  for (std::size_t k = 0; k < config.dims.size(); ++k) os << (k ? ";" : "") << to_string(config.dims[k]);
  os << "\nstages = ";
  for (std::size_t k = 0; k < config.stages.size(); ++k) os << (k ? "," : "") << stage_name(config.stages[k]);
  os << "\ndirections = ";
  for (std::size_t k = 0; k < config.directions.size(); ++k) os << (k ? "," : "") << direction_label(config.directions[k]);
  os << "\nprecision = " << precision_name(config.precision) << "\nrepeats = " << config.repeats
     << "\nwarmup = " << config.warmup << "\nkchunk = " << config.kchunk << "\nc_slice = " << config.c_slice << '\n';
  if (config.c_proxy) {
    os << "c_proxy = " << *config.c_proxy << '\n';
  } else {
    os << "# c_proxy unset: S5 uses min(" << kDefaultProxyChannels << ", C)\n";
  }
  os << "seed = " << config.seed << '\n';
  if (!config.out.empty()) os << "out = " << config.out << '\n';
  return os.str();
}

}  // namespace linescan::bench
