#include "linescan/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace linescan::bench {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::string_view kErrorMarker = "error";

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, std::string_view field, std::size_t line) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw SchemaError("line " + std::to_string(line) + ": field " + std::string(field) + " has malformed value '" +
                      text + "'");
  }
  return value;
}

Measurement base_from(const std::string& stage, const std::string& direction, const std::string& precision,
                      std::size_t line) {
  Measurement m;
  try {
    m.stage = parse_stage(stage);
    m.direction = direction_label(parse_direction_choice(direction));
    m.precision = parse_precision(precision);
  } catch (const std::invalid_argument& e) {
    throw SchemaError("line " + std::to_string(line) + ": " + e.what());
  }
  return m;
}

Json to_json(const Measurement& m) {
  Json j;
  j["stage"] = std::string(stage_name(m.stage));
  j["direction"] = m.direction;
  j["n"] = m.dims.n;
  j["c"] = m.dims.c;
  j["h"] = m.dims.h;
  j["w"] = m.dims.w;
  j["precision"] = std::string(precision_name(m.precision));
  j["kchunk"] = m.kchunk;
  j["c_slice"] = m.c_slice;
  j["c_proxy"] = m.c_proxy;
  j["workers"] = m.workers;
  j["repeats"] = m.repeats;
  if (m.error) {
    j["median_ns"] = nullptr;
    j["min_ns"] = nullptr;
    j["p90_ns"] = nullptr;
  } else {
    j["median_ns"] = m.timing.median_ns;
    j["min_ns"] = m.timing.min_ns;
    j["p90_ns"] = m.timing.p90_ns;
  }
  j["bytes_est"] = m.bytes_est;
  if (m.error) {
    j["throughput_bps"] = nullptr;
  } else {
    j["throughput_bps"] = m.throughput_bps;
  }
  j["seed"] = m.seed;
  if (m.error) j["error"] = *m.error;
  return j;
}

template <typename T>
T json_field(const Json& j, const char* key, std::size_t index) {
  if (!j.contains(key)) throw SchemaError("entry " + std::to_string(index) + ": missing field " + key);
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw SchemaError("entry " + std::to_string(index) + ": field " + key + " has the wrong type");
  }
}

}  // namespace

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv" || name == "CSV") return ReportFormat::CSV;
  if (name == "json" || name == "JSON") return ReportFormat::JSON;
  throw std::invalid_argument("unknown report format '" + std::string(name) + "' (expected csv or json)");
}

std::string csv_row(const Measurement& m) {
  std::ostringstream os;
  os << stage_name(m.stage) << ',' << m.direction << ',' << m.dims.n << ',' << m.dims.c << ',' << m.dims.h << ','
     << m.dims.w << ',' << precision_name(m.precision) << ',' << m.kchunk << ',' << m.c_slice << ',' << m.c_proxy
     << ',' << m.workers << ',' << m.repeats << ',';
  if (m.error) {
    os << kErrorMarker << ',' << kErrorMarker << ',' << kErrorMarker << ',' << m.bytes_est << ',' << kErrorMarker;
  } else {
    os << m.timing.median_ns << ',' << m.timing.min_ns << ',' << m.timing.p90_ns << ',' << m.bytes_est << ','
       << format_double(m.throughput_bps);
  }
  os << ',' << m.seed;
  return os.str();
}

void write_csv(std::ostream& os, const std::vector<Measurement>& measurements) {
  os << kCsvHeader << '\n';
  for (const Measurement& m : measurements) os << csv_row(m) << '\n';
}

void write_json(std::ostream& os, const std::vector<Measurement>& measurements) {
  Json arr = Json::array();
  for (const Measurement& m : measurements) arr.push_back(to_json(m));
  os << arr.dump(2) << '\n';
}

void emit_report(const std::vector<Measurement>& measurements, ReportFormat format, const std::string& path) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    if (format == ReportFormat::CSV) {
      write_csv(os, measurements);
    } else {
      write_json(os, measurements);
    }
    os.flush();
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot replace '" + path + "'");
  }
}

std::vector<Measurement> parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("empty report: missing CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw SchemaError("unexpected CSV header: '" + line + "'");
  const std::vector<std::string> names = split(kCsvHeader, ',');

  std::vector<Measurement> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != names.size()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(names.size()) +
                        " fields, got " + std::to_string(f.size()));
    }
    Measurement m = base_from(f[0], f[1], f[6], lineno);
    m.dims = Shape4{parse_number<Index>(f[2], names[2], lineno), parse_number<Index>(f[3], names[3], lineno),
                    parse_number<Index>(f[4], names[4], lineno), parse_number<Index>(f[5], names[5], lineno)};
    m.kchunk = parse_number<Index>(f[7], names[7], lineno);
    m.c_slice = parse_number<Index>(f[8], names[8], lineno);
    m.c_proxy = parse_number<Index>(f[9], names[9], lineno);
    m.workers = parse_number<int>(f[10], names[10], lineno);
    m.repeats = parse_number<int>(f[11], names[11], lineno);
    if (f[12] == kErrorMarker) {
      m.error = "aborted";
    } else {
      m.timing.median_ns = parse_number<std::int64_t>(f[12], names[12], lineno);
      m.timing.min_ns = parse_number<std::int64_t>(f[13], names[13], lineno);
      m.timing.p90_ns = parse_number<std::int64_t>(f[14], names[14], lineno);
      m.throughput_bps = parse_number<double>(f[16], names[16], lineno);
    }
    m.bytes_est = parse_number<std::int64_t>(f[15], names[15], lineno);
    m.seed = parse_number<std::uint64_t>(f[17], names[17], lineno);
    out.push_back(m);
  }
  return out;
}

std::vector<Measurement> parse_json(std::istream& is) {
  Json doc;
  try {
    doc = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw SchemaError("JSON report must be an array of measurements");
  std::vector<Measurement> out;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const Json& j = doc[k];
    if (!j.is_object()) throw SchemaError("entry " + std::to_string(k) + " is not an object");
    Measurement m = base_from(json_field<std::string>(j, "stage", k), json_field<std::string>(j, "direction", k),
                              json_field<std::string>(j, "precision", k), k);
    m.dims = Shape4{json_field<Index>(j, "n", k), json_field<Index>(j, "c", k), json_field<Index>(j, "h", k),
                    json_field<Index>(j, "w", k)};
    m.kchunk = json_field<Index>(j, "kchunk", k);
    m.c_slice = json_field<Index>(j, "c_slice", k);
    m.c_proxy = json_field<Index>(j, "c_proxy", k);
    m.workers = json_field<int>(j, "workers", k);
    m.repeats = json_field<int>(j, "repeats", k);
    m.bytes_est = json_field<std::int64_t>(j, "bytes_est", k);
    m.seed = json_field<std::uint64_t>(j, "seed", k);
    if (j.contains("error")) {
      m.error = json_field<std::string>(j, "error", k);
    } else {
      m.timing.median_ns = json_field<std::int64_t>(j, "median_ns", k);
      m.timing.min_ns = json_field<std::int64_t>(j, "min_ns", k);
      m.timing.p90_ns = json_field<std::int64_t>(j, "p90_ns", k);
      m.throughput_bps = json_field<double>(j, "throughput_bps", k);
    }
    out.push_back(m);
  }
  return out;
}

std::vector<Measurement> read_report(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open report '" + path + "'");
  is >> std::ws;
  if (is.peek() == '[') return parse_json(is);
  return parse_csv(is);
}

void print_ladder(std::ostream& os, const Ladder& ladder) {
  const LadderRow* first = nullptr;
  for (const LadderRow& row : ladder.rows) {
    if (row.present) {
      first = &row;
      break;
    }
  }
  if (!first) {
    os << "empty ladder (no completed measurements)\n";
    return;
  }
  const std::string base = std::string(stage_name(first->stage));
  os << std::left << std::setw(8) << "stage" << std::right << std::setw(14) << "median_ms" << std::setw(14)
     << ("vs_" + base) << std::setw(12) << "vs_prev" << '\n';
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::fixed;
  for (const LadderRow& row : ladder.rows) {
    os << std::left << std::setw(8) << stage_name(row.stage) << std::right;
    if (!row.present) {
      os << std::setw(14) << "absent" << '\n';
      continue;
    }
    std::ostringstream vs_first, vs_prev;
    vs_first << std::fixed << std::setprecision(2) << row.speedup_vs_first << 'x';
    vs_prev << std::fixed << std::setprecision(2) << row.speedup_vs_prev << 'x';
    os << std::setw(14) << std::setprecision(3) << static_cast<double>(row.median_ns) * 1e-6 << std::setw(14)
       << vs_first.str() << std::setw(12) << vs_prev.str() << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

void print_ladders(std::ostream& os, const std::vector<Measurement>& measurements) {
  if (measurements.empty()) {
    print_ladder(os, compare_stages({}));
    return;
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<Measurement>> groups;
  for (const Measurement& m : measurements) {
    const std::string key = to_string(m.dims) + " " + std::string(precision_name(m.precision)) + " " + m.direction;
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(m);
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0) os << '\n';
    os << "ladder " << order[k] << '\n';
    print_ladder(os, compare_stages(groups[order[k]]));
  }
}

}  // namespace linescan::bench
