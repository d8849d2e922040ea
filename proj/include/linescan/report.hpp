#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "linescan/bench.hpp"

namespace linescan::bench {

enum class ReportFormat { CSV, JSON };

ReportFormat parse_report_format(std::string_view name);  // "csv" or "json"

inline constexpr std::string_view kCsvHeader =
    "stage,direction,n,c,h,w,precision,kchunk,c_slice,c_proxy,workers,repeats,median_ns,min_ns,p90_ns,bytes_est,"
    "throughput_bps,seed";

/// Thrown when a saved report does not follow the schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string csv_row(const Measurement& m);
void write_csv(std::ostream& os, const std::vector<Measurement>& measurements);
void write_json(std::ostream& os, const std::vector<Measurement>& measurements);

/// Writes to `path`; throws std::runtime_error naming the path on I/O failure.
void emit_report(const std::vector<Measurement>& measurements, ReportFormat format, const std::string& path);

std::vector<Measurement> parse_csv(std::istream& is);
std::vector<Measurement> parse_json(std::istream& is);

/// Reads a report, picking the parser from the first non-blank character.
std::vector<Measurement> read_report(const std::string& path);

void print_ladder(std::ostream& os, const Ladder& ladder);

/// One ladder per (dims, precision, direction) group, in first-appearance order.
void print_ladders(std::ostream& os, const std::vector<Measurement>& measurements);

}  // namespace linescan::bench
