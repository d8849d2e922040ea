#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "linescan/config.hpp"
#include "linescan/report.hpp"

using namespace linescan;
using namespace linescan::bench;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("linescan_test_bench_" + name)).string();
}

Measurement synthetic(Stage stage, std::int64_t median_ns) {
  Measurement m;
  m.stage = stage;
  m.direction = "L2R";
  m.dims = Shape4{4, 8, 256, 256};
  m.timing = Timing{median_ns, median_ns - 1, median_ns + 1};
  m.bytes_est = 1234567;
  m.throughput_bps = 1234567.0 / (static_cast<double>(median_ns) * 1e-9);
  m.seed = 42;
  m.workers = 4;
  return m;
}

MeasureSpec small_spec(Stage stage) {
  MeasureSpec spec;
  spec.stage = stage;
  spec.dims = Shape4{2, 4, 16, 16};
  spec.seed = 3;
  return spec;
}

}  // namespace

TEST_CASE("order statistics") {
  const Timing t = summarize({50, 10, 40, 30, 20});
  CHECK(t.min_ns == 10);
  CHECK(t.median_ns == 30);
  CHECK(t.p90_ns == 50);
  const Timing even = summarize({4, 1, 3, 2});
  CHECK(even.median_ns == 2);  // (2 + 3) / 2 in integer nanoseconds
  const Timing ten = summarize({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(ten.p90_ns == 9);
  CHECK_THROWS_AS(summarize({}), std::invalid_argument);
}

TEST_CASE("bytes estimate is deterministic and S2 never exceeds S0") {
  for (const Shape4& dims : {Shape4{1, 1, 1, 1}, Shape4{4, 8, 256, 256}, Shape4{2, 3, 17, 5}}) {
    MeasureSpec s0;
    s0.dims = dims;
    s0.stage = Stage::S0_NaivePerStep;
    MeasureSpec s2 = s0;
    s2.stage = Stage::S2_ContiguousLayout;
    CHECK(estimate_bytes(s0) == estimate_bytes(s0));
    CHECK(estimate_bytes(s2) <= estimate_bytes(s0));
  }
  // Hand count for S1 at f32: x, lambda, u read, h, y written, 3 weights per pixel and channel.
  MeasureSpec s1;
  s1.dims = Shape4{1, 2, 3, 4};
  s1.stage = Stage::S1_Fused;
  CHECK(estimate_bytes(s1) == (5 * 24 + 3 * 24) * 4);
  s1.precision = Precision::F64;
  CHECK(estimate_bytes(s1) == (5 * 24 + 3 * 24) * 8);
}

TEST_CASE("time_stage on every stage") {
  for (Stage stage : kStages) {
    MeasureSpec spec = small_spec(stage);
    if (stage == Stage::S5_Compact) spec.c_proxy = 2;
    const Measurement m = time_stage(spec);
    CHECK_FALSE(m.error.has_value());
    CHECK(m.timing.min_ns <= m.timing.median_ns);
    CHECK(m.timing.median_ns <= m.timing.p90_ns);
    CHECK(m.bytes_est == estimate_bytes(spec));
    CHECK(m.repeats == 5);
    CHECK(m.seed == 3);
  }
  MeasureSpec four = small_spec(Stage::S3_TileReuse);
  four.direction = DirectionChoice::four();
  four.precision = Precision::F64;
  const Measurement m = time_stage(four);
  CHECK(m.direction == "all");
  CHECK(m.timing.min_ns <= m.timing.p90_ns);
}

TEST_CASE("c_proxy wider than C aborts the measurement") {
  MeasureSpec spec = small_spec(Stage::S5_Compact);
  spec.c_proxy = 9;
  CHECK_THROWS_AS(time_stage(spec), MeasurementError);
}

TEST_CASE("sweep enumeration, ordering and error markers") {
  BenchConfig config;
  config.dims = {Shape4{1, 2, 8, 8}, Shape4{1, 2, 4, 12}};
  config.stages = {Stage::S0_NaivePerStep, Stage::S5_Compact};
  config.c_proxy = 3;  // wider than C = 2: S5 rows abort, the sweep continues
  std::vector<std::string> seen;
  const auto results = run_sweep(config, [&](const Measurement& m) {
    seen.push_back(std::string(stage_name(m.stage)) + "@" + to_string(m.dims));
  });
  REQUIRE(results.size() == 4);
  CHECK(seen == std::vector<std::string>{"S0@1x2x8x8", "S5@1x2x8x8", "S0@1x2x4x12", "S5@1x2x4x12"});
  CHECK_FALSE(results[0].error.has_value());
  CHECK(results[1].error.has_value());
  CHECK(results[1].c_proxy == 3);

  config.stages.clear();
  CHECK(run_sweep(config).empty());
}

TEST_CASE("config validation and proxy default") {
  BenchConfig config;
  config.dims = {Shape4{1, 1, 2, 2}};
  config.repeats = 4;
  CHECK_THROWS_AS(validate_config(config), std::invalid_argument);
  config.repeats = 5;
  config.warmup = 1;
  CHECK_THROWS_AS(validate_config(config), std::invalid_argument);
  config.warmup = 2;
  CHECK_NOTHROW(validate_config(config));

  CHECK(resolved_c_proxy(config, Stage::S5_Compact, 128) == 8);
  CHECK(resolved_c_proxy(config, Stage::S5_Compact, 3) == 3);
  CHECK(resolved_c_proxy(config, Stage::S4_ChannelBlocked, 128) == 0);
  config.c_proxy = 2;
  CHECK(resolved_c_proxy(config, Stage::S5_Compact, 128) == 2);
}

TEST_CASE("saturation model") {
  CostModel model;
  CHECK(model.capacity == 3456);
  model.t_wave = 0.25;
  CHECK(predict_saturation(model, 1) == 0.25);
  CHECK(predict_saturation(model, 3456) == 0.25);
  CHECK(predict_saturation(model, 3457) == 0.5);
  CHECK(predict_saturation(model, 2 * 3456) == 0.5);
  CHECK(predict_saturation(model, 2 * 3456 + 1) == 0.75);
  double prev = 0;
  for (std::int64_t s = 1; s <= 4 * 3456; s += 97) {
    const double t = predict_saturation(model, s);
    CHECK(t >= prev);
    prev = t;
  }
  CHECK_THROWS_AS(predict_saturation(model, 0), std::invalid_argument);
  model.capacity = 0;
  CHECK_THROWS_AS(predict_saturation(model, 1), std::invalid_argument);
  model.capacity = 1;
  model.t_wave = 0;
  CHECK_THROWS_AS(predict_saturation(model, 1), std::invalid_argument);
}

TEST_CASE("stage ladder") {
  const Ladder one = compare_stages({synthetic(Stage::S2_ContiguousLayout, 70)});
  CHECK(one.rows[2].present);
  CHECK(one.rows[2].speedup_vs_first == 1.0);
  CHECK_FALSE(one.rows[0].present);

  const Ladder ladder = compare_stages({synthetic(Stage::S0_NaivePerStep, 100'000'000),
                                       synthetic(Stage::S1_Fused, 50'000'000),
                                       synthetic(Stage::S2_ContiguousLayout, 10'000'000)});
  CHECK(ladder.rows[0].speedup_vs_first == 1.0);
  CHECK(ladder.rows[1].speedup_vs_first == 2.0);
  CHECK(ladder.rows[2].speedup_vs_first == 10.0);
  CHECK(ladder.rows[2].speedup_vs_prev == 5.0);
  CHECK_FALSE(ladder.rows[3].present);

  Measurement other = synthetic(Stage::S1_Fused, 1);
  other.dims = Shape4{1, 1, 1, 1};
  CHECK_THROWS_AS(compare_stages({synthetic(Stage::S0_NaivePerStep, 2), other}), std::invalid_argument);
}

TEST_CASE("csv schema and roundtrip") {
  std::ostringstream empty;
  write_csv(empty, {});
  CHECK(empty.str() == std::string(kCsvHeader) + "\n");

  Measurement m = synthetic(Stage::S3_TileReuse, 123456789);
  m.throughput_bps = 0.1 + 0.2;  // needs full round-trip precision
  m.seed = 18446744073709551615ULL;
  const std::string path = temp_path("one.csv");
  emit_report({m}, ReportFormat::CSV, path);
  std::ifstream is(path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.back() == '\n');

  const auto back = read_report(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].stage == m.stage);
  CHECK(back[0].direction == m.direction);
  CHECK(back[0].dims == m.dims);
  CHECK(back[0].timing.median_ns == m.timing.median_ns);
  CHECK(back[0].timing.p90_ns == m.timing.p90_ns);
  CHECK(back[0].throughput_bps == m.throughput_bps);
  CHECK(back[0].seed == m.seed);
  CHECK(back[0].workers == 4);
  std::remove(path.c_str());
}

TEST_CASE("csv and json carry identical values") {
  BenchConfig config;
  config.dims = {Shape4{1, 2, 8, 8}};
  config.stages = {Stage::S0_NaivePerStep, Stage::S2_ContiguousLayout};
  const auto results = run_sweep(config);
  const std::string csv = temp_path("x.csv"), json = temp_path("x.json");
  emit_report(results, ReportFormat::CSV, csv);
  emit_report(results, ReportFormat::JSON, json);
  const auto a = read_report(csv);
  const auto b = read_report(json);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(csv_row(a[k]) == csv_row(b[k]));
    CHECK(csv_row(a[k]) == csv_row(results[k]));
  }
  std::remove(csv.c_str());
  std::remove(json.c_str());
}

TEST_CASE("aborted measurements survive both formats") {
  Measurement m = synthetic(Stage::S5_Compact, 1);
  m.error = "c_proxy too wide";
  std::ostringstream csv;
  write_csv(csv, {m});
  std::istringstream csv_in(csv.str());
  const auto from_csv = parse_csv(csv_in);
  REQUIRE(from_csv.size() == 1);
  CHECK(from_csv[0].error.has_value());

  std::ostringstream json;
  write_json(json, {m});
  std::istringstream json_in(json.str());
  const auto from_json = parse_json(json_in);
  REQUIRE(from_json.size() == 1);
  CHECK(*from_json[0].error == "c_proxy too wide");
}

TEST_CASE("schema violations") {
  std::istringstream bad_header("stage,direction\nS0,L2R\n");
  CHECK_THROWS_AS(parse_csv(bad_header), SchemaError);
  std::istringstream short_row(std::string(kCsvHeader) + "\nS0,L2R,1\n");
  CHECK_THROWS_AS(parse_csv(short_row), SchemaError);
  std::istringstream bad_value(std::string(kCsvHeader) +
                               "\nS0,L2R,1,1,1,one,f32,0,4,0,1,5,1,1,1,1,1,0\n");
  CHECK_THROWS_AS(parse_csv(bad_value), SchemaError);
  std::istringstream not_array("{\"stage\": \"S0\"}");
  CHECK_THROWS_AS(parse_json(not_array), SchemaError);
  std::istringstream missing("[{\"stage\": \"S0\"}]");
  CHECK_THROWS_AS(parse_json(missing), SchemaError);
}

TEST_CASE("ladder text") {
  std::ostringstream os;
  print_ladders(os, {synthetic(Stage::S0_NaivePerStep, 100'000'000), synthetic(Stage::S1_Fused, 50'000'000),
                     synthetic(Stage::S2_ContiguousLayout, 10'000'000)});
  const std::string text = os.str();
  CHECK(text.find("1.00x") != std::string::npos);
  CHECK(text.find("2.00x") != std::string::npos);
  CHECK(text.find("10.00x") != std::string::npos);
  CHECK(text.find("absent") != std::string::npos);

  std::ostringstream empty;
  print_ladders(empty, {});
  CHECK(empty.str().find("empty ladder") != std::string::npos);
}

TEST_CASE("config file parsing") {
  std::istringstream good(
      "# sweep\n"
      "dims = 4x8x256x256; 1x2x3x4\n"
      "stages = S0,S2_ContiguousLayout\n"
      "directions = L2R, all\n"
      "precision = f64\n"
      "repeats = 7\n"
      "warmup = 3\n"
      "kchunk = 16\n"
      "c_slice = 2\n"
      "c_proxy = 4\n"
      "seed = 99\n"
      "out = r.csv\n");
  const BenchConfig c = parse_config(good);
  REQUIRE(c.dims.size() == 2);
  CHECK(c.dims[1] == Shape4{1, 2, 3, 4});
  CHECK(c.stages == std::vector<Stage>{Stage::S0_NaivePerStep, Stage::S2_ContiguousLayout});
  REQUIRE(c.directions.size() == 2);
  CHECK(c.directions[1].all);
  CHECK(c.precision == Precision::F64);
  CHECK(c.repeats == 7);
  CHECK(c.warmup == 3);
  CHECK(c.kchunk == 16);
  CHECK(c.c_slice == 2);
  CHECK(*c.c_proxy == 4);
  CHECK(c.seed == 99);
  CHECK(c.out == "r.csv");

  std::istringstream echoed(describe_config(c));
  const BenchConfig again = parse_config(echoed);
  CHECK(describe_config(again) == describe_config(c));

  auto message = [](const std::string& text) {
    std::istringstream is(text);
    try {
      (void)parse_config(is);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("colour = red\n").find("colour") != std::string::npos);
  CHECK(message("dims = 4x8x256\n").find("4x8x256") != std::string::npos);
  CHECK(message("dims = 4x8x0x2\n").find("4x8x0x2") != std::string::npos);
  CHECK(message("stages = S9\n").find("S9") != std::string::npos);
  CHECK(message("repeats = five\n").find("five") != std::string::npos);
  CHECK(message("just words\n").find("just words") != std::string::npos);
  CHECK_THROWS_AS(load_config(temp_path("missing.conf")), ConfigError);
}
