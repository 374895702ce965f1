#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "skysentry/error.hpp"
#include "skysentry/runner.hpp"

using namespace skysentry;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("skysentry_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int cli(const std::string& args) {
  const std::string cmd = std::string(SKYSENTRY_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("empty scenario: nothing detected, every metric defined") {
  const auto s = load_scenario(testing::source_path("scenarios/empty.json"));
  auto c = default_config(s);
  c.detector.kind = "reference";
  const fs::path out = scratch("empty");
  RunOptions opts;
  opts.output_dir = out.string();
  opts.max_seconds = 3.0;
  const auto r = run_scenario(c, opts);
  CHECK(r.ticks == 12);
  CHECK(r.metrics.detections == 0);
  CHECK(r.metrics.stops == 0);
  CHECK(r.log.commands.empty());
  CHECK_FALSE(r.metrics.precision.has_value());
  CHECK(slurp(out / "commands.jsonl").empty());
  const std::string csv = slurp(out / "metrics.csv");
  CHECK(csv.find("precision,NA") != std::string::npos);
  CHECK(csv.find("nan") == std::string::npos);
}

TEST_CASE("runs are deterministic across repeats and worker counts") {
  auto c = load_config(testing::source_path("configs/reference.json"));
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  RunOptions opts;
  opts.max_seconds = 4.0;
  opts.output_dir = a.string();
  c.detector.workers = 1;
  const auto ra = run_scenario(c, opts);
  opts.output_dir = b.string();
  c.detector.workers = 3;
  const auto rb = run_scenario(c, opts);
  CHECK(slurp(a / "events.jsonl") == slurp(b / "events.jsonl"));
  CHECK(slurp(a / "commands.jsonl") == slurp(b / "commands.jsonl"));
  CHECK_FALSE(slurp(a / "events.jsonl").empty());
  CHECK(ra.metrics.true_positives == rb.metrics.true_positives);
}

TEST_CASE("bench accounting") {
  auto c = load_config(testing::source_path("configs/bench.json"));
  RunOptions opts;
  opts.write_outputs = false;
  opts.max_seconds = 0.0;
  const auto zero = run_scenario(c, opts);
  const auto report = bench_report(c, zero);
  CHECK(report.is_object());
  CHECK(zero.timings.stage_sum() <= zero.timings.total + 1e-9);

  opts.max_seconds = 1.0;
  const auto r = run_scenario(c, opts);
  CHECK(r.ticks == 4);
  CHECK(r.timings.total > 0.0);
  CHECK(r.timings.stage_sum() <= r.timings.total);
  const auto rep = bench_report(c, r);
  CHECK(rep.contains("fps"));
}

TEST_CASE("replay of dumped frames reproduces the rendered run") {
  auto s = load_scenario(testing::source_path("scenarios/default.json"));
  s.duration_s = 2.0;
  const fs::path frames = scratch("replay_frames");
  const auto sum = simulate(s, frames.string());
  CHECK(sum.frames == 9);
  CHECK(fs::exists(frames / frame_filename(0, 8)));
  CHECK(fs::exists(frames / "truth.jsonl"));

  auto c = default_config(s);
  c.detector.kind = "reference";
  RunOptions opts;
  opts.write_outputs = false;
  const auto rendered = run_scenario(c, opts);
  opts.replay_dir = frames.string();
  const auto replayed = run_scenario(c, opts);
  CHECK(rendered.metrics.detections == replayed.metrics.detections);
  CHECK(rendered.metrics.true_positives == replayed.metrics.true_positives);
}

TEST_CASE("config errors name the field") {
  const fs::path dir = scratch("config");
  spit(dir / "bad.json", R"({"scenario": ")" + testing::source_path("scenarios/empty.json") + R"(", "detector": "magic"})");
  try {
    load_config((dir / "bad.json").string());
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kConfig);
    CHECK(std::string(e.what()).find("detector") != std::string::npos);
  }
  spit(dir / "typo.json", R"({"scenario": ")" + testing::source_path("scenarios/empty.json") + R"(", "detektor": "oracle"})");
  CHECK_THROWS_AS(load_config((dir / "typo.json").string()), Error);
  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), Error);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  const std::string empty_scenario = testing::source_path("scenarios/empty.json");
  spit(dir / "ok.json", R"({"scenario": ")" + empty_scenario + R"(", "detector": "oracle", "output_dir": ")" +
                            (dir / "out").string() + R"("})");
  CHECK(cli("run " + (dir / "ok.json").string()) == 0);
  CHECK(fs::exists(dir / "out" / "metrics.csv"));
  CHECK(fs::exists(dir / "out" / "events.jsonl"));
  CHECK(fs::exists(dir / "out" / "commands.jsonl"));

  CHECK(cli("simulate " + empty_scenario) == 0);
  CHECK(cli("run " + (dir / "nope.json").string()) == 2);
  CHECK(cli("frobnicate") == 2);
  spit(dir / "bad.json", R"({"scenario": ")" + empty_scenario + R"(", "detector": "magic"})");
  CHECK(cli("run " + (dir / "bad.json").string()) == 2);

  spit(dir / "good.csv", "distance_m,diag_px\n100,24\n200,12\n400,6\n800,3\n");
  CHECK(cli("fit-calib " + (dir / "good.csv").string()) == 0);
  // Two distinct distances cannot pin three parameters: a runtime failure.
  spit(dir / "singular.csv", "distance_m,diag_px\n100,24\n100,24\n200,12\n");
  CHECK(cli("fit-calib " + (dir / "singular.csv").string()) == 3);

  CHECK(cli("bench " + (dir / "ok.json").string() + " --seconds 0") == 0);
}

TEST_CASE("turbine webhook receives the commands") {
  const fs::path dir = scratch("webhook");
  spit(dir / "cfg.json", R"({"scenario": ")" + testing::source_path("scenarios/default.json") +
                             R"(", "detector": "oracle", "seed": 7, "output_dir": ")" + (dir / "out").string() +
                             R"(", "manager": {"zone": {"center": [450, 0, 0], "radius_m": 250, "height_m": 300}}})");
  CHECK(cli("run " + (dir / "cfg.json").string() + " --turbine-webhook " + (dir / "hook.jsonl").string()) == 0);
  CHECK(slurp(dir / "hook.jsonl") == slurp(dir / "out" / "commands.jsonl"));
  CHECK_FALSE(slurp(dir / "hook.jsonl").empty());
}
