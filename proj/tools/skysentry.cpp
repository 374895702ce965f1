#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "skysentry/error.hpp"
#include "skysentry/geometry.hpp"
#include "skysentry/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

using skysentry::Errc;

void print_summary(const skysentry::RunResult& r, const std::string& out_dir) {
  const auto m = skysentry::metrics_to_json(r.metrics);
  std::cout << "ticks " << r.ticks << ", cameras " << r.camera_ids.size() << ", detections " << r.metrics.detections
            << ", commands " << r.log.commands.size() << "\n";
  std::cout << m.dump(2) << "\n";
  std::cout << "outputs in " << out_dir << "\n";
}

int run_pipeline(const std::string& config_path, const std::optional<std::string>& replay_dir,
                 const std::optional<std::string>& out, const std::optional<std::string>& webhook) {
  const auto config = skysentry::load_config(config_path);
  skysentry::RunOptions opts;
  opts.replay_dir = replay_dir;
  opts.output_dir = out;
  opts.webhook_path = webhook;
  const auto result = skysentry::run_scenario(config, opts);
  print_summary(result, out.value_or(config.output_dir));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skysentry: simulated bird-detection and turbine-shutdown pipeline"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string dump_dir;
  auto* simulate = app.add_subcommand("simulate", "Render a scenario and optionally dump frames and truth");
  simulate->add_option("scenario", scenario_path, "Scenario JSON")->required();
  simulate->add_option("--dump-frames", dump_dir, "Directory for PGM frames and truth.jsonl");

  std::string config_path;
  std::string out_dir;
  std::string webhook;
  auto* run = app.add_subcommand("run", "Run the full pipeline on a config");
  run->add_option("config", config_path, "Pipeline config JSON")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  run->add_option("--turbine-webhook", webhook, "Append turbine commands to this file");

  std::string frames_dir;
  auto* replay = app.add_subcommand("replay", "Run the pipeline on previously dumped frames");
  replay->add_option("frames-dir", frames_dir, "Directory with cam<id>_f<index>.pgm files")->required();
  replay->add_option("config", config_path, "Pipeline config JSON")->required();
  replay->add_option("--out", out_dir, "Output directory (overrides the config)");
  replay->add_option("--turbine-webhook", webhook, "Append turbine commands to this file");

  std::string samples_path;
  auto* fit = app.add_subcommand("fit-calib", "Fit the diag-versus-distance calibration curve");
  fit->add_option("samples", samples_path, "CSV with header distance_m,diag_px")->required();

  double seconds = 0.0;
  auto* bench = app.add_subcommand("bench", "Measure end-to-end throughput");
  bench->add_option("config", config_path, "Pipeline config JSON")->required();
  bench->add_option("--seconds", seconds, "Simulated seconds to process")->required()->check(CLI::NonNegativeNumber);
  bench->add_option("--out", out_dir, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); };

  try {
    for (const std::string* input : {&scenario_path, &config_path, &samples_path}) {
      if (!input->empty() && !std::filesystem::is_regular_file(*input)) {
        throw skysentry::Error(Errc::kConfig, "input file " + *input + " does not exist");
      }
    }
    if (*simulate) {
      const auto scenario = skysentry::load_scenario(scenario_path);
      const auto s = skysentry::simulate(scenario, opt(dump_dir));
      std::cout << "scenario " << scenario.name << ": " << s.frames << " frames x " << s.cameras.size()
                << " cameras, " << s.truth_boxes << " truth boxes\n";
      if (!dump_dir.empty()) std::cout << "frames in " << dump_dir << "\n";
      return 0;
    }
    if (*run) return run_pipeline(config_path, std::nullopt, opt(out_dir), opt(webhook));
    if (*replay) {
      if (!std::filesystem::is_directory(frames_dir)) {
        throw skysentry::Error(Errc::kConfig, "frames directory " + frames_dir + " does not exist");
      }
      return run_pipeline(config_path, frames_dir, opt(out_dir), opt(webhook));
    }
    if (*fit) {
      const auto samples = skysentry::read_calib_csv(samples_path);
      const auto report = skysentry::fit_calib_report(samples);
      std::cout << skysentry::calib_to_json(report.curve) << "\n";
      std::cerr << "iterations " << report.iterations << ", cost " << report.initial_cost << " -> "
                << report.final_cost << (report.converged ? "" : " (not converged)") << "\n";
      return 0;
    }
    if (*bench) {
      const auto config = skysentry::load_config(config_path);
      skysentry::RunOptions opts;
      opts.max_seconds = seconds;
      opts.output_dir = opt(out_dir);
      const auto result = skysentry::run_scenario(config, opts);
      const auto report = skysentry::bench_report(config, result);
      std::cout << report.dump(2) << "\n";
      return 0;
    }
  } catch (const skysentry::Error& e) {
    std::cerr << "skysentry: " << e.what() << "\n";
    return e.code() == Errc::kConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "skysentry: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
