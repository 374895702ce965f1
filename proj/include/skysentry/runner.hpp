#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/config.hpp"
#include "skysentry/manager.hpp"
#include "skysentry/metrics.hpp"

namespace skysentry {

/// Wall-clock seconds spent per stage; `total` covers the whole tick loop.
struct StageTimings {
  double render = 0.0;
  double motion = 0.0;
  double detect = 0.0;
  double track = 0.0;
  double fuse = 0.0;
  double manager = 0.0;
  double io = 0.0;
  double total = 0.0;

  double stage_sum() const { return render + motion + detect + track + fuse + manager + io; }
};

struct RunOptions {
  std::optional<std::string> output_dir;    // overrides the config; empty optional keeps it
  std::optional<std::string> replay_dir;    // read cam<id>_f<index>.pgm instead of rendering
  std::optional<std::string> webhook_path;  // commands are appended here as issued
  std::optional<double> max_seconds;        // simulated seconds to process
  bool write_outputs = true;
};

struct RunResult {
  RunLog log;
  std::vector<FrameRecord> truth_frames;
  std::vector<TruthRecord> truth;
  std::vector<ManagerTick> manager_ticks;
  RunMetrics metrics;
  StageTimings timings;
  std::int64_t ticks = 0;
  std::vector<int> camera_ids;
};

/// Static cameras take part in the per-frame pipeline; tele cameras are only
/// used by the manager's stereo pair.
std::vector<int> pipeline_cameras(const Scenario& scenario);

/// Ticks the frame clock through the scenario: per camera render (or replay),
/// motion mask update, detection, tracking and fusion, then one manager
/// decision over all camera snapshots. Writes events.jsonl, commands.jsonl,
/// metrics.csv and per-track posterior CSVs unless write_outputs is false.
RunResult run_scenario(const PipelineConfig& config, const RunOptions& options = {});

/// Human- and machine-readable throughput summary of a finished run.
nlohmann::json bench_report(const PipelineConfig& config, const RunResult& result);

std::string hardware_description();

struct SimulateSummary {
  std::int64_t frames = 0;  // per camera
  std::int64_t truth_boxes = 0;
  std::vector<int> cameras;
};

/// Renders every frame of every pipeline camera. When dump_dir is set, frames
/// go there as PGM and ground truth as truth.jsonl.
SimulateSummary simulate(const Scenario& scenario, const std::optional<std::string>& dump_dir);

}  // namespace skysentry
