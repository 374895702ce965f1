#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/detect.hpp"
#include "skysentry/fuse.hpp"
#include "skysentry/manager.hpp"
#include "skysentry/motion.hpp"
#include "skysentry/synthsky.hpp"
#include "skysentry/track.hpp"

namespace skysentry {

struct FusionSettings {
  ConfusionModel confusion = ConfusionModel::defaults();
  FusionParams params;
  LikelihoodMode mode = LikelihoodMode::kConfusionColumn;
  ClassPosterior prior;
};

struct MetricsParams {
  double iou = 0.3;
  double confidence = 0.99;
  double near_max_m = 350.0;
  double far_max_m = 700.0;
};

struct PipelineConfig {
  std::string source_path;    // config file, empty when built in code
  std::string scenario_path;  // as resolved
  Scenario scenario;          // after frame-rate, seed and scale overrides
  DetectorSettings detector;
  TrackerParams tracker;
  FusionSettings fusion;
  ManagerParams manager;
  MetricsParams metrics;
  double resolution_scale = 1.0;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  bool posterior_csv = true;

  /// Throws Error(kConfig) naming the offending field.
  void validate() const;
};

/// Relative paths inside the config (scenario, confusion) resolve against
/// `base_dir`. Unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, const std::string& base_dir);

/// Any failure to read or parse the file is reported as Error(kConfig).
PipelineConfig load_config(const std::string& path);

/// Builds a config around an in-memory scenario with default settings.
PipelineConfig default_config(const Scenario& scenario);

LikelihoodMode parse_likelihood_mode(const std::string& s);

}  // namespace skysentry
