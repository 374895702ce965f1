#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/config.hpp"
#include "skysentry/detection.hpp"
#include "skysentry/fuse.hpp"
#include "skysentry/manager.hpp"
#include "skysentry/synthsky.hpp"

namespace skysentry {

struct FrameRecord {
  int camera_id = 0;
  std::int64_t frame = 0;
  double t_s = 0.0;
};

struct DetectionRecord {
  int camera_id = 0;
  std::int64_t frame = 0;
  double t_s = 0.0;
  Detection detection;
  std::optional<int> track_id;
};

struct TruthRecord {
  int camera_id = 0;
  std::int64_t frame = 0;
  double t_s = 0.0;
  TruthBox box;
};

struct TrackSummary {
  int camera_id = 0;
  int track_id = 0;
  double born_t = 0.0;
  double confirmed_t = -1.0;  // < 0: never confirmed
  std::optional<int> target_id;
  std::optional<Species> truth;
  ClassPosterior final_posterior;
  std::vector<PosteriorSample> series;
};

/// Everything compute_metrics needs from a run, in log order.
struct RunLog {
  std::vector<FrameRecord> frames;
  std::vector<DetectionRecord> detections;
  std::vector<TrackSummary> tracks;
  std::vector<TurbineCommand> commands;
  std::optional<double> masked_fraction;
};

/// Ground truth for exactly the given frames.
std::vector<TruthRecord> collect_truth(const Scenario& scenario, std::span<const FrameRecord> frames);

/// Greedy one-to-one matching at IoU >= threshold, best IoU first; ties by
/// (detection index, truth index). Returns (detection, truth) index pairs.
std::vector<std::pair<std::size_t, std::size_t>> match_boxes(std::span<const BBox> detections,
                                                             std::span<const BBox> truths, double iou_threshold);

/// 101-point interpolated average precision over (score, is_true_positive)
/// pairs ranked by descending score. Ties keep input order.
double average_precision(std::vector<std::pair<double, bool>> scored, std::int64_t num_truths);

/// Linear-interpolation quantile; nullopt for empty input.
std::optional<double> quantile(std::vector<double> values, double q);

struct BinRate {
  std::int64_t hits = 0;
  std::int64_t total = 0;
  std::optional<double> rate() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(total);
  }
};

struct RunMetrics {
  std::int64_t frames = 0;  // (camera, frame) pairs
  std::int64_t detections = 0;
  std::int64_t truths = 0;
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::optional<double> precision;
  std::optional<double> recall;        // per object instance
  std::optional<double> track_recall;  // per (camera, target) with >= 1 hit
  std::optional<double> average_precision;
  BinRate near_fix;        // per-frame instance rate, distance in [0, near_max]
  BinRate far_fix;         // (near_max, far_max]
  BinRate near_interval;   // bin-resident intervals with >= 1 matched detection
  BinRate far_interval;
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};  // [true][fused]
  std::int64_t tracks_evaluated = 0;
  std::optional<double> fused_accuracy;
  std::int64_t ttc_reached = 0;
  std::int64_t ttc_total = 0;
  std::optional<double> ttc_median_s;  // +inf when fewer than half reach the threshold
  std::optional<double> ttc_p99_s;
  std::optional<double> masked_fraction;
  std::optional<double> fps;
  std::int64_t stops = 0;
  std::int64_t runs = 0;
  std::optional<double> first_stop_t;
  std::optional<double> first_stop_distance_m;
};

/// Throws Error(kMismatchedRun) unless the log and the truth cover the same
/// (camera, frame) set with the same timestamps.
RunMetrics compute_metrics(const RunLog& log, std::span<const FrameRecord> truth_frames,
                           std::span<const TruthRecord> truth, const MetricsParams& params);

/// `metric,value` rows; undefined values are written as NA.
void write_metrics_csv(std::ostream& out, const RunMetrics& m);
nlohmann::json metrics_to_json(const RunMetrics& m);

}  // namespace skysentry
