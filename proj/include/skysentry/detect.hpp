#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skysentry/detection.hpp"
#include "skysentry/motion.hpp"
#include "skysentry/synthsky.hpp"
#include "skysentry/tiling.hpp"

namespace skysentry {

/// Multi-scale difference-of-Gaussians blob detector for dark targets on sky.
/// Stands in for a learned single-shot detector behind the Detector contract.
struct ReferenceDetectorConfig {
  double threshold = 5.0;      // DoG response, gray levels
  double saturation = 25.0;    // response mapped to objectness 1
  double clutter_ratio = 8.0;  // peak over the RMS of the surrounding fine-scale texture
};

class ReferenceDetector final : public Detector {
 public:
  explicit ReferenceDetector(ReferenceDetectorConfig config = {}) : config_(config) {}

  /// Scales sigma = 1, 2, 4 px; box side = 3 sigma of the strongest scale,
  /// interpolated between neighboring octaves.
  std::vector<Detection> detect(const GrayView& tile, TileOrigin origin) const override;

  const ReferenceDetectorConfig& config() const { return config_; }

 private:
  ReferenceDetectorConfig config_;
};

/// Convenience wrapper matching the operation name.
std::vector<Detection> reference_detect(const GrayView& tile, TileOrigin origin,
                                        const ReferenceDetectorConfig& config = {});

/// Detection probability p(diag) = 1 / (1 + exp(-slope * (diag - d50))).
struct MissModel {
  double d50 = 4.0;
  double slope = 1.5;
  double jitter_sigma = 0.5;

  void validate() const;
  double probability(double diag_px) const;
};

/// Ground-truth boxes thinned by the miss model and jittered per axis.
/// Deterministic per (seed, camera, target, frame).
std::vector<Detection> oracle_detect(const Scenario& scenario, int camera_id, double t_s,
                                     const MissModel& miss, std::uint64_t seed);

/// Legacy motion-based detector; the clutter mask makes it stateful.
class BlobBaselineDetector {
 public:
  explicit BlobBaselineDetector(MotionConfig config = {}) : motion_(config) {}

  /// Feed frames in order; the first frame only primes the differencer.
  std::vector<Detection> detect(const ImageFrame& frame);

  const MotionPipeline& motion() const { return motion_; }

 private:
  MotionPipeline motion_;
};

/// One-shot form of the baseline for a single frame pair using a fresh mask.
std::vector<Detection> blob_baseline_detect(const ImageFrame& prev, const ImageFrame& curr,
                                            const MotionConfig& config = {});

/// Cluster -> detection with objectness min(1, size / min_pts * 0.25).
Detection cluster_to_detection(const Cluster& cluster, const MotionConfig& config);

/// Everything a frame-level detector may look at.
struct FrameContext {
  const Scenario& scenario;
  int camera_id = 0;
  double t_s = 0.0;
  std::int64_t frame_index = 0;
  const ImageFrame* frame = nullptr;  // null when the detector does not need pixels
};

class FrameDetector {
 public:
  virtual ~FrameDetector() = default;
  virtual std::vector<Detection> detect(const FrameContext& ctx) = 0;
  virtual bool needs_pixels() const = 0;
};

struct DetectorSettings {
  std::string kind = "reference";  // "reference" | "oracle" | "blob"
  ReferenceDetectorConfig reference;
  int tile = 300;
  double overlap_ratio = 0.25;
  double nms_iou = 0.45;
  int workers = 1;
  MissModel miss;
  MotionConfig motion;
  std::uint64_t seed = 1;
};

/// Throws Error(kConfig) for an unknown kind.
std::unique_ptr<FrameDetector> make_frame_detector(const DetectorSettings& settings);

}  // namespace skysentry
