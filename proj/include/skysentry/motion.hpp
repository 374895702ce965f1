#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skysentry/image.hpp"
#include "skysentry/synthsky.hpp"

namespace skysentry {

struct PixelCoord {
  int x = 0;
  int y = 0;
  bool operator==(const PixelCoord&) const = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Pixels whose luminance changed between two frames, in row-major order.
struct ChangeSet {
  int camera_id = 0;
  std::int64_t prev_frame = 0;
  std::int64_t curr_frame = 0;
  int width = 0;
  int height = 0;
  std::vector<PixelCoord> points;
};

/// |curr - prev| > threshold. Throws Error(kDimensionMismatch) on size or camera mismatch.
ChangeSet frame_diff(const ImageFrame& prev, const ImageFrame& curr, int threshold);

struct DbscanResult {
  static constexpr int kNoise = -1;
  std::vector<int> labels;  // cluster index per input point, or kNoise
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> noise;
};

/// Density-based clustering; a point's eps-neighborhood (distance <= eps)
/// includes itself. Clusters are numbered in order of their first core point
/// and expanded in index order, so labels depend only on input order.
DbscanResult dbscan(std::span<const Point2> points, double eps, std::size_t min_pts);

/// Per-pixel ring counter of recent changes. A pixel is masked when it changed
/// in at least trigger_k of the last window_n frames; the mask is then dilated.
class ClutterMask {
 public:
  ClutterMask(int width, int height, int window_n = 8, int trigger_k = 6, int dilation = 1);

  void update(const ChangeSet& change);
  ChangeSet filter(const ChangeSet& change) const;

  bool masked(int x, int y) const { return mask_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  double masked_fraction() const;
  int width() const { return width_; }
  int height() const { return height_; }
  int window_n() const { return window_n_; }
  int trigger_k() const { return trigger_k_; }
  std::span<const std::uint8_t> raster() const { return mask_; }

 private:
  void rebuild_mask();

  int width_;
  int height_;
  int window_n_;
  int trigger_k_;
  int dilation_;
  std::vector<std::uint8_t> counts_;
  std::vector<std::uint8_t> mask_;
  std::deque<std::vector<std::uint32_t>> history_;
  std::size_t masked_pixels_ = 0;
};

/// Value-style wrapper: returns the updated copy.
ClutterMask update_clutter_mask(ClutterMask mask, const ChangeSet& change);

struct Cluster {
  std::vector<Point2> members;

  Point2 centroid() const;
  BBox bounds() const;  // pixel-inclusive bounding box
};

std::vector<Cluster> gather_clusters(std::span<const Point2> points, const DbscanResult& result);

struct Roi {
  static constexpr int kSize = 128;
  double cx = 0.0;
  double cy = 0.0;
  int crop_x = 0;  // top-left of the crop window in the frame
  int crop_y = 0;
  GrayImage crop;
  int camera_id = 0;
  std::int64_t frame_index = 0;
  std::size_t cluster_size = 0;
};

/// One 128x128 crop per cluster, centered on the rounded centroid and shifted
/// to stay inside the frame. The recorded center is never shifted.
std::vector<Roi> extract_rois(std::span<const Cluster> clusters, const ImageFrame& frame);

/// Writes `roi_cam<c>_f<i>_<k>.pgm` crops plus `rois.jsonl` appended in dir.
void dump_rois(const std::string& dir, std::span<const Roi> rois);

struct MotionConfig {
  int threshold = 12;
  double eps = 3.0;
  std::size_t min_pts = 4;
  int window_n = 8;
  int trigger_k = 6;
  int dilation = 1;
};

struct MotionResult {
  ChangeSet raw;
  ChangeSet filtered;
  std::vector<Cluster> clusters;
};

/// Per-camera motion state: the previous frame and the clutter mask.
class MotionPipeline {
 public:
  explicit MotionPipeline(MotionConfig config = {}) : config_(config) {}

  /// Returns nothing useful for the first frame (no predecessor).
  MotionResult process(const ImageFrame& frame);

  const MotionConfig& config() const { return config_; }
  const ClutterMask* mask() const { return mask_.has_value() ? &*mask_ : nullptr; }
  std::size_t frames_seen() const { return frames_seen_; }

 private:
  MotionConfig config_;
  std::optional<ImageFrame> prev_;
  std::optional<ClutterMask> mask_;
  std::size_t frames_seen_ = 0;
};

}  // namespace skysentry
