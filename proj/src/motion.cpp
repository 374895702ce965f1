#include "skysentry/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <tuple>

#include "skysentry/error.hpp"

namespace skysentry {

ChangeSet frame_diff(const ImageFrame& prev, const ImageFrame& curr, int threshold) {
  if (prev.width != curr.width || prev.height != curr.height || prev.camera_id != curr.camera_id ||
      prev.pixels.size() != curr.pixels.size()) {
    throw Error(Errc::kDimensionMismatch, "frame_diff needs same-size frames from one camera");
  }
  ChangeSet out;
  out.camera_id = curr.camera_id;
  out.prev_frame = prev.frame_index;
  out.curr_frame = curr.frame_index;
  out.width = curr.width;
  out.height = curr.height;
  for (int y = 0; y < curr.height; ++y) {
    const std::uint8_t* a = prev.pixels.data() + static_cast<std::size_t>(y) * curr.width;
    const std::uint8_t* b = curr.pixels.data() + static_cast<std::size_t>(y) * curr.width;
    for (int x = 0; x < curr.width; ++x) {
      if (std::abs(static_cast<int>(b[x]) - static_cast<int>(a[x])) > threshold) {
        out.points.push_back({x, y});
      }
    }
  }
  return out;
}

namespace {

// Points bucketed into eps-sized cells and sorted by (cell row, cell column),
// so the 3x3 neighborhood is three contiguous runs. When the occupied cell
// rectangle is small enough, a dense offset table replaces the binary search.
// Queries return sorted indices.
class NeighborGrid {
 public:
  NeighborGrid(std::span<const Point2> points, double eps) : points_(points), eps_(eps) {
    entries_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) entries_.push_back({cell(points[i].y), cell(points[i].x), i});
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
      return std::tie(a.cy, a.cx, a.index) < std::tie(b.cy, b.cx, b.index);
    });
    if (entries_.empty()) return;
    min_cy_ = entries_.front().cy;
    const std::int64_t max_cy = entries_.back().cy;
    min_cx_ = max_cx_ = entries_.front().cx;
    for (const auto& e : entries_) {
      min_cx_ = std::min(min_cx_, e.cx);
      max_cx_ = std::max(max_cx_, e.cx);
    }
    const double cells = static_cast<double>(max_cx_ - min_cx_ + 1) * static_cast<double>(max_cy - min_cy_ + 1);
    if (cells > std::max(double{1 << 20}, 8.0 * static_cast<double>(entries_.size()))) return;
    cols_ = max_cx_ - min_cx_ + 1;
    offsets_.assign(static_cast<std::size_t>(cells) + 1, 0);
    for (const auto& e : entries_) ++offsets_[dense_id(e.cy, e.cx) + 1];
    for (std::size_t c = 1; c < offsets_.size(); ++c) offsets_[c] += offsets_[c - 1];
  }

  void query(std::size_t i, std::vector<std::size_t>& out) const {
    out.clear();
    const Point2& p = points_[i];
    const std::int64_t cx = cell(p.x);
    const std::int64_t cy = cell(p.y);
    const double eps2 = eps_ * eps_;
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      const auto [first, last] = row_run(cy + dy, cx - 1, cx + 1);
      for (std::size_t k = first; k < last; ++k) {
        const std::size_t j = entries_[k].index;
        const double ddx = points_[j].x - p.x;
        const double ddy = points_[j].y - p.y;
        if (ddx * ddx + ddy * ddy <= eps2) out.push_back(j);
      }
    }
    std::sort(out.begin(), out.end());
  }

 private:
  struct Entry {
    std::int64_t cy;
    std::int64_t cx;
    std::size_t index;
  };

  std::int64_t cell(double v) const { return static_cast<std::int64_t>(std::floor(v / eps_)); }
  std::size_t dense_id(std::int64_t cy, std::int64_t cx) const {
    return static_cast<std::size_t>((cy - min_cy_) * cols_ + (cx - min_cx_));
  }

  // Entry range of row cy restricted to columns [cx0, cx1].
  std::pair<std::size_t, std::size_t> row_run(std::int64_t cy, std::int64_t cx0, std::int64_t cx1) const {
    if (cols_ > 0) {
      const std::int64_t rows = static_cast<std::int64_t>((offsets_.size() - 1) / static_cast<std::size_t>(cols_));
      if (cy < min_cy_ || cy >= min_cy_ + rows) return {0, 0};
      cx0 = std::max(cx0, min_cx_);
      cx1 = std::min(cx1, max_cx_);
      if (cx0 > cx1) return {0, 0};
      return {offsets_[dense_id(cy, cx0)], offsets_[dense_id(cy, cx1) + 1]};
    }
    auto key_less = [](const Entry& e, const std::pair<std::int64_t, std::int64_t>& k) {
      return std::pair(e.cy, e.cx) < k;
    };
    const auto lo = std::lower_bound(entries_.begin(), entries_.end(), std::pair(cy, cx0), key_less);
    auto hi = lo;
    while (hi != entries_.end() && hi->cy == cy && hi->cx <= cx1) ++hi;
    return {static_cast<std::size_t>(lo - entries_.begin()), static_cast<std::size_t>(hi - entries_.begin())};
  }

  std::span<const Point2> points_;
  double eps_;
  std::vector<Entry> entries_;
  std::int64_t min_cy_ = 0;
  std::int64_t min_cx_ = 0;
  std::int64_t max_cx_ = 0;
  std::int64_t cols_ = 0;  // 0: no dense table
  std::vector<std::size_t> offsets_;
};

}  // namespace

DbscanResult dbscan(std::span<const Point2> points, double eps, std::size_t min_pts) {
  if (!(eps > 0.0) || min_pts < 1) throw Error(Errc::kInvalidArgument, "dbscan needs eps > 0, min_pts >= 1");
  constexpr int kUnvisited = -2;
  DbscanResult result;
  result.labels.assign(points.size(), kUnvisited);
  NeighborGrid grid(points, eps);
  std::vector<std::size_t> neighbors;
  std::vector<std::size_t> more;
  std::vector<std::size_t> seeds;
  int cluster = -1;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (result.labels[i] != kUnvisited) continue;
    grid.query(i, neighbors);
    if (neighbors.size() < min_pts) {
      result.labels[i] = DbscanResult::kNoise;
      continue;
    }
    ++cluster;
    result.labels[i] = cluster;
    seeds.clear();
    // Points are claimed when queued; noise reached here becomes a border point.
    auto claim = [&](const std::vector<std::size_t>& found) {
      for (std::size_t j : found) {
        if (result.labels[j] == DbscanResult::kNoise) {
          result.labels[j] = cluster;
        } else if (result.labels[j] == kUnvisited) {
          result.labels[j] = cluster;
          seeds.push_back(j);
        }
      }
    };
    claim(neighbors);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      grid.query(seeds[s], more);
      if (more.size() >= min_pts) claim(more);
    }
  }
  result.clusters.resize(static_cast<std::size_t>(cluster + 1));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (result.labels[i] == DbscanResult::kNoise) {
      result.noise.push_back(i);
    } else {
      result.clusters[static_cast<std::size_t>(result.labels[i])].push_back(i);
    }
  }
  return result;
}

ClutterMask::ClutterMask(int width, int height, int window_n, int trigger_k, int dilation)
    : width_(width), height_(height), window_n_(window_n), trigger_k_(trigger_k), dilation_(dilation) {
  if (width <= 0 || height <= 0) throw Error(Errc::kInvalidArgument, "mask dimensions must be > 0");
  if (!(trigger_k > 0 && trigger_k <= window_n) || window_n > 255) {
    throw Error(Errc::kInvalidArgument, "need 0 < trigger_k <= window_n <= 255");
  }
  if (dilation < 0) throw Error(Errc::kInvalidArgument, "dilation must be >= 0");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  counts_.assign(n, 0);
  mask_.assign(n, 0);
}

void ClutterMask::update(const ChangeSet& change) {
  if (change.width != width_ || change.height != height_) {
    throw Error(Errc::kDimensionMismatch, "change set does not match mask dimensions");
  }
  std::vector<std::uint32_t> frame;
  frame.reserve(change.points.size());
  for (const auto& p : change.points) {
    const auto idx = static_cast<std::uint32_t>(p.y * width_ + p.x);
    frame.push_back(idx);
    ++counts_[idx];
  }
  history_.push_back(std::move(frame));
  if (static_cast<int>(history_.size()) > window_n_) {
    for (std::uint32_t idx : history_.front()) --counts_[idx];
    history_.pop_front();
  }
  rebuild_mask();
}

void ClutterMask::rebuild_mask() {
  // Threshold, then a separable square dilation: rows first, then columns.
  const auto k = static_cast<std::uint8_t>(trigger_k_);
  std::vector<std::uint8_t> rows(mask_.size(), 0);
  for (int y = 0; y < height_; ++y) {
    const std::uint8_t* c = counts_.data() + static_cast<std::size_t>(y) * width_;
    std::uint8_t* r = rows.data() + static_cast<std::size_t>(y) * width_;
    for (int x = 0; x < width_; ++x) {
      if (c[x] < k) continue;
      const int x1 = std::min(width_ - 1, x + dilation_);
      for (int xx = std::max(0, x - dilation_); xx <= x1; ++xx) r[xx] = 1;
    }
  }
  std::fill(mask_.begin(), mask_.end(), 0);
  for (int y = 0; y < height_; ++y) {
    std::uint8_t* dst = mask_.data() + static_cast<std::size_t>(y) * width_;
    const int y1 = std::min(height_ - 1, y + dilation_);
    for (int yy = std::max(0, y - dilation_); yy <= y1; ++yy) {
      const std::uint8_t* src = rows.data() + static_cast<std::size_t>(yy) * width_;
      for (int x = 0; x < width_; ++x) dst[x] |= src[x];
    }
  }
  masked_pixels_ = static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

ChangeSet ClutterMask::filter(const ChangeSet& change) const {
  if (change.width != width_ || change.height != height_) {
    throw Error(Errc::kDimensionMismatch, "change set does not match mask dimensions");
  }
  ChangeSet out = change;
  out.points.clear();
  for (const auto& p : change.points) {
    if (!masked(p.x, p.y)) out.points.push_back(p);
  }
  return out;
}

double ClutterMask::masked_fraction() const {
  return static_cast<double>(masked_pixels_) / static_cast<double>(mask_.size());
}

ClutterMask update_clutter_mask(ClutterMask mask, const ChangeSet& change) {
  mask.update(change);
  return mask;
}

Point2 Cluster::centroid() const {
  Point2 c;
  for (const auto& p : members) {
    c.x += p.x;
    c.y += p.y;
  }
  const double n = members.empty() ? 1.0 : static_cast<double>(members.size());
  return {c.x / n, c.y / n};
}

BBox Cluster::bounds() const {
  if (members.empty()) return {};
  double x0 = members[0].x, x1 = x0, y0 = members[0].y, y1 = y0;
  for (const auto& p : members) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0 + 1.0, y1 - y0 + 1.0};
}

std::vector<Cluster> gather_clusters(std::span<const Point2> points, const DbscanResult& result) {
  std::vector<Cluster> out(result.clusters.size());
  for (std::size_t c = 0; c < result.clusters.size(); ++c) {
    for (std::size_t i : result.clusters[c]) out[c].members.push_back(points[i]);
  }
  return out;
}

std::vector<Roi> extract_rois(std::span<const Cluster> clusters, const ImageFrame& frame) {
  std::vector<Roi> out;
  const GrayView view = frame.view();
  for (const auto& cluster : clusters) {
    const Point2 c = cluster.centroid();
    Roi roi;
    roi.cx = std::round(c.x);
    roi.cy = std::round(c.y);
    roi.camera_id = frame.camera_id;
    roi.frame_index = frame.frame_index;
    roi.cluster_size = cluster.members.size();
    roi.crop = GrayImage(Roi::kSize, Roi::kSize);
    // Edge clamping: shift the window inside the frame; replicate edge pixels
    // only when the frame itself is smaller than the crop.
    const int half = Roi::kSize / 2;
    const int max_x = std::max(0, frame.width - Roi::kSize);
    const int max_y = std::max(0, frame.height - Roi::kSize);
    roi.crop_x = std::clamp(static_cast<int>(roi.cx) - half, 0, max_x);
    roi.crop_y = std::clamp(static_cast<int>(roi.cy) - half, 0, max_y);
    for (int y = 0; y < Roi::kSize; ++y) {
      const int sy = std::min(frame.height - 1, roi.crop_y + y);
      for (int x = 0; x < Roi::kSize; ++x) {
        const int sx = std::min(frame.width - 1, roi.crop_x + x);
        roi.crop.at(x, y) = view.at(sx, sy);
      }
    }
    out.push_back(std::move(roi));
  }
  return out;
}

void dump_rois(const std::string& dir, std::span<const Roi> rois) {
  std::ofstream index(dir + "/rois.jsonl", std::ios::app);
  if (!index) throw Error(Errc::kIo, "cannot write " + dir + "/rois.jsonl");
  for (std::size_t k = 0; k < rois.size(); ++k) {
    const Roi& r = rois[k];
    const std::string name = "roi_cam" + std::to_string(r.camera_id) + "_f" +
                             std::to_string(r.frame_index) + "_" + std::to_string(k) + ".pgm";
    write_pgm(dir + "/" + name, r.crop.view());
    nlohmann::json j = {{"frame", r.frame_index}, {"camera", r.camera_id}, {"center", {r.cx, r.cy}},
                        {"cluster_size", r.cluster_size}, {"file", name}};
    index << j.dump() << '\n';
  }
}

MotionResult MotionPipeline::process(const ImageFrame& frame) {
  MotionResult result;
  ++frames_seen_;
  if (!mask_) mask_.emplace(frame.width, frame.height, config_.window_n, config_.trigger_k, config_.dilation);
  if (prev_) {
    result.raw = frame_diff(*prev_, frame, config_.threshold);
    mask_->update(result.raw);
    result.filtered = mask_->filter(result.raw);
    std::vector<Point2> pts;
    pts.reserve(result.filtered.points.size());
    for (const auto& p : result.filtered.points) pts.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
    result.clusters = gather_clusters(pts, dbscan(pts, config_.eps, config_.min_pts));
  }
  prev_ = frame;
  return result;
}

}  // namespace skysentry
