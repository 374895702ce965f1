#include "skysentry/detect.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "skysentry/error.hpp"
#include "skysentry/random.hpp"

namespace skysentry {

namespace {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<float> v;

  Plane() = default;
  Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * height, 0.0f) {}
  float& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
  float at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
  float* row(int y) { return v.data() + static_cast<std::size_t>(y) * w; }
  const float* row(int y) const { return v.data() + static_cast<std::size_t>(y) * w; }
};

std::vector<float> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double g = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = static_cast<float>(g);
    sum += g;
  }
  for (auto& x : k) x = static_cast<float>(x / sum);
  return k;
}

// Separable Gaussian with clamped borders.
Plane blur(const Plane& in, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  Plane tmp(in.w, in.h);
  std::vector<float> padded(static_cast<std::size_t>(in.w + 2 * r));
  for (int y = 0; y < in.h; ++y) {
    const float* src = in.row(y);
    for (int i = 0; i < in.w + 2 * r; ++i) padded[static_cast<std::size_t>(i)] = src[std::clamp(i - r, 0, in.w - 1)];
    float* dst = tmp.row(y);
    for (std::size_t j = 0; j < k.size(); ++j) {
      const float kj = k[j];
      const float* p = padded.data() + j;
      for (int x = 0; x < in.w; ++x) dst[x] += kj * p[x];
    }
  }
  Plane out(in.w, in.h);
  for (int y = 0; y < in.h; ++y) {
    float* dst = out.row(y);
    for (int j = -r; j <= r; ++j) {
      const float kj = k[static_cast<std::size_t>(j + r)];
      const float* src = tmp.row(std::clamp(y + j, 0, in.h - 1));
      for (int x = 0; x < in.w; ++x) dst[x] += kj * src[x];
    }
  }
  return out;
}

Plane downsample2(const Plane& in) {
  Plane out((in.w + 1) / 2, (in.h + 1) / 2);
  for (int y = 0; y < out.h; ++y) {
    const int y0 = 2 * y;
    const int y1 = std::min(2 * y + 1, in.h - 1);
    for (int x = 0; x < out.w; ++x) {
      const int x0 = 2 * x;
      const int x1 = std::min(2 * x + 1, in.w - 1);
      out.at(x, y) = 0.25f * (in.at(x0, y0) + in.at(x1, y0) + in.at(x0, y1) + in.at(x1, y1));
    }
  }
  return out;
}

Plane subtract(const Plane& a, const Plane& b) {
  Plane out(a.w, a.h);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  return out;
}

struct Candidate {
  double x = 0.0;  // tile pixel coordinates (continuous)
  double y = 0.0;
  double response = 0.0;
  int level = 0;
  double log2_scale_offset = 0.0;  // sub-octave refinement from the neighboring levels
};

bool is_local_max(const Plane& p, int x, int y) {
  const float c = p.at(x, y);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int xx = x + dx;
      const int yy = y + dy;
      if (xx < 0 || yy < 0 || xx >= p.w || yy >= p.h) continue;
      const float n = p.at(xx, yy);
      // Plateaus resolve to their first pixel in scan order.
      const bool earlier = dy < 0 || (dy == 0 && dx < 0);
      if (earlier ? n >= c : n > c) return false;
    }
  }
  return true;
}

double parabolic_offset(float l, float c, float r) {
  const double denom = static_cast<double>(l) - 2.0 * c + r;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (static_cast<double>(l) - r) / denom, -0.5, 0.5);
}

float sample_level(const Plane& p, int level, double x, double y) {
  const double scale = static_cast<double>(1 << level);
  const int xi = std::clamp(static_cast<int>(std::floor(x / scale)), 0, p.w - 1);
  const int yi = std::clamp(static_cast<int>(std::floor(y / scale)), 0, p.h - 1);
  return p.at(xi, yi);
}

// RMS of the finest DoG band over a square ring around (cx, cy); foliage and
// rotor texture light it up, open sky leaves only sensor noise.
double ring_rms(const Plane& fine, double cx, double cy, int inner, int outer) {
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = std::max(0, y0 - outer); y <= std::min(fine.h - 1, y0 + outer); ++y) {
    const bool in_rows = std::abs(y - y0) <= inner;
    for (int x = std::max(0, x0 - outer); x <= std::min(fine.w - 1, x0 + outer); ++x) {
      if (in_rows && std::abs(x - x0) <= inner) continue;
      const double v = fine.at(x, y);
      sum += v * v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

}  // namespace

std::vector<Detection> ReferenceDetector::detect(const GrayView& tile, TileOrigin /*origin*/) const {
  if (tile.width <= 0 || tile.height <= 0) return {};
  constexpr int kLevels = 3;
  // Dark targets become positive peaks.
  Plane inverted(tile.width, tile.height);
  for (int y = 0; y < tile.height; ++y) {
    const std::uint8_t* src = tile.row(y);
    float* dst = inverted.row(y);
    for (int x = 0; x < tile.width; ++x) dst[x] = 255.0f - static_cast<float>(src[x]);
  }

  // Octave pyramid: level l holds DoG(sigma = 2^l, 2^(l+1)) in full-res units.
  const double incremental = std::sqrt(3.0);
  std::vector<Plane> dog;
  Plane base = blur(inverted, 1.0);
  for (int level = 0; level < kLevels; ++level) {
    Plane wider = blur(base, incremental);
    dog.push_back(subtract(base, wider));
    if (level + 1 < kLevels) {
      if (wider.w < 2 || wider.h < 2) break;
      base = downsample2(wider);
    }
  }

  std::vector<Candidate> candidates;
  for (int level = 0; level < static_cast<int>(dog.size()); ++level) {
    const Plane& d = dog[static_cast<std::size_t>(level)];
    const double scale = static_cast<double>(1 << level);
    for (int y = 0; y < d.h; ++y) {
      for (int x = 0; x < d.w; ++x) {
        const float c = d.at(x, y);
        if (c <= config_.threshold || !is_local_max(d, x, y)) continue;
        const double ox = (x > 0 && x + 1 < d.w) ? parabolic_offset(d.at(x - 1, y), c, d.at(x + 1, y)) : 0.0;
        const double oy = (y > 0 && y + 1 < d.h) ? parabolic_offset(d.at(x, y - 1), c, d.at(x, y + 1)) : 0.0;
        Candidate cand{(x + 0.5 + ox) * scale, (y + 0.5 + oy) * scale, c, level, 0.0};
        std::array<float, 2> across{};
        bool best_scale = true;
        for (int side = 0; side < 2; ++side) {
          const int other = level + (side == 0 ? -1 : 1);
          if (other < 0 || other >= static_cast<int>(dog.size())) continue;
          across[static_cast<std::size_t>(side)] = sample_level(dog[static_cast<std::size_t>(other)], other, cand.x, cand.y);
          if (across[static_cast<std::size_t>(side)] > c) best_scale = false;
        }
        if (!best_scale) continue;
        if (level > 0 && level + 1 < static_cast<int>(dog.size())) {
          cand.log2_scale_offset = parabolic_offset(across[0], c, across[1]);
        }
        const int inner = 2 * (1 << level) + 1;
        if (c < config_.clutter_ratio * ring_rms(dog.front(), cand.x, cand.y, inner, 2 * inner + 4)) continue;
        candidates.push_back(cand);
      }
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<Detection> out;
  std::vector<BBox> kept;
  for (const auto& c : candidates) {
    const double side = 3.0 * std::exp2(c.level + c.log2_scale_offset);
    const BBox box = BBox::centered(c.x, c.y, side);
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const BBox& k) {
      return k.contains(c.x, c.y) || box.contains(k.cx(), k.cy());
    });
    if (duplicate) continue;
    kept.push_back(box);
    // A blob cut by the raster edge peaks at the edge with a biased center.
    // Tiles overlap by more than a box, so a neighbor sees it whole.
    if (box.x < 0.0 || box.y < 0.0 || box.x + box.w > tile.width || box.y + box.h > tile.height) continue;
    Detection det;
    det.bbox = box;
    det.objectness = std::min(1.0, c.response / config_.saturation);
    det.scores = uniform_scores();
    out.push_back(det);
  }
  return out;
}

std::vector<Detection> reference_detect(const GrayView& tile, TileOrigin origin,
                                        const ReferenceDetectorConfig& config) {
  return ReferenceDetector(config).detect(tile, origin);
}

void MissModel::validate() const {
  if (!(d50 > 0.0) || !(slope > 0.0) || jitter_sigma < 0.0) {
    throw Error(Errc::kConfig, "miss model needs d50 > 0, slope > 0, jitter_sigma >= 0");
  }
}

double MissModel::probability(double diag_px) const {
  return 1.0 / (1.0 + std::exp(-slope * (diag_px - d50)));
}

std::vector<Detection> oracle_detect(const Scenario& scenario, int camera_id, double t_s,
                                     const MissModel& miss, std::uint64_t seed) {
  const SceneCamera& cam = scenario.camera(camera_id);
  const auto frame_index = static_cast<std::uint64_t>(scenario.frame_index(t_s));
  std::vector<Detection> out;
  for (const auto& truth : ground_truth_boxes(scenario, camera_id, t_s)) {
    const double p = miss.probability(truth.bbox.diag());
    SplitMix64 rng = keyed_stream({seed, static_cast<std::uint64_t>(camera_id),
                                   static_cast<std::uint64_t>(truth.target_id), frame_index});
    if (!(rng.uniform() < p)) continue;
    BBox box = truth.bbox;
    if (miss.jitter_sigma > 0.0) {
      box.x += miss.jitter_sigma * rng.normal();
      box.y += miss.jitter_sigma * rng.normal();
    }
    const double x0 = std::clamp(box.x, 0.0, static_cast<double>(cam.model.width));
    const double y0 = std::clamp(box.y, 0.0, static_cast<double>(cam.model.height));
    const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(cam.model.width));
    const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(cam.model.height));
    if (x1 <= x0 || y1 <= y0) continue;
    Detection d;
    d.bbox = {x0, y0, x1 - x0, y1 - y0};
    d.objectness = p;
    out.push_back(d);
  }
  return out;
}

Detection cluster_to_detection(const Cluster& cluster, const MotionConfig& config) {
  Detection d;
  d.bbox = cluster.bounds();
  d.objectness = std::min(1.0, static_cast<double>(cluster.members.size()) /
                                   static_cast<double>(config.min_pts) * 0.25);
  return d;
}

std::vector<Detection> BlobBaselineDetector::detect(const ImageFrame& frame) {
  const MotionResult result = motion_.process(frame);
  std::vector<Detection> out;
  for (const auto& cluster : result.clusters) out.push_back(cluster_to_detection(cluster, motion_.config()));
  return out;
}

std::vector<Detection> blob_baseline_detect(const ImageFrame& prev, const ImageFrame& curr,
                                            const MotionConfig& config) {
  if (prev.width != curr.width || prev.height != curr.height || prev.camera_id != curr.camera_id) {
    throw Error(Errc::kDimensionMismatch, "blob baseline needs consecutive frames of one camera");
  }
  BlobBaselineDetector det(config);
  det.detect(prev);
  return det.detect(curr);
}

namespace {

class TiledReferenceFrameDetector final : public FrameDetector {
 public:
  explicit TiledReferenceFrameDetector(const DetectorSettings& s) : settings_(s), detector_(s.reference) {}

  std::vector<Detection> detect(const FrameContext& ctx) override {
    if (!ctx.frame) throw Error(Errc::kInvalidArgument, "reference detector needs a frame");
    if (!grid_ || grid_->frame_width != ctx.frame->width || grid_->frame_height != ctx.frame->height) {
      grid_ = plan_tiles(ctx.frame->width, ctx.frame->height, settings_.tile, settings_.overlap_ratio);
    }
    return run_tiled(detector_, ctx.frame->view(), *grid_, settings_.nms_iou, settings_.workers);
  }
  bool needs_pixels() const override { return true; }

 private:
  DetectorSettings settings_;
  ReferenceDetector detector_;
  std::optional<TileGrid> grid_;
};

class OracleFrameDetector final : public FrameDetector {
 public:
  explicit OracleFrameDetector(const DetectorSettings& s) : settings_(s) { s.miss.validate(); }

  std::vector<Detection> detect(const FrameContext& ctx) override {
    return oracle_detect(ctx.scenario, ctx.camera_id, ctx.t_s, settings_.miss, settings_.seed);
  }
  bool needs_pixels() const override { return false; }

 private:
  DetectorSettings settings_;
};

class BlobFrameDetector final : public FrameDetector {
 public:
  explicit BlobFrameDetector(const DetectorSettings& s) : detector_(s.motion) {}

  std::vector<Detection> detect(const FrameContext& ctx) override {
    if (!ctx.frame) throw Error(Errc::kInvalidArgument, "blob detector needs a frame");
    return detector_.detect(*ctx.frame);
  }
  bool needs_pixels() const override { return true; }

 private:
  BlobBaselineDetector detector_;
};

}  // namespace

std::unique_ptr<FrameDetector> make_frame_detector(const DetectorSettings& settings) {
  if (settings.kind == "reference") return std::make_unique<TiledReferenceFrameDetector>(settings);
  if (settings.kind == "oracle") return std::make_unique<OracleFrameDetector>(settings);
  if (settings.kind == "blob") return std::make_unique<BlobFrameDetector>(settings);
  throw Error(Errc::kConfig, "detector must be 'reference', 'oracle' or 'blob', got '" + settings.kind + "'");
}

}  // namespace skysentry
