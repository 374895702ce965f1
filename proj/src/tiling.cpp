#include "skysentry/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <nlohmann/json.hpp>
#include <thread>

#include "skysentry/error.hpp"

namespace skysentry {

namespace {

std::vector<int> axis_origins(int dim, int tile, int stride) {
  if (dim <= tile) return {0};
  const int count = (dim - tile + stride - 1) / stride + 1;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) out.push_back(std::min(k * stride, dim - tile));
  return out;
}

}  // namespace

TileGrid plan_tiles(int width, int height, int tile, double overlap_ratio) {
  if (tile <= 0) throw Error(Errc::kInvalidArgument, "tile must be > 0");
  if (!(overlap_ratio >= 0.0 && overlap_ratio < 1.0)) {
    throw Error(Errc::kInvalidArgument, "overlap_ratio must be in [0, 1)");
  }
  if (width <= 0 || height <= 0) throw Error(Errc::kInvalidArgument, "frame dimensions must be > 0");
  TileGrid grid;
  grid.frame_width = width;
  grid.frame_height = height;
  grid.tile = tile;
  grid.overlap_ratio = overlap_ratio;
  // The epsilon keeps e.g. 300 * 0.9 from flooring to 269.
  grid.stride = std::max(1, static_cast<int>(std::floor(tile * (1.0 - overlap_ratio) + 1e-9)));
  const auto xs = axis_origins(width, tile, grid.stride);
  const auto ys = axis_origins(height, tile, grid.stride);
  grid.cols = static_cast<int>(xs.size());
  grid.rows = static_cast<int>(ys.size());
  for (int y : ys) {
    for (int x : xs) grid.offsets.push_back({x, y});
  }
  return grid;
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "iou_threshold must be in (0, 1]");
  }
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.objectness != b.objectness) return a.objectness > b.objectness;
    if (a.bbox.x != b.bbox.x) return a.bbox.x < b.bbox.x;
    return a.bbox.y < b.bbox.y;
  });
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    const bool keep = std::all_of(kept.begin(), kept.end(),
                                  [&](const Detection& k) { return iou(d.bbox, k.bbox) < iou_threshold; });
    if (keep) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> run_tiled(const Detector& detector, const GrayView& frame, const TileGrid& grid,
                                 double iou_threshold, int workers) {
  if (grid.frame_width != frame.width || grid.frame_height != frame.height) {
    throw Error(Errc::kDimensionMismatch, "tile grid planned for a different frame size");
  }
  const std::size_t n = grid.offsets.size();
  std::vector<std::vector<Detection>> per_tile(n);
  std::vector<std::exception_ptr> errors(n);
  const int tw = grid.tile_width();
  const int th = grid.tile_height();

  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < n; i += step) {
      const TileOrigin o = grid.offsets[i];
      try {
        auto dets = detector.detect(frame.crop(o.x, o.y, tw, th), o);
        for (auto& d : dets) {
          const double x0 = std::max(0.0, d.bbox.x + o.x);
          const double y0 = std::max(0.0, d.bbox.y + o.y);
          const double x1 = std::min(static_cast<double>(frame.width), d.bbox.x + d.bbox.w + o.x);
          const double y1 = std::min(static_cast<double>(frame.height), d.bbox.y + d.bbox.h + o.y);
          d.bbox = {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
        }
        per_tile[i] = std::move(dets);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const auto nworkers = static_cast<std::size_t>(std::max(1, workers));
  if (nworkers == 1 || n <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(nworkers, n); ++w) pool.emplace_back(work, w, std::min(nworkers, n));
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "tile " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(Errc::kInvalidArgument, "tile " + std::to_string(i) + ": " + e.what());
    }
  }

  std::vector<Detection> all;
  for (auto& dets : per_tile) all.insert(all.end(), dets.begin(), dets.end());
  return nms(std::move(all), iou_threshold);
}

std::vector<Detection> run_downscaled(const Detector& detector, const GrayView& frame, int side) {
  if (side <= 0) throw Error(Errc::kInvalidArgument, "side must be > 0");
  GrayImage small(side, side);
  const double sx = static_cast<double>(frame.width) / side;
  const double sy = static_cast<double>(frame.height) / side;
  for (int y = 0; y < side; ++y) {
    const int y0 = static_cast<int>(std::floor(y * sy));
    const int y1 = std::max(y0 + 1, static_cast<int>(std::floor((y + 1) * sy)));
    for (int x = 0; x < side; ++x) {
      const int x0 = static_cast<int>(std::floor(x * sx));
      const int x1 = std::max(x0 + 1, static_cast<int>(std::floor((x + 1) * sx)));
      long sum = 0;
      for (int yy = y0; yy < std::min(y1, frame.height); ++yy) {
        for (int xx = x0; xx < std::min(x1, frame.width); ++xx) sum += frame.at(xx, yy);
      }
      const long count = static_cast<long>(std::min(y1, frame.height) - y0) * (std::min(x1, frame.width) - x0);
      small.at(x, y) = static_cast<std::uint8_t>((sum + count / 2) / std::max(1L, count));
    }
  }
  auto dets = detector.detect(small.view(), {0, 0});
  for (auto& d : dets) d.bbox = {d.bbox.x * sx, d.bbox.y * sy, d.bbox.w * sx, d.bbox.h * sy};
  return dets;
}

nlohmann::json detection_to_json(const Detection& d, int camera_id, std::int64_t frame_index) {
  return {{"frame", frame_index},
          {"camera", camera_id},
          {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
          {"objectness", d.objectness},
          {"scores", d.scores}};
}

Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  const auto b = j.at("bbox").get<std::vector<double>>();
  if (b.size() != 4) throw Error(Errc::kConfig, "detection bbox must have 4 entries");
  d.bbox = {b[0], b[1], b[2], b[3]};
  d.objectness = j.at("objectness").get<double>();
  d.scores = j.at("scores").get<ClassScores>();
  return d;
}

}  // namespace skysentry
