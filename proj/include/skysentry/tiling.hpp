#pragma once

#include <algorithm>
#include <vector>

#include "skysentry/detection.hpp"

namespace skysentry {

/// Overlapping tile layout over a frame. Tiles are tile x tile pixels, or the
/// whole axis when the frame is smaller than a tile.
struct TileGrid {
  int frame_width = 0;
  int frame_height = 0;
  int tile = 300;
  double overlap_ratio = 0.25;
  int stride = 225;
  int cols = 0;
  int rows = 0;
  std::vector<TileOrigin> offsets;  // row-major

  int tile_width() const { return std::min(tile, frame_width); }
  int tile_height() const { return std::min(tile, frame_height); }
};

/// stride = floor(tile * (1 - overlap)); per-axis count ceil((dim - tile) / stride) + 1
/// (1 when dim <= tile); the last origin is clamped to dim - tile.
TileGrid plan_tiles(int width, int height, int tile = 300, double overlap_ratio = 0.25);

double iou(const BBox& a, const BBox& b);

/// Greedy NMS: objectness descending (ties: lower x, then lower y); a
/// detection survives iff its IoU with every survivor is below the threshold.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold = 0.45);

/// Runs `detector` on every tile, shifts boxes back to frame coordinates,
/// clips them to the frame and merges with nms. `workers` > 1 fans tiles out over threads; the result is
/// identical to the sequential order.
std::vector<Detection> run_tiled(const Detector& detector, const GrayView& frame, const TileGrid& grid,
                                 double iou_threshold = 0.45, int workers = 1);

/// Whole-frame baseline: area-average the frame down to side x side, detect
/// once, scale boxes back up.
std::vector<Detection> run_downscaled(const Detector& detector, const GrayView& frame, int side = 300);

}  // namespace skysentry
