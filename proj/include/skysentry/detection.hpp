#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/geometry.hpp"
#include "skysentry/image.hpp"
#include "skysentry/species.hpp"

namespace skysentry {

struct Detection {
  BBox bbox;  // frame coordinates once remapped
  double objectness = 0.0;
  ClassScores scores = uniform_scores();  // over {Kite, Bird, Aircraft, Other}
};

struct TileOrigin {
  int x = 0;
  int y = 0;
  bool operator==(const TileOrigin&) const = default;
};

/// Single-image detector applied to one tile. Boxes are returned in tile
/// coordinates; output must be deterministic.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const GrayView& tile, TileOrigin origin) const = 0;
};

/// {frame, camera, bbox:[x,y,w,h], objectness, scores:[k,b,a,o]}
nlohmann::json detection_to_json(const Detection& d, int camera_id, std::int64_t frame_index);
Detection detection_from_json(const nlohmann::json& j);

}  // namespace skysentry
