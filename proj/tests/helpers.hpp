#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "skysentry/synthsky.hpp"

namespace testing {

inline std::string source_path(const std::string& rel) { return std::string(SKYSENTRY_SOURCE_DIR) + "/" + rel; }

// One static camera at the origin looking along +x, 640x480, f = 600.
inline nlohmann::json small_scenario_json() {
  return {
      {"name", "unit"},
      {"duration_s", 5.0},
      {"frame_rate_hz", 4.0},
      {"pixel_noise_sigma", 0.0},
      {"seed", 42},
      {"cameras",
       {{{"id", 0}, {"position", {0, 0, 0}}, {"focal_px", 600}, {"sensor", {640, 480}}, {"calib", {{"a", 2400}}}}}},
      {"targets", nlohmann::json::array()},
  };
}

inline skysentry::Scenario small_scenario() { return skysentry::scenario_from_json(small_scenario_json()); }

}  // namespace testing
