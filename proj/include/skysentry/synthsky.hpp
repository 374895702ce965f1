#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/geometry.hpp"
#include "skysentry/image.hpp"
#include "skysentry/species.hpp"

namespace skysentry {

struct Waypoint {
  double t_s = 0.0;
  Vec3 position;
};

/// A target exists only between its first and last waypoint time.
struct TargetTruth {
  int id = 0;
  Species species = Species::kBird;
  double size_m = 1.0;
  std::vector<Waypoint> waypoints;
};

enum class ClutterKind { kTreetopBand, kRotorDisc };

struct ClutterSpec {
  std::optional<int> camera_id;  // nullopt: applies to every camera
  BBox region;                   // sensor pixels
  ClutterKind kind = ClutterKind::kTreetopBand;
  double amplitude = 3.0;  // sway, px
  double period_s = 0.75;
  double depth = 60.0;  // darkening, gray levels
};

enum class CameraKind { kStatic, kTele };

struct SceneCamera {
  int id = 0;
  CameraKind kind = CameraKind::kStatic;
  CameraModel model;
  CalibCurve calib = CalibCurve::static_default();
};

/// Stereo pair of tele cameras on the PTU. The cameras' own yaw/pitch are the
/// rig's parked orientation; the manager re-aims them.
struct RigSpec {
  int id = 0;
  int left_camera = 0;
  int right_camera = 1;
  double baseline_m = 1.0;
};

struct Scenario {
  std::string name = "unnamed";
  double duration_s = 10.0;
  double frame_rate_hz = 4.0;
  std::vector<SceneCamera> cameras;
  std::vector<RigSpec> rigs;
  std::vector<TargetTruth> targets;
  std::vector<ClutterSpec> clutter;
  double pixel_noise_sigma = 2.0;
  double contrast = 80.0;  // target darkening at blob center
  double sky_top = 215.0;
  double sky_bottom = 180.0;
  std::uint64_t seed = 1;

  /// Throws Error(kConfig) naming the offending field.
  void validate() const;

  const SceneCamera& camera(int id) const;  // Error(kUnknownCamera)
  bool has_camera(int id) const;
  StereoRig stereo_rig(const RigSpec& rig) const;

  std::int64_t frame_count() const;
  double frame_time(std::int64_t index) const { return static_cast<double>(index) / frame_rate_hz; }
  std::int64_t frame_index(double t_s) const;

  /// Copy with sensors, principal points, focal lengths and calibration
  /// curves scaled by `scale` (clutter regions too).
  Scenario scaled(double scale) const;
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::string& path);

struct TargetState {
  int id = 0;
  Species species = Species::kBird;
  Vec3 position;
  Vec3 velocity;
};

/// Piecewise-linear interpolation of every target active at t_s.
/// Throws Error(kOutOfRange) unless 0 <= t_s <= duration.
std::vector<TargetState> sample_state(const Scenario& scenario, double t_s);

struct ImageFrame {
  int camera_id = 0;
  std::int64_t frame_index = 0;
  double t_s = 0.0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayView view() const { return {pixels.data(), width, height, width}; }
};

/// Deterministic in (seed, camera_id, frame index).
ImageFrame render_frame(const Scenario& scenario, int camera_id, double t_s);

/// Same as render_frame but with an explicitly posed camera (e.g. a tele
/// camera re-aimed by the PTU). Clutter is keyed by camera_id as usual.
ImageFrame render_frame_with(const Scenario& scenario, const SceneCamera& camera, double t_s);

/// Rendered full-width (half-maximum) blob diameter in pixels, clamped >= 1.
double rendered_diameter(const SceneCamera& camera, double distance_m);

struct TruthBox {
  int target_id = 0;
  Species species = Species::kBird;
  BBox bbox;
  double distance_m = 0.0;
};

/// Boxes for targets projecting inside the sensor with positive depth. The
/// box is the square whose diagonal equals the rendered diameter.
std::vector<TruthBox> ground_truth_boxes(const Scenario& scenario, int camera_id, double t_s);

nlohmann::json truth_box_to_json(const TruthBox& box, int camera_id, std::int64_t frame_index,
                                 double t_s);

/// Frame file name `cam<id>_f<index>.pgm`.
std::string frame_filename(int camera_id, std::int64_t frame_index);

}  // namespace skysentry
