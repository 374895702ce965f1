#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/geometry.hpp"
#include "skysentry/random.hpp"
#include "skysentry/synthsky.hpp"
#include "skysentry/track.hpp"

namespace skysentry {

struct PtuState {
  double pan = 0.0;   // radians, wrapped to [-pi, pi]
  double tilt = 0.0;  // radians, [-pi/2, pi/2]
  double max_slew = 1.0;  // rad/s per axis

  void validate() const;
  Vec3 direction() const { return direction_from_angles(pan, tilt); }
};

struct PtuStep {
  PtuState ptu;
  double pointing_error_rad = 0.0;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Rate-limited move toward (pan, tilt); pan takes the short way round.
/// The residual error is the per-axis Euclidean angle remaining.
PtuStep ptu_step(const PtuState& ptu, double desired_pan, double desired_tilt, double dt_s);

/// Vertical cylinder standing on `center`.
struct DangerZone {
  Vec3 center;
  double radius_m = 250.0;
  double height_m = 300.0;

  void validate() const;
  bool contains(const Vec3& p) const;
};

enum class TurbineAction { kRun, kStop };
std::string_view action_name(TurbineAction a);

struct TurbineCommand {
  double t_s = 0.0;
  TurbineAction action = TurbineAction::kStop;
  std::optional<int> camera_id;
  std::optional<int> track_id;
  double kite_posterior = 0.0;
  double distance_m = 0.0;
  double sigma_z = 0.0;
  std::string reason;
};

/// {t, action, camera, track_id, posterior, distance_m, sigma_z, reason}
nlohmann::json command_to_json(const TurbineCommand& c);

/// Immutable copy of a track handed from a camera pipeline to the manager.
struct TrackSnapshot {
  int camera_id = 0;
  int track_id = 0;
  TrackStatus status = TrackStatus::kTentative;
  double kite_posterior = 0.0;
  double distance_m = 0.0;  // coarse estimate; +inf when unknown
  double u = 0.0;           // filtered sensor position
  double v = 0.0;
  BBox bbox;
};

struct TrackKey {
  int camera_id = 0;
  int track_id = 0;
  bool operator==(const TrackKey&) const = default;
};

/// Confirmed track with the highest kite posterior; ties go to the smaller
/// distance, then the smaller (camera, id).
std::optional<TrackKey> select_priority(std::span<const TrackSnapshot> tracks);

/// The tele pair posed on the PTU: both cameras share the PTU orientation and
/// sit baseline/2 either side of the rig center along the PTU's right vector.
StereoRig aim_rig(const StereoRig& parked, const Vec3& center, const PtuState& ptu);

struct StereoMeasurement {
  double distance_m = 0.0;
  double sigma_z = 0.0;
  double disparity_px = 0.0;
};

/// Disparity u_left - u_right of `target` plus N(0, sigma_disparity).
/// Throws Error(kOutOfRange) when the target is outside either tele view and
/// Error(kDegenerateDisparity) when the noisy disparity is <= 0.
StereoMeasurement stereo_measure(const StereoRig& aimed, const Vec3& target, double sigma_disparity_px,
                                 SplitMix64& rng);

struct ControllerParams {
  double tau_stop = 0.9;
  double t_resume_s = 30.0;
};

/// STOP/RUN state machine with resume hysteresis. The turbine starts running.
class TurbineController {
 public:
  explicit TurbineController(ControllerParams params = {}) : params_(params) {}

  /// `trip` is the evaluated stop condition at t_s; returns a command only on
  /// a state change.
  std::optional<TurbineAction> step(double t_s, bool trip);

  bool stopped() const { return stopped_; }
  const ControllerParams& params() const { return params_; }

 private:
  ControllerParams params_;
  bool stopped_ = false;
  std::optional<double> clear_since_;
};

/// Pure stop condition: kite posterior >= tau and position inside the zone.
bool stop_condition(double kite_posterior, const Vec3& position, const DangerZone& zone, double tau_stop);

struct ManagerParams {
  DangerZone zone;
  ControllerParams controller;
  double sigma_disparity_px = 0.5;
  double max_slew = 1.0;          // rad/s
  double calib_sigma_frac = 0.5;  // sigma of the calibration-curve fallback, fraction of range
  double held_sigma_factor = 2.0;  // inflation when a stereo fix degenerates
  int rig_id = 0;
};

enum class RangeSource { kNone, kStereo, kHeld, kCalib };
std::string_view range_source_name(RangeSource s);

struct ManagerTick {
  double t_s = 0.0;
  std::optional<TrackKey> selected;
  PtuState ptu;
  double pointing_error_rad = 0.0;
  RangeSource source = RangeSource::kNone;
  double distance_m = 0.0;
  double sigma_z = 0.0;
  Vec3 position;
  bool trip = false;
  std::optional<TurbineCommand> command;
};

nlohmann::json manager_tick_to_json(const ManagerTick& tick);

/// Central decision unit. Consumes per-tick track snapshots in (camera, id)
/// order, aims the PTU, ranges the selected target and drives the turbine.
class Manager {
 public:
  Manager(const Scenario& scenario, ManagerParams params, std::uint64_t seed);

  /// `truth` holds the world state at t_s; the tele pair only sees what
  /// projects into its sensors.
  ManagerTick tick(double t_s, std::span<const TrackSnapshot> snapshots, std::span<const TargetState> truth);

  const PtuState& ptu() const { return ptu_; }
  const Vec3& rig_center() const { return center_; }
  const std::vector<TurbineCommand>& commands() const { return commands_; }
  bool has_rig() const { return rig_.has_value(); }

 private:
  const Scenario& scenario_;
  ManagerParams params_;
  std::uint64_t seed_;
  std::optional<StereoRig> rig_;
  Vec3 center_;
  PtuState ptu_;
  TurbineController controller_;
  std::optional<double> last_t_;
  std::optional<TrackKey> last_selected_;
  std::optional<StereoMeasurement> last_fix_;
  std::vector<TurbineCommand> commands_;
};

}  // namespace skysentry
