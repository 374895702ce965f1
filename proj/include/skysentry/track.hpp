#pragma once

#include <Eigen/Dense>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/detection.hpp"
#include "skysentry/fuse.hpp"

namespace skysentry {

/// Constant-velocity state [px, py, vx, vy] in the sensor plane (px, px/s).
struct KalmanState {
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
  double q = 25.0;  // white-acceleration intensity, (px/s^2)^2
  double r = 1.0;   // measurement variance, px^2
};

Eigen::Matrix4d transition(double dt_s);
Eigen::Matrix4d process_noise(double q, double dt_s);

/// x <- F x, P <- F P F^T + Q(dt). Throws Error(kInvalidArgument) unless dt_s > 0.
KalmanState kf_predict(const KalmanState& state, double dt_s);

struct KalmanUpdate {
  KalmanState state;
  Eigen::Vector2d innovation = Eigen::Vector2d::Zero();
  double mahalanobis2 = 0.0;
};

/// Linear update with a position measurement (Joseph form for P).
/// Throws Error(kNumericalFailure) if the innovation covariance is singular.
KalmanUpdate kf_update(const KalmanState& state, const Eigen::Vector2d& z);

/// Squared Mahalanobis distance of z against the state's predicted position.
double mahalanobis2(const KalmanState& state, const Eigen::Vector2d& z);

enum class TrackStatus { kTentative, kConfirmed, kLost };
std::string_view status_name(TrackStatus s);

struct TrackSample {
  double t_s = 0.0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  BBox bbox;
};

struct Track {
  int id = 0;
  KalmanState state;
  TrackStatus status = TrackStatus::kTentative;
  int hits = 0;
  int consecutive_misses = 0;
  int age_frames = 0;
  ClassPosterior posterior;
  std::vector<TrackSample> history;
  BBox last_bbox;
  double born_t = 0.0;
  double last_t = 0.0;
  double confirmed_t = -1.0;  // < 0 until confirmed
};

struct Assignment {
  std::size_t track = 0;      // index into the track list
  std::size_t detection = 0;  // index into the detection list
  double mahalanobis2 = 0.0;
};

struct AssociationResult {
  std::vector<Assignment> matches;
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

/// Greedy over all gated (track, detection) pairs sorted by Mahalanobis^2,
/// ties broken by (track id, detection index).
AssociationResult associate(std::span<const Track> tracks, std::span<const Detection> detections,
                            double gate_chi2 = 9.21);

struct TrackerParams {
  double q = 25.0;
  double r = 1.0;
  double gate_chi2 = 9.21;
  int confirm_hits = 3;    // M
  int confirm_window = 5;  // N
  int max_misses = 4;      // K
  double birth_velocity_var = 2500.0;  // (px/s)^2
};

/// Counts hits and misses, promotes Tentative -> Confirmed at M hits within N
/// frames, drops tracks after K consecutive misses (or Tentative tracks that
/// miss the N-frame window), and spawns one Tentative track per unmatched
/// detection with zero velocity and inflated covariance. Lost tracks are moved
/// to `finished`.
void step_lifecycle(std::vector<Track>& tracks, std::span<const Assignment> assignments,
                    std::span<const std::size_t> unmatched_detections, std::span<const Detection> detections,
                    double t_s, const TrackerParams& params, int& next_id, std::vector<Track>& finished);

struct TrackerStep {
  /// (track id, detection index) for every detection now owned by a track,
  /// including births.
  std::vector<std::pair<int, std::size_t>> owned;
};

/// Single-camera multi-object tracker; single writer.
class Tracker {
 public:
  explicit Tracker(TrackerParams params = {}) : params_(params) {}

  TrackerStep step(double t_s, std::span<const Detection> detections);

  std::vector<Track>& tracks() { return tracks_; }
  const std::vector<Track>& tracks() const { return tracks_; }
  const std::vector<Track>& finished() const { return finished_; }
  const TrackerParams& params() const { return params_; }
  int next_id() const { return next_id_; }

  /// Active and finished tracks, ordered by id.
  std::vector<Track> all_tracks() const;

 private:
  TrackerParams params_;
  std::vector<Track> tracks_;
  std::vector<Track> finished_;
  int next_id_ = 1;
  double last_t_ = 0.0;
  bool started_ = false;
};

/// {t, id, status, x:[...], P_diag:[...], posterior:[...]}
nlohmann::json track_to_json(const Track& track, double t_s, int camera_id);

}  // namespace skysentry
