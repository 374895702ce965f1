#include "skysentry/track.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <tuple>

#include "skysentry/error.hpp"

namespace skysentry {

namespace {

const Eigen::Matrix<double, 2, 4>& measurement_matrix() {
  static const Eigen::Matrix<double, 2, 4> h = [] {
    Eigen::Matrix<double, 2, 4> m = Eigen::Matrix<double, 2, 4>::Zero();
    m(0, 0) = 1.0;
    m(1, 1) = 1.0;
    return m;
  }();
  return h;
}

}  // namespace

Eigen::Matrix4d transition(double dt_s) {
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = dt_s;
  f(1, 3) = dt_s;
  return f;
}

Eigen::Matrix4d process_noise(double q, double dt_s) {
  const double dt2 = dt_s * dt_s;
  const double dt3 = dt2 * dt_s;
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (int axis = 0; axis < 2; ++axis) {
    m(axis, axis) = q * dt3 / 3.0;
    m(axis, axis + 2) = q * dt2 / 2.0;
    m(axis + 2, axis) = q * dt2 / 2.0;
    m(axis + 2, axis + 2) = q * dt_s;
  }
  return m;
}

KalmanState kf_predict(const KalmanState& state, double dt_s) {
  if (!(dt_s > 0.0)) throw Error(Errc::kInvalidArgument, "kf_predict needs dt > 0");
  const Eigen::Matrix4d f = transition(dt_s);
  KalmanState out = state;
  out.x = f * state.x;
  Eigen::Matrix4d p = f * state.P * f.transpose() + process_noise(state.q, dt_s);
  out.P = 0.5 * (p + p.transpose());
  return out;
}

double mahalanobis2(const KalmanState& state, const Eigen::Vector2d& z) {
  const auto& h = measurement_matrix();
  const Eigen::Matrix2d s = h * state.P * h.transpose() + state.r * Eigen::Matrix2d::Identity();
  const Eigen::Vector2d y = z - h * state.x;
  Eigen::LDLT<Eigen::Matrix2d> ldlt(s);
  if (ldlt.info() != Eigen::Success || !(s.determinant() > 0.0)) {
    throw Error(Errc::kNumericalFailure, "innovation covariance not invertible");
  }
  return y.dot(ldlt.solve(y));
}

KalmanUpdate kf_update(const KalmanState& state, const Eigen::Vector2d& z) {
  if (!z.allFinite()) throw Error(Errc::kInvalidArgument, "measurement must be finite");
  const auto& h = measurement_matrix();
  const Eigen::Matrix2d s = h * state.P * h.transpose() + state.r * Eigen::Matrix2d::Identity();
  const double det = s.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw Error(Errc::kNumericalFailure, "innovation covariance not invertible");
  }
  const Eigen::Matrix2d s_inv = s.inverse();
  const Eigen::Vector2d y = z - h * state.x;
  const Eigen::Matrix<double, 4, 2> k = state.P * h.transpose() * s_inv;
  KalmanUpdate out;
  out.state = state;
  out.state.x = state.x + k * y;
  const Eigen::Matrix4d i_kh = Eigen::Matrix4d::Identity() - k * h;
  Eigen::Matrix4d p = i_kh * state.P * i_kh.transpose() + state.r * k * k.transpose();
  out.state.P = 0.5 * (p + p.transpose());
  out.innovation = y;
  out.mahalanobis2 = y.dot(s_inv * y);
  return out;
}

std::string_view status_name(TrackStatus s) {
  switch (s) {
    case TrackStatus::kTentative: return "tentative";
    case TrackStatus::kConfirmed: return "confirmed";
    case TrackStatus::kLost: return "lost";
  }
  return "lost";
}

AssociationResult associate(std::span<const Track> tracks, std::span<const Detection> detections,
                            double gate_chi2) {
  if (!(gate_chi2 > 0.0)) throw Error(Errc::kInvalidArgument, "gate_chi2 must be > 0");
  std::vector<Assignment> pairs;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (std::size_t j = 0; j < detections.size(); ++j) {
      const Eigen::Vector2d z(detections[j].bbox.cx(), detections[j].bbox.cy());
      const double d2 = mahalanobis2(tracks[i].state, z);
      if (d2 <= gate_chi2) pairs.push_back({i, j, d2});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [&](const Assignment& a, const Assignment& b) {
    return std::tuple(a.mahalanobis2, tracks[a.track].id, a.detection) <
           std::tuple(b.mahalanobis2, tracks[b.track].id, b.detection);
  });
  AssociationResult out;
  std::vector<bool> track_used(tracks.size(), false);
  std::vector<bool> det_used(detections.size(), false);
  for (const auto& p : pairs) {
    if (track_used[p.track] || det_used[p.detection]) continue;
    track_used[p.track] = true;
    det_used[p.detection] = true;
    out.matches.push_back(p);
  }
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (!track_used[i]) out.unmatched_tracks.push_back(i);
  }
  for (std::size_t j = 0; j < detections.size(); ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

void step_lifecycle(std::vector<Track>& tracks, std::span<const Assignment> assignments,
                    std::span<const std::size_t> unmatched_detections, std::span<const Detection> detections,
                    double t_s, const TrackerParams& params, int& next_id, std::vector<Track>& finished) {
  std::vector<bool> matched(tracks.size(), false);
  for (const auto& a : assignments) matched[a.track] = true;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    Track& tr = tracks[i];
    ++tr.age_frames;
    if (matched[i]) {
      ++tr.hits;
      tr.consecutive_misses = 0;
    } else {
      ++tr.consecutive_misses;
    }
    if (tr.status == TrackStatus::kTentative) {
      if (tr.hits >= params.confirm_hits && tr.age_frames <= params.confirm_window) {
        tr.status = TrackStatus::kConfirmed;
        tr.confirmed_t = t_s;
      } else if (tr.age_frames >= params.confirm_window) {
        tr.status = TrackStatus::kLost;
      }
    }
    if (tr.consecutive_misses >= params.max_misses) tr.status = TrackStatus::kLost;
  }
  std::vector<Track> active;
  active.reserve(tracks.size() + unmatched_detections.size());
  for (auto& tr : tracks) {
    if (tr.status == TrackStatus::kLost) {
      finished.push_back(std::move(tr));
    } else {
      active.push_back(std::move(tr));
    }
  }
  for (std::size_t j : unmatched_detections) {
    const BBox& b = detections[j].bbox;
    Track tr;
    tr.id = next_id++;
    tr.state.q = params.q;
    tr.state.r = params.r;
    tr.state.x << b.cx(), b.cy(), 0.0, 0.0;
    tr.state.P = Eigen::Vector4d(params.r, params.r, params.birth_velocity_var, params.birth_velocity_var)
                     .asDiagonal();
    tr.hits = 1;
    tr.age_frames = 1;
    tr.born_t = t_s;
    tr.last_t = t_s;
    tr.last_bbox = b;
    tr.history.push_back({t_s, tr.state.x.head<2>(), b});
    if (params.confirm_hits <= 1) {
      tr.status = TrackStatus::kConfirmed;
      tr.confirmed_t = t_s;
    }
    active.push_back(std::move(tr));
  }
  tracks = std::move(active);
}

TrackerStep Tracker::step(double t_s, std::span<const Detection> detections) {
  if (started_ && t_s > last_t_) {
    const double dt = t_s - last_t_;
    for (auto& tr : tracks_) tr.state = kf_predict(tr.state, dt);
  }
  const AssociationResult assoc = associate(tracks_, detections, params_.gate_chi2);
  TrackerStep out;
  for (const auto& a : assoc.matches) {
    Track& tr = tracks_[a.track];
    const BBox& b = detections[a.detection].bbox;
    tr.state = kf_update(tr.state, Eigen::Vector2d(b.cx(), b.cy())).state;
    tr.last_bbox = b;
    tr.last_t = t_s;
    tr.history.push_back({t_s, tr.state.x.head<2>(), b});
    out.owned.emplace_back(tr.id, a.detection);
  }
  const int first_new = next_id_;
  step_lifecycle(tracks_, assoc.matches, assoc.unmatched_detections, detections, t_s, params_, next_id_, finished_);
  for (std::size_t k = 0; k < assoc.unmatched_detections.size(); ++k) {
    out.owned.emplace_back(first_new + static_cast<int>(k), assoc.unmatched_detections[k]);
  }
  last_t_ = t_s;
  started_ = true;
  return out;
}

std::vector<Track> Tracker::all_tracks() const {
  std::vector<Track> all = finished_;
  all.insert(all.end(), tracks_.begin(), tracks_.end());
  std::sort(all.begin(), all.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
  return all;
}

nlohmann::json track_to_json(const Track& track, double t_s, int camera_id) {
  return {{"t", t_s},
          {"camera", camera_id},
          {"id", track.id},
          {"status", status_name(track.status)},
          {"x", {track.state.x[0], track.state.x[1], track.state.x[2], track.state.x[3]}},
          {"P_diag", {track.state.P(0, 0), track.state.P(1, 1), track.state.P(2, 2), track.state.P(3, 3)}},
          {"posterior", track.posterior.p}};
}

}  // namespace skysentry
