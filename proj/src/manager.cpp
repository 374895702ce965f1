#include "skysentry/manager.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <nlohmann/json.hpp>
#include <tuple>

#include "skysentry/error.hpp"

namespace skysentry {

void PtuState::validate() const {
  if (!(std::abs(pan) <= std::numbers::pi) || !(std::abs(tilt) <= std::numbers::pi / 2)) {
    throw Error(Errc::kInvalidArgument, "ptu angles out of range");
  }
  if (!(max_slew > 0.0)) throw Error(Errc::kInvalidArgument, "ptu max_slew must be > 0");
}

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  return w == -std::numbers::pi ? std::numbers::pi : w;
}

PtuStep ptu_step(const PtuState& ptu, double desired_pan, double desired_tilt, double dt_s) {
  if (!(dt_s > 0.0)) throw Error(Errc::kInvalidArgument, "ptu_step needs dt > 0");
  ptu.validate();
  const double limit = ptu.max_slew * dt_s;
  const double target_tilt = std::clamp(desired_tilt, -std::numbers::pi / 2, std::numbers::pi / 2);
  const double pan_err = wrap_angle(desired_pan - ptu.pan);
  const double tilt_err = target_tilt - ptu.tilt;
  PtuStep out;
  out.ptu = ptu;
  out.ptu.pan = wrap_angle(ptu.pan + std::clamp(pan_err, -limit, limit));
  out.ptu.tilt = ptu.tilt + std::clamp(tilt_err, -limit, limit);
  out.pointing_error_rad = std::hypot(wrap_angle(desired_pan - out.ptu.pan), target_tilt - out.ptu.tilt);
  return out;
}

void DangerZone::validate() const {
  if (!(radius_m > 0.0) || !(height_m > 0.0)) throw Error(Errc::kConfig, "danger zone needs radius, height > 0");
}

bool DangerZone::contains(const Vec3& p) const {
  const double dz = p.z - center.z;
  return std::hypot(p.x - center.x, p.y - center.y) <= radius_m && dz >= 0.0 && dz <= height_m;
}

std::string_view action_name(TurbineAction a) { return a == TurbineAction::kStop ? "STOP" : "RUN"; }

nlohmann::json command_to_json(const TurbineCommand& c) {
  nlohmann::json j = {{"t", c.t_s}, {"action", action_name(c.action)}};
  j["camera"] = c.camera_id ? nlohmann::json(*c.camera_id) : nlohmann::json(nullptr);
  j["track_id"] = c.track_id ? nlohmann::json(*c.track_id) : nlohmann::json(nullptr);
  j["posterior"] = c.kite_posterior;
  j["distance_m"] = c.distance_m;
  j["sigma_z"] = c.sigma_z;
  j["reason"] = c.reason;
  return j;
}

std::optional<TrackKey> select_priority(std::span<const TrackSnapshot> tracks) {
  const TrackSnapshot* best = nullptr;
  auto rank = [](const TrackSnapshot& s) {
    return std::tuple(-s.kite_posterior, s.distance_m, s.camera_id, s.track_id);
  };
  for (const auto& s : tracks) {
    if (s.status != TrackStatus::kConfirmed) continue;
    if (!best || rank(s) < rank(*best)) best = &s;
  }
  if (!best) return std::nullopt;
  return TrackKey{best->camera_id, best->track_id};
}

StereoRig aim_rig(const StereoRig& parked, const Vec3& center, const PtuState& ptu) {
  StereoRig rig = parked;
  for (CameraModel* cam : {&rig.left, &rig.right}) {
    cam->yaw = ptu.pan;
    cam->pitch = ptu.tilt;
  }
  const Vec3 right = rig.left.right();
  rig.left.position = center - right * (0.5 * rig.baseline_m);
  rig.right.position = center + right * (0.5 * rig.baseline_m);
  return rig;
}

StereoMeasurement stereo_measure(const StereoRig& aimed, const Vec3& target, double sigma_disparity_px,
                                 SplitMix64& rng) {
  if (sigma_disparity_px < 0.0) throw Error(Errc::kInvalidArgument, "sigma_disparity must be >= 0");
  const auto pl = try_project(aimed.left, target);
  const auto pr = try_project(aimed.right, target);
  const double noise = rng.normal();
  if (!pl || !pr || !aimed.left.in_sensor(pl->u, pl->v) || !aimed.right.in_sensor(pr->u, pr->v)) {
    throw Error(Errc::kOutOfRange, "target outside the tele field of view");
  }
  StereoMeasurement m;
  m.disparity_px = (pl->u - pr->u) + sigma_disparity_px * noise;
  m.distance_m = triangulate(aimed, m.disparity_px);
  m.sigma_z = stereo_sigma(aimed, m.distance_m, sigma_disparity_px);
  return m;
}

std::optional<TurbineAction> TurbineController::step(double t_s, bool trip) {
  if (!stopped_) {
    if (!trip) return std::nullopt;
    stopped_ = true;
    clear_since_.reset();
    return TurbineAction::kStop;
  }
  if (trip) {
    clear_since_.reset();
    return std::nullopt;
  }
  if (!clear_since_) clear_since_ = t_s;
  if (t_s - *clear_since_ >= params_.t_resume_s) {
    stopped_ = false;
    clear_since_.reset();
    return TurbineAction::kRun;
  }
  return std::nullopt;
}

bool stop_condition(double kite_posterior, const Vec3& position, const DangerZone& zone, double tau_stop) {
  return kite_posterior >= tau_stop && zone.contains(position);
}

std::string_view range_source_name(RangeSource s) {
  switch (s) {
    case RangeSource::kNone: return "none";
    case RangeSource::kStereo: return "stereo";
    case RangeSource::kHeld: return "held";
    case RangeSource::kCalib: return "calib";
  }
  return "none";
}

nlohmann::json manager_tick_to_json(const ManagerTick& tick) {
  nlohmann::json j = {{"t", tick.t_s},
                      {"ptu", {tick.ptu.pan, tick.ptu.tilt}},
                      {"pointing_error", tick.pointing_error_rad},
                      {"range_source", range_source_name(tick.source)},
                      {"distance_m", tick.distance_m},
                      {"sigma_z", tick.sigma_z},
                      {"position", {tick.position.x, tick.position.y, tick.position.z}},
                      {"trip", tick.trip}};
  if (tick.selected) {
    j["selected"] = {{"camera", tick.selected->camera_id}, {"track_id", tick.selected->track_id}};
  } else {
    j["selected"] = nullptr;
  }
  return j;
}

Manager::Manager(const Scenario& scenario, ManagerParams params, std::uint64_t seed)
    : scenario_(scenario), params_(params), seed_(seed), controller_(params.controller) {
  params_.zone.validate();
  if (!(params_.max_slew > 0.0)) throw Error(Errc::kConfig, "manager.max_slew must be > 0");
  if (params_.sigma_disparity_px < 0.0) throw Error(Errc::kConfig, "manager.sigma_disparity must be >= 0");
  const auto rig = std::find_if(scenario.rigs.begin(), scenario.rigs.end(),
                                [&](const RigSpec& r) { return r.id == params_.rig_id; });
  if (rig != scenario.rigs.end()) {
    rig_ = scenario.stereo_rig(*rig);
    center_ = (rig_->left.position + rig_->right.position) * 0.5;
    ptu_.pan = wrap_angle(rig_->left.yaw);
    ptu_.tilt = std::clamp(rig_->left.pitch, -std::numbers::pi / 2, std::numbers::pi / 2);
  } else if (!scenario.rigs.empty()) {
    throw Error(Errc::kConfig, "manager.rig: no rig with id " + std::to_string(params_.rig_id));
  } else if (!scenario.cameras.empty()) {
    center_ = scenario.cameras.front().model.position;
  }
  ptu_.max_slew = params_.max_slew;
}

ManagerTick Manager::tick(double t_s, std::span<const TrackSnapshot> snapshots, std::span<const TargetState> truth) {
  if (last_t_ && t_s < *last_t_) throw Error(Errc::kInvalidArgument, "manager ticks must be time-ordered");
  ManagerTick out;
  out.t_s = t_s;
  out.selected = select_priority(snapshots);
  const TrackSnapshot* sel = nullptr;
  if (out.selected) {
    for (const auto& s : snapshots) {
      if (s.camera_id == out.selected->camera_id && s.track_id == out.selected->track_id) sel = &s;
    }
  }
  if (out.selected != last_selected_) last_fix_.reset();

  if (sel) {
    const SceneCamera& cam = scenario_.camera(sel->camera_id);
    const Vec3 ray = cam.model.ray(sel->u, sel->v);
    const double pan = std::atan2(ray.y, ray.x);
    const double tilt = std::asin(std::clamp(ray.z, -1.0, 1.0));
    if (last_t_ && t_s > *last_t_) {
      const PtuStep step = ptu_step(ptu_, pan, tilt, t_s - *last_t_);
      ptu_ = step.ptu;
      out.pointing_error_rad = step.pointing_error_rad;
    } else {
      out.pointing_error_rad = std::hypot(wrap_angle(pan - ptu_.pan), tilt - ptu_.tilt);
    }

    // Until the PTU settles, the tele pair may be looking at something else.
    const double half_fov = rig_ ? std::atan2(0.5 * std::min(rig_->left.width, rig_->left.height), rig_->left.focal_px) : 0.0;
    if (rig_ && out.pointing_error_rad < half_fov) {
      const StereoRig aimed = aim_rig(*rig_, center_, ptu_);
      // The pair ranges whichever target sits closest to its image center.
      const Vec3* seen = nullptr;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& st : truth) {
        const auto p = try_project(aimed.left, st.position);
        if (!p || !aimed.left.in_sensor(p->u, p->v)) continue;
        const double off = std::hypot(p->u - aimed.left.cx, p->v - aimed.left.cy);
        if (off < best) {
          best = off;
          seen = &st.position;
        }
      }
      if (seen) {
        SplitMix64 rng = keyed_stream({seed_, 0x57E7E0ULL, static_cast<std::uint64_t>(scenario_.frame_index(t_s))});
        try {
          last_fix_ = stereo_measure(aimed, *seen, params_.sigma_disparity_px, rng);
          out.source = RangeSource::kStereo;
          out.distance_m = last_fix_->distance_m;
          out.sigma_z = last_fix_->sigma_z;
        } catch (const Error& e) {
          if (e.code() != Errc::kDegenerateDisparity && e.code() != Errc::kOutOfRange) throw;
          if (last_fix_) {
            out.source = RangeSource::kHeld;
            out.distance_m = last_fix_->distance_m;
            out.sigma_z = last_fix_->sigma_z * params_.held_sigma_factor;
          }
        }
      }
    }
    if (out.source == RangeSource::kNone) {
      try {
        out.distance_m = invert_diag(cam.calib, sel->bbox.diag());
        out.sigma_z = out.distance_m * params_.calib_sigma_frac;
        out.source = RangeSource::kCalib;
      } catch (const Error& e) {
        if (e.code() != Errc::kOutOfDomain) throw;
      }
    }
    if (out.source == RangeSource::kCalib) {
      out.position = cam.model.position + ray * out.distance_m;
    } else if (out.source != RangeSource::kNone) {
      out.position = center_ + ptu_.direction() * out.distance_m;
    }
    if (out.source != RangeSource::kNone) {
      out.trip = stop_condition(sel->kite_posterior, out.position, params_.zone, params_.controller.tau_stop);
    }
  }
  out.ptu = ptu_;

  if (const auto action = controller_.step(t_s, out.trip)) {
    TurbineCommand cmd;
    cmd.t_s = t_s;
    cmd.action = *action;
    if (*action == TurbineAction::kStop) {
      cmd.camera_id = sel->camera_id;
      cmd.track_id = sel->track_id;
      cmd.kite_posterior = sel->kite_posterior;
      cmd.distance_m = out.distance_m;
      cmd.sigma_z = out.sigma_z;
      cmd.reason = "kite in danger zone";
    } else {
      cmd.reason = "zone clear";
    }
    commands_.push_back(cmd);
    out.command = cmd;
  }
  last_selected_ = out.selected;
  last_t_ = t_s;
  return out;
}

}  // namespace skysentry
