#include "skysentry/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string_view>

#include "skysentry/error.hpp"

namespace skysentry {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& ctx) {
  if (!j.is_object()) throw Error(Errc::kConfig, ctx + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || item.key() == a;
    if (!ok) throw Error(Errc::kConfig, ctx + "." + item.key() + ": unknown key");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, ctx + "." + key + ": " + e.what());
  }
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.lexically_normal().string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

LikelihoodMode parse_likelihood_mode(const std::string& s) {
  if (s == "column") return LikelihoodMode::kConfusionColumn;
  if (s == "onehot") return LikelihoodMode::kOneHot;
  throw Error(Errc::kConfig, "fusion.mode: expected 'column' or 'onehot', got '" + s + "'");
}

void PipelineConfig::validate() const {
  scenario.validate();
  if (!(resolution_scale > 0.0)) throw Error(Errc::kConfig, "config.resolution_scale must be > 0");
  if (detector.tile < 1) throw Error(Errc::kConfig, "config.tiling.tile must be >= 1");
  if (!(detector.overlap_ratio >= 0.0 && detector.overlap_ratio < 1.0)) {
    throw Error(Errc::kConfig, "config.tiling.overlap must be in [0, 1)");
  }
  if (!(detector.nms_iou > 0.0 && detector.nms_iou <= 1.0)) {
    throw Error(Errc::kConfig, "config.tiling.nms_iou must be in (0, 1]");
  }
  if (detector.workers < 1) throw Error(Errc::kConfig, "config.workers must be >= 1");
  try {
    detector.miss.validate();
  } catch (const Error& e) {
    throw Error(Errc::kConfig, std::string("config.miss_model: ") + e.what());
  }
  const auto& m = detector.motion;
  if (m.threshold < 0 || !(m.eps > 0.0) || m.min_pts < 1 || !(m.trigger_k > 0 && m.trigger_k <= m.window_n) ||
      m.dilation < 0) {
    throw Error(Errc::kConfig, "config.motion: need threshold >= 0, eps > 0, min_pts >= 1, 0 < trigger_k <= window_n");
  }
  if (!(tracker.q > 0.0) || !(tracker.r > 0.0) || !(tracker.gate_chi2 > 0.0) || tracker.confirm_hits < 1 ||
      tracker.confirm_window < tracker.confirm_hits || tracker.max_misses < 1) {
    throw Error(Errc::kConfig, "config.tracker: need q, r, gate_chi2 > 0 and 1 <= M <= N, K >= 1");
  }
  if (!(fusion.params.temper > 0.0 && fusion.params.temper <= 1.0)) {
    throw Error(Errc::kConfig, "config.fusion.temper must be in (0, 1]");
  }
  if (!(fusion.params.floor > 0.0 && fusion.params.floor < 0.25)) {
    throw Error(Errc::kConfig, "config.fusion.floor must be in (0, 0.25)");
  }
  double prior_sum = 0.0;
  for (double p : fusion.prior.p) {
    if (!(p > 0.0)) throw Error(Errc::kConfig, "config.fusion.prior entries must be > 0");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > 1e-9) throw Error(Errc::kConfig, "config.fusion.prior must sum to 1");
  manager.zone.validate();
  if (!(manager.controller.tau_stop > 0.0 && manager.controller.tau_stop <= 1.0)) {
    throw Error(Errc::kConfig, "config.manager.tau_stop must be in (0, 1]");
  }
  if (manager.controller.t_resume_s < 0.0) throw Error(Errc::kConfig, "config.manager.t_resume_s must be >= 0");
  if (!(manager.max_slew > 0.0)) throw Error(Errc::kConfig, "config.manager.max_slew must be > 0");
  if (manager.sigma_disparity_px < 0.0) throw Error(Errc::kConfig, "config.manager.sigma_disparity_px must be >= 0");
  if (!(metrics.iou > 0.0 && metrics.iou <= 1.0)) throw Error(Errc::kConfig, "config.metrics.iou must be in (0, 1]");
  if (!(metrics.confidence > 0.0 && metrics.confidence < 1.0)) {
    throw Error(Errc::kConfig, "config.metrics.confidence must be in (0, 1)");
  }
}

PipelineConfig default_config(const Scenario& scenario) {
  PipelineConfig c;
  c.scenario = scenario;
  c.seed = scenario.seed;
  c.detector.seed = scenario.seed;
  return c;
}

PipelineConfig config_from_json(const json& j, const std::string& base_dir) {
  const std::string ctx = "config";
  check_keys(j,
             {"scenario", "detector", "frame_rate_hz", "resolution_scale", "output_dir", "seed", "workers",
              "posterior_csv", "motion", "tiling", "reference", "miss_model", "tracker", "fusion", "manager",
              "metrics"},
             ctx);
  if (!j.contains("scenario")) throw Error(Errc::kConfig, "config.scenario: missing");
  PipelineConfig c;
  std::string scenario_rel;
  read(j, "scenario", scenario_rel, ctx);
  c.scenario_path = resolve(base_dir, scenario_rel);
  try {
    c.scenario = load_scenario(c.scenario_path);
  } catch (const Error& e) {
    throw Error(Errc::kConfig, "config.scenario: " + std::string(e.what()));
  }

  read(j, "detector", c.detector.kind, ctx);
  if (c.detector.kind != "reference" && c.detector.kind != "oracle" && c.detector.kind != "blob") {
    throw Error(Errc::kConfig, "config.detector: expected 'reference', 'oracle' or 'blob', got '" + c.detector.kind + "'");
  }
  double frame_rate = c.scenario.frame_rate_hz;
  read(j, "frame_rate_hz", frame_rate, ctx);
  if (!(frame_rate > 0.0)) throw Error(Errc::kConfig, "config.frame_rate_hz must be > 0");
  c.scenario.frame_rate_hz = frame_rate;
  read(j, "resolution_scale", c.resolution_scale, ctx);
  read(j, "output_dir", c.output_dir, ctx);
  c.seed = c.scenario.seed;
  read(j, "seed", c.seed, ctx);
  c.scenario.seed = c.seed;
  c.detector.seed = c.seed;
  read(j, "workers", c.detector.workers, ctx);
  read(j, "posterior_csv", c.posterior_csv, ctx);

  if (j.contains("motion")) {
    const auto& m = j.at("motion");
    const std::string mctx = "config.motion";
    check_keys(m, {"threshold", "eps", "min_pts", "window_n", "trigger_k", "dilation"}, mctx);
    read(m, "threshold", c.detector.motion.threshold, mctx);
    read(m, "eps", c.detector.motion.eps, mctx);
    read(m, "min_pts", c.detector.motion.min_pts, mctx);
    read(m, "window_n", c.detector.motion.window_n, mctx);
    read(m, "trigger_k", c.detector.motion.trigger_k, mctx);
    read(m, "dilation", c.detector.motion.dilation, mctx);
  }
  if (j.contains("tiling")) {
    const auto& t = j.at("tiling");
    const std::string tctx = "config.tiling";
    check_keys(t, {"tile", "overlap", "nms_iou"}, tctx);
    read(t, "tile", c.detector.tile, tctx);
    read(t, "overlap", c.detector.overlap_ratio, tctx);
    read(t, "nms_iou", c.detector.nms_iou, tctx);
  }
  if (j.contains("reference")) {
    const auto& r = j.at("reference");
    const std::string rctx = "config.reference";
    check_keys(r, {"threshold", "saturation", "clutter_ratio"}, rctx);
    read(r, "threshold", c.detector.reference.threshold, rctx);
    read(r, "saturation", c.detector.reference.saturation, rctx);
    read(r, "clutter_ratio", c.detector.reference.clutter_ratio, rctx);
  }
  if (j.contains("miss_model")) {
    const auto& m = j.at("miss_model");
    const std::string mctx = "config.miss_model";
    check_keys(m, {"d50", "slope", "jitter_sigma"}, mctx);
    read(m, "d50", c.detector.miss.d50, mctx);
    read(m, "slope", c.detector.miss.slope, mctx);
    read(m, "jitter_sigma", c.detector.miss.jitter_sigma, mctx);
  }
  if (j.contains("tracker")) {
    const auto& t = j.at("tracker");
    const std::string tctx = "config.tracker";
    check_keys(t, {"q", "r", "gate_chi2", "confirm_hits", "confirm_window", "max_misses", "birth_velocity_var"},
               tctx);
    read(t, "q", c.tracker.q, tctx);
    read(t, "r", c.tracker.r, tctx);
    read(t, "gate_chi2", c.tracker.gate_chi2, tctx);
    read(t, "confirm_hits", c.tracker.confirm_hits, tctx);
    read(t, "confirm_window", c.tracker.confirm_window, tctx);
    read(t, "max_misses", c.tracker.max_misses, tctx);
    read(t, "birth_velocity_var", c.tracker.birth_velocity_var, tctx);
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    const std::string fctx = "config.fusion";
    check_keys(f, {"confusion", "temper", "floor", "mode", "prior"}, fctx);
    if (f.contains("confusion")) {
      const auto& cm = f.at("confusion");
      if (cm.is_string()) {
        const std::string path = resolve(base_dir, cm.get<std::string>());
        try {
          c.fusion.confusion = load_confusion(path);
        } catch (const Error& e) {
          throw Error(Errc::kConfig, fctx + ".confusion: " + e.what());
        }
      } else if (cm.is_number()) {
        const auto sym = ConfusionModel::symmetric(cm.get<double>());
        c.fusion.confusion.near = sym;
        c.fusion.confusion.far = sym;
      } else {
        try {
          c.fusion.confusion = confusion_from_json(cm);
        } catch (const Error& e) {
          throw Error(Errc::kConfig, fctx + ".confusion: " + e.what());
        }
      }
    }
    read(f, "temper", c.fusion.params.temper, fctx);
    read(f, "floor", c.fusion.params.floor, fctx);
    std::string mode = "column";
    read(f, "mode", mode, fctx);
    c.fusion.mode = parse_likelihood_mode(mode);
    read(f, "prior", c.fusion.prior.p, fctx);
  }
  if (j.contains("manager")) {
    const auto& m = j.at("manager");
    const std::string mctx = "config.manager";
    check_keys(m, {"zone", "tau_stop", "t_resume_s", "sigma_disparity_px", "max_slew", "rig", "calib_sigma_frac"},
               mctx);
    if (m.contains("zone")) {
      const auto& z = m.at("zone");
      check_keys(z, {"center", "radius_m", "height_m"}, mctx + ".zone");
      if (z.contains("center")) {
        std::vector<double> v;
        read(z, "center", v, mctx + ".zone");
        if (v.size() != 3) throw Error(Errc::kConfig, mctx + ".zone.center: expected [x, y, z]");
        c.manager.zone.center = {v[0], v[1], v[2]};
      }
      read(z, "radius_m", c.manager.zone.radius_m, mctx + ".zone");
      read(z, "height_m", c.manager.zone.height_m, mctx + ".zone");
    }
    read(m, "tau_stop", c.manager.controller.tau_stop, mctx);
    read(m, "t_resume_s", c.manager.controller.t_resume_s, mctx);
    read(m, "sigma_disparity_px", c.manager.sigma_disparity_px, mctx);
    read(m, "max_slew", c.manager.max_slew, mctx);
    read(m, "rig", c.manager.rig_id, mctx);
    read(m, "calib_sigma_frac", c.manager.calib_sigma_frac, mctx);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    const std::string mctx = "config.metrics";
    check_keys(m, {"iou", "confidence", "near_max_m", "far_max_m"}, mctx);
    read(m, "iou", c.metrics.iou, mctx);
    read(m, "confidence", c.metrics.confidence, mctx);
    read(m, "near_max_m", c.metrics.near_max_m, mctx);
    read(m, "far_max_m", c.metrics.far_max_m, mctx);
  }
  if (c.resolution_scale != 1.0) {
    if (!(c.resolution_scale > 0.0)) throw Error(Errc::kConfig, "config.resolution_scale must be > 0");
    c.scenario = c.scenario.scaled(c.resolution_scale);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kConfig, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, path + ": " + e.what());
  }
  PipelineConfig c = config_from_json(j, fs::path(path).parent_path().string());
  c.source_path = path;
  return c;
}

}  // namespace skysentry
