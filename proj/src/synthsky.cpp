#include "skysentry/synthsky.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>

#include "skysentry/error.hpp"
#include "skysentry/random.hpp"

namespace skysentry {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

template <typename T>
T field(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw Error(Errc::kConfig, ctx + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, ctx + "." + key + ": " + e.what());
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  return field<T>(j, key, ctx);
}

Vec3 vec3_field(const json& j, const char* key, const std::string& ctx) {
  auto v = field<std::vector<double>>(j, key, ctx);
  if (v.size() != 3) throw Error(Errc::kConfig, ctx + "." + key + ": expected [x, y, z]");
  return {v[0], v[1], v[2]};
}

CameraKind parse_camera_kind(const std::string& s, const std::string& ctx) {
  if (s == "static") return CameraKind::kStatic;
  if (s == "tele") return CameraKind::kTele;
  throw Error(Errc::kConfig, ctx + ".kind: expected 'static' or 'tele'");
}

ClutterKind parse_clutter_kind(const std::string& s, const std::string& ctx) {
  if (s == "treetop_band") return ClutterKind::kTreetopBand;
  if (s == "rotor_disc") return ClutterKind::kRotorDisc;
  throw Error(Errc::kConfig, ctx + ".kind: expected 'treetop_band' or 'rotor_disc'");
}

// Inverse normal CDF sampled at 4096 midpoints; pixel noise is rounded to
// integers afterwards, so the quantization is invisible and the table is
// much cheaper than Box-Muller per pixel.
const std::array<float, 4096>& normal_table() {
  static const std::array<float, 4096> table = [] {
    std::array<float, 4096> t{};
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(t.size());
      double lo = -10.0, hi = 10.0;
      for (int k = 0; k < 80; ++k) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * std::erfc(-mid / std::numbers::sqrt2);
        (cdf < p ? lo : hi) = mid;
      }
      t[i] = static_cast<float>(0.5 * (lo + hi));
    }
    return t;
  }();
  return table;
}

double hash01(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  SplitMix64 r(stream_key({a, b, c}));
  return r.uniform();
}

void render_clutter(const ClutterSpec& spec, const Scenario& scenario, int camera_id, double t_s,
                    int width, int height, std::vector<float>& dark) {
  const double phase = 2.0 * std::numbers::pi * t_s / spec.period_s;
  const double sway = spec.amplitude * std::sin(phase);
  const int x0 = std::max(0, static_cast<int>(std::floor(spec.region.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(spec.region.y)));
  const int x1 = std::min(width, static_cast<int>(std::ceil(spec.region.x + spec.region.w)));
  const int y1 = std::min(height, static_cast<int>(std::ceil(spec.region.y + spec.region.h)));
  const std::uint64_t salt = stream_key({scenario.seed, static_cast<std::uint64_t>(camera_id),
                                         static_cast<std::uint64_t>(spec.kind)});
  const double hub_x = spec.region.cx() + sway;
  const double hub_y = spec.region.cy();
  const double radius = 0.5 * std::min(spec.region.w, spec.region.h);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      double flutter = 0.0;
      if (spec.kind == ClutterKind::kTreetopBand) {
        // Foliage texels sway horizontally and flutter with a per-texel phase.
        const auto texel = static_cast<std::int64_t>(std::floor(x - sway));
        flutter = 2.0 * std::numbers::pi *
                  hash01(salt, static_cast<std::uint64_t>(texel), static_cast<std::uint64_t>(y));
      } else {
        const double dx = x + 0.5 - hub_x;
        const double dy = y + 0.5 - hub_y;
        if (dx * dx + dy * dy > radius * radius) continue;
        // Three blades; per-pixel jitter keeps the pattern from having fixed null lines.
        flutter = 3.0 * std::atan2(dy, dx) +
                  std::numbers::pi *
                      hash01(salt, static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y));
      }
      const double d = spec.depth * (0.5 + 0.5 * std::sin(phase + flutter));
      float& cell = dark[static_cast<std::size_t>(y) * width + x];
      cell = std::max(cell, static_cast<float>(d));
    }
  }
}

}  // namespace

void Scenario::validate() const {
  if (!(duration_s > 0.0)) throw Error(Errc::kConfig, "scenario.duration_s must be > 0");
  if (!(frame_rate_hz > 0.0)) throw Error(Errc::kConfig, "scenario.frame_rate_hz must be > 0");
  if (pixel_noise_sigma < 0.0) throw Error(Errc::kConfig, "scenario.pixel_noise_sigma must be >= 0");
  std::set<int> ids;
  for (const auto& c : cameras) {
    if (!ids.insert(c.id).second) {
      throw Error(Errc::kConfig, "scenario.cameras: duplicate id " + std::to_string(c.id));
    }
    try {
      c.model.validate();
      c.calib.validate();
    } catch (const Error& e) {
      throw Error(Errc::kConfig, "scenario.cameras[id=" + std::to_string(c.id) + "]: " + e.what());
    }
  }
  std::set<int> target_ids;
  for (const auto& t : targets) {
    const std::string ctx = "scenario.targets[id=" + std::to_string(t.id) + "]";
    if (!target_ids.insert(t.id).second) throw Error(Errc::kConfig, ctx + ": duplicate id");
    if (!(t.size_m > 0.0)) throw Error(Errc::kConfig, ctx + ".size_m must be > 0");
    if (t.waypoints.size() < 2) throw Error(Errc::kConfig, ctx + ".waypoints: need >= 2");
    for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
      if (!(t.waypoints[i].t_s > t.waypoints[i - 1].t_s)) {
        throw Error(Errc::kConfig, ctx + ".waypoints: times must be strictly increasing");
      }
    }
  }
  std::set<int> rig_ids;
  for (const auto& r : rigs) {
    const std::string ctx = "scenario.rigs[id=" + std::to_string(r.id) + "]";
    if (!rig_ids.insert(r.id).second) throw Error(Errc::kConfig, ctx + ": duplicate id");
    if (!has_camera(r.left_camera) || !has_camera(r.right_camera)) {
      throw Error(Errc::kConfig, ctx + ": references unknown camera");
    }
    try {
      stereo_rig(r).validate();
    } catch (const Error& e) {
      throw Error(Errc::kConfig, ctx + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < clutter.size(); ++i) {
    const auto& c = clutter[i];
    const std::string ctx = "scenario.clutter[" + std::to_string(i) + "]";
    if (c.amplitude < 0.0) throw Error(Errc::kConfig, ctx + ".amplitude must be >= 0");
    if (!(c.period_s > 0.0)) throw Error(Errc::kConfig, ctx + ".period_s must be > 0");
    if (c.camera_id && !has_camera(*c.camera_id)) {
      throw Error(Errc::kConfig, ctx + ".camera references unknown camera");
    }
  }
}

bool Scenario::has_camera(int id) const {
  return std::any_of(cameras.begin(), cameras.end(), [&](const SceneCamera& c) { return c.id == id; });
}

const SceneCamera& Scenario::camera(int id) const {
  for (const auto& c : cameras) {
    if (c.id == id) return c;
  }
  throw Error(Errc::kUnknownCamera, "camera " + std::to_string(id));
}

StereoRig Scenario::stereo_rig(const RigSpec& rig) const {
  return StereoRig{camera(rig.left_camera).model, camera(rig.right_camera).model, rig.baseline_m};
}

std::int64_t Scenario::frame_count() const {
  return static_cast<std::int64_t>(std::floor(duration_s * frame_rate_hz + 1e-9)) + 1;
}

std::int64_t Scenario::frame_index(double t_s) const {
  return static_cast<std::int64_t>(std::llround(t_s * frame_rate_hz));
}

Scenario Scenario::scaled(double scale) const {
  if (!(scale > 0.0)) throw Error(Errc::kConfig, "resolution scale must be > 0");
  Scenario out = *this;
  for (auto& c : out.cameras) {
    c.model.focal_px *= scale;
    c.model.cx *= scale;
    c.model.cy *= scale;
    c.model.width = std::max(1, static_cast<int>(std::lround(c.model.width * scale)));
    c.model.height = std::max(1, static_cast<int>(std::lround(c.model.height * scale)));
    c.calib.a *= scale;
    c.calib.c *= scale;
  }
  for (auto& cl : out.clutter) {
    cl.region = {cl.region.x * scale, cl.region.y * scale, cl.region.w * scale, cl.region.h * scale};
    cl.amplitude *= scale;
  }
  return out;
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  const std::string ctx = "scenario";
  s.name = field_or<std::string>(j, "name", s.name, ctx);
  s.duration_s = field<double>(j, "duration_s", ctx);
  s.frame_rate_hz = field_or<double>(j, "frame_rate_hz", 4.0, ctx);
  s.pixel_noise_sigma = field_or<double>(j, "pixel_noise_sigma", s.pixel_noise_sigma, ctx);
  s.contrast = field_or<double>(j, "contrast", s.contrast, ctx);
  s.sky_top = field_or<double>(j, "sky_top", s.sky_top, ctx);
  s.sky_bottom = field_or<double>(j, "sky_bottom", s.sky_bottom, ctx);
  s.seed = field_or<std::uint64_t>(j, "seed", s.seed, ctx);

  if (j.contains("cameras")) {
    for (std::size_t i = 0; i < j.at("cameras").size(); ++i) {
      const json& cj = j.at("cameras").at(i);
      const std::string cctx = ctx + ".cameras[" + std::to_string(i) + "]";
      SceneCamera c;
      c.id = field<int>(cj, "id", cctx);
      c.kind = parse_camera_kind(field_or<std::string>(cj, "kind", "static", cctx), cctx);
      c.model.position = vec3_field(cj, "position", cctx);
      c.model.yaw = field_or<double>(cj, "yaw_deg", 0.0, cctx) * kDeg;
      c.model.pitch = field_or<double>(cj, "pitch_deg", 0.0, cctx) * kDeg;
      c.model.focal_px = field<double>(cj, "focal_px", cctx);
      auto sensor = field<std::vector<int>>(cj, "sensor", cctx);
      if (sensor.size() != 2) throw Error(Errc::kConfig, cctx + ".sensor: expected [width, height]");
      c.model.width = sensor[0];
      c.model.height = sensor[1];
      if (cj.contains("principal_point")) {
        auto pp = field<std::vector<double>>(cj, "principal_point", cctx);
        if (pp.size() != 2) throw Error(Errc::kConfig, cctx + ".principal_point: expected [px, py]");
        c.model.cx = pp[0];
        c.model.cy = pp[1];
      } else {
        c.model.cx = 0.5 * c.model.width;
        c.model.cy = 0.5 * c.model.height;
      }
      c.calib = c.kind == CameraKind::kTele ? CalibCurve::tele_default() : CalibCurve::static_default();
      if (cj.contains("calib")) {
        const json& k = cj.at("calib");
        c.calib = {field<double>(k, "a", cctx + ".calib"), field_or<double>(k, "b", 0.0, cctx + ".calib"),
                   field_or<double>(k, "c", 0.0, cctx + ".calib")};
      }
      s.cameras.push_back(c);
    }
  }
  if (j.contains("rigs")) {
    for (std::size_t i = 0; i < j.at("rigs").size(); ++i) {
      const json& rj = j.at("rigs").at(i);
      const std::string rctx = ctx + ".rigs[" + std::to_string(i) + "]";
      s.rigs.push_back({field_or<int>(rj, "id", static_cast<int>(i), rctx), field<int>(rj, "left", rctx),
                        field<int>(rj, "right", rctx), field<double>(rj, "baseline_m", rctx)});
    }
  }
  if (j.contains("targets")) {
    for (std::size_t i = 0; i < j.at("targets").size(); ++i) {
      const json& tj = j.at("targets").at(i);
      const std::string tctx = ctx + ".targets[" + std::to_string(i) + "]";
      TargetTruth t;
      t.id = field<int>(tj, "id", tctx);
      t.species = parse_species(field<std::string>(tj, "species", tctx));
      t.size_m = field_or<double>(tj, "size_m", 1.0, tctx);
      for (const auto& w : field<std::vector<std::vector<double>>>(tj, "waypoints", tctx)) {
        if (w.size() != 4) throw Error(Errc::kConfig, tctx + ".waypoints: expected [t, x, y, z]");
        t.waypoints.push_back({w[0], {w[1], w[2], w[3]}});
      }
      s.targets.push_back(std::move(t));
    }
  }
  if (j.contains("clutter")) {
    for (std::size_t i = 0; i < j.at("clutter").size(); ++i) {
      const json& cj = j.at("clutter").at(i);
      const std::string cctx = ctx + ".clutter[" + std::to_string(i) + "]";
      ClutterSpec c;
      if (cj.contains("camera")) c.camera_id = field<int>(cj, "camera", cctx);
      auto r = field<std::vector<double>>(cj, "region", cctx);
      if (r.size() != 4) throw Error(Errc::kConfig, cctx + ".region: expected [x, y, w, h]");
      c.region = {r[0], r[1], r[2], r[3]};
      c.kind = parse_clutter_kind(field<std::string>(cj, "kind", cctx), cctx);
      c.amplitude = field_or<double>(cj, "amplitude", c.amplitude, cctx);
      c.period_s = field_or<double>(cj, "period_s", c.period_s, cctx);
      c.depth = field_or<double>(cj, "depth", c.depth, cctx);
      s.clutter.push_back(c);
    }
  }
  s.validate();
  return s;
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["duration_s"] = s.duration_s;
  j["frame_rate_hz"] = s.frame_rate_hz;
  j["pixel_noise_sigma"] = s.pixel_noise_sigma;
  j["contrast"] = s.contrast;
  j["sky_top"] = s.sky_top;
  j["sky_bottom"] = s.sky_bottom;
  j["seed"] = s.seed;
  j["cameras"] = json::array();
  for (const auto& c : s.cameras) {
    j["cameras"].push_back({{"id", c.id},
                            {"kind", c.kind == CameraKind::kTele ? "tele" : "static"},
                            {"position", {c.model.position.x, c.model.position.y, c.model.position.z}},
                            {"yaw_deg", c.model.yaw / kDeg},
                            {"pitch_deg", c.model.pitch / kDeg},
                            {"focal_px", c.model.focal_px},
                            {"principal_point", {c.model.cx, c.model.cy}},
                            {"sensor", {c.model.width, c.model.height}},
                            {"calib", {{"a", c.calib.a}, {"b", c.calib.b}, {"c", c.calib.c}}}});
  }
  j["rigs"] = json::array();
  for (const auto& r : s.rigs) {
    j["rigs"].push_back({{"id", r.id}, {"left", r.left_camera}, {"right", r.right_camera},
                         {"baseline_m", r.baseline_m}});
  }
  j["targets"] = json::array();
  for (const auto& t : s.targets) {
    json wps = json::array();
    for (const auto& w : t.waypoints) wps.push_back({w.t_s, w.position.x, w.position.y, w.position.z});
    j["targets"].push_back({{"id", t.id}, {"species", species_name(t.species)}, {"size_m", t.size_m},
                            {"waypoints", wps}});
  }
  j["clutter"] = json::array();
  for (const auto& c : s.clutter) {
    json cj = {{"kind", c.kind == ClutterKind::kRotorDisc ? "rotor_disc" : "treetop_band"},
               {"region", {c.region.x, c.region.y, c.region.w, c.region.h}},
               {"amplitude", c.amplitude},
               {"period_s", c.period_s},
               {"depth", c.depth}};
    if (c.camera_id) cj["camera"] = *c.camera_id;
    j["clutter"].push_back(cj);
  }
  return j;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open scenario " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::kConfig, path + ": " + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::vector<TargetState> sample_state(const Scenario& scenario, double t_s) {
  constexpr double kSlack = 1e-9;
  if (!(t_s >= -kSlack && t_s <= scenario.duration_s + kSlack)) {
    throw Error(Errc::kOutOfRange, "t=" + std::to_string(t_s) + " outside scenario duration");
  }
  std::vector<TargetState> out;
  for (const auto& target : scenario.targets) {
    const auto& wps = target.waypoints;
    if (t_s < wps.front().t_s || t_s > wps.back().t_s) continue;
    std::size_t i = 0;
    while (i + 2 < wps.size() && wps[i + 1].t_s <= t_s) ++i;
    const Waypoint& a = wps[i];
    const Waypoint& b = wps[i + 1];
    const double span = b.t_s - a.t_s;
    const double s = (t_s - a.t_s) / span;
    TargetState st;
    st.id = target.id;
    st.species = target.species;
    if (t_s == a.t_s) {
      st.position = a.position;
    } else if (t_s == b.t_s) {
      st.position = b.position;
    } else {
      st.position = a.position + (b.position - a.position) * s;
    }
    st.velocity = (b.position - a.position) * (1.0 / span);
    out.push_back(st);
  }
  return out;
}

double rendered_diameter(const SceneCamera& camera, double distance_m) {
  const double cap = std::hypot(camera.model.width, camera.model.height);
  if (!(distance_m > std::max(0.0, -camera.calib.b))) return cap;
  return std::clamp(apparent_diag(camera.calib, distance_m), 1.0, cap);
}

ImageFrame render_frame(const Scenario& scenario, int camera_id, double t_s) {
  return render_frame_with(scenario, scenario.camera(camera_id), t_s);
}

ImageFrame render_frame_with(const Scenario& scenario, const SceneCamera& camera, double t_s) {
  const CameraModel& cam = camera.model;
  ImageFrame frame;
  frame.camera_id = camera.id;
  frame.t_s = t_s;
  frame.frame_index = scenario.frame_index(t_s);
  frame.width = cam.width;
  frame.height = cam.height;
  const std::size_t n = static_cast<std::size_t>(cam.width) * cam.height;

  std::vector<float> dark(n, 0.0f);
  for (const auto& spec : scenario.clutter) {
    if (spec.camera_id && *spec.camera_id != camera.id) continue;
    render_clutter(spec, scenario, camera.id, t_s, cam.width, cam.height, dark);
  }

  for (const auto& st : sample_state(scenario, t_s)) {
    const auto proj = try_project(cam, st.position);
    if (!proj) continue;
    const double diameter = rendered_diameter(camera, distance(cam.position, st.position));
    const double sigma = diameter * kFwhmToSigma;
    const double reach = 3.0 * sigma + 1.0;
    if (proj->u < -reach || proj->v < -reach || proj->u > cam.width + reach ||
        proj->v > cam.height + reach) {
      continue;
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(proj->u - reach)));
    const int x1 = std::min(cam.width, static_cast<int>(std::ceil(proj->u + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(proj->v - reach)));
    const int y1 = std::min(cam.height, static_cast<int>(std::ceil(proj->v + reach)));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = y0; y < y1; ++y) {
      const double dy = y + 0.5 - proj->v;
      for (int x = x0; x < x1; ++x) {
        const double dx = x + 0.5 - proj->u;
        const auto d = static_cast<float>(scenario.contrast * std::exp(-(dx * dx + dy * dy) * inv2s2));
        float& cell = dark[static_cast<std::size_t>(y) * cam.width + x];
        cell = std::max(cell, d);
      }
    }
  }

  frame.pixels.resize(n);
  const auto& table = normal_table();
  SplitMix64 rng = keyed_stream({scenario.seed, static_cast<std::uint64_t>(camera.id),
                                 static_cast<std::uint64_t>(frame.frame_index)});
  const auto sigma = static_cast<float>(scenario.pixel_noise_sigma);
  std::uint64_t bits = 0;
  int left = 0;
  const double denom = cam.height > 1 ? cam.height - 1 : 1;
  for (int y = 0; y < cam.height; ++y) {
    const auto sky = static_cast<float>(scenario.sky_top + (scenario.sky_bottom - scenario.sky_top) * y / denom);
    const std::size_t row = static_cast<std::size_t>(y) * cam.width;
    for (int x = 0; x < cam.width; ++x) {
      float v = sky - dark[row + x];
      if (sigma > 0.0f) {
        if (left == 0) {
          bits = rng.next();
          left = 5;
        }
        v += sigma * table[bits & 0xFFF];
        bits >>= 12;
        --left;
      }
      frame.pixels[row + x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return frame;
}

std::vector<TruthBox> ground_truth_boxes(const Scenario& scenario, int camera_id, double t_s) {
  const SceneCamera& camera = scenario.camera(camera_id);
  std::vector<TruthBox> out;
  for (const auto& st : sample_state(scenario, t_s)) {
    const auto proj = try_project(camera.model, st.position);
    if (!proj || !camera.model.in_sensor(proj->u, proj->v)) continue;
    const double range = distance(camera.model.position, st.position);
    // Square inscribed in the half-maximum disc: its diagonal is the rendered
    // diameter, which is what the calibration curve predicts.
    const double side = rendered_diameter(camera, range) / std::numbers::sqrt2;
    out.push_back({st.id, st.species, BBox::centered(proj->u, proj->v, side), range});
  }
  return out;
}

json truth_box_to_json(const TruthBox& box, int camera_id, std::int64_t frame_index, double t_s) {
  return {{"frame", frame_index},
          {"camera", camera_id},
          {"t", t_s},
          {"target", box.target_id},
          {"species", species_name(box.species)},
          {"bbox", {box.bbox.x, box.bbox.y, box.bbox.w, box.bbox.h}},
          {"distance_m", box.distance_m}};
}

std::string frame_filename(int camera_id, std::int64_t frame_index) {
  return "cam" + std::to_string(camera_id) + "_f" + std::to_string(frame_index) + ".pgm";
}

}  // namespace skysentry
