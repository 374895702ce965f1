#include "skysentry/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "skysentry/error.hpp"

namespace skysentry {

Vec3 direction_from_angles(double yaw, double pitch) {
  return {std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch)};
}

void CameraModel::validate() const {
  if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
    throw Error(Errc::kInvalidArgument, "camera focal_px must be > 0");
  }
  if (width <= 0 || height <= 0) {
    throw Error(Errc::kInvalidArgument, "camera sensor dimensions must be > 0");
  }
  if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
    throw Error(Errc::kInvalidArgument, "principal point outside sensor");
  }
  if (!position.finite() || !std::isfinite(yaw) || !std::isfinite(pitch)) {
    throw Error(Errc::kInvalidArgument, "camera pose must be finite");
  }
}

Vec3 CameraModel::forward() const { return direction_from_angles(yaw, pitch); }

Vec3 CameraModel::right() const { return {std::sin(yaw), -std::cos(yaw), 0.0}; }

Vec3 CameraModel::up() const { return right().cross(forward()); }

Vec3 CameraModel::ray(double u, double v) const {
  const Vec3 d = forward() + right() * ((u - cx) / focal_px) - up() * ((v - cy) / focal_px);
  return d * (1.0 / d.norm());
}

std::optional<Projection> try_project(const CameraModel& camera, const Vec3& point) {
  const Vec3 d = point - camera.position;
  const double depth = d.dot(camera.forward());
  if (!(depth > 0.0)) return std::nullopt;
  const double inv = camera.focal_px / depth;
  return Projection{camera.cx + d.dot(camera.right()) * inv, camera.cy - d.dot(camera.up()) * inv,
                    depth};
}

Projection project(const CameraModel& camera, const Vec3& point) {
  auto p = try_project(camera, point);
  if (!p) throw Error(Errc::kBehindCamera, "point has non-positive depth");
  return *p;
}

void StereoRig::validate() const {
  left.validate();
  right.validate();
  if (!(baseline_m > 0.0)) throw Error(Errc::kInvalidArgument, "baseline_m must be > 0");
  if (left.focal_px != right.focal_px) {
    throw Error(Errc::kInvalidArgument, "stereo cameras must share focal_px");
  }
}

double triangulate(const StereoRig& rig, double disparity_px) {
  if (!(disparity_px > 0.0)) {
    throw Error(Errc::kDegenerateDisparity, "disparity must be > 0 (target at infinite range)");
  }
  return rig.focal_px() * rig.baseline_m / disparity_px;
}

double stereo_sigma(const StereoRig& rig, double distance_m, double sigma_disparity_px) {
  return distance_m * distance_m * sigma_disparity_px / (rig.focal_px() * rig.baseline_m);
}

void CalibCurve::validate() const {
  if (!(a > 0.0) || !std::isfinite(b) || !std::isfinite(c)) {
    throw Error(Errc::kInvalidArgument, "calibration curve needs a > 0 and finite b, c");
  }
}

double apparent_diag(const CalibCurve& curve, double distance_m) {
  if (!(distance_m > std::max(0.0, -curve.b))) {
    throw Error(Errc::kOutOfDomain, "distance outside calibration domain");
  }
  return curve.a / (distance_m + curve.b) + curve.c;
}

double invert_diag(const CalibCurve& curve, double diag_px) {
  if (!(diag_px > curve.c)) {
    throw Error(Errc::kOutOfDomain, "blob smaller than the asymptotic floor c");
  }
  const double x = curve.a / (diag_px - curve.c) - curve.b;
  if (!(x > 0.0)) throw Error(Errc::kOutOfDomain, "diag maps to a non-positive distance");
  return x;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Linearization {
  double cost = 0.0;
  Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
  Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
};

bool in_domain(std::span<const CalibSample> samples, const Eigen::Vector3d& p) {
  return std::all_of(samples.begin(), samples.end(),
                     [&](const CalibSample& s) { return s.distance_m + p[1] > 0.0; });
}

Linearization linearize(std::span<const CalibSample> samples, const Eigen::Vector3d& p,
                        bool relative) {
  Linearization out;
  for (const auto& s : samples) {
    const double inv = 1.0 / (s.distance_m + p[1]);
    const double weight = relative ? 1.0 / s.diag_px : 1.0;
    const double r = (p[0] * inv + p[2] - s.diag_px) * weight;
    const Eigen::Vector3d j(inv * weight, -p[0] * inv * inv * weight, weight);
    out.cost += r * r;
    out.jtj += j * j.transpose();
    out.jtr += j * r;
  }
  return out;
}

}  // namespace

FitReport fit_calib_report(std::span<const CalibSample> samples, const FitOptions& options) {
  if (samples.size() < 4) {
    throw Error(Errc::kSingularFit, "need at least 4 samples to fit 3 parameters");
  }
  std::set<double> distinct;
  std::vector<double> dists;
  std::vector<double> diags;
  for (const auto& s : samples) {
    if (!(s.distance_m > 0.0) || !(s.diag_px > 0.0) || !std::isfinite(s.distance_m) ||
        !std::isfinite(s.diag_px)) {
      throw Error(Errc::kInvalidArgument, "calibration samples must be positive and finite");
    }
    distinct.insert(s.distance_m);
    dists.push_back(s.distance_m);
    diags.push_back(s.diag_px);
  }
  if (distinct.size() < 3) {
    throw Error(Errc::kSingularFit, "normal equations rank-deficient: fewer than 3 distinct distances");
  }

  Eigen::Vector3d p(median(diags) * median(dists), 0.0,
                    *std::min_element(diags.begin(), diags.end()) / 2.0);
  Linearization lin = linearize(samples, p, options.relative_residuals);
  {
    Eigen::FullPivLU<Eigen::Matrix3d> lu(lin.jtj);
    lu.setThreshold(1e-12);
    if (lu.rank() < 3) throw Error(Errc::kSingularFit, "normal equations rank-deficient");
  }

  FitReport report;
  report.initial_cost = lin.cost;
  double lambda = 1e-3;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (lin.cost == 0.0) {
      report.converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted && lambda < 1e20) {
      Eigen::Matrix3d a = lin.jtj;
      a.diagonal() += lambda * lin.jtj.diagonal();
      const Eigen::Vector3d step = a.ldlt().solve(-lin.jtr);
      const Eigen::Vector3d candidate = p + step;
      if (step.allFinite() && in_domain(samples, candidate)) {
        Linearization next = linearize(samples, candidate, options.relative_residuals);
        if (next.cost <= lin.cost) {
          const double change = (lin.cost - next.cost) / lin.cost;
          p = candidate;
          lin = next;
          lambda = std::max(lambda * 0.1, 1e-12);
          accepted = true;
          if (change < options.relative_tolerance) report.converged = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at machine precision.
      report.converged = true;
      break;
    }
    if (report.converged) {
      ++iter;
      break;
    }
  }

  Eigen::FullPivLU<Eigen::Matrix3d> lu(lin.jtj);
  lu.setThreshold(1e-14);
  if (lu.rank() < 3) throw Error(Errc::kSingularFit, "normal equations rank-deficient at solution");

  report.curve = CalibCurve{p[0], p[1], p[2]};
  report.iterations = iter;
  report.final_cost = lin.cost;
  return report;
}

CalibCurve fit_calib(std::span<const CalibSample> samples, const FitOptions& options) {
  return fit_calib_report(samples, options).curve;
}

std::vector<CalibSample> read_calib_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kIo, "calibration CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "distance_m,diag_px") {
    throw Error(Errc::kConfig, "calibration CSV header must be 'distance_m,diag_px'");
  }
  std::vector<CalibSample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    CalibSample s;
    char comma = 0;
    if (!(row >> s.distance_m >> comma >> s.diag_px) || comma != ',') {
      throw Error(Errc::kConfig, "calibration CSV line " + std::to_string(lineno) + " malformed");
    }
    out.push_back(s);
  }
  return out;
}

std::vector<CalibSample> read_calib_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  return read_calib_csv(in);
}

void write_calib_csv(std::ostream& out, std::span<const CalibSample> samples) {
  out << "distance_m,diag_px\n";
  out.precision(17);
  for (const auto& s : samples) out << s.distance_m << ',' << s.diag_px << '\n';
}

std::string calib_to_json(const CalibCurve& curve) {
  nlohmann::json j{{"a", curve.a}, {"b", curve.b}, {"c", curve.c}};
  return j.dump();
}

CalibCurve calib_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    CalibCurve c{j.at("a").get<double>(), j.at("b").get<double>(), j.at("c").get<double>()};
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfig, std::string("calibration JSON: ") + e.what());
  }
}

}  // namespace skysentry
