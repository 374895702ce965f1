#pragma once

#include <cmath>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skysentry {

// World frame: right-handed, z up, meters.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
  bool operator==(const Vec3&) const = default;
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Unit direction for an azimuth (yaw, from +x toward +y) and elevation (pitch).
Vec3 direction_from_angles(double yaw, double pitch);

/// Axis-aligned pixel box, top-left origin.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double diag() const { return std::hypot(w, h); }
  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  bool contains(double px, double py) const {
    return px >= x && px <= x + w && py >= y && py <= y + h;
  }
  bool operator==(const BBox&) const = default;

  static BBox centered(double cx, double cy, double side) {
    return {cx - 0.5 * side, cy - 0.5 * side, side, side};
  }
};

struct CameraModel {
  Vec3 position;
  double yaw = 0.0;    // radians
  double pitch = 0.0;  // radians
  double focal_px = 1000.0;
  double cx = 0.0;  // principal point
  double cy = 0.0;
  int width = 1;  // sensor size in pixels
  int height = 1;

  /// Throws Error(kInvalidArgument) when an invariant is broken.
  void validate() const;

  Vec3 forward() const;
  Vec3 right() const;
  Vec3 up() const;

  /// Unit world-space ray through continuous pixel coordinate (u, v).
  Vec3 ray(double u, double v) const;

  bool in_sensor(double u, double v) const { return u >= 0 && v >= 0 && u < width && v < height; }
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // along the optical axis
};

/// Pinhole projection; throws Error(kBehindCamera) when depth <= 0.
Projection project(const CameraModel& camera, const Vec3& point);
std::optional<Projection> try_project(const CameraModel& camera, const Vec3& point);

struct StereoRig {
  CameraModel left;
  CameraModel right;
  double baseline_m = 1.0;

  void validate() const;
  double focal_px() const { return left.focal_px; }
};

/// Z = f * B / disparity. Throws Error(kDegenerateDisparity) for disparity <= 0.
double triangulate(const StereoRig& rig, double disparity_px);

/// First-order range uncertainty: sigma_Z = Z^2 * sigma_d / (f * B).
double stereo_sigma(const StereoRig& rig, double distance_m, double sigma_disparity_px);

/// Apparent box diagonal versus distance: diag(x) = a / (x + b) + c.
struct CalibCurve {
  double a = 2400.0;
  double b = 0.0;
  double c = 0.0;

  void validate() const;

  static CalibCurve static_default() { return {2400.0, 0.0, 0.0}; }
  static CalibCurve tele_default() { return {30000.0, 0.0, 0.0}; }
};

/// Throws Error(kOutOfDomain) unless distance_m > max(0, -b).
double apparent_diag(const CalibCurve& curve, double distance_m);
/// Throws Error(kOutOfDomain) unless diag_px > c and the result is a positive distance.
double invert_diag(const CalibCurve& curve, double diag_px);

struct CalibSample {
  double distance_m = 0.0;
  double diag_px = 0.0;
};

struct FitOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
  // Residuals divided by the observed diag; suits multiplicative noise.
  bool relative_residuals = true;
};

struct FitReport {
  CalibCurve curve;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
};

/// Levenberg-damped Gauss-Newton fit of (a, b, c). Needs >= 4 samples with at
/// least 3 distinct distances; throws Error(kSingularFit) otherwise.
FitReport fit_calib_report(std::span<const CalibSample> samples, const FitOptions& options = {});
CalibCurve fit_calib(std::span<const CalibSample> samples, const FitOptions& options = {});

// CSV with header `distance_m,diag_px`.
std::vector<CalibSample> read_calib_csv(std::istream& in);
std::vector<CalibSample> read_calib_csv(const std::string& path);
void write_calib_csv(std::ostream& out, std::span<const CalibSample> samples);

// JSON object {"a":..,"b":..,"c":..}.
std::string calib_to_json(const CalibCurve& curve);
CalibCurve calib_from_json(const std::string& text);

}  // namespace skysentry
