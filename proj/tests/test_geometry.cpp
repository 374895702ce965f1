#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "skysentry/error.hpp"
#include "skysentry/geometry.hpp"

using namespace skysentry;

namespace {

CameraModel test_camera() {
  CameraModel cam;
  cam.position = {1.0, -2.0, 10.0};
  cam.yaw = 0.3;
  cam.pitch = 0.1;
  cam.focal_px = 1154.0;
  cam.width = 1332;
  cam.height = 1152;
  cam.cx = 666.0;
  cam.cy = 576.0;
  return cam;
}

StereoRig rig_with(double f, double baseline) {
  StereoRig rig;
  rig.left.focal_px = rig.right.focal_px = f;
  rig.left.width = rig.right.width = 1000;
  rig.left.height = rig.right.height = 1000;
  rig.left.cx = rig.right.cx = 500.0;
  rig.left.cy = rig.right.cy = 500.0;
  rig.right.position = {0.0, -baseline, 0.0};
  rig.baseline_m = baseline;
  return rig;
}

}  // namespace

TEST_CASE("optical axis lands on the principal point") {
  const auto cam = test_camera();
  const Vec3 fwd = direction_from_angles(cam.yaw, cam.pitch);
  const auto p = project(cam, cam.position + fwd * 200.0);
  CHECK(p.u == doctest::Approx(cam.cx).epsilon(1e-12));
  CHECK(p.v == doctest::Approx(cam.cy).epsilon(1e-12));
  CHECK(p.depth == doctest::Approx(200.0));
}

TEST_CASE("lateral and vertical offsets follow f * offset / depth") {
  const auto cam = test_camera();
  const double depth = 150.0;
  // Right is horizontal and perpendicular to the azimuth; up completes the frame.
  const Vec3 fwd = direction_from_angles(cam.yaw, cam.pitch);
  const Vec3 right{std::sin(cam.yaw), -std::cos(cam.yaw), 0.0};
  const Vec3 up = right.cross(fwd);
  const auto p = project(cam, cam.position + fwd * depth + right * 3.0 + up * 2.0);
  CHECK(p.u == doctest::Approx(cam.cx + cam.focal_px * 3.0 / depth));
  CHECK(p.v == doctest::Approx(cam.cy - cam.focal_px * 2.0 / depth));
}

TEST_CASE("ray and project are inverse") {
  const auto cam = test_camera();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, cam.width), v(0.0, cam.height), d(5.0, 900.0);
  for (int i = 0; i < 500; ++i) {
    const double uu = u(gen), vv = v(gen);
    const auto p = project(cam, cam.position + cam.ray(uu, vv) * d(gen));
    CHECK(p.u == doctest::Approx(uu).epsilon(1e-9));
    CHECK(p.v == doctest::Approx(vv).epsilon(1e-9));
  }
  CHECK(cam.ray(100, 200).norm() == doctest::Approx(1.0));
}

TEST_CASE("points behind the camera are rejected") {
  const auto cam = test_camera();
  const Vec3 behind = cam.position - direction_from_angles(cam.yaw, cam.pitch) * 10.0;
  CHECK_FALSE(try_project(cam, behind).has_value());
  try {
    project(cam, behind);
    FAIL("expected BehindCamera");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kBehindCamera);
  }
}

TEST_CASE("camera validation") {
  auto cam = test_camera();
  cam.focal_px = 0.0;
  CHECK_THROWS_AS(cam.validate(), Error);
  cam = test_camera();
  cam.width = 0;
  CHECK_THROWS_AS(cam.validate(), Error);
}

TEST_CASE("triangulate matches f B / d exactly") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> f(100.0, 20000.0), b(0.05, 5.0), d(0.01, 500.0);
  for (int i = 0; i < 1000; ++i) {
    const double ff = f(gen), bb = b(gen), dd = d(gen);
    const double z = triangulate(rig_with(ff, bb), dd);
    CHECK(std::abs(z - ff * bb / dd) <= 1e-9 * (ff * bb / dd));
  }
}

TEST_CASE("non-positive disparity is degenerate") {
  const auto rig = rig_with(8000.0, 1.0);
  for (double d : {0.0, -0.5, -100.0}) {
    try {
      triangulate(rig, d);
      FAIL("expected DegenerateDisparity");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kDegenerateDisparity);
    }
  }
}

TEST_CASE("first-order range sigma agrees with Monte Carlo") {
  const auto rig = rig_with(8000.0, 1.0);
  const double z = 400.0;
  const double sigma_d = 0.2;
  const double disparity = 8000.0 * 1.0 / z;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0.0, sigma_d);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double zi = triangulate(rig, disparity + noise(gen));
    sum += zi;
    sum2 += zi * zi;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  // sigma_d / d = 1%, so second-order terms are well under 1%.
  CHECK(sd == doctest::Approx(stereo_sigma(rig, z, sigma_d)).epsilon(0.02));
  CHECK(stereo_sigma(rig, z, sigma_d) == doctest::Approx(z * z * sigma_d / 8000.0));
}

TEST_CASE("calibration curve and its inverse") {
  const CalibCurve c{2400.0, 5.0, 0.5};
  for (double x : {10.0, 100.0, 350.0, 700.0, 3000.0}) {
    CHECK(apparent_diag(c, x) == doctest::Approx(2400.0 / (x + 5.0) + 0.5));
    CHECK(invert_diag(c, apparent_diag(c, x)) == doctest::Approx(x));
  }
  CHECK_THROWS_AS(apparent_diag(c, -5.0), Error);
  CHECK_THROWS_AS(invert_diag(c, 0.5), Error);
  CHECK_THROWS_AS(invert_diag(c, 0.1), Error);
}

TEST_CASE("fit_calib recovers noiseless parameters") {
  const CalibCurve truth{2400.0, 12.0, 0.8};
  std::vector<CalibSample> samples;
  for (int i = 0; i < 40; ++i) {
    const double x = 20.0 * std::pow(1.12, i);
    samples.push_back({x, apparent_diag(truth, x)});
  }
  const auto fit = fit_calib(samples);
  CHECK(fit.a == doctest::Approx(truth.a).epsilon(1e-3));
  CHECK(fit.b == doctest::Approx(truth.b).epsilon(1e-3));
  CHECK(fit.c == doctest::Approx(truth.c).epsilon(1e-3));
}

TEST_CASE("fit_calib needs three distinct distances") {
  std::vector<CalibSample> samples{{100, 24}, {100, 24.1}, {200, 12}, {200, 12.2}};
  try {
    fit_calib(samples);
    FAIL("expected SingularFit");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kSingularFit);
  }
}

TEST_CASE("calibration CSV and JSON round trip") {
  std::vector<CalibSample> samples{{50.0, 48.0}, {100.0, 24.0}, {400.0, 6.0}};
  std::stringstream ss;
  write_calib_csv(ss, samples);
  const auto back = read_calib_csv(ss);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].distance_m == samples[i].distance_m);
    CHECK(back[i].diag_px == samples[i].diag_px);
  }
  const CalibCurve c{1234.5, -3.25, 0.125};
  const auto r = calib_from_json(calib_to_json(c));
  CHECK(r.a == c.a);
  CHECK(r.b == c.b);
  CHECK(r.c == c.c);

  std::stringstream bad("distance_m,diag_px\n10,abc\n");
  CHECK_THROWS_AS(read_calib_csv(bad), Error);
}

TEST_CASE("direction_from_angles") {
  const auto d = direction_from_angles(std::numbers::pi / 2, 0.0);
  CHECK(d.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(d.y == doctest::Approx(1.0));
  CHECK(direction_from_angles(0.0, std::numbers::pi / 2).z == doctest::Approx(1.0));
}
