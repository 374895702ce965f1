#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "skysentry/error.hpp"
#include "skysentry/manager.hpp"

using namespace skysentry;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

TrackSnapshot confirmed(int cam, int id, double kite, double distance = 0.0) {
  TrackSnapshot s;
  s.camera_id = cam;
  s.track_id = id;
  s.status = TrackStatus::kConfirmed;
  s.kite_posterior = kite;
  s.distance_m = distance;
  return s;
}

// The small test camera looks along +x from the origin with a = 2400.
TrackSnapshot straight_ahead(double range, double kite) {
  TrackSnapshot s = confirmed(0, 1, kite, range);
  s.u = 320.0;
  s.v = 240.0;
  const double side = 2400.0 / range / std::numbers::sqrt2;
  s.bbox = BBox::centered(320.0, 240.0, side);
  return s;
}

}  // namespace

TEST_CASE("ptu slews at the rate limit and wraps the short way") {
  PtuState ptu;
  ptu.max_slew = 5.0 * kDeg;
  auto step = ptu_step(ptu, 10.0 * kDeg, 0.0, 1.0);
  CHECK(step.ptu.pan == doctest::Approx(5.0 * kDeg));
  CHECK(step.pointing_error_rad == doctest::Approx(5.0 * kDeg));

  step = ptu_step(step.ptu, 5.0 * kDeg, 0.0, 1.0);
  CHECK(step.pointing_error_rad == 0.0);

  ptu.pan = 179.0 * kDeg;
  ptu.max_slew = 10.0 * kDeg;
  step = ptu_step(ptu, -179.0 * kDeg, 0.0, 1.0);
  CHECK(std::abs(wrap_angle(step.ptu.pan - (-179.0 * kDeg))) < 1e-12);
  CHECK(step.pointing_error_rad < 1e-12);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> angle(-3.0, 3.0);
  std::uniform_real_distribution<double> dt(0.01, 1.0);
  ptu = {};
  ptu.max_slew = 0.7;
  for (int k = 0; k < 1000; ++k) {
    const double d = dt(rng);
    const auto next = ptu_step(ptu, angle(rng), angle(rng) / 2.0, d).ptu;
    CHECK(std::abs(wrap_angle(next.pan - ptu.pan)) <= ptu.max_slew * d + 1e-12);
    CHECK(std::abs(next.tilt - ptu.tilt) <= ptu.max_slew * d + 1e-12);
    ptu = next;
  }
  CHECK_THROWS_AS(ptu_step(ptu, 0.0, 0.0, 0.0), Error);
}

TEST_CASE("danger zone is a vertical cylinder") {
  DangerZone z;
  z.center = {100, 0, 5};
  z.radius_m = 50;
  z.height_m = 100;
  CHECK(z.contains({100, 0, 5}));
  CHECK(z.contains({140, 30, 105}));
  CHECK_FALSE(z.contains({100, 0, 4.9}));
  CHECK_FALSE(z.contains({100, 0, 105.1}));
  CHECK_FALSE(z.contains({100, 50.1, 50}));
  z.radius_m = 0.0;
  CHECK_THROWS_AS(z.validate(), Error);
}

TEST_CASE("priority selection") {
  CHECK_FALSE(select_priority({}).has_value());
  std::vector<TrackSnapshot> tentative = {confirmed(0, 1, 0.99)};
  tentative[0].status = TrackStatus::kTentative;
  CHECK_FALSE(select_priority(tentative).has_value());

  std::vector<TrackSnapshot> tie = {confirmed(0, 1, 0.9, 600.0), confirmed(1, 2, 0.9, 400.0), confirmed(0, 3, 0.5, 100.0)};
  CHECK(select_priority(tie) == TrackKey{1, 2});
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(tie.begin(), tie.end(), rng);
    CHECK(select_priority(tie) == TrackKey{1, 2});
  }
  std::vector<TrackSnapshot> same = {confirmed(0, 7, 0.9, 400.0), confirmed(0, 4, 0.9, 400.0)};
  CHECK(select_priority(same) == TrackKey{0, 4});
}

TEST_CASE("controller hysteresis") {
  TurbineController c;
  CHECK_FALSE(c.step(0.0, false).has_value());
  CHECK(c.step(1.0, true) == TurbineAction::kStop);
  CHECK_FALSE(c.step(2.0, true).has_value());
  // Clear for 29 s, then re-trip: no RUN.
  for (double t = 3.0; t <= 32.0; t += 0.25) CHECK_FALSE(c.step(t, false).has_value());
  CHECK_FALSE(c.step(32.25, true).has_value());
  CHECK(c.stopped());
  // Clear again: RUN exactly t_resume later.
  for (double t = 32.5; t < 62.5; t += 0.25) CHECK_FALSE(c.step(t, false).has_value());
  CHECK(c.step(62.5, false) == TurbineAction::kRun);
  CHECK_FALSE(c.stopped());
  CHECK_FALSE(c.step(62.75, false).has_value());
}

TEST_CASE("stop decision from the calibration range") {
  const auto s = testing::small_scenario();
  ManagerParams p;
  p.zone.center = {200, 0, -10};
  p.zone.radius_m = 50;
  p.zone.height_m = 100;
  {
    Manager m(s, p, 1);
    const std::vector<TrackSnapshot> inside = {straight_ahead(200.0, 0.95)};
    const auto tick = m.tick(1.0, inside, {});
    CHECK(tick.source == RangeSource::kCalib);
    CHECK(tick.distance_m == doctest::Approx(200.0));
    CHECK(tick.position.x == doctest::Approx(200.0));
    REQUIRE(tick.command.has_value());
    CHECK(tick.command->action == TurbineAction::kStop);
    CHECK(tick.command->track_id == 1);
  }
  {
    Manager m(s, p, 1);
    const std::vector<TrackSnapshot> outside = {straight_ahead(600.0, 0.95)};
    CHECK_FALSE(m.tick(1.0, outside, {}).command.has_value());
    const std::vector<TrackSnapshot> unsure = {straight_ahead(200.0, 0.85)};
    CHECK_FALSE(m.tick(1.25, unsure, {}).command.has_value());
    CHECK(m.commands().empty());
  }
}

TEST_CASE("stereo measurement") {
  const auto s = load_scenario(testing::source_path("scenarios/default.json"));
  REQUIRE_FALSE(s.rigs.empty());
  const StereoRig parked = s.stereo_rig(s.rigs[0]);
  const Vec3 center = (parked.left.position + parked.right.position) * 0.5;
  PtuState ptu;
  ptu.pan = 0.3;
  ptu.tilt = 0.1;
  const StereoRig aimed = aim_rig(parked, center, ptu);
  SplitMix64 rng(3);

  const double z = 500.0;
  // On the optical axis of the left camera: depth along its axis is z.
  const Vec3 target = aimed.left.position + aimed.left.forward() * z;
  const auto exact = stereo_measure(aimed, target, 0.0, rng);
  CHECK(exact.distance_m == doctest::Approx(z).epsilon(1e-9));

  StereoRig toy = aimed;
  toy.baseline_m = 1000.0 / toy.left.focal_px;
  CHECK(stereo_sigma(toy, 500.0, 0.5) == doctest::Approx(125.0));

  const Vec3 near = aimed.left.position + aimed.left.forward() * 300.0;
  const double predicted = stereo_sigma(aimed, 300.0, 0.5);
  double sum = 0.0;
  double sum2 = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double d = stereo_measure(aimed, near, 0.5, rng).distance_m;
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(sd - predicted) <= 0.15 * predicted);

  const Vec3 behind = aimed.left.position - aimed.left.forward() * 100.0;
  CHECK_THROWS_AS(stereo_measure(aimed, behind, 0.5, rng), Error);
  // Far beyond where disparity noise dominates, some draws go non-positive.
  const Vec3 remote = aimed.left.position + aimed.left.forward() * 1e6;
  int degenerate = 0;
  for (int k = 0; k < 200; ++k) {
    try {
      stereo_measure(aimed, remote, 0.5, rng);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kDegenerateDisparity);
      ++degenerate;
    }
  }
  CHECK(degenerate > 0);
}
