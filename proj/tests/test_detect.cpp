#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "skysentry/detect.hpp"
#include "skysentry/error.hpp"
#include "skysentry/tiling.hpp"

using namespace skysentry;

namespace {

GrayImage sky_with_blobs(int w, int h, const std::vector<std::pair<double, double>>& centers, double sigma,
                         double depth) {
  GrayImage img(w, h, 200);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dark = 0.0;
      for (const auto& [cx, cy] : centers) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        dark += depth * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      }
      img.at(x, y) = static_cast<std::uint8_t>(std::lround(200.0 - dark));
    }
  }
  return img;
}

// A scenario with one kite hovering at `range` m straight ahead of camera 0.
Scenario hovering_kite(double range) {
  auto j = testing::small_scenario_json();
  j["targets"].push_back({{"id", 1}, {"species", "kite"}, {"waypoints", {{0, range, 0, 0}, {5, range, 0, 0}}}});
  return scenario_from_json(j);
}

}  // namespace

TEST_CASE("reference detector: blank, one blob, two blobs") {
  const ReferenceDetector detector;
  CHECK(detector.detect(GrayImage(300, 300, 200).view(), {}).empty());

  // Peak darkening 40 against unit noise: SNR well above 10.
  const auto one = sky_with_blobs(300, 300, {{140.5, 160.5}}, 2.0, 40.0);
  const auto d1 = nms(detector.detect(one.view(), {}), 0.45);
  REQUIRE(d1.size() == 1);
  CHECK(std::abs(d1[0].bbox.cx() - 140.5) <= 1.0);
  CHECK(std::abs(d1[0].bbox.cy() - 160.5) <= 1.0);
  CHECK(d1[0].objectness > 0.0);
  CHECK(d1[0].objectness <= 1.0);
  double total = 0.0;
  for (double p : d1[0].scores) total += p;
  CHECK(total == doctest::Approx(1.0));

  const auto two = sky_with_blobs(300, 300, {{100.5, 150.5}, {150.5, 150.5}}, 2.0, 40.0);
  CHECK(nms(detector.detect(two.view(), {}), 0.45).size() == 2);
}

TEST_CASE("reference detector box follows the best-responding scale") {
  // DoG(sigma, 2 sigma) of a Gaussian of width s peaks at sigma = s / sqrt(2),
  // so these blobs sit on the 1, 2 and 4 px octaves.
  const ReferenceDetector detector;
  double prev = 0.0;
  for (double sigma_best : {1.0, 2.0, 4.0}) {
    const double s = sigma_best * std::sqrt(2.0);
    const auto img = sky_with_blobs(200, 200, {{100.0, 100.0}}, s, 60.0);
    const auto d = nms(detector.detect(img.view(), {}), 0.45);
    REQUIRE(d.size() == 1);
    CHECK(d[0].bbox.w > prev);
    CHECK(d[0].bbox.w == doctest::Approx(3.0 * sigma_best).epsilon(0.25));
    prev = d[0].bbox.w;
  }
}

TEST_CASE("reference detector is translation equivariant within a pixel") {
  const ReferenceDetector detector;
  const auto base = nms(detector.detect(sky_with_blobs(240, 240, {{80.0, 90.0}, {170.0, 150.0}}, 1.5, 50.0).view(), {}), 0.45);
  REQUIRE(base.size() == 2);
  for (int shift = 1; shift <= 9; shift += 2) {
    const auto moved = nms(
        detector.detect(sky_with_blobs(240, 240, {{80.0 + shift, 90.0 + 2 * shift}, {170.0 + shift, 150.0 + 2 * shift}}, 1.5, 50.0).view(), {}),
        0.45);
    REQUIRE(moved.size() == 2);
    for (const auto& b : base) {
      bool found = false;
      for (const auto& m : moved) {
        found |= std::abs(m.bbox.cx() - b.bbox.cx() - shift) <= 1.0 && std::abs(m.bbox.cy() - b.bbox.cy() - 2 * shift) <= 1.0;
      }
      CHECK(found);
    }
  }
}

TEST_CASE("reference detector is deterministic") {
  const auto s = load_scenario(testing::source_path("scenarios/default.json"));
  const auto frame = render_frame(s, 1, 30.0);
  const auto tile = frame.view().crop(450, 225, 300, 300);
  const auto a = reference_detect(tile, {450, 225});
  const auto b = reference_detect(tile, {450, 225});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].bbox == b[i].bbox);
    CHECK(a[i].bbox.x >= 0.0);
    CHECK(a[i].bbox.x + a[i].bbox.w <= 300.0);
  }
}

TEST_CASE("miss model") {
  const MissModel m;
  CHECK(m.probability(4.0) == doctest::Approx(0.5));
  CHECK(m.probability(40.0) == doctest::Approx(1.0));
  MissModel bad;
  bad.d50 = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.slope = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("oracle detection rate at d50 is one half") {
  // a / range = 4 px diag.
  const auto s = hovering_kite(600.0);
  REQUIRE(ground_truth_boxes(s, 0, 1.0).at(0).bbox.diag() == doctest::Approx(4.0));
  const MissModel miss;
  int hits = 0;
  const int trials = 10000;
  for (int seed = 0; seed < trials; ++seed) hits += static_cast<int>(oracle_detect(s, 0, 1.0, miss, seed).size());
  CHECK(std::abs(hits / static_cast<double>(trials) - 0.5) <= 0.02);
}

TEST_CASE("oracle detection rate is non-decreasing in diag") {
  const MissModel miss;
  double prev = 0.0;
  for (double range : {1200.0, 900.0, 700.0, 600.0, 500.0, 400.0, 300.0, 150.0}) {
    const auto s = hovering_kite(range);
    int hits = 0;
    for (int seed = 0; seed < 4000; ++seed) hits += static_cast<int>(oracle_detect(s, 0, 2.0, miss, seed).size());
    const double rate = hits / 4000.0;
    CHECK(rate >= prev - 0.02);
    prev = std::max(prev, rate);
  }
  CHECK(prev > 0.99);
}

TEST_CASE("oracle with certain detection and no jitter returns the truth") {
  const auto s = hovering_kite(250.0);
  MissModel sure;
  sure.d50 = 1e-9;
  sure.slope = 50.0;
  sure.jitter_sigma = 0.0;
  const auto truth = ground_truth_boxes(s, 0, 3.0);
  const auto dets = oracle_detect(s, 0, 3.0, sure, 99);
  REQUIRE(dets.size() == truth.size());
  CHECK(dets[0].bbox.x == doctest::Approx(truth[0].bbox.x).epsilon(1e-12));
  CHECK(dets[0].bbox.y == doctest::Approx(truth[0].bbox.y).epsilon(1e-12));
  CHECK(dets[0].bbox.w == doctest::Approx(truth[0].bbox.w).epsilon(1e-12));
  CHECK(dets[0].bbox.h == doctest::Approx(truth[0].bbox.h).epsilon(1e-12));

  MissModel jittered;
  const auto a = oracle_detect(s, 0, 3.0, jittered, 5);
  const auto b = oracle_detect(s, 0, 3.0, jittered, 5);
  REQUIRE(a.size() == b.size());
  if (!a.empty()) CHECK(a[0].bbox == b[0].bbox);
}

TEST_CASE("blob baseline: static scene, moving blob, masked region") {
  auto j = testing::small_scenario_json();
  j["pixel_noise_sigma"] = 0.0;
  j["targets"].push_back({{"id", 1}, {"species", "bird"}, {"waypoints", {{0, 60, -10, 0}, {5, 60, 10, 0}}}});
  const auto s = scenario_from_json(j);

  auto empty = j;
  empty["targets"] = nlohmann::json::array();
  const auto still = scenario_from_json(empty);
  CHECK(blob_baseline_detect(render_frame(still, 0, 1.0), render_frame(still, 0, 1.25)).empty());

  const auto moving = blob_baseline_detect(render_frame(s, 0, 1.0), render_frame(s, 0, 1.25));
  CHECK(moving.size() >= 1);
  CHECK(moving.size() <= 2);

  ImageFrame other = render_frame(s, 0, 1.25);
  other.camera_id = 4;
  CHECK_THROWS_AS(blob_baseline_detect(render_frame(s, 0, 1.0), other), Error);
}

TEST_CASE("blob baseline misses a target in front of swaying treetops") {
  auto j = testing::small_scenario_json();
  j["duration_s"] = 10.0;
  j["clutter"] = {{{"camera", 0}, {"kind", "treetop_band"}, {"region", {0, 380, 640, 100}}, {"period_s", 0.75}, {"depth", 120.0}}};
  // Crosses the band in the lower image: v ~ 430 at depth 100 means z = -190/600*100.
  j["targets"].push_back({{"id", 1}, {"species", "bird"}, {"waypoints", {{6, 100, -20, -31.7}, {10, 100, 20, -31.7}}}});
  const auto s = scenario_from_json(j);

  BlobBaselineDetector blob;
  std::size_t inside = 0;
  std::size_t truth_frames = 0;
  for (std::int64_t k = 0; k < s.frame_count(); ++k) {
    const double t = s.frame_time(k);
    const auto dets = blob.detect(render_frame(s, 0, t));
    if (k <= 16) continue;
    for (const auto& tb : ground_truth_boxes(s, 0, t)) {
      ++truth_frames;
      CHECK(blob.motion().mask()->masked(static_cast<int>(tb.bbox.cx()), static_cast<int>(tb.bbox.cy())));
      for (const auto& d : dets) inside += iou(d.bbox, tb.bbox) > 0.0 ? 1 : 0;
    }
  }
  CHECK(truth_frames > 0);
  CHECK(inside == 0);
}
