#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "helpers.hpp"
#include "skysentry/error.hpp"
#include "skysentry/metrics.hpp"
#include "skysentry/runner.hpp"
#include "skysentry/tiling.hpp"

using namespace skysentry;

namespace {

DetectionRecord detection(std::int64_t frame, BBox box, double score) {
  DetectionRecord r;
  r.frame = frame;
  r.t_s = frame * 0.25;
  r.detection.bbox = box;
  r.detection.objectness = score;
  return r;
}

TruthRecord truth(std::int64_t frame, int target, BBox box, double range) {
  TruthRecord r;
  r.frame = frame;
  r.t_s = frame * 0.25;
  r.box.target_id = target;
  r.box.bbox = box;
  r.box.distance_m = range;
  return r;
}

std::vector<FrameRecord> frames(int n) {
  std::vector<FrameRecord> out;
  for (int k = 0; k < n; ++k) out.push_back({0, k, k * 0.25});
  return out;
}

PipelineConfig oracle_config(Scenario s) {
  auto c = default_config(s);
  c.detector.kind = "oracle";
  return c;
}

RunOptions quiet() {
  RunOptions o;
  o.write_outputs = false;
  return o;
}

}  // namespace

TEST_CASE("hand-counted precision and recall") {
  RunLog log;
  log.frames = frames(2);
  // Frame 0: two truths, one hit and one false alarm. Frame 1: two truths, one hit.
  log.detections = {detection(0, {10, 10, 4, 4}, 0.9), detection(0, {200, 200, 4, 4}, 0.8),
                    detection(1, {50, 50, 4, 4}, 0.7)};
  const std::vector<TruthRecord> t = {truth(0, 1, {10, 10, 4, 4}, 100), truth(0, 2, {100, 10, 4, 4}, 100),
                                      truth(1, 1, {50, 51, 4, 4}, 100), truth(1, 2, {100, 10, 4, 4}, 100)};
  const auto m = compute_metrics(log, log.frames, t, {});
  CHECK(m.true_positives == 2);
  CHECK(m.false_positives == 1);
  CHECK(m.precision.value() == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall.value() == doctest::Approx(0.5));
  CHECK(m.track_recall.value() == doctest::Approx(0.5));
  // Ranked: TP 0.9, FP 0.8, TP 0.7 against 4 truths.
  // Interpolated precision is 1 up to recall 0.25 and 2/3 up to 0.5.
  CHECK(m.average_precision.value() == doctest::Approx((26.0 * 1.0 + 25.0 * 2.0 / 3.0) / 101.0));
}

TEST_CASE("average precision and quantiles") {
  CHECK(average_precision({{0.9, true}, {0.8, false}, {0.7, true}}, 2) == doctest::Approx((51.0 + 50.0 * 2.0 / 3.0) / 101.0));
  CHECK(average_precision({}, 3) == 0.0);
  CHECK(average_precision({{0.5, true}}, 1) == doctest::Approx(1.0));
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5).value() == 2.0);
  CHECK(quantile({1.0, 2.0}, 0.25).value() == doctest::Approx(1.25));
  CHECK_FALSE(quantile({}, 0.5).has_value());
}

TEST_CASE("box matching is one-to-one, best overlap first") {
  const std::vector<BBox> dets = {{0, 0, 10, 10}, {1, 0, 10, 10}};
  const std::vector<BBox> truths = {{1, 0, 10, 10}};
  const auto m = match_boxes(dets, truths, 0.3);
  REQUIRE(m.size() == 1);
  CHECK(m[0].first == 1);
  CHECK(match_boxes(dets, std::vector<BBox>{{50, 50, 10, 10}}, 0.3).empty());
}

TEST_CASE("empty detector: AP 0, recall 0, precision undefined") {
  RunLog log;
  log.frames = frames(3);
  const std::vector<TruthRecord> t = {truth(0, 1, {10, 10, 4, 4}, 200), truth(2, 1, {12, 10, 4, 4}, 500)};
  const auto m = compute_metrics(log, log.frames, t, {});
  CHECK(m.average_precision.value() == 0.0);
  CHECK(m.recall.value() == 0.0);
  CHECK_FALSE(m.precision.has_value());
  CHECK(m.near_fix.rate().value() == 0.0);
  CHECK(m.far_fix.rate().value() == 0.0);
  std::ostringstream csv;
  write_metrics_csv(csv, m);
  CHECK(csv.str().find("precision,NA") != std::string::npos);
}

TEST_CASE("mismatched frames are rejected") {
  RunLog log;
  log.frames = frames(3);
  const auto other = frames(4);
  try {
    compute_metrics(log, other, {}, {});
    FAIL("expected MismatchedRun");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kMismatchedRun);
  }
  auto shifted = frames(3);
  shifted[1].t_s += 0.1;
  CHECK_THROWS_AS(compute_metrics(log, shifted, {}, {}), Error);
}

TEST_CASE("perfect oracle scores one everywhere") {
  auto s = load_scenario(testing::source_path("scenarios/default.json"));
  auto c = oracle_config(s);
  c.detector.miss.d50 = 1e-9;
  c.detector.miss.slope = 50.0;
  c.detector.miss.jitter_sigma = 0.0;
  auto opts = quiet();
  opts.max_seconds = 20.0;
  const auto r = run_scenario(c, opts);
  const auto& m = r.metrics;
  REQUIRE(m.truths > 0);
  CHECK(m.average_precision.value() == doctest::Approx(1.0));
  CHECK(m.recall.value() == 1.0);
  CHECK(m.precision.value() == 1.0);
  REQUIRE(m.near_fix.total > 0);
  REQUIRE(m.far_fix.total > 0);
  CHECK(m.near_fix.rate().value() == 1.0);
  CHECK(m.far_fix.rate().value() == 1.0);
  CHECK(m.near_interval.rate().value() == 1.0);
  CHECK(m.far_interval.rate().value() == 1.0);
}

TEST_CASE("metrics agree with a brute-force recount on ten frames") {
  auto j = testing::small_scenario_json();
  j["duration_s"] = 2.25;
  j["targets"] = {
      {{"id", 1}, {"species", "kite"}, {"waypoints", {{0, 150, -20, 5}, {2.25, 150, 20, 5}}}},
      {{"id", 2}, {"species", "bird"}, {"waypoints", {{0, 500, 80, 30}, {2.25, 500, 60, 30}}}},
      {{"id", 3}, {"species", "aircraft"}, {"waypoints", {{0.5, 650, -100, 60}, {2.25, 650, -40, 60}}}},
  };
  const auto s = scenario_from_json(j);
  REQUIRE(s.frame_count() == 10);
  auto c = oracle_config(s);
  c.detector.miss.jitter_sigma = 1.5;
  const auto r = run_scenario(c, quiet());

  std::int64_t tp = 0;
  std::int64_t truths = 0;
  std::int64_t near_hits = 0;
  std::int64_t near_total = 0;
  std::int64_t far_hits = 0;
  std::int64_t far_total = 0;
  for (std::int64_t k = 0; k < 10; ++k) {
    const double t = s.frame_time(k);
    const auto truth_boxes = ground_truth_boxes(s, 0, t);
    std::vector<Detection> dets;
    for (const auto& d : r.log.detections) {
      if (d.frame == k) dets.push_back(d.detection);
    }
    // Every candidate pair, best IoU first.
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < dets.size(); ++a) {
      for (std::size_t b = 0; b < truth_boxes.size(); ++b) {
        const double o = iou(dets[a].bbox, truth_boxes[b].bbox);
        if (o >= 0.3) pairs.emplace_back(-o, a, b);
      }
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> det_used(dets.size());
    std::vector<bool> truth_hit(truth_boxes.size());
    for (const auto& [neg, a, b] : pairs) {
      if (det_used[a] || truth_hit[b]) continue;
      det_used[a] = true;
      truth_hit[b] = true;
      ++tp;
    }
    truths += static_cast<std::int64_t>(truth_boxes.size());
    for (std::size_t b = 0; b < truth_boxes.size(); ++b) {
      const double range = truth_boxes[b].distance_m;
      if (range <= 350.0) {
        ++near_total;
        near_hits += truth_hit[b];
      } else if (range <= 700.0) {
        ++far_total;
        far_hits += truth_hit[b];
      }
    }
  }
  const auto& m = r.metrics;
  CHECK(m.frames == 10);
  CHECK(m.truths == truths);
  CHECK(m.detections == static_cast<std::int64_t>(r.log.detections.size()));
  CHECK(m.true_positives == tp);
  CHECK(m.false_positives == m.detections - tp);
  CHECK(m.recall.value() == doctest::Approx(static_cast<double>(tp) / truths));
  CHECK(m.near_fix.hits == near_hits);
  CHECK(m.near_fix.total == near_total);
  CHECK(m.far_fix.hits == far_hits);
  CHECK(m.far_fix.total == far_total);
}
