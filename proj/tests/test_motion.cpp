#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "skysentry/error.hpp"
#include "skysentry/motion.hpp"

using namespace skysentry;

namespace {

ImageFrame flat_frame(int w, int h, std::uint8_t value, std::int64_t index = 0) {
  ImageFrame f;
  f.width = w;
  f.height = h;
  f.frame_index = index;
  f.pixels.assign(static_cast<std::size_t>(w) * h, value);
  return f;
}

ChangeSet changes_at(int w, int h, std::vector<PixelCoord> points) {
  ChangeSet c;
  c.width = w;
  c.height = h;
  c.points = std::move(points);
  return c;
}

// Straight from the textbook: visit points in order, grow each new cluster
// breadth first from a core point.
std::vector<int> textbook_dbscan(const std::vector<Point2>& pts, double eps, std::size_t min_pts) {
  const std::size_t n = pts.size();
  auto region = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) <= eps) out.push_back(j);
    }
    return out;
  };
  constexpr int kUndefined = -2;
  std::vector<int> label(n, kUndefined);
  int cluster = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUndefined) continue;
    auto nb = region(i);
    if (nb.size() < min_pts) {
      label[i] = -1;
      continue;
    }
    label[i] = ++cluster;
    std::vector<std::size_t> seeds(nb.begin(), nb.end());
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const std::size_t q = seeds[s];
      if (label[q] == -1) label[q] = cluster;
      if (label[q] != kUndefined) continue;
      label[q] = cluster;
      auto more = region(q);
      if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
    }
  }
  return label;
}

}  // namespace

TEST_CASE("frame_diff keeps pixels whose change exceeds the threshold") {
  auto a = flat_frame(8, 4, 100, 0);
  auto b = flat_frame(8, 4, 100, 1);
  b.pixels[1 * 8 + 2] = 113;  // +13
  b.pixels[3 * 8 + 7] = 88;   // -12, not strictly above
  b.pixels[0 * 8 + 5] = 70;
  const auto c = frame_diff(a, b, 12);
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[0] == PixelCoord{5, 0});
  CHECK(c.points[1] == PixelCoord{2, 1});
  CHECK(c.prev_frame == 0);
  CHECK(c.curr_frame == 1);

  CHECK_THROWS_AS(frame_diff(a, flat_frame(8, 5, 100), 12), Error);
  auto other = flat_frame(8, 4, 100);
  other.camera_id = 3;
  CHECK_THROWS_AS(frame_diff(a, other, 12), Error);
}

TEST_CASE("dbscan agrees with the textbook algorithm") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    std::uniform_int_distribution<int> count(0, 400);
    std::uniform_real_distribution<double> coord(0.0, trial % 2 ? 60.0 : 200.0);
    std::vector<Point2> pts(static_cast<std::size_t>(count(rng)));
    for (auto& p : pts) p = {coord(rng), coord(rng)};
    // Lattice points make ties at exactly eps common.
    if (trial % 3 == 0) {
      for (auto& p : pts) p = {std::round(p.x / 3.0) * 3.0, std::round(p.y / 3.0) * 3.0};
    }
    const double eps = 3.0;
    const std::size_t min_pts = 1 + trial % 6;
    const auto got = dbscan(pts, eps, min_pts);
    const auto want = textbook_dbscan(pts, eps, min_pts);
    REQUIRE(got.labels.size() == pts.size());
    CHECK(got.labels == want);

    std::size_t members = got.noise.size();
    for (std::size_t k = 0; k < got.clusters.size(); ++k) {
      members += got.clusters[k].size();
      for (std::size_t i : got.clusters[k]) CHECK(got.labels[i] == static_cast<int>(k));
    }
    CHECK(members == pts.size());
  }
}

TEST_CASE("dbscan edge cases") {
  CHECK(dbscan({}, 3.0, 4).clusters.empty());
  const std::vector<Point2> line = {{0, 0}, {3, 0}, {6, 0}, {9, 0}};
  // Exactly eps apart still counts as a neighbor.
  CHECK(dbscan(line, 3.0, 2).clusters.size() == 1);
  CHECK(dbscan(line, 2.999, 2).noise.size() == 4);
}

TEST_CASE("clutter mask: repeated change is masked, isolated change is not") {
  ClutterMask mask(20, 20, 8, 6, 1);
  for (int k = 0; k < 5; ++k) mask.update(changes_at(20, 20, {{5, 5}}));
  CHECK_FALSE(mask.masked(5, 5));
  mask.update(changes_at(20, 20, {{5, 5}, {15, 15}}));
  CHECK(mask.masked(5, 5));
  // Dilation by one pixel, including the diagonal.
  CHECK(mask.masked(4, 4));
  CHECK(mask.masked(6, 6));
  CHECK_FALSE(mask.masked(7, 5));
  CHECK_FALSE(mask.masked(15, 15));
  CHECK(mask.masked_fraction() == doctest::Approx(9.0 / 400.0));

  const auto kept = mask.filter(changes_at(20, 20, {{5, 5}, {6, 4}, {15, 15}, {0, 0}}));
  CHECK(kept.points == std::vector<PixelCoord>{{15, 15}, {0, 0}});

  // The counter forgets after the window slides past.
  for (int k = 0; k < 8; ++k) mask.update(changes_at(20, 20, {}));
  CHECK(mask.masked_fraction() == 0.0);
  CHECK_THROWS_AS(mask.update(changes_at(21, 20, {})), Error);
}

TEST_CASE("the mask never removes unmasked points") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> xy(0, 39);
  ClutterMask mask(40, 40, 8, 3, 1);
  for (int k = 0; k < 30; ++k) {
    std::vector<PixelCoord> pts;
    for (int i = 0; i < 200; ++i) pts.push_back({xy(rng) / 2, xy(rng)});
    const auto change = changes_at(40, 40, pts);
    mask.update(change);
    const auto kept = mask.filter(change);
    std::size_t expect = 0;
    for (const auto& p : pts) expect += mask.masked(p.x, p.y) ? 0 : 1;
    CHECK(kept.points.size() == expect);
    for (const auto& p : kept.points) CHECK_FALSE(mask.masked(p.x, p.y));
  }
}

TEST_CASE("treetop band is masked and silent after warm-up") {
  auto s = load_scenario(testing::source_path("scenarios/default.json"));
  s.targets.clear();
  const auto& band = s.clutter.at(0);
  const int cam = band.camera_id.value();
  MotionPipeline pipeline;
  for (std::int64_t k = 0; k < 80; ++k) {
    const auto result = pipeline.process(render_frame(s, cam, s.frame_time(k)));
    if (k == 16) {
      const auto* m = pipeline.mask();
      REQUIRE(m != nullptr);
      long total = 0;
      long masked = 0;
      for (int y = static_cast<int>(band.region.y); y < static_cast<int>(band.region.y + band.region.h); ++y) {
        for (int x = static_cast<int>(band.region.x); x < static_cast<int>(band.region.x + band.region.w); ++x) {
          ++total;
          masked += m->masked(x, y) ? 1 : 0;
        }
      }
      CHECK(static_cast<double>(masked) / static_cast<double>(total) >= 0.95);
    }
    if (k > 16) {
      CHECK(result.clusters.size() == 0);
      if (!result.clusters.empty()) break;
    }
  }
}

TEST_CASE("rois are fixed-size crops shifted inside the frame") {
  auto frame = flat_frame(300, 200, 0, 4);
  frame.camera_id = 2;
  for (int y = 0; y < 200; ++y) {
    for (int x = 0; x < 300; ++x) frame.pixels[static_cast<std::size_t>(y) * 300 + x] = static_cast<std::uint8_t>(x % 256);
  }
  Cluster corner;
  corner.members = {{1, 1}, {2, 2}, {3, 3}};
  Cluster middle;
  middle.members = {{150, 100}, {151, 100}};
  const std::vector<Cluster> clusters = {corner, middle};
  const auto rois = extract_rois(clusters, frame);
  REQUIRE(rois.size() == 2);
  CHECK(rois[0].cx == 2.0);
  CHECK(rois[1].cy == 100.0);
  CHECK(rois[0].crop_x == 0);
  CHECK(rois[0].crop_y == 0);
  CHECK(rois[0].crop.width == Roi::kSize);
  CHECK(rois[0].cluster_size == 3);
  CHECK(rois[1].cx == doctest::Approx(151.0));
  CHECK(rois[1].crop_x == 151 - 64);
  CHECK(rois[1].crop_y == 100 - 64);
  CHECK(rois[1].crop.at(0, 0) == frame.pixels[static_cast<std::size_t>(rois[1].crop_y) * 300 + rois[1].crop_x]);
  CHECK(rois[1].camera_id == 2);
  CHECK(rois[1].frame_index == 4);
}

TEST_CASE("cluster bounds are pixel inclusive") {
  Cluster c;
  c.members = {{2, 3}, {4, 3}, {3, 6}};
  const auto b = c.bounds();
  CHECK(b.x == 2.0);
  CHECK(b.y == 3.0);
  CHECK(b.w == 3.0);
  CHECK(b.h == 4.0);
  CHECK(c.centroid().x == doctest::Approx(3.0));
}
