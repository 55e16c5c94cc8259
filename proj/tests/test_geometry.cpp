#include <algorithm>
#include <vector>

#include <gtest/gtest.h>

#include "cage/geometry.hpp"

using cage::KdTree;
using cage::Rng;
using cage::Vec3;

namespace {

// exhaustive reference with the same distance expression and tie rule
KdTree::Hit scan_nearest(const std::vector<Vec3>& points, const Vec3& q) {
  std::size_t best = 0;
  double best_d2 = cage::squared_distance(q, points[0]);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d2 = cage::squared_distance(q, points[i]);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return {best, std::sqrt(best_d2)};
}

std::vector<Vec3> random_cloud(Rng& rng, std::size_t n, double extent) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    pts.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                   rng.uniform(-extent, extent)});
  return pts;
}

}  // namespace

TEST(KdTree, MatchesExhaustiveScanOnRandomClouds) {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.index(300);
    auto pts = random_cloud(rng, n, 0.5);
    const KdTree tree(pts);
    for (int q = 0; q < 50; ++q) {
      const Vec3 query = {rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7),
                          rng.uniform(-0.7, 0.7)};
      const auto expect = scan_nearest(pts, query);
      const auto got = tree.nearest(query);
      ASSERT_EQ(got.index, expect.index);
      ASSERT_DOUBLE_EQ(got.distance, expect.distance);
    }
  }
}

TEST(KdTree, TiesResolveToLowestIndex) {
  // duplicated points: any query must return the first copy
  std::vector<Vec3> pts = {{1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}};
  const KdTree tree(pts);
  EXPECT_EQ(tree.nearest({1, 0, 0}).index, 0u);
  EXPECT_EQ(tree.nearest({0, 1, 0}).index, 1u);
  // equidistant pair: (0,0,0) is 1 away from both points; lower index wins
  EXPECT_EQ(tree.nearest({0, 0, 0}).index, 0u);
}

TEST(KdTree, TiesOnDegenerateGrids) {
  // symmetric grid creates many exact distance ties
  std::vector<Vec3> pts;
  for (int x = -1; x <= 1; ++x)
    for (int y = -1; y <= 1; ++y)
      for (int z = -1; z <= 1; ++z) pts.push_back({double(x), double(y), double(z)});
  const KdTree tree(pts);
  Rng rng(77);
  for (int q = 0; q < 200; ++q) {
    // query at cell centers and corners, where 2-8 points tie exactly
    auto coord = [&] { return double(int(rng.index(3)) - 1) + 0.5 * double(rng.index(2)); };
    const Vec3 query = {coord(), coord(), coord()};
    const auto expect = scan_nearest(pts, query);
    const auto got = tree.nearest(query);
    ASSERT_EQ(got.index, expect.index);
    ASSERT_DOUBLE_EQ(got.distance, expect.distance);
  }
}

TEST(KdTree, CollinearAndCoincidentClouds) {
  Rng rng(31);
  // all points on one line, many duplicates
  std::vector<Vec3> pts;
  for (int i = 0; i < 60; ++i) pts.push_back({double(i % 10) * 0.01, 0.0, 0.0});
  const KdTree tree(pts);
  for (int q = 0; q < 100; ++q) {
    const Vec3 query = {rng.uniform(-0.05, 0.15), rng.uniform(-0.01, 0.01), 0.0};
    const auto expect = scan_nearest(pts, query);
    const auto got = tree.nearest(query);
    ASSERT_EQ(got.index, expect.index);
  }
  // single point
  const KdTree single(std::vector<Vec3>{{0.1, 0.2, 0.3}});
  EXPECT_EQ(single.nearest({9, 9, 9}).index, 0u);
}

TEST(KdTree, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(KdTree(std::vector<Vec3>{}), cage::Error);
  EXPECT_THROW(KdTree(std::vector<Vec3>{{0, 0, std::numeric_limits<double>::quiet_NaN()}}),
               cage::Error);
  const KdTree tree(std::vector<Vec3>{{0, 0, 0}});
  EXPECT_THROW(tree.nearest({std::numeric_limits<double>::infinity(), 0, 0}), cage::Error);
}

TEST(GraspAssignment, PicksThePartOwningTheNearestPoint) {
  cage::PartLabeledObject obj;
  obj.id = "thing";
  obj.object_class = "cup";
  obj.points = {{0, 0, 0}, {0, 0, 0.01}, {0.1, 0, 0}, {0.1, 0, 0.01}};
  obj.parts = {{"wrap_grasp", "ceramic", {0, 1}}, {"grasp", "wood", {2, 3}}};

  cage::LabeledGrasp g;
  g.position = {0.001, 0, 0.002};
  EXPECT_EQ(cage::assign_grasp_to_part(obj, g), 0u);
  g.position = {0.099, 0, 0.0};
  EXPECT_EQ(cage::assign_grasp_to_part(obj, g), 1u);
  // halfway: both nearest candidates tie across parts, index 0 wins
  g.position = {0.05, 0, 0.0};
  EXPECT_EQ(cage::assign_grasp_to_part(obj, g), 0u);
}

TEST(GraspAssignment, UncoveredPointIsAnError) {
  cage::PartLabeledObject obj;
  obj.points = {{0, 0, 0}, {1, 1, 1}};
  obj.parts = {{"grasp", "wood", {0}}};
  EXPECT_THROW(cage::point_part_map(obj), cage::Error);
}
