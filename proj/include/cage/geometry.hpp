#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "cage/common.hpp"
#include "cage/dataset.hpp"

namespace cage {

// Static 3-D nearest-neighbour index over a fixed point cloud. Queries return
// exactly what an exhaustive scan over the same points would: the squared
// distance is computed with the identical expression, and distance ties
// resolve to the lowest original point index.
class KdTree {
 public:
  struct Hit {
    std::size_t index = 0;
    double distance = 0.0;  // euclidean
  };

  KdTree() = default;

  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw Error("KdTree: empty point cloud");
    for (const auto& p : points_)
      if (!p.finite()) throw Error("KdTree: non-finite point");
    std::vector<std::size_t> order(points_.size());
    std::iota(order.begin(), order.end(), 0);
    nodes_.reserve(points_.size());
    root_ = build(order, 0, points_.size());
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  Hit nearest(const Vec3& query) const {
    if (points_.empty()) throw Error("KdTree: query against an empty tree");
    if (!query.finite()) throw Error("KdTree: non-finite query point");
    std::size_t best_index = points_.size();
    double best_d2 = 0.0;
    search(root_, query, best_index, best_d2);
    return {best_index, std::sqrt(best_d2)};
  }

 private:
  struct Node {
    std::size_t point = 0;
    int axis = 0;
    int left = -1, right = -1;
  };

  int build(std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
    if (begin >= end) return -1;
    const int axis = widest_axis(order, begin, end);
    const std::size_t mid = begin + (end - begin) / 2;
    // deterministic median: order by coordinate, then by original index
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       const double ca = points_[a][axis], cb = points_[b][axis];
                       if (ca != cb) return ca < cb;
                       return a < b;
                     });
    const int me = static_cast<int>(nodes_.size());
    nodes_.push_back({order[mid], axis, -1, -1});
    const int l = build(order, begin, mid);
    const int r = build(order, mid + 1, end);
    nodes_[me].left = l;
    nodes_[me].right = r;
    return me;
  }

  int widest_axis(const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t end) const {
    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) lo[a] = hi[a] = points_[order[begin]][a];
    for (std::size_t i = begin + 1; i < end; ++i)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], points_[order[i]][a]);
        hi[a] = std::max(hi[a], points_[order[i]][a]);
      }
    int best = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[best] - lo[best]) best = a;
    return best;
  }

  // (d2, index) lexicographic comparison keeps tie-breaking exact
  bool better(double d2, std::size_t index, double best_d2, std::size_t best_index) const {
    if (best_index >= points_.size()) return true;  // nothing found yet
    if (d2 != best_d2) return d2 < best_d2;
    return index < best_index;
  }

  void search(int ni, const Vec3& q, std::size_t& best_index, double& best_d2) const {
    if (ni < 0) return;
    const Node& n = nodes_[ni];
    const Vec3& p = points_[n.point];
    const double d2 = squared_distance(q, p);
    if (better(d2, n.point, best_d2, best_index)) {
      best_d2 = d2;
      best_index = n.point;
    }
    const double diff = q[n.axis] - p[n.axis];
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    search(near, q, best_index, best_d2);
    // visit the far side on exact equality too: it may hold an equally close
    // point with a lower index
    if (diff * diff <= best_d2) search(far, q, best_index, best_d2);
  }

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

inline KdTree build_kdtree(std::vector<Vec3> points) { return KdTree(std::move(points)); }

inline KdTree::Hit nearest_point(const KdTree& tree, const Vec3& query) {
  return tree.nearest(query);
}

// point index -> owning part index, from the object's part point sets
inline std::vector<std::uint32_t> point_part_map(const PartLabeledObject& obj) {
  std::vector<std::uint32_t> map(obj.points.size(), UINT32_MAX);
  for (std::size_t pi = 0; pi < obj.parts.size(); ++pi)
    for (std::uint32_t pt : obj.parts[pi].points) {
      if (pt >= map.size()) throw Error("object '" + obj.id + "' part point index out of range");
      map[pt] = static_cast<std::uint32_t>(pi);
    }
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] == UINT32_MAX)
      throw Error("object '" + obj.id + "' point " + std::to_string(i) + " belongs to no part");
  return map;
}

// The part owning the scan point nearest to the grasp position.
inline std::size_t assign_grasp_to_part(const PartLabeledObject& obj, const LabeledGrasp& grasp) {
  const KdTree tree(obj.points);
  const auto hit = tree.nearest(grasp.position);
  return point_part_map(obj)[hit.index];
}

}  // namespace cage
