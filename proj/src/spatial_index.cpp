#include "oplanes/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oplanes/errors.hpp"

namespace oplanes {

namespace {

constexpr std::uint32_t kLeafSize = 8;

double box_distance_sq(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double d = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double e = std::max({lo[a] - q[a], 0.0, q[a] - hi[a]});
    d += e * e;
  }
  return d;
}

}  // namespace

PointIndex::PointIndex(std::vector<Vec3> points, bool brute_force)
    : points_(std::move(points)), brute_force_(brute_force) {
  if (points_.empty()) throw ValidationError("point index needs at least one point");
  if (brute_force_) return;
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, std::uint32_t(points_.size()));
}

std::int32_t PointIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = std::int32_t(nodes_.size());
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = node.hi = points_[order_[begin]];
  for (std::uint32_t i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) return id;
  int axis;
  (node.hi - node.lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const std::int32_t l = build(begin, mid);
  const std::int32_t r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

PointIndex::Hit PointIndex::scan_all(const Vec3& q) const {
  Hit best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double d = (points_[i] - q).squaredNorm();
    if (d < best.distance) best = {i, d};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

PointIndex::Hit PointIndex::nearest(const Vec3& q) const {
  if (brute_force_) return scan_all(q);
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  // Depth-first, nearer child first; prune boxes farther than the best hit.
  // Equal-distance boxes are still visited so ties resolve to the lowest index.
  std::int32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[std::size_t(stack[--top])];
    if (box_distance_sq(q, n.lo, n.hi) > best_sq) continue;
    if (n.left < 0) {
      for (std::uint32_t s = n.begin; s < n.end; ++s) {
        const std::uint32_t i = order_[s];
        const double d = (points_[i] - q).squaredNorm();
        if (d < best_sq || (d == best_sq && i < best_i)) {
          best_sq = d;
          best_i = i;
        }
      }
      continue;
    }
    const Node& l = nodes_[std::size_t(n.left)];
    const Node& r = nodes_[std::size_t(n.right)];
    const bool left_first = box_distance_sq(q, l.lo, l.hi) <= box_distance_sq(q, r.lo, r.hi);
    stack[top++] = left_first ? n.right : n.left;
    stack[top++] = left_first ? n.left : n.right;
  }
  return {best_i, std::sqrt(best_sq)};
}

}  // namespace oplanes
