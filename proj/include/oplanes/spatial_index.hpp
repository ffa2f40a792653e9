#pragma once

#include <cstdint>
#include <vector>

#include "oplanes/camera.hpp"

namespace oplanes {

// Exact nearest-neighbour queries over a fixed point set, via a k-d tree
// split at the median of the widest axis. Ties resolve to the lowest index.
class PointIndex {
 public:
  struct Hit {
    std::size_t index = 0;
    double distance = 0.0;
  };

  // brute_force: scan every point per query (reference path for tests).
  explicit PointIndex(std::vector<Vec3> points, bool brute_force = false);

  Hit nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

 private:
  struct Node {
    Vec3 lo, hi;              // bounding box of the node's points
    std::uint32_t begin, end; // range in order_
    std::int32_t left = -1, right = -1;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  Hit scan_all(const Vec3& q) const;

  std::vector<Vec3> points_;
  bool brute_force_ = false;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace oplanes
