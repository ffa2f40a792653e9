#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "oplanes/mesh.hpp"

namespace oplanes {

struct RayHit {
  double t = 0.0;  // ray parameter: hit point = origin + t * direction
  int face = -1;
};

// Möller-Trumbore; returns t when the ray hits the triangle with t > t_min.
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min = 0.0);

// Bounding volume hierarchy over a mesh's triangles (median split on the
// widest centroid axis). Holds a reference to the mesh, which must outlive it.
class Bvh {
 public:
  explicit Bvh(const TriangleMesh& mesh);

  std::optional<RayHit> nearest_hit(const Vec3& origin, const Vec3& dir, double t_min = 0.0) const;
  // Visits every intersection with t > t_min, in traversal order.
  void for_each_hit(const Vec3& origin, const Vec3& dir, double t_min,
                    const std::function<void(const RayHit&)>& visit) const;

  const TriangleMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Vec3 lo, hi;
    int first = 0;  // leaf: index into order_; inner: left child
    int count = 0;  // leaf: triangle count (> 0); inner: -(right child)
  };

  int build(int begin, int end, std::vector<Vec3>& centroids);
  bool slab_test(const Node& node, const Vec3& origin, const Vec3& inv_dir, double t_max) const;

  const TriangleMesh& mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
};

}  // namespace oplanes
