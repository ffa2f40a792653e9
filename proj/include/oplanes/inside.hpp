#pragma once

#include <memory>

#include "oplanes/bvh.hpp"

namespace oplanes {

// Generalized winding number: sum of signed solid angles subtended by the
// triangles, over 4*pi. O(faces) per query.
double winding_number(const TriangleMesh& mesh, const Vec3& p);

// Parity of the number of crossings along a ray; brute force over all faces.
bool ray_parity_inside(const TriangleMesh& mesh, const Vec3& p, const Vec3& direction);

// Occupancy oracle o(p): winding number >= 0.5 (points exactly on the surface
// count as inside). Throws OracleUnavailable unless the mesh is closed.
bool point_inside(const TriangleMesh& mesh, const Vec3& p);

// Batched inside tests. For a closed, consistently oriented mesh the winding
// number equals the signed count of surface crossings along any ray leaving
// p, so queries cost one BVH traversal instead of a pass over every face.
class InsideTester {
 public:
  // Throws OracleUnavailable for open meshes unless allow_open is set, in
  // which case open() reports the condition and answers are best effort.
  explicit InsideTester(TriangleMesh mesh, bool allow_open = false);

  bool inside(const Vec3& p) const { return crossing_winding(p) >= 1; }
  // Signed crossings along a fixed oblique direction (exits +1, entries -1).
  int crossing_winding(const Vec3& p) const;
  double exact_winding(const Vec3& p) const { return winding_number(*mesh_, p); }

  bool open() const { return open_; }
  const TriangleMesh& mesh() const { return *mesh_; }
  const Bvh& bvh() const { return *bvh_; }

 private:
  std::shared_ptr<const TriangleMesh> mesh_;
  std::shared_ptr<const Bvh> bvh_;
  bool open_ = false;
};

}  // namespace oplanes
