#include "oplanes/inside.hpp"

#include <cmath>
#include <numbers>

namespace oplanes {

namespace {

// Direction with no rational relation to axis-aligned or lattice geometry,
// so grazing hits on edges and vertices have probability zero.
const Vec3& oblique_direction() {
  static const Vec3 d = Vec3(0.3190183, 0.5519117, 0.7703147).normalized();
  return d;
}

}  // namespace

double winding_number(const TriangleMesh& mesh, const Vec3& p) {
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    const Vec3 a = mesh.vertices[f[0]] - p, b = mesh.vertices[f[1]] - p, c = mesh.vertices[f[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double det = a.dot(b.cross(c));
    const double denom = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(det, denom);
  }
  return total / (4.0 * std::numbers::pi);
}

bool ray_parity_inside(const TriangleMesh& mesh, const Vec3& p, const Vec3& direction) {
  int hits = 0;
  for (const Face& f : mesh.faces)
    if (intersect_triangle(p, direction, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]])) ++hits;
  return hits % 2 == 1;
}

bool point_inside(const TriangleMesh& mesh, const Vec3& p) {
  if (!is_closed(mesh)) throw OracleUnavailable("mesh is not watertight; inside/outside is undefined");
  return winding_number(mesh, p) >= 0.5;
}

InsideTester::InsideTester(TriangleMesh mesh, bool allow_open)
    : mesh_(std::make_shared<const TriangleMesh>(std::move(mesh))) {
  open_ = !is_closed(*mesh_);
  if (open_ && !allow_open) throw OracleUnavailable("mesh is not watertight; inside/outside is undefined");
  bvh_ = std::make_shared<const Bvh>(*mesh_);
}

int InsideTester::crossing_winding(const Vec3& p) const {
  const Vec3& d = oblique_direction();
  int w = 0;
  bvh_->for_each_hit(p, d, 0.0, [&](const RayHit& hit) {
    w += mesh_->face_normal(hit.face).dot(d) > 0 ? 1 : -1;
  });
  return w;
}

}  // namespace oplanes
