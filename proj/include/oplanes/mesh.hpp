#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "oplanes/camera.hpp"

namespace oplanes {

using Face = std::array<int, 3>;

struct AABB {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 extent() const { return max - min; }
  double longest_edge() const { return extent().maxCoeff(); }
  Vec3 center() const { return 0.5 * (min + max); }
};

// Indexed triangle mesh. Faces are counter-clockwise when seen from outside,
// so the right-hand face normal points out of the solid.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }
  Vec3 face_normal(std::size_t f) const;  // unit length; zero for degenerate faces
  double face_area(std::size_t f) const;
  double surface_area() const;
  // Divergence-theorem volume; positive for outward-oriented closed meshes.
  double signed_volume() const;
  void validate() const;
};

struct SurfaceSample {
  Vec3 point;
  Vec3 normal;
};

TriangleMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);

// Drops zero-area faces and unreferenced vertices, keeping vertex order.
void remove_degenerate_faces(TriangleMesh& mesh);

AABB aabb(const TriangleMesh& mesh);

// Closed and consistently oriented: every directed edge a->b is matched by
// as many b->a edges. This is what a well-defined inside/outside requires.
bool is_closed(const TriangleMesh& mesh);
// Every undirected edge used by exactly two faces.
bool every_edge_has_two_faces(const TriangleMesh& mesh);
long euler_characteristic(const TriangleMesh& mesh);

// Area-weighted uniform samples; deterministic per seed.
std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);
// Same as sample_surface, also reporting the face each sample came from.
std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                                          std::vector<int>* face_ids);

TriangleMesh transformed(const TriangleMesh& mesh, const Eigen::Matrix3d& rotation, const Vec3& translation);
TriangleMesh flipped(const TriangleMesh& mesh);
TriangleMesh merged(const TriangleMesh& a, const TriangleMesh& b);

// Primitives.
TriangleMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());
TriangleMesh make_box(const Vec3& min, const Vec3& max);
// Two-triangle square in the plane z = z0 spanning [x0,x0+size] x [y0,y0+size].
TriangleMesh make_square(double x0, double y0, double z0, double size);

}  // namespace oplanes
