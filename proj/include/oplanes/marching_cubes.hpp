#pragma once

#include <functional>
#include <span>
#include <vector>

#include "oplanes/mesh.hpp"

namespace oplanes {

// Occupancy lattice covering a view frustum. Lateral axes are pixel aligned
// with `camera` (grid index i, j = pixel u, v); slice k sits at depths[k].
// Values are stored slice-major: values[(k * ny + j) * nx + i].
struct VoxelGrid {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<float> values;
  CameraIntrinsics camera;
  std::vector<double> depths;

  float& at(int i, int j, int k) { return values[(std::size_t(k) * ny + j) * nx + i]; }
  float at(int i, int j, int k) const { return values[(std::size_t(k) * ny + j) * nx + i]; }
  void validate() const;
};

// Maps continuous lattice coordinates to output space.
using LatticeMap = std::function<Vec3(double i, double j, double k)>;

// Marching cubes over an nx x ny x nz lattice (x fastest). A corner is inside
// when value > iso. Lattice points outside the array read as outside_value,
// so any surface touching the border is closed off one cell beyond it.
// Ambiguous faces keep diagonal inside corners separated, which makes
// neighbouring cells agree and the output closed and consistently oriented
// (normals point from inside to outside). Cells are visited in
// slice/row/column order, so the output is deterministic.
TriangleMesh marching_cubes_lattice(std::span<const float> values, int nx, int ny, int nz, double iso,
                                    const LatticeMap& to_world, float outside_value);

// Frustum grid isosurface; vertices are placed in (u, v, z) lattice space and
// then unprojected into camera coordinates.
TriangleMesh marching_cubes(const VoxelGrid& grid, double iso);

// Number of surface triangles the case table emits per corner configuration
// (exposed for tests).
int marching_cubes_case_triangles(int config);

}  // namespace oplanes
