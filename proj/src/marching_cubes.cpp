#include "oplanes/marching_cubes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

namespace oplanes {

namespace {

// Corner c of a cell has offsets (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// Faces list their corners counter-clockwise seen from outside the cell.
constexpr int kFaces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};

struct EdgeDef {
  int a, b, axis;
};

constexpr std::array<EdgeDef, 12> make_edges() {
  std::array<EdgeDef, 12> edges{};
  int n = 0;
  for (int axis = 0; axis < 3; ++axis)
    for (int c = 0; c < 8; ++c)
      if (!(c & (1 << axis))) edges[n++] = {c, c | (1 << axis), axis};
  return edges;
}
constexpr auto kEdges = make_edges();

int edge_index(int a, int b) {
  for (int e = 0; e < 12; ++e)
    if ((kEdges[e].a == a && kEdges[e].b == b) || (kEdges[e].a == b && kEdges[e].b == a)) return e;
  return -1;
}

using CaseTable = std::array<std::vector<std::array<int, 3>>, 256>;

// Builds the triangle list of every corner configuration from the face
// rules instead of a hand-typed table: on each face, walking the corners
// counter-clockwise, every crossing into the inside region is joined to the
// next crossing out of it. Those directed segments chain into closed loops
// around the cell, which are fan-triangulated.
CaseTable build_case_table() {
  CaseTable table;
  for (int config = 0; config < 256; ++config) {
    auto inside = [&](int c) { return (config >> c) & 1; };
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& face : kFaces) {
      std::array<int, 4> kind{};  // +1 exit (inside -> outside), -1 entry, 0 none
      for (int k = 0; k < 4; ++k) {
        const int a = face[k], b = face[(k + 1) % 4];
        kind[k] = inside(a) == inside(b) ? 0 : (inside(a) ? 1 : -1);
      }
      for (int k = 0; k < 4; ++k) {
        if (kind[k] != -1) continue;
        for (int step = 1; step < 4; ++step) {
          const int m = (k + step) % 4;
          if (kind[m] == 1) {
            const int from = edge_index(face[k], face[(k + 1) % 4]);
            const int to = edge_index(face[m], face[(m + 1) % 4]);
            next[from] = to;
            break;
          }
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int e = start; !used[e]; e = next[e]) {
        used[e] = true;
        loop.push_back(e);
      }
      for (std::size_t i = 1; i + 1 < loop.size(); ++i) table[config].push_back({loop[0], loop[i], loop[i + 1]});
    }
  }
  return table;
}

const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace

int marching_cubes_case_triangles(int config) { return int(case_table().at(config).size()); }

void VoxelGrid::validate() const {
  if (nx < 2 || ny < 2 || nz < 2) throw ConfigError("voxel grid needs at least 2 samples per axis");
  if (values.size() != std::size_t(nx) * ny * nz) throw ShapeError("voxel grid value count does not match resolution");
  if (int(depths.size()) != nz) throw ShapeError("voxel grid needs one depth per slice");
  if (camera.width != nx || camera.height != ny) throw ShapeError("voxel grid camera does not match lateral resolution");
}

TriangleMesh marching_cubes_lattice(std::span<const float> values, int nx, int ny, int nz, double iso,
                                    const LatticeMap& to_world, float outside_value) {
  if (values.size() != std::size_t(nx) * ny * nz) throw ShapeError("marching cubes: value count mismatch");
  const auto& table = case_table();
  auto value = [&](int i, int j, int k) -> float {
    if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz) return outside_value;
    return values[(std::size_t(k) * ny + j) * nx + i];
  };
  // Padded lattice: indices -1 .. n.
  const std::int64_t px = nx + 2, py = ny + 2;
  TriangleMesh mesh;
  std::unordered_map<std::int64_t, int> vertex_of_edge;

  auto vertex_for = [&](int i, int j, int k, const EdgeDef& e) {
    const int ia = i + (e.a & 1), ja = j + ((e.a >> 1) & 1), ka = k + ((e.a >> 2) & 1);
    const std::int64_t key = (((std::int64_t(ka) + 1) * py + (ja + 1)) * px + (ia + 1)) * 3 + e.axis;
    auto it = vertex_of_edge.find(key);
    if (it != vertex_of_edge.end()) return it->second;
    const double va = value(ia, ja, ka);
    const int ib = i + (e.b & 1), jb = j + ((e.b >> 1) & 1), kb = k + ((e.b >> 2) & 1);
    const double vb = value(ib, jb, kb);
    double t = (iso - va) / (vb - va);
    // Keep vertices strictly between lattice points so no triangle collapses.
    t = std::clamp(t, 1e-6, 1.0 - 1e-6);
    const Vec3 p = to_world(ia + t * (ib - ia), ja + t * (jb - ja), ka + t * (kb - ka));
    const int id = int(mesh.vertices.size());
    mesh.vertices.push_back(p);
    vertex_of_edge.emplace(key, id);
    return id;
  };

  for (int k = -1; k < nz; ++k)
    for (int j = -1; j < ny; ++j)
      for (int i = -1; i < nx; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c)
          if (value(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) > iso) config |= 1 << c;
        if (config == 0 || config == 255) continue;
        for (const auto& tri : table[config]) {
          Face f;
          for (int v = 0; v < 3; ++v) f[v] = vertex_for(i, j, k, kEdges[tri[v]]);
          mesh.faces.push_back(f);
        }
      }
  return mesh;
}

TriangleMesh marching_cubes(const VoxelGrid& grid, double iso) {
  grid.validate();
  if (!(iso > 0 && iso < 1)) throw ConfigError("marching cubes iso level must lie in (0, 1)");
  const double z0 = grid.depths.front();
  const double dz = (grid.depths.back() - grid.depths.front()) / (grid.nz - 1);
  const CameraIntrinsics& cam = grid.camera;
  auto to_world = [&](double i, double j, double k) {
    const double z = std::max(z0 + k * dz, 1e-9);
    return unproject(cam, {i, j}, z);
  };
  return marching_cubes_lattice(grid.values, grid.nx, grid.ny, grid.nz, iso, to_world, 0.0f);
}

}  // namespace oplanes
