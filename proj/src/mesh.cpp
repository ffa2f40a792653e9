#include "oplanes/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include "oplanes/random.hpp"

namespace oplanes {

Vec3 TriangleMesh::face_normal(std::size_t f) const {
  const Face& t = faces[f];
  const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::Zero();
}

double TriangleMesh::face_area(std::size_t f) const {
  const Face& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

double TriangleMesh::surface_area() const {
  double a = 0;
  for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
  return a;
}

double TriangleMesh::signed_volume() const {
  double v = 0;
  for (const Face& t : faces) v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  return v / 6.0;
}

void TriangleMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int idx : faces[f])
      if (idx < 0 || idx >= n)
        throw ValidationError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                              " outside [0, " + std::to_string(n) + ")");
}

namespace {

// Parses the vertex index of an OBJ face token ("7", "7/2", "7//3", "-1").
int parse_face_index(const std::string& token, int vertex_count, int line_no) {
  const std::string head = token.substr(0, token.find('/'));
  int idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoi(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw ParseError("malformed face index '" + token + "'", line_no);
  }
  if (idx == 0) throw ValidationError("OBJ face index 0 is invalid (indices are 1-based), line " + std::to_string(line_no));
  const int zero_based = idx > 0 ? idx - 1 : vertex_count + idx;
  if (zero_based < 0 || zero_based >= vertex_count)
    throw ValidationError("OBJ face index " + std::to_string(idx) + " out of range, line " + std::to_string(line_no));
  return zero_based;
}

}  // namespace

TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh " + path.string());
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) throw ParseError("malformed vertex record in " + path.string(), line_no);
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) idx.push_back(parse_face_index(tok, int(mesh.vertices.size()), line_no));
      if (idx.size() < 3) throw ParseError("face with fewer than 3 vertices in " + path.string(), line_no);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  mesh.validate();
  remove_degenerate_faces(mesh);
  return mesh;
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh " + path.string());
  out << std::setprecision(10);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Face& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("failed writing mesh " + path.string());
}

void remove_degenerate_faces(TriangleMesh& mesh) {
  std::vector<Face> kept;
  kept.reserve(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    if (mesh.face_area(f) <= 0.0) continue;
    kept.push_back(t);
  }
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (const Face& t : kept)
    for (int i : t) remap[i] = 0;
  std::vector<Vec3> verts;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    if (remap[i] == 0) {
      remap[i] = int(verts.size());
      verts.push_back(mesh.vertices[i]);
    }
  for (Face& t : kept)
    for (int& i : t) i = remap[i];
  mesh.vertices = std::move(verts);
  mesh.faces = std::move(kept);
}

AABB aabb(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw DomainError("aabb of an empty mesh");
  AABB box{mesh.vertices[0], mesh.vertices[0]};
  for (const Vec3& v : mesh.vertices) {
    box.min = box.min.cwiseMin(v);
    box.max = box.max.cwiseMax(v);
  }
  return box;
}

namespace {

std::uint64_t edge_key(int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); }

}  // namespace

bool is_closed(const TriangleMesh& mesh) {
  if (mesh.faces.empty()) return false;
  std::unordered_map<std::uint64_t, int> balance;
  balance.reserve(mesh.faces.size() * 3);
  for (const Face& t : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      if (a < b)
        ++balance[edge_key(a, b)];
      else
        --balance[edge_key(b, a)];
    }
  return std::all_of(balance.begin(), balance.end(), [](const auto& kv) { return kv.second == 0; });
}

bool every_edge_has_two_faces(const TriangleMesh& mesh) {
  if (mesh.faces.empty()) return false;
  std::unordered_map<std::uint64_t, int> count;
  for (const Face& t : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      const int a = std::min(t[k], t[(k + 1) % 3]), b = std::max(t[k], t[(k + 1) % 3]);
      ++count[edge_key(a, b)];
    }
  return std::all_of(count.begin(), count.end(), [](const auto& kv) { return kv.second == 2; });
}

long euler_characteristic(const TriangleMesh& mesh) {
  std::unordered_map<std::uint64_t, int> edges;
  for (const Face& t : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      const int a = std::min(t[k], t[(k + 1) % 3]), b = std::max(t[k], t[(k + 1) % 3]);
      edges[edge_key(a, b)] = 1;
    }
  return long(mesh.vertices.size()) - long(edges.size()) + long(mesh.faces.size());
}

std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  return sample_surface(mesh, n, seed, nullptr);
}

std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                                          std::vector<int>* face_ids) {
  if (mesh.faces.empty()) throw DomainError("sample_surface: empty mesh");
  if (n == 0) throw DomainError("sample_surface: sample count must be positive");
  std::vector<double> cdf(mesh.faces.size());
  double total = 0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cdf[f] = total;
  }
  if (!(total > 0)) throw DomainError("sample_surface: mesh has zero area");
  Rng rng = make_rng(seed);
  std::vector<SurfaceSample> out;
  out.reserve(n);
  if (face_ids) face_ids->clear();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = uniform01(rng) * total;
    std::size_t f = std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
    f = std::min(f, cdf.size() - 1);
    const double s = std::sqrt(uniform01(rng)), t = uniform01(rng);
    const Face& tri = mesh.faces[f];
    const Vec3 p = (1 - s) * mesh.vertices[tri[0]] + s * (1 - t) * mesh.vertices[tri[1]] + s * t * mesh.vertices[tri[2]];
    out.push_back({p, mesh.face_normal(f)});
    if (face_ids) face_ids->push_back(int(f));
  }
  return out;
}

TriangleMesh transformed(const TriangleMesh& mesh, const Eigen::Matrix3d& rotation, const Vec3& translation) {
  TriangleMesh out = mesh;
  for (Vec3& v : out.vertices) v = rotation * v + translation;
  return out;
}

TriangleMesh flipped(const TriangleMesh& mesh) {
  TriangleMesh out = mesh;
  for (Face& f : out.faces) std::swap(f[1], f[2]);
  return out;
}

TriangleMesh merged(const TriangleMesh& a, const TriangleMesh& b) {
  TriangleMesh out = a;
  const int offset = int(a.vertices.size());
  out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (Face f : b.faces) {
    for (int& i : f) i += offset;
    out.faces.push_back(f);
  }
  return out;
}

TriangleMesh make_icosphere(int subdivisions, double radius, const Vec3& center) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
                         {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},  {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (Vec3& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = int(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& t : f) {
      const int a = mid(t[0], t[1]), b = mid(t[1], t[2]), c = mid(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriangleMesh mesh;
  mesh.faces = std::move(f);
  mesh.vertices.reserve(v.size());
  for (const Vec3& p : v) mesh.vertices.push_back(center + radius * p);
  return mesh;
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i)
    mesh.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  // Quads listed counter-clockwise from outside.
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    mesh.faces.push_back({q[0], q[1], q[2]});
    mesh.faces.push_back({q[0], q[2], q[3]});
  }
  return mesh;
}

TriangleMesh make_square(double x0, double y0, double z0, double size) {
  TriangleMesh mesh;
  mesh.vertices = {{x0, y0, z0}, {x0 + size, y0, z0}, {x0 + size, y0 + size, z0}, {x0, y0 + size, z0}};
  mesh.faces = {{0, 1, 2}, {0, 2, 3}};
  return mesh;
}

}  // namespace oplanes
