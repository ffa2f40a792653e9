#include "oplanes/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace oplanes {

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (det == 0.0) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (!(t > t_min)) return std::nullopt;
  return t;
}

namespace {
constexpr int kLeafSize = 4;
}

Bvh::Bvh(const TriangleMesh& mesh) : mesh_(mesh) {
  order_.resize(mesh.faces.size());
  std::iota(order_.begin(), order_.end(), 0);
  std::vector<Vec3> centroids(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    centroids[f] = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
  }
  nodes_.reserve(2 * mesh.faces.size() / kLeafSize + 2);
  if (!mesh.faces.empty()) build(0, int(order_.size()), centroids);
}

int Bvh::build(int begin, int end, std::vector<Vec3>& centroids) {
  const int index = int(nodes_.size());
  nodes_.push_back({});
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  Vec3 clo = lo, chi = hi;
  for (int i = begin; i < end; ++i) {
    const Face& t = mesh_.faces[order_[i]];
    for (int k : t) {
      lo = lo.cwiseMin(mesh_.vertices[k]);
      hi = hi.cwiseMax(mesh_.vertices[k]);
    }
    clo = clo.cwiseMin(centroids[order_[i]]);
    chi = chi.cwiseMax(centroids[order_[i]]);
  }
  nodes_[index].lo = lo;
  nodes_[index].hi = hi;
  if (end - begin <= kLeafSize) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    if (centroids[a][axis] != centroids[b][axis]) return centroids[a][axis] < centroids[b][axis];
    return a < b;
  });
  // Children are allocated consecutively: left at index + 1 is built first,
  // so the right child index is recorded explicitly.
  const int left = build(begin, mid, centroids);
  const int right = build(mid, end, centroids);
  nodes_[index].first = left;
  nodes_[index].count = -right;  // negative: inner node, stores right child
  return index;
}

bool Bvh::slab_test(const Node& node, const Vec3& origin, const Vec3& inv_dir, double t_max) const {
  double t0 = 0.0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double n = (node.lo[a] - origin[a]) * inv_dir[a];
    double f = (node.hi[a] - origin[a]) * inv_dir[a];
    if (std::isnan(n) || std::isnan(f)) {
      // Ray parallel to this slab and origin on its boundary plane.
      if (origin[a] < node.lo[a] || origin[a] > node.hi[a]) return false;
      continue;
    }
    if (n > f) std::swap(n, f);
    t0 = std::max(t0, n);
    t1 = std::min(t1, f);
    if (t0 > t1) return false;
  }
  return true;
}

std::optional<RayHit> Bvh::nearest_hit(const Vec3& origin, const Vec3& dir, double t_min) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv_dir = dir.cwiseInverse();
  double best = std::numeric_limits<double>::infinity();
  int best_face = -1;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!slab_test(node, origin, inv_dir, best)) continue;
    if (node.count > 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const Face& t = mesh_.faces[order_[i]];
        auto hit = intersect_triangle(origin, dir, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]],
                                      t_min);
        if (hit && (*hit < best || (*hit == best && order_[i] < best_face))) {
          best = *hit;
          best_face = order_[i];
        }
      }
    } else {
      stack.push_back(-node.count);
      stack.push_back(node.first);
    }
  }
  if (best_face < 0) return std::nullopt;
  return RayHit{best, best_face};
}

void Bvh::for_each_hit(const Vec3& origin, const Vec3& dir, double t_min,
                       const std::function<void(const RayHit&)>& visit) const {
  if (nodes_.empty()) return;
  const Vec3 inv_dir = dir.cwiseInverse();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (!slab_test(node, origin, inv_dir, inf)) continue;
    if (node.count > 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const Face& t = mesh_.faces[order_[i]];
        auto hit = intersect_triangle(origin, dir, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]],
                                      t_min);
        if (hit) visit({*hit, order_[i]});
      }
    } else {
      stack.push_back(-node.count);
      stack.push_back(node.first);
    }
  }
}

}  // namespace oplanes
