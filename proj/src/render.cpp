#include "oplanes/render.hpp"

#include <limits>

#include "oplanes/parallel.hpp"

namespace oplanes {

namespace {

template <typename HitFn>
RenderResult render_with(const TriangleMesh& mesh, const CameraIntrinsics& cam, HitFn&& nearest) {
  cam.validate();
  RenderResult r;
  const float inf = std::numeric_limits<float>::infinity();
  r.depth = DepthMap(cam.width, cam.height, 1, inf);
  r.mask = Mask(cam.width, cam.height, 1, 0);
  r.normals = Image<float>(cam.width, cam.height, 3, 0.0f);
  r.face = Image<int>(cam.width, cam.height, 1, -1);
  parallel_for(cam.height, [&](std::size_t row) {
    const int v = int(row);
    for (int u = 0; u < cam.width; ++u) {
      const Vec3 dir = unproject(cam, {double(u), double(v)}, 1.0);
      const auto hit = nearest(dir);
      if (!hit) continue;
      const Vec3 n = mesh.face_normal(hit->face);
      r.depth.at(u, v) = float(hit->t);
      r.mask.at(u, v) = 1;
      for (int c = 0; c < 3; ++c) r.normals.at(u, v, c) = float(n[c]);
      r.face.at(u, v) = hit->face;
    }
  });
  return r;
}

}  // namespace

RenderResult raycast_render(const TriangleMesh& mesh, const CameraIntrinsics& cam) {
  const Bvh bvh(mesh);
  return render_with(mesh, cam, [&](const Vec3& dir) { return bvh.nearest_hit(Vec3::Zero(), dir); });
}

RenderResult raycast_render_bruteforce(const TriangleMesh& mesh, const CameraIntrinsics& cam) {
  return render_with(mesh, cam, [&](const Vec3& dir) -> std::optional<RayHit> {
    std::optional<RayHit> best;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      const Face& t = mesh.faces[f];
      auto hit = intersect_triangle(Vec3::Zero(), dir, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
      if (hit && (!best || *hit < best->t)) best = RayHit{*hit, int(f)};
    }
    return best;
  });
}

}  // namespace oplanes
