#pragma once

#include "oplanes/bvh.hpp"

namespace oplanes {

struct RenderResult {
  DepthMap depth;        // +inf where the ray misses
  Mask mask;             // 1 where the ray hits
  Image<float> normals;  // 3 channels, unit face normal of the hit (zero on misses)
  Image<int> face;       // hit face index, -1 on misses
};

// Casts one ray per pixel center from the camera origin and keeps the
// nearest hit. Depth is the z coordinate of the hit point.
RenderResult raycast_render(const TriangleMesh& mesh, const CameraIntrinsics& cam);

// Same, without an acceleration structure: every ray tests every triangle.
// Reference path for tests.
RenderResult raycast_render_bruteforce(const TriangleMesh& mesh, const CameraIntrinsics& cam);

}  // namespace oplanes
