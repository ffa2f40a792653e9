#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "oplanes/image.hpp"

namespace oplanes {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// Pinhole camera. The camera looks down +z with +x right and +y down; pixel
// (u, v) is (column, row) and pixel centers sit at integer coordinates, so
// the image rectangle spans [-0.5, width - 0.5) x [-0.5, height - 0.5).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const;

  // Camera for an image downsampled by an integer factor, keeping the
  // top-left pixel of each block: low-res pixel i sits at full-res pixel
  // factor * i.
  CameraIntrinsics downscaled(int factor) const;

  bool in_image(double u, double v) const {
    return u >= -0.5 && u < width - 0.5 && v >= -0.5 && v < height - 0.5;
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

struct FrustumRange {
  double z_min = 0.0;
  double z_max = 0.0;

  double extent() const { return z_max - z_min; }
  void validate() const;
};

// Default inference-time depth window beyond the nearest observed point.
inline constexpr double kInferenceDepthRange = 2.0;

Vec2 project(const CameraIntrinsics& cam, const Vec3& p);
Vec3 unproject(const CameraIntrinsics& cam, const Vec2& pixel, double z);

// Training mode passes the ground-truth mesh's furthest depth; inference mode
// leaves it empty and uses z_min + inference_range.
FrustumRange compute_depth_range(const DepthMap& depth, const Mask& mask,
                                 std::optional<double> gt_max_depth = std::nullopt,
                                 double inference_range = kInferenceDepthRange);

// Volume-uniform samples in the frustum between z_min and z_max: (u, v)
// uniform over the image rectangle and z with density proportional to z^2.
std::vector<Vec3> frustum_sample_points(const CameraIntrinsics& cam, const FrustumRange& range, std::size_t n,
                                        std::uint64_t seed);

// key=value text, one camera per file.
CameraIntrinsics load_camera(const std::filesystem::path& path);
void save_camera(const CameraIntrinsics& cam, const std::filesystem::path& path);

}  // namespace oplanes
