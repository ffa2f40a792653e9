#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "oplanes/inside.hpp"
#include "oplanes/random.hpp"
#include "oplanes/tensor.hpp"

namespace oplanes {

// ---------------------------------------------------------------------------
// Occupancy planes.

// One fronto-parallel slice at depth z: per pixel, whether the point
// unprojected to depth z lies inside the shape. Binary for ground truth,
// probabilities for predictions.
struct OPlane {
  double z = 0.0;
  Image<float> values;
};

struct OPlaneStack {
  CameraIntrinsics camera;  // at plane resolution
  FrustumRange range;
  std::vector<OPlane> planes;  // strictly increasing z inside range
  bool binary = true;

  int width() const { return camera.width; }
  int height() const { return camera.height; }
  std::vector<double> depths() const;
  void validate() const;
};

// Camera for planes of out_w x out_h taken from a full-resolution camera by
// integer nearest (top-left) downsampling.
CameraIntrinsics camera_at_resolution(const CameraIntrinsics& full, int out_w, int out_h);

// Per-pixel signed surface crossings along each camera ray, precomputed once
// per (mesh, camera). Any number of planes can then be read off in
// O(pixels): the winding number of the point at depth z on a pixel's ray is
// the signed count of crossings beyond z (exits +1, entries -1), which for a
// closed mesh equals the generalized winding number.
class OccupancyRaster {
 public:
  OccupancyRaster(const InsideTester& tester, const CameraIntrinsics& camera);

  bool occupied(int u, int v, double z) const;
  OPlane plane(double z) const;
  OPlaneStack stack(const std::vector<double>& depths, const FrustumRange& range) const;
  const CameraIntrinsics& camera() const { return camera_; }

 private:
  struct Crossing {
    float depth;
    int winding_beyond;  // sum of signs of this and all later crossings
  };
  CameraIntrinsics camera_;
  std::vector<std::uint32_t> offsets_;  // per pixel, into crossings_
  std::vector<Crossing> crossings_;
};

// Ground-truth plane at depth z and resolution out_w x out_h.
OPlane gt_oplane(const TriangleMesh& mesh, const CameraIntrinsics& cam, double z, int out_w, int out_h);

// Sorted i.i.d. uniform depths in [z_min, z_max].
std::vector<double> sample_train_depths(const FrustumRange& range, int n, Rng& rng);
// n evenly spaced depths including both ends.
std::vector<double> uniform_inference_depths(const FrustumRange& range, int n);

// ---------------------------------------------------------------------------
// Depth conditioning.

inline constexpr int kPeChannels = 64;

// PE_{2t}(pos) = sin(50 pos / 200^(2t/64)), PE_{2t+1}(pos) = cos(same), t < 32.
std::array<double, kPeChannels> positional_encode(double pos);

// Nearest (top-left of each block) resampling to out_w x out_h; integer
// factors only.
DepthMap downsample_depth(const DepthMap& depth, int out_w, int out_h);
Mask downsample_binary(const Mask& mask, int out_w, int out_h);
Image<float> downsample_binary(const Image<float>& img, int out_w, int out_h);

// PE(z - depth[x, y]) per pixel, channel-major (64 x h x w). Pixels without a
// finite depth use `missing_depth` instead (the far end of the frustum).
template <typename T>
nn::Tensor<T> depth_diff_image(const DepthMap& depth_at_res, double z, double missing_depth);

template <typename T>
nn::Tensor<T> depth_diff_image(const DepthMap& depth, double z, int out_h, int out_w, double missing_depth);

// Per-pixel sin/cos of every PE frequency times the observed depth, so the
// difference image at any plane depth is a few multiply-adds per element
// (angle subtraction) instead of 64 trig calls.
class DepthEncoding {
 public:
  DepthEncoding() = default;
  DepthEncoding(const DepthMap& depth_at_res, double missing_depth);
  int height() const { return h_; }
  int width() const { return w_; }
  template <typename T>
  nn::Tensor<T> at(double z) const;

 private:
  int h_ = 0, w_ = 0;
  std::vector<double> sin_, cos_;  // [t][pixel]
};

// ---------------------------------------------------------------------------
// Five-channel image input: RGB, distance to the mask boundary (normalized by
// the image diagonal) and Farid-filter gradient magnitude (normalized by its
// maximum).

inline constexpr std::array<double, 5> kFaridInterp = {0.030320, 0.249724, 0.439911, 0.249724, 0.030320};
inline constexpr std::array<double, 5> kFaridDeriv = {0.104550, 0.292315, 0.0, -0.292315, -0.104550};

// Foreground pixels with a 4-neighbour that is background or off-image.
Mask mask_boundary(const Mask& mask);
// Unsigned Euclidean distance (pixels) to the nearest boundary pixel.
Image<float> boundary_distance(const Mask& mask);
// Gradient magnitude of the grayscale image under the separable 5-tap Farid
// derivative pair, edges replicated.
Image<float> farid_edges(const RgbImage& rgb);

nn::Tensor<float> augment_rgb(const RgbImage& rgb, const Mask& mask);

// ---------------------------------------------------------------------------
// OPLN binary files.

void save_oplane_stack(const OPlaneStack& stack, const std::filesystem::path& path);
OPlaneStack load_oplane_stack(const std::filesystem::path& path);

}  // namespace oplanes
