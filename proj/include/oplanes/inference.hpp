#pragma once

#include <functional>

#include "oplanes/marching_cubes.hpp"
#include "oplanes/model.hpp"
#include "oplanes/representation.hpp"

namespace oplanes {

struct ReconstructionConfig {
  int n_planes = 256;
  double iso = 0.5;
  double z_range = kInferenceDepthRange;
  bool mask_gating = true;       // zero probabilities outside the mask
  bool zero_in_front = false;    // zero probabilities in front of the observed depth
  int chunk_size = 16;           // planes per forward call; bounds peak memory
  void validate() const;
};

// Network inputs for one image. rgb/depth/mask are at the model's input
// resolution; depth is resampled to both plane resolutions.
template <typename T>
SampleInputs<T> make_sample_inputs(const ModelConfig& config, const RgbImage& rgb, const DepthMap& depth,
                                   const Mask& mask, const FrustumRange& range);

struct Reconstruction {
  TriangleMesh mesh;           // camera coordinates
  OPlaneStack planes;          // probabilities, kept when requested
  FrustumRange range;
  bool empty = false;          // no voxel above iso; mesh is empty
};

// Fine logits (N x 1 x h x w) for a chunk of plane depths inside `range`.
using FineLogitsFn = std::function<nn::Tensorf(const FrustumRange& range, const std::vector<double>& depths)>;

// Plane sweep over [z_min, z_min + z_range] with any predictor; the model
// overload below computes image features once and predicts chunk by chunk.
Reconstruction reconstruct(const FineLogitsFn& predict, int fine_w, int fine_h, const DepthMap& depth,
                           const Mask& mask, const CameraIntrinsics& cam, const ReconstructionConfig& cfg = {},
                           bool keep_planes = false);

Reconstruction reconstruct(const OPlanesModel<float>& model, const RgbImage& rgb, const DepthMap& depth,
                           const Mask& mask, const CameraIntrinsics& cam, const ReconstructionConfig& cfg = {},
                           bool keep_planes = false);

// Slice k of the grid is plane k; planes must be evenly spaced.
VoxelGrid planes_to_grid(const OPlaneStack& stack);
OPlaneStack grid_to_planes(const VoxelGrid& grid, bool binary = false);

}  // namespace oplanes
