#include "oplanes/inference.hpp"

#include <cmath>

namespace oplanes {

void ReconstructionConfig::validate() const {
  if (n_planes < 2) throw ConfigError("reconstruction needs at least 2 planes");
  if (!(iso > 0.0 && iso < 1.0)) throw ConfigError("iso level must lie in (0, 1)");
  if (!(z_range > 0.0)) throw ConfigError("depth range must be positive");
  if (chunk_size < 1) throw ConfigError("chunk size must be at least 1");
}

template <typename T>
SampleInputs<T> make_sample_inputs(const ModelConfig& config, const RgbImage& rgb, const DepthMap& depth,
                                   const Mask& mask, const FrustumRange& range) {
  if (rgb.width != config.input_w || rgb.height != config.input_h)
    throw ShapeError("image is " + std::to_string(rgb.width) + "x" + std::to_string(rgb.height) + ", model expects " +
                     std::to_string(config.input_w) + "x" + std::to_string(config.input_h));
  require_same_size(rgb, depth, "rgb/depth");
  require_same_size(rgb, mask, "rgb/mask");
  SampleInputs<T> s;
  if constexpr (std::is_same_v<T, float>)
    s.image = augment_rgb(rgb, mask);
  else
    s.image = augment_rgb(rgb, mask).template cast<T>();
  s.depth_fine = downsample_depth(depth, config.fine_w, config.fine_h);
  s.depth_coarse = downsample_depth(depth, config.coarse_w, config.coarse_h);
  s.range = range;
  return s;
}

template SampleInputs<float> make_sample_inputs<float>(const ModelConfig&, const RgbImage&, const DepthMap&,
                                                       const Mask&, const FrustumRange&);
template SampleInputs<double> make_sample_inputs<double>(const ModelConfig&, const RgbImage&, const DepthMap&,
                                                         const Mask&, const FrustumRange&);

Reconstruction reconstruct(const FineLogitsFn& predict, int fine_w, int fine_h, const DepthMap& depth,
                           const Mask& mask, const CameraIntrinsics& cam, const ReconstructionConfig& cfg,
                           bool keep_planes) {
  cfg.validate();
  if (cam.width != depth.width || cam.height != depth.height) throw ShapeError("camera size differs from the image");
  require_same_size(depth, mask, "depth/mask");
  Reconstruction rec;
  rec.range = compute_depth_range(depth, mask, std::nullopt, cfg.z_range);
  const auto depths = uniform_inference_depths(rec.range, cfg.n_planes);
  const Mask fine_mask = downsample_binary(mask, fine_w, fine_h);
  const DepthMap fine_depth = downsample_depth(depth, fine_w, fine_h);

  OPlaneStack stack;
  stack.camera = camera_at_resolution(cam, fine_w, fine_h);
  stack.range = rec.range;
  stack.binary = false;
  stack.planes.reserve(depths.size());
  const std::size_t hw = std::size_t(fine_w) * fine_h;
  for (std::size_t begin = 0; begin < depths.size(); begin += std::size_t(cfg.chunk_size)) {
    const std::size_t end = std::min(depths.size(), begin + std::size_t(cfg.chunk_size));
    const std::vector<double> chunk(depths.begin() + long(begin), depths.begin() + long(end));
    const nn::Tensorf logits_all = predict(rec.range, chunk);
    if (logits_all.size() != chunk.size() * hw) throw ShapeError("plane predictor returned " + logits_all.shape_string());
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      OPlane plane{chunk[k], Image<float>(fine_w, fine_h)};
      const float* logits = logits_all.data() + k * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        float p = nn::sigmoid(logits[i]);
        if (cfg.mask_gating && !fine_mask.data[i]) p = 0.0f;
        if (cfg.zero_in_front && chunk[k] < fine_depth.data[i]) p = 0.0f;
        plane.values.data[i] = p;
      }
      stack.planes.push_back(std::move(plane));
    }
  }
  rec.mesh = marching_cubes(planes_to_grid(stack), cfg.iso);
  rec.empty = rec.mesh.empty();
  if (keep_planes) rec.planes = std::move(stack);
  return rec;
}

Reconstruction reconstruct(const OPlanesModel<float>& model, const RgbImage& rgb, const DepthMap& depth,
                           const Mask& mask, const CameraIntrinsics& cam, const ReconstructionConfig& cfg,
                           bool keep_planes) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (cam.width != rgb.width || cam.height != rgb.height) throw ShapeError("camera size differs from the image");
  const FrustumRange range = compute_depth_range(depth, mask, std::nullopt, cfg.z_range);
  const SampleInputs<float> inputs = make_sample_inputs<float>(mc, rgb, depth, mask, range);
  const auto features = model.image_features(inputs);
  const FineLogitsFn predict = [&](const FrustumRange&, const std::vector<double>& chunk) {
    return model.predict_planes(inputs, chunk, features).fine_logits;
  };
  return reconstruct(predict, mc.fine_w, mc.fine_h, depth, mask, cam, cfg, keep_planes);
}

VoxelGrid planes_to_grid(const OPlaneStack& stack) {
  stack.validate();
  const std::size_t n = stack.planes.size();
  if (n < 2) throw ConfigError("a voxel grid needs at least 2 planes");
  const double step = (stack.planes.back().z - stack.planes.front().z) / double(n - 1);
  for (std::size_t k = 1; k < n; ++k) {
    const double d = stack.planes[k].z - stack.planes[k - 1].z;
    if (std::abs(d - step) > 1e-9 * step)
      throw ConfigError("planes are not evenly spaced (gap " + std::to_string(d) + " vs " + std::to_string(step) + ")");
  }
  VoxelGrid g;
  g.nx = stack.width();
  g.ny = stack.height();
  g.nz = int(n);
  g.camera = stack.camera;
  g.depths = stack.depths();
  const std::size_t hw = std::size_t(g.nx) * g.ny;
  g.values.resize(hw * n);
  for (std::size_t k = 0; k < n; ++k)
    std::copy(stack.planes[k].values.data.begin(), stack.planes[k].values.data.end(), g.values.begin() + long(k * hw));
  return g;
}

OPlaneStack grid_to_planes(const VoxelGrid& grid, bool binary) {
  grid.validate();
  OPlaneStack s;
  s.camera = grid.camera;
  s.range = {grid.depths.front(), grid.depths.back()};
  s.binary = binary;
  const std::size_t hw = std::size_t(grid.nx) * grid.ny;
  for (int k = 0; k < grid.nz; ++k) {
    OPlane p{grid.depths[k], Image<float>(grid.nx, grid.ny)};
    std::copy(grid.values.begin() + long(k * hw), grid.values.begin() + long((k + 1) * hw), p.values.data.begin());
    s.planes.push_back(std::move(p));
  }
  return s;
}

}  // namespace oplanes
