#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "oplanes/camera.hpp"
#include "oplanes/layers.hpp"

namespace oplanes {

// Network shape. Resolutions keep the 1 : 1/2 : 1/4 ratio between the input
// image, the fine planes and the coarse planes.
struct ModelConfig {
  int input_h = 512;
  int input_w = 512;
  int fine_h = 256;    // H_O
  int fine_w = 256;    // W_O
  int coarse_h = 128;  // h_O
  int coarse_w = 128;  // w_O
  std::array<int, 4> encoder_widths = {32, 64, 128, 256};
  int enc_channels = 256;
  int head_channels = 128;
  // Ablation: 1x1 kernels (and no cross-pixel normalization) in the spatial
  // network, turning it into a per-pixel classifier.
  bool spatial_1x1 = false;
  bool desk = false;

  static ModelConfig full();
  // 128 x 128 input, 64 x 64 fine planes, 32 x 32 coarse planes, narrow
  // widths. Same topology as full().
  static ModelConfig desk_scale();

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

// Per-image network input.
template <typename T>
struct SampleInputs {
  nn::Tensor<T> image;      // 5 x H x W augmented RGB
  DepthMap depth_fine;      // H_O x W_O, +inf outside the object
  DepthMap depth_coarse;    // h_O x w_O
  FrustumRange range;       // planes must lie inside
  // Depth assumed where none was observed: the far end of the default
  // inference frustum. Anchoring it to z_min rather than range.z_max keeps
  // the background encoding (and the group-norm statistics it feeds) the
  // same whether the range came from a GT mesh or the inference heuristic.
  double missing_depth() const { return range.z_min + kInferenceDepthRange; }
};

template <typename T>
struct ForwardOutput {
  nn::Tensor<T> fine_logits;    // N x 1 x H_O x W_O
  nn::Tensor<T> coarse_logits;  // N x 1 x h_O x w_O
  nn::Tensor<T> rgb_coarse;     // C_head x h_O x w_O
  nn::Tensor<T> rgb_fine;       // C_head x H_O x W_O (bilinear upsampled)
};

template <typename T>
class OPlanesModel {
 public:
  using Tensor = nn::Tensor<T>;
  using Block = nn::ConvBlock<T>;

  explicit OPlanesModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  void init(std::uint64_t seed);
  // Stable order: encoder, rgb head, depth head, spatial head.
  std::vector<nn::Param<T>*> parameters();
  std::size_t parameter_count();
  void zero_grad();

  // ---- sub-networks -------------------------------------------------------
  struct EncoderCache {
    std::array<Tensor, 4> pooled;
    std::array<typename Block::Cache, 4> stages;
    std::array<typename Block::Cache, 3> laterals;  // levels H/4, H/8, H/16
    typename Block::Cache smooth;
  };
  struct HeadCache {
    std::vector<typename Block::Cache> layers;
  };

  Tensor encoder_forward(const Tensor& image, EncoderCache* cache) const;
  void encoder_backward(const EncoderCache& cache, const Tensor& grad_out);

  Tensor rgb_head_forward(const Tensor& enc, HeadCache* cache) const;
  Tensor rgb_head_backward(const HeadCache& cache, const Tensor& grad_out);

  Tensor depth_head_forward(const Tensor& diff, HeadCache* cache) const;
  void depth_head_backward(const HeadCache& cache, const Tensor& grad_out);

  Tensor spatial_head_forward(const Tensor& fused, HeadCache* cache) const;
  Tensor spatial_head_backward(const HeadCache& cache, const Tensor& grad_out);

  // ---- full pass ----------------------------------------------------------
  struct ImageFeatures {
    Tensor rgb_coarse;  // C_head x h_O x w_O
    Tensor rgb_fine;    // C_head x H_O x W_O
  };
  // Encoder + f_RGB, once per image.
  ImageFeatures image_features(const SampleInputs<T>& sample) const;

  // Image features are computed once; every depth reuses them.
  ForwardOutput<T> predict_planes(const SampleInputs<T>& sample, const std::vector<double>& depths) const;
  // Same, with features from image_features() (e.g. when sweeping planes in
  // chunks).
  ForwardOutput<T> predict_planes(const SampleInputs<T>& sample, const std::vector<double>& depths,
                                  const ImageFeatures& features) const;

  // Receives the logits of plane i and must fill the loss gradients w.r.t.
  // them (same shapes). Planes are processed one at a time, so per-plane
  // activations never accumulate.
  using PlaneLossFn = std::function<void(std::size_t plane, const Tensor& fine_logits, const Tensor& coarse_logits,
                                         Tensor& grad_fine, Tensor& grad_coarse)>;
  // Forward and backward over all depths; parameter gradients accumulate.
  void forward_backward(const SampleInputs<T>& sample, const std::vector<double>& depths, const PlaneLossFn& loss);

  // Fine logits for one plane given a precomputed fine depth-difference
  // image and the upsampled image feature.
  Tensor fine_logits_from_diff(const Tensor& rgb_fine, const Tensor& diff_fine) const;

  std::size_t encoder_calls() const { return encoder_calls_.load(); }

 private:
  void check_sample(const SampleInputs<T>& sample, const std::vector<double>& depths) const;

  ModelConfig config_;
  std::array<Block, 4> stages_;
  std::array<Block, 3> laterals_;
  Block smooth_;
  std::vector<Block> rgb_head_;
  std::vector<Block> depth_head_;
  std::vector<Block> spatial_head_;
  mutable std::atomic<std::size_t> encoder_calls_{0};
};

}  // namespace oplanes
