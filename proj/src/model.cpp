#include "oplanes/model.hpp"

#include <cmath>

#include "oplanes/parallel.hpp"
#include "oplanes/random.hpp"
#include "oplanes/representation.hpp"

namespace oplanes {

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_scale() {
  ModelConfig c;
  c.input_h = c.input_w = 128;
  c.fine_h = c.fine_w = 64;
  c.coarse_h = c.coarse_w = 32;
  c.encoder_widths = {8, 16, 32, 32};
  c.enc_channels = 32;
  c.head_channels = 16;
  c.desk = true;
  return c;
}

void ModelConfig::validate() const {
  if (input_h <= 0 || input_w <= 0 || input_h % 16 || input_w % 16)
    throw ConfigError("input resolution must be a positive multiple of 16");
  if (fine_h * 2 != input_h || fine_w * 2 != input_w) throw ConfigError("fine planes must be half the input size");
  if (coarse_h * 4 != input_h || coarse_w * 4 != input_w)
    throw ConfigError("coarse planes must be a quarter of the input size");
  for (int w : encoder_widths)
    if (w <= 0) throw ConfigError("encoder widths must be positive");
  if (enc_channels <= 0 || head_channels <= 0) throw ConfigError("feature widths must be positive");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["input_h"] = std::to_string(input_h);
  kv["input_w"] = std::to_string(input_w);
  kv["fine_h"] = std::to_string(fine_h);
  kv["fine_w"] = std::to_string(fine_w);
  kv["coarse_h"] = std::to_string(coarse_h);
  kv["coarse_w"] = std::to_string(coarse_w);
  std::string widths;
  for (int i = 0; i < 4; ++i) widths += (i ? "," : "") + std::to_string(encoder_widths[i]);
  kv["encoder_widths"] = widths;
  kv["enc_channels"] = std::to_string(enc_channels);
  kv["head_channels"] = std::to_string(head_channels);
  kv["spatial_1x1"] = spatial_1x1 ? "1" : "0";
  kv["desk"] = desk ? "1" : "0";
  return kv;
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto get_int = [&](const char* key, int& out) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("model config missing key ") + key);
    try {
      out = std::stoi(it->second);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad integer for ") + key + ": " + it->second);
    }
  };
  get_int("input_h", c.input_h);
  get_int("input_w", c.input_w);
  get_int("fine_h", c.fine_h);
  get_int("fine_w", c.fine_w);
  get_int("coarse_h", c.coarse_h);
  get_int("coarse_w", c.coarse_w);
  get_int("enc_channels", c.enc_channels);
  get_int("head_channels", c.head_channels);
  int flag = 0;
  get_int("spatial_1x1", flag);
  c.spatial_1x1 = flag != 0;
  get_int("desk", flag);
  c.desk = flag != 0;
  auto it = kv.find("encoder_widths");
  if (it == kv.end()) throw ConfigError("model config missing key encoder_widths");
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    const std::size_t comma = it->second.find(',', pos);
    try {
      c.encoder_widths[i] = std::stoi(it->second.substr(pos, comma - pos));
    } catch (const std::exception&) {
      throw ConfigError("bad encoder_widths: " + it->second);
    }
    if ((comma == std::string::npos) != (i == 3)) throw ConfigError("encoder_widths needs 4 entries");
    pos = comma + 1;
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

template <typename T>
OPlanesModel<T>::OPlanesModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& w = config_.encoder_widths;
  const int ce = config_.enc_channels, ch = config_.head_channels;
  int in = 5;
  for (int s = 0; s < 4; ++s) {
    stages_[s] = Block("enc.stage" + std::to_string(s + 1), in, w[s], 3, true, true);
    in = w[s];
  }
  for (int l = 0; l < 3; ++l) laterals_[l] = Block("enc.lateral" + std::to_string(l + 2), w[l + 1], ce, 1, false, false);
  smooth_ = Block("enc.smooth", ce, ce, 3, false, false);

  // The last f_RGB layer stays linear so the coarse inner product can go
  // negative; with a ReLU on both factors every coarse logit would be >= 0.
  rgb_head_ = {Block("rgb.0", ce, ch, 3, true, true), Block("rgb.1", ch, ch, 3, true, true),
               Block("rgb.2", ch, ch, 1, false, false)};
  depth_head_ = {Block("depth.0", kPeChannels, ch, 1, true, true), Block("depth.1", ch, ch, 1, true, true)};

  // Per-pixel ablation: 1x1 kernels and no group norm, whose statistics would
  // otherwise couple pixels.
  const int k = config_.spatial_1x1 ? 1 : 3;
  const bool norm = !config_.spatial_1x1;
  spatial_head_ = {Block("spatial.0", 2 * ch, ch, k, norm, true), Block("spatial.1", ch, ch, k, norm, true),
                   Block("spatial.2", ch, 1, 1, false, false)};
}

template <typename T>
void OPlanesModel<T>::init(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6d6f64656cULL);
  for (auto& b : stages_) b.init(rng);
  for (auto& b : laterals_) b.init(rng);
  smooth_.init(rng);
  for (auto& b : rgb_head_) b.init(rng);
  for (auto& b : depth_head_) b.init(rng);
  for (auto& b : spatial_head_) b.init(rng);
}

template <typename T>
std::vector<nn::Param<T>*> OPlanesModel<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  for (auto& b : stages_) b.collect(out);
  for (auto& b : laterals_) b.collect(out);
  smooth_.collect(out);
  for (auto& b : rgb_head_) b.collect(out);
  for (auto& b : depth_head_) b.collect(out);
  for (auto& b : spatial_head_) b.collect(out);
  return out;
}

template <typename T>
std::size_t OPlanesModel<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void OPlanesModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Encoder: four avg-pool + conv stages down to H/16, then top-down fusion of
// the H/4, H/8 and H/16 levels back to H/4.

template <typename T>
auto OPlanesModel<T>::encoder_forward(const Tensor& image, EncoderCache* cache) const -> Tensor {
  if (image.ndim() != 3 || image.channels() != 5 || image.height() != config_.input_h ||
      image.width() != config_.input_w)
    throw ShapeError("encoder expects 5 x " + std::to_string(config_.input_h) + " x " +
                     std::to_string(config_.input_w) + " input, got " + image.shape_string());
  ++encoder_calls_;
  std::array<Tensor, 5> x;
  x[0] = image;
  for (int s = 0; s < 4; ++s) {
    Tensor pooled = nn::avg_pool2(x[s]);
    x[s + 1] = stages_[s].forward(pooled, cache ? &cache->stages[s] : nullptr);
    if (cache) cache->pooled[s] = std::move(pooled);
  }
  std::array<Tensor, 3> lat;
  for (int l = 0; l < 3; ++l) lat[l] = laterals_[l].forward(x[l + 2], cache ? &cache->laterals[l] : nullptr);
  Tensor p = lat[2];
  for (int l = 1; l >= 0; --l) p = nn::add(lat[l], nn::bilinear_upsample(p, lat[l].height(), lat[l].width()));
  return smooth_.forward(p, cache ? &cache->smooth : nullptr);
}

template <typename T>
void OPlanesModel<T>::encoder_backward(const EncoderCache& cache, const Tensor& grad_out) {
  Tensor g_p = smooth_.backward(cache.smooth, grad_out);
  std::array<Tensor, 3> g_lat;
  for (int l = 0; l < 3; ++l) {
    g_lat[l] = g_p;
    if (l < 2) {
      const Tensor& below = cache.laterals[l + 1].output;
      g_p = nn::bilinear_upsample_backward(g_p, below.height(), below.width());
    }
  }
  std::array<Tensor, 5> g_x;
  for (int l = 0; l < 3; ++l) g_x[l + 2] = laterals_[l].backward(cache.laterals[l], g_lat[l]);
  for (int s = 3; s >= 0; --s) {
    Tensor g_pooled = stages_[s].backward(cache.stages[s], g_x[s + 1], s > 0);
    if (s == 0) break;
    Tensor g = nn::avg_pool2_backward(g_pooled);
    if (g_x[s].empty())
      g_x[s] = std::move(g);
    else
      nn::add_inplace(g_x[s], g);
  }
}

// ---------------------------------------------------------------------------
// Heads.

namespace {

template <typename T, typename Block, typename Cache>
nn::Tensor<T> run_head(const std::vector<Block>& blocks, const nn::Tensor<T>& x, Cache* cache) {
  if (cache) cache->layers.resize(blocks.size());
  nn::Tensor<T> y = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) y = blocks[i].forward(y, cache ? &cache->layers[i] : nullptr);
  return y;
}

template <typename T, typename Block, typename Cache>
nn::Tensor<T> run_head_backward(std::vector<Block>& blocks, const Cache& cache, const nn::Tensor<T>& grad,
                                bool need_input_grad) {
  nn::Tensor<T> g = grad;
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(cache.layers[i], g, i > 0 || need_input_grad);
  return g;
}

template <typename T>
void require_channels(const nn::Tensor<T>& x, int channels, const char* what) {
  if (x.ndim() != 3 || x.channels() != channels)
    throw ShapeError(std::string(what) + " expects " + std::to_string(channels) + " channels, got " +
                     x.shape_string());
}

}  // namespace

template <typename T>
auto OPlanesModel<T>::rgb_head_forward(const Tensor& enc, HeadCache* cache) const -> Tensor {
  require_channels(enc, config_.enc_channels, "rgb head");
  return run_head(rgb_head_, enc, cache);
}

template <typename T>
auto OPlanesModel<T>::rgb_head_backward(const HeadCache& cache, const Tensor& grad_out) -> Tensor {
  return run_head_backward(rgb_head_, cache, grad_out, true);
}

template <typename T>
auto OPlanesModel<T>::depth_head_forward(const Tensor& diff, HeadCache* cache) const -> Tensor {
  require_channels(diff, kPeChannels, "depth head");
  return run_head(depth_head_, diff, cache);
}

template <typename T>
void OPlanesModel<T>::depth_head_backward(const HeadCache& cache, const Tensor& grad_out) {
  run_head_backward(depth_head_, cache, grad_out, false);
}

template <typename T>
auto OPlanesModel<T>::spatial_head_forward(const Tensor& fused, HeadCache* cache) const -> Tensor {
  require_channels(fused, 2 * config_.head_channels, "spatial head");
  return run_head(spatial_head_, fused, cache);
}

template <typename T>
auto OPlanesModel<T>::spatial_head_backward(const HeadCache& cache, const Tensor& grad_out) -> Tensor {
  return run_head_backward(spatial_head_, cache, grad_out, true);
}

// ---------------------------------------------------------------------------

template <typename T>
void OPlanesModel<T>::check_sample(const SampleInputs<T>& s, const std::vector<double>& depths) const {
  const auto& c = config_;
  if (s.image.ndim() != 3 || s.image.channels() != 5 || s.image.height() != c.input_h ||
      s.image.width() != c.input_w)
    throw ShapeError("sample image must be 5 x " + std::to_string(c.input_h) + " x " + std::to_string(c.input_w) +
                     ", got " + s.image.shape_string());
  if (s.depth_fine.width != c.fine_w || s.depth_fine.height != c.fine_h)
    throw ShapeError("fine depth map has the wrong resolution");
  if (s.depth_coarse.width != c.coarse_w || s.depth_coarse.height != c.coarse_h)
    throw ShapeError("coarse depth map has the wrong resolution");
  s.range.validate();
  if (depths.empty()) throw DomainError("no query depths");
  const double tol = 1e-9 * std::max(1.0, std::abs(s.range.z_max));
  for (double z : depths)
    if (!std::isfinite(z) || z < s.range.z_min - tol || z > s.range.z_max + tol)
      throw DomainError("query depth " + std::to_string(z) + " outside [" + std::to_string(s.range.z_min) + ", " +
                        std::to_string(s.range.z_max) + "]");
}

template <typename T>
auto OPlanesModel<T>::fine_logits_from_diff(const Tensor& rgb_fine, const Tensor& diff_fine) const -> Tensor {
  const Tensor fz = depth_head_forward(diff_fine, nullptr);
  return spatial_head_forward(nn::concat_channels(rgb_fine, fz), nullptr);
}

template <typename T>
auto OPlanesModel<T>::image_features(const SampleInputs<T>& sample) const -> ImageFeatures {
  ImageFeatures f;
  f.rgb_coarse = rgb_head_forward(encoder_forward(sample.image, nullptr), nullptr);
  f.rgb_fine = nn::bilinear_upsample(f.rgb_coarse, config_.fine_h, config_.fine_w);
  return f;
}

template <typename T>
ForwardOutput<T> OPlanesModel<T>::predict_planes(const SampleInputs<T>& sample,
                                                 const std::vector<double>& depths) const {
  check_sample(sample, depths);
  return predict_planes(sample, depths, image_features(sample));
}

template <typename T>
ForwardOutput<T> OPlanesModel<T>::predict_planes(const SampleInputs<T>& sample, const std::vector<double>& depths,
                                                 const ImageFeatures& features) const {
  check_sample(sample, depths);
  const auto& c = config_;
  if (features.rgb_coarse.ndim() != 3 || features.rgb_coarse.channels() != c.head_channels ||
      features.rgb_coarse.height() != c.coarse_h || features.rgb_coarse.width() != c.coarse_w)
    throw ShapeError("image features do not match the model configuration");
  ForwardOutput<T> out;
  out.rgb_coarse = features.rgb_coarse;
  out.rgb_fine = features.rgb_fine;
  const int n = int(depths.size());
  out.fine_logits = Tensor({n, 1, c.fine_h, c.fine_w});
  out.coarse_logits = Tensor({n, 1, c.coarse_h, c.coarse_w});
  const double missing = sample.missing_depth();
  const DepthEncoding enc_c(sample.depth_coarse, missing), enc_f(sample.depth_fine, missing);
  parallel_for(depths.size(), [&](std::size_t i) {
    const double z = depths[i];
    const Tensor fz_c = depth_head_forward(enc_c.at<T>(z), nullptr);
    out.coarse_logits.set_slice(int(i), nn::pixelwise_inner_product(out.rgb_coarse, fz_c));
    out.fine_logits.set_slice(int(i), fine_logits_from_diff(out.rgb_fine, enc_f.at<T>(z)));
  });
  return out;
}

template <typename T>
void OPlanesModel<T>::forward_backward(const SampleInputs<T>& sample, const std::vector<double>& depths,
                                       const PlaneLossFn& loss) {
  check_sample(sample, depths);
  const auto& c = config_;
  EncoderCache enc_cache;
  HeadCache rgb_cache;
  const Tensor rgb_c = rgb_head_forward(encoder_forward(sample.image, &enc_cache), &rgb_cache);
  const Tensor rgb_f = nn::bilinear_upsample(rgb_c, c.fine_h, c.fine_w);
  Tensor g_rgb_c = Tensor::zeros_like(rgb_c);
  Tensor g_rgb_f = Tensor::zeros_like(rgb_f);
  const double missing = sample.missing_depth();
  const DepthEncoding enc_c(sample.depth_coarse, missing), enc_f(sample.depth_fine, missing);

  for (std::size_t i = 0; i < depths.size(); ++i) {
    const double z = depths[i];
    HeadCache dc_cache, df_cache, sp_cache;
    const Tensor fz_c = depth_head_forward(enc_c.at<T>(z), &dc_cache);
    const Tensor coarse = nn::pixelwise_inner_product(rgb_c, fz_c).reshaped({1, 1, c.coarse_h, c.coarse_w});
    const Tensor fz_f = depth_head_forward(enc_f.at<T>(z), &df_cache);
    const Tensor fine =
        spatial_head_forward(nn::concat_channels(rgb_f, fz_f), &sp_cache).reshaped({1, 1, c.fine_h, c.fine_w});

    Tensor g_fine = Tensor::zeros_like(fine), g_coarse = Tensor::zeros_like(coarse);
    loss(i, fine, coarse, g_fine, g_coarse);
    if (!g_fine.same_shape(fine) || !g_coarse.same_shape(coarse))
      throw ShapeError("plane loss returned gradients of the wrong shape");

    const Tensor g_fused = spatial_head_backward(sp_cache, g_fine.reshaped({1, c.fine_h, c.fine_w}));
    auto [g_rf, g_fzf] = nn::split_channels(g_fused, c.head_channels);
    nn::add_inplace(g_rgb_f, g_rf);
    depth_head_backward(df_cache, g_fzf);

    Tensor g_rc, g_fzc;
    nn::pixelwise_inner_product_backward(rgb_c, fz_c, g_coarse.reshaped({1, c.coarse_h, c.coarse_w}), g_rc, g_fzc);
    nn::add_inplace(g_rgb_c, g_rc);
    depth_head_backward(dc_cache, g_fzc);
  }
  nn::add_inplace(g_rgb_c, nn::bilinear_upsample_backward(g_rgb_f, c.coarse_h, c.coarse_w));
  encoder_backward(enc_cache, rgb_head_backward(rgb_cache, g_rgb_c));
}

template class OPlanesModel<float>;
template class OPlanesModel<double>;

}  // namespace oplanes
