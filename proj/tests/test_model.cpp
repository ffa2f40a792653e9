#include <gtest/gtest.h>

#include "oplanes/inference.hpp"
#include "oplanes/loss.hpp"
#include "oplanes/model.hpp"
#include "test_support.hpp"

using namespace oplanes;
using oplanes::fixtures::dot;
using oplanes::fixtures::random_tensor;

namespace {

ModelConfig tiny_config(bool spatial_1x1 = false) {
  ModelConfig c;
  c.input_h = c.input_w = 32;
  c.fine_h = c.fine_w = 16;
  c.coarse_h = c.coarse_w = 8;
  c.encoder_widths = {4, 4, 8, 8};
  c.enc_channels = 8;
  c.head_channels = 4;
  c.spatial_1x1 = spatial_1x1;
  return c;
}

template <typename T>
SampleInputs<T> synthetic_inputs(const ModelConfig& c, std::uint64_t seed) {
  RgbImage rgb(c.input_w, c.input_h, 3);
  Rng rng = make_rng(seed);
  for (auto& v : rgb.data) v = float(uniform01(rng));
  DepthMap depth(c.input_w, c.input_h, 1, std::numeric_limits<float>::infinity());
  Mask mask(c.input_w, c.input_h);
  for (int y = c.input_h / 4; y < 3 * c.input_h / 4; ++y)
    for (int x = c.input_w / 4; x < 3 * c.input_w / 4; ++x) {
      mask.at(x, y) = 1;
      depth.at(x, y) = float(1.5 + 0.2 * uniform01(rng));
    }
  const auto range = compute_depth_range(depth, mask);
  return make_sample_inputs<T>(c, rgb, depth, mask, range);
}

// Zero-initialized biases put ReLUs exactly on their kink wherever the input
// vanishes; central differences straddle it there. Nudge every parameter.
template <typename T>
void jitter(OPlanesModel<T>& model, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  for (auto* p : model.parameters())
    for (auto& v : p->value.values()) v += T(0.05 * (uniform01(rng) - 0.5));
}

}  // namespace

TEST(ModelConfig, PresetsAndRoundTrip) {
  const auto full = ModelConfig::full();
  EXPECT_EQ(full.input_h, 512);
  EXPECT_EQ(full.fine_h, 256);
  EXPECT_EQ(full.coarse_h, 128);
  EXPECT_EQ(full.head_channels, 128);
  const auto desk = ModelConfig::desk_scale();
  EXPECT_EQ(desk.input_h, 128);
  EXPECT_EQ(desk.fine_h, 64);
  EXPECT_EQ(desk.coarse_h, 32);
  EXPECT_EQ(desk.enc_channels, 32);
  const auto back = ModelConfig::from_map(desk.to_map());
  EXPECT_EQ(back.to_map(), desk.to_map());

  auto bad = desk;
  bad.fine_h = 48;
  EXPECT_THROW(bad.validate(), ConfigError);
  auto kv = desk.to_map();
  kv.erase("head_channels");
  EXPECT_THROW(ModelConfig::from_map(kv), ConfigError);
}

TEST(Model, OutputShapesAndSingleEncoderPass) {
  const auto c = tiny_config();
  OPlanesModel<float> model(c);
  model.init(1);
  const auto s = synthetic_inputs<float>(c, 2);
  const std::vector<double> depths{1.75, 1.8, 2.0, 2.5, 3.4};
  const auto before = model.encoder_calls();
  const auto out = model.predict_planes(s, depths);
  EXPECT_EQ(model.encoder_calls(), before + 1);
  EXPECT_EQ(out.fine_logits.shape(), (std::vector<int>{5, 1, 16, 16}));
  EXPECT_EQ(out.coarse_logits.shape(), (std::vector<int>{5, 1, 8, 8}));
  EXPECT_EQ(out.rgb_coarse.shape(), (std::vector<int>{4, 8, 8}));
  EXPECT_TRUE(out.fine_logits.all_finite());
}

TEST(Model, RejectsBadInputs) {
  const auto c = tiny_config();
  OPlanesModel<float> model(c);
  model.init(1);
  auto s = synthetic_inputs<float>(c, 2);
  EXPECT_THROW(model.predict_planes(s, {s.range.z_max + 0.5}), DomainError);
  EXPECT_THROW(model.predict_planes(s, {s.range.z_min - 0.1}), DomainError);
  s.image = nn::Tensorf({5, 16, 16});
  EXPECT_THROW(model.predict_planes(s, {2.0}), ShapeError);
}

TEST(Model, PlanesArePredictedIndependently) {
  const auto c = tiny_config();
  OPlanesModel<float> model(c);
  model.init(3);
  const auto s = synthetic_inputs<float>(c, 4);
  const std::vector<double> depths{1.75, 1.9, 2.3, 3.0};
  const auto all = model.predict_planes(s, depths);
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const auto one = model.predict_planes(s, {depths[i]});
    const auto a = all.fine_logits.slice(int(i)), b = one.fine_logits.slice(0);
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(a[k], b[k]);
  }
}

TEST(Model, SameSeedSameWeights) {
  const auto c = tiny_config();
  OPlanesModel<float> a(c), b(c), d(c);
  a.init(7);
  b.init(7);
  d.init(8);
  const auto pa = a.parameters(), pb = b.parameters(), pd = d.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    for (std::size_t k = 0; k < pa[i]->value.size(); ++k) {
      ASSERT_EQ(pa[i]->value[k], pb[i]->value[k]);
      any_diff |= pa[i]->value[k] != pd[i]->value[k];
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, PerPixelAblationDoesNotMixPixels) {
  const auto c = tiny_config(true);
  OPlanesModel<double> model(c);
  model.init(5);
  auto fused = random_tensor<double>({2 * c.head_channels, c.fine_h, c.fine_w}, 6);
  const auto base = model.spatial_head_forward(fused, nullptr);
  for (int ch = 0; ch < fused.channels(); ++ch) fused.at(ch, 5, 7) += 0.75;
  const auto moved = model.spatial_head_forward(fused, nullptr);
  for (int y = 0; y < c.fine_h; ++y)
    for (int x = 0; x < c.fine_w; ++x)
      if (y != 5 || x != 7) {
        EXPECT_EQ(moved.at(0, y, x), base.at(0, y, x));
      }
  EXPECT_NE(moved.at(0, 5, 7), base.at(0, 5, 7));

  // The 3x3 model does mix neighbours.
  OPlanesModel<double> full(tiny_config(false));
  full.init(5);
  auto f2 = random_tensor<double>({2 * c.head_channels, c.fine_h, c.fine_w}, 6);
  const auto b2 = full.spatial_head_forward(f2, nullptr);
  for (int ch = 0; ch < f2.channels(); ++ch) f2.at(ch, 5, 7) += 0.75;
  EXPECT_NE(full.spatial_head_forward(f2, nullptr).at(0, 5, 8), b2.at(0, 5, 8));
}

TEST(Model, FullModelGradientsMatchFiniteDifferences) {
  for (bool ablate : {false, true}) {
    const auto c = tiny_config(ablate);
    OPlanesModel<double> model(c);
    model.init(11);
    jitter(model, 10);
    const auto s = synthetic_inputs<double>(c, 12);
    const std::vector<double> depths{1.72, 1.9, 2.6};
    const auto probe_f = random_tensor<double>({3, 1, c.fine_h, c.fine_w}, 13);
    const auto probe_c = random_tensor<double>({3, 1, c.coarse_h, c.coarse_w}, 14);
    auto objective = [&] {
      const auto out = model.predict_planes(s, depths);
      return dot(out.fine_logits, probe_f) + dot(out.coarse_logits, probe_c);
    };
    model.zero_grad();
    model.forward_backward(s, depths, [&](std::size_t i, const nn::Tensord&, const nn::Tensord&, nn::Tensord& gf,
                                          nn::Tensord& gc) {
      gf = probe_f.slice(int(i)).reshaped(gf.shape());
      gc = probe_c.slice(int(i)).reshaped(gc.shape());
    });
    for (auto* p : model.parameters()) {
      auto loss = [&](const nn::Tensord& v) {
        const nn::Tensord saved = p->value;
        p->value = v;
        const double r = objective();
        p->value = saved;
        return r;
      };
      // Central differences at eps 1e-5 of an O(10) objective carry ~1e-9
      // of rounding noise.
      const auto r = nn::finite_difference_check(loss, p->value, p->grad, 1e-5, 6, 17, 1e-8);
      EXPECT_LT(r.max_relative_error, 1e-4)
          << p->name << (ablate ? " (1x1)" : "") << ": analytic " << r.analytic << ", numeric " << r.numeric;
    }
  }
}

TEST(Model, TrainingPassMatchesTotalLossGradient) {
  const auto c = tiny_config();
  OPlanesModel<double> model(c);
  model.init(21);
  jitter(model, 20);
  const auto s = synthetic_inputs<double>(c, 22);
  const std::vector<double> depths{1.72, 1.95};
  // Half-occupied synthetic targets at both resolutions.
  auto targets = [&](int w, int h) {
    LossTargets t;
    t.mask = downsample_binary(Mask(c.input_w, c.input_h, 1, 1), w, h);
    t.gt.camera = fixtures::square_camera(w);
    t.gt.range = s.range;
    for (double z : depths) {
      OPlane p{z, Image<float>(w, h)};
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x) p.values.at(x, y) = 1.0f;
      t.gt.planes.push_back(p);
      t.valid.push_back(Mask(w, h, 1, 1));
    }
    return t;
  };
  const auto fine = targets(c.fine_w, c.fine_h), coarse = targets(c.coarse_w, c.coarse_h);
  LossBreakdown acc;
  model.zero_grad();
  model.forward_backward(s, depths, plane_loss_fn<double>(fine, coarse, {}, true, acc));
  const auto direct = total_loss(model.predict_planes(s, depths), fine, coarse);
  EXPECT_NEAR(acc.total, direct.total, 1e-10);
  auto* p = model.parameters().front();
  auto loss = [&](const nn::Tensord& v) {
    const nn::Tensord saved = p->value;
    p->value = v;
    const double r = total_loss(model.predict_planes(s, depths), fine, coarse).total;
    p->value = saved;
    return r;
  };
  EXPECT_LT(nn::finite_difference_check(loss, p->value, p->grad, 1e-5, 8, 3).max_relative_error, 1e-4);
}
