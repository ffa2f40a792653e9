#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oplanes/train.hpp"
#include "test_support.hpp"

using namespace oplanes;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_h = c.input_w = 32;
  c.fine_h = c.fine_w = 16;
  c.coarse_h = c.coarse_w = 8;
  c.encoder_widths = {4, 4, 8, 8};
  c.enc_channels = 8;
  c.head_channels = 4;
  return c;
}

const std::vector<TrainingSample>& tiny_data() {
  static const auto data = [] {
    std::vector<TrainingSample> d;
    SceneSpec spec;
    spec.width = spec.height = 32;
    spec.grid_cells = 8;
    for (auto f : {ShapeFamily::sphere, ShapeFamily::box, ShapeFamily::capsule}) {
      spec.family = f;
      d.push_back(prepare_training_sample(generate_scene(spec, 40 + d.size()), tiny_config()));
    }
    return d;
  }();
  return data;
}

TrainConfig tiny_train(long iters) {
  TrainConfig cfg;
  cfg.iterations = iters;
  cfg.batch_size = 2;
  cfg.planes = 4;
  cfg.seed = 9;
  cfg.deterministic = true;
  return cfg;
}

void expect_same_weights(OPlanesModel<float>& a, OPlanesModel<float>& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i]->value.size(); ++k) ASSERT_EQ(pa[i]->value[k], pb[i]->value[k]) << pa[i]->name;
}

}  // namespace

TEST(Training, TargetsCoverRequestedDepths) {
  const auto& s = tiny_data().front();
  const std::vector<double> depths{s.inputs.range.z_min + 0.05, 0.5 * (s.inputs.range.z_min + s.inputs.range.z_max)};
  const auto [fine, coarse] = training_targets(s, depths);
  EXPECT_EQ(fine.gt.planes.size(), 2u);
  EXPECT_EQ(fine.mask.width, 16);
  EXPECT_EQ(coarse.mask.width, 8);
  // The middle plane cuts through the shape.
  double occupied = 0.0;
  for (float v : fine.gt.planes[1].values.data) occupied += v;
  EXPECT_GT(occupied, 0.0);
}

TEST(Training, LossDecreasesOnTinySet) {
  OPlanesModel<float> model(tiny_config());
  model.init(1);
  TrainingState state;
  auto cfg = tiny_train(60);
  const auto r = fit(model, state, tiny_data(), cfg);
  ASSERT_EQ(r.history.size(), 60u);
  auto mean = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + 10; ++i) s += r.history[i].total;
    return s / 10.0;
  };
  EXPECT_LT(mean(50), mean(0));
  EXPECT_EQ(state.iteration, 60);
}

TEST(Training, SameSeedIsBitIdentical) {
  OPlanesModel<float> a(tiny_config()), b(tiny_config());
  a.init(2);
  b.init(2);
  TrainingState sa, sb;
  fit(a, sa, tiny_data(), tiny_train(4));
  fit(b, sb, tiny_data(), tiny_train(4));
  expect_same_weights(a, b);
}

TEST(Training, ResumeMatchesContinuousRun) {
  const fs::path dir = fs::temp_directory_path() / "oplanes_resume";
  fs::remove_all(dir);
  fs::create_directories(dir);

  OPlanesModel<float> cont(tiny_config());
  cont.init(3);
  TrainingState sc;
  fit(cont, sc, tiny_data(), tiny_train(6));

  OPlanesModel<float> first(tiny_config());
  first.init(3);
  TrainingState s1;
  fit(first, s1, tiny_data(), tiny_train(3));
  save_checkpoint(dir / "mid.opck", first, s1);
  auto ck = load_checkpoint(dir / "mid.opck");
  EXPECT_EQ(ck.state.iteration, 3);
  fit(*ck.model, ck.state, tiny_data(), tiny_train(6));
  expect_same_weights(cont, *ck.model);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  const fs::path dir = fs::temp_directory_path() / "oplanes_ckpt";
  fs::create_directories(dir);
  OPlanesModel<float> model(tiny_config());
  model.init(4);
  TrainingState state;
  fit(model, state, tiny_data(), tiny_train(2));
  state.extra["note"] = "hello world";
  save_checkpoint(dir / "a.opck", model, state);
  const auto ck = load_checkpoint(dir / "a.opck");
  EXPECT_EQ(ck.model->config().to_map(), model.config().to_map());
  expect_same_weights(model, *ck.model);
  EXPECT_EQ(ck.state.iteration, 2);
  EXPECT_EQ(ck.state.adam.step, state.adam.step);
  EXPECT_EQ(ck.state.extra.at("note"), "hello world");
  ASSERT_EQ(ck.state.adam.first_moment.size(), state.adam.first_moment.size());
  for (std::size_t i = 0; i < state.adam.second_moment.size(); ++i)
    for (std::size_t k = 0; k < state.adam.second_moment[i].size(); ++k)
      ASSERT_EQ(ck.state.adam.second_moment[i][k], state.adam.second_moment[i][k]);

  // Saving twice gives identical bytes.
  save_checkpoint(dir / "b.opck", model, state);
  std::ifstream fa(dir / "a.opck", std::ios::binary), fb(dir / "b.opck", std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(fa), {}, std::istreambuf_iterator<char>(fb)));

  EXPECT_THROW(load_checkpoint(dir / "missing.opck"), IoError);
  std::ofstream(dir / "bad.opck") << "OPCKgarbage";
  EXPECT_THROW(load_checkpoint(dir / "bad.opck"), ParseError);
}

TEST(Training, RejectsBadConfig) {
  OPlanesModel<float> model(tiny_config());
  model.init(1);
  TrainingState state;
  auto cfg = tiny_train(1);
  cfg.batch_size = 0;
  EXPECT_THROW(fit(model, state, tiny_data(), cfg), ConfigError);
  EXPECT_THROW(fit(model, state, {}, tiny_train(1)), DataError);
}
