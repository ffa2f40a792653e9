#include "oplanes/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "oplanes/inference.hpp"
#include "oplanes/parallel.hpp"
#include "oplanes/random.hpp"

namespace oplanes {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (iterations <= 0 && epochs < 1) throw ConfigError("train for at least one epoch or iteration");
  if (planes < 1) throw ConfigError("need at least one plane per sample");
  if (!(eps_p > 0.0 && eps_p < 0.5)) throw ConfigError("probability clamp must lie in (0, 0.5)");
  if (checkpoint_every_epochs < 1) throw ConfigError("checkpoint interval must be at least one epoch");
  weights.validate();
}

TrainingSample prepare_training_sample(const SceneSample& scene, const ModelConfig& config) {
  TrainingSample t;
  t.name = scene.name;
  t.inputs = make_sample_inputs<float>(config, scene.rgb, scene.depth, scene.mask, scene.train_range);
  t.mask_fine = downsample_binary(scene.mask, config.fine_w, config.fine_h);
  t.mask_coarse = downsample_binary(scene.mask, config.coarse_w, config.coarse_h);
  const InsideTester tester(scene.mesh);
  t.raster_fine = std::make_shared<OccupancyRaster>(tester, camera_at_resolution(scene.camera, config.fine_w, config.fine_h));
  t.raster_coarse =
      std::make_shared<OccupancyRaster>(tester, camera_at_resolution(scene.camera, config.coarse_w, config.coarse_h));
  return t;
}

std::vector<TrainingSample> load_training_set(const Manifest& manifest, const ModelConfig& config,
                                              const std::string& split) {
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (split.empty() || manifest.entries[i].split == split) picked.push_back(i);
  if (picked.empty()) throw DataError("no samples with split '" + split + "' in " + manifest.root.string());
  std::vector<TrainingSample> out(picked.size());
  for (std::size_t k = 0; k < picked.size(); ++k) {
    SceneSample s = load_sample(manifest.sample_dir(picked[k]));
    s.name = manifest.entries[picked[k]].path;
    out[k] = prepare_training_sample(s, config);
  }
  return out;
}

std::pair<LossTargets, LossTargets> training_targets(const TrainingSample& s, const std::vector<double>& depths) {
  return {make_loss_targets(*s.raster_fine, s.mask_fine, s.inputs.depth_fine, depths, s.inputs.range),
          make_loss_targets(*s.raster_coarse, s.mask_coarse, s.inputs.depth_coarse, depths, s.inputs.range)};
}

LossBreakdown evaluate_loss(const OPlanesModel<float>& model, const TrainingSample& s,
                            const std::vector<double>& depths, const TrainConfig& cfg) {
  const auto [fine, coarse] = training_targets(s, depths);
  const auto out = model.predict_planes(s.inputs, depths);
  return total_loss(out, fine, coarse, cfg.weights, cfg.use_coarse_loss, static_cast<nn::Tensorf*>(nullptr),
                    static_cast<nn::Tensorf*>(nullptr), cfg.eps_p);
}

namespace {

constexpr std::uint64_t kPermutationStream = 1ULL << 40;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, long epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  Rng rng = make_rng(seed, kPermutationStream + std::uint64_t(epoch));
  // Fisher-Yates with the portable uniform01 so orders match across
  // standard libraries.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[std::size_t(uniform01(rng) * double(i))]);
  return order;
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainResult fit(OPlanesModel<float>& model, TrainingState& state, const std::vector<TrainingSample>& data,
                const TrainConfig& cfg, const std::function<void(long, const LossBreakdown&)>& on_iteration) {
  cfg.validate();
  if (data.empty()) throw DataError("training set is empty");
  if (cfg.deterministic) set_deterministic_mode(true);
  const std::size_t n = data.size();
  const long iters_per_epoch = long((n + cfg.batch_size - 1) / cfg.batch_size);
  const long total = cfg.iterations > 0 ? cfg.iterations : long(cfg.epochs) * iters_per_epoch;
  const nn::AdamOptions adam{cfg.learning_rate};

  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = cfg.out_dir / "loss.csv";
    const bool append = state.iteration > 0 && std::filesystem::exists(path);
    csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot write " + path.string());
    if (!append) csv << "iteration,epoch,bce_fine,dice_fine,bce_coarse,dice_coarse,total\n";
  }

  auto params = model.parameters();
  TrainResult result;
  double epoch_sum = 0.0;
  long epoch_count = 0;
  std::vector<std::size_t> order;
  long order_epoch = -1;

  for (long it = state.iteration; it < total; ++it) {
    const long epoch = it / iters_per_epoch;
    model.zero_grad();
    LossBreakdown batch;
    Rng depth_rng = make_rng(cfg.seed, std::uint64_t(it));
    for (int b = 0; b < cfg.batch_size; ++b) {
      // Sample stream: consecutive epochs' permutations, batch_size per step.
      const long pos = it * cfg.batch_size + b;
      const long e = pos / long(n);
      if (e != order_epoch) {
        order = epoch_order(n, cfg.seed, e);
        order_epoch = e;
      }
      const TrainingSample& s = data[order[std::size_t(pos % long(n))]];
      const auto depths = sample_train_depths(s.inputs.range, cfg.planes, depth_rng);
      const auto [fine, coarse] = training_targets(s, depths);
      LossBreakdown sample_loss;
      model.forward_backward(s.inputs, depths,
                             plane_loss_fn<float>(fine, coarse, cfg.weights, cfg.use_coarse_loss, sample_loss, cfg.eps_p));
      if (!std::isfinite(sample_loss.total))
        throw UpdateError("non-finite loss at iteration " + std::to_string(it + 1) + " on sample " + s.name);
      batch += sample_loss;
    }
    const double inv_b = 1.0 / cfg.batch_size;
    batch = batch.scaled(inv_b);
    for (auto* p : params)
      for (auto& g : p->grad.values()) g *= float(inv_b);
    nn::adam_step<float>(params, state.adam, adam);
    state.iteration = it + 1;
    state.epoch = int(state.iteration / iters_per_epoch);
    result.history.push_back(batch);

    if (csv.is_open())
      csv << state.iteration << ',' << epoch << ',' << csv_number(batch.bce_fine) << ',' << csv_number(batch.dice_fine)
          << ',' << csv_number(batch.bce_coarse) << ',' << csv_number(batch.dice_coarse) << ','
          << csv_number(batch.total) << '\n';
    if (on_iteration) on_iteration(state.iteration, batch);

    epoch_sum += batch.total;
    ++epoch_count;
    const bool epoch_done = state.iteration % iters_per_epoch == 0;
    if (epoch_done || state.iteration == total) {
      if (epoch_done) {
        result.epoch_means.push_back(epoch_sum / double(epoch_count));
        epoch_sum = 0.0;
        epoch_count = 0;
      }
      if (!cfg.out_dir.empty() &&
          ((epoch_done && state.epoch % cfg.checkpoint_every_epochs == 0) || state.iteration == total)) {
        csv.flush();
        save_checkpoint(cfg.out_dir / "last.opck", model, state);
      }
    }
  }
  if (!cfg.out_dir.empty()) save_checkpoint(cfg.out_dir / "model.opck", model, state);
  return result;
}

}  // namespace oplanes
