#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "oplanes/checkpoint.hpp"
#include "oplanes/loss.hpp"
#include "oplanes/synth.hpp"

namespace oplanes {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 4;
  int epochs = 15;
  long iterations = 0;  // when > 0, overrides epochs
  int planes = 10;      // N per sample and iteration
  std::uint64_t seed = 0;
  bool deterministic = false;
  double eps_p = kProbClamp;
  LossWeights weights;
  bool use_coarse_loss = true;
  std::filesystem::path out_dir;  // loss.csv and checkpoints; empty = none
  int checkpoint_every_epochs = 1;
  void validate() const;
};

// A scene prepared for training: network inputs at the training range plus
// GT rasters at both plane resolutions.
struct TrainingSample {
  std::string name;
  SampleInputs<float> inputs;
  Mask mask_fine;
  Mask mask_coarse;
  std::shared_ptr<const OccupancyRaster> raster_fine;
  std::shared_ptr<const OccupancyRaster> raster_coarse;
};

TrainingSample prepare_training_sample(const SceneSample& scene, const ModelConfig& config);
std::vector<TrainingSample> load_training_set(const Manifest& manifest, const ModelConfig& config,
                                              const std::string& split = "train");

// Loss targets for one sample at the given depths.
std::pair<LossTargets, LossTargets> training_targets(const TrainingSample& s, const std::vector<double>& depths);

struct TrainResult {
  std::vector<LossBreakdown> history;  // batch mean per iteration run
  std::vector<double> epoch_means;     // mean total per completed epoch
};

// Iteration i uses RNG streams derived from (seed, i) and the epoch's
// permutation from (seed, epoch), so resuming from a checkpoint continues the
// exact same sequence. `state` carries the iteration count and optimizer
// moments in and out.
TrainResult fit(OPlanesModel<float>& model, TrainingState& state, const std::vector<TrainingSample>& data,
                const TrainConfig& cfg,
                const std::function<void(long iteration, const LossBreakdown&)>& on_iteration = {});

// Mean training objective of one sample at the given depths (no update).
LossBreakdown evaluate_loss(const OPlanesModel<float>& model, const TrainingSample& s,
                            const std::vector<double>& depths, const TrainConfig& cfg);

}  // namespace oplanes
