#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "oplanes/model.hpp"

namespace oplanes {

// Everything besides the weights needed to resume a run.
struct TrainingState {
  long iteration = 0;  // completed iterations
  int epoch = 0;
  nn::AdamState<float> adam;
  std::map<std::string, std::string> extra;  // run metadata, stored verbatim
};

struct Checkpoint {
  std::unique_ptr<OPlanesModel<float>> model;
  TrainingState state;
};

// OPCK layout (little-endian):
//   "OPCK" | u32 version | u32 text bytes | key=value lines (model config,
//   iteration, epoch, adam step, extras) | u32 record count | records
// record: u16 name length | name | u8 ndim | ndim x i32 | f32 data
// Adam moments follow the parameters as records named "adam.m/<param>" and
// "adam.v/<param>". The file is written to a temporary and renamed.
void save_checkpoint(const std::filesystem::path& path, OPlanesModel<float>& model, const TrainingState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace oplanes
