#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "amfusion/model.hpp"

namespace amfusion {

/// Where training stood when the checkpoint was written.
struct TrainState {
  int phase = 0;  // 0 = untrained, 1 or 2
  int epoch = 0;  // epochs completed within `phase`
  std::int64_t step = 0;
  std::string rng_state;  // textual mt19937_64 state
};

struct Checkpoint {
  FusionModel model;
  TrainState state;
};

/// One archive holding every model parameter, the config text and the state.
void save_checkpoint(const std::filesystem::path& path, FusionModel& model, const TrainState& state = {});
/// Throws FileNotFound or BadCheckpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace amfusion
