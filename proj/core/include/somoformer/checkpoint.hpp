#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "somoformer/adam.hpp"
#include "somoformer/model.hpp"

namespace somoformer {

/// Optimizer and data-order state stored alongside the model so training can
/// resume bit-exactly: global step count, completed epochs, the serialized
/// training rng, and the full Adam state per parameter.
struct TrainState {
  std::int64_t step = 0;
  int epochs_done = 0;
  std::string rng_state;
  AdamConfig adam;
  std::map<std::string, AdamState> adam_states;
};

/// Binary checkpoint: magic "SMF1", u32 format version, u64 config-JSON
/// length, the ModelConfig JSON, then one record per tensor (u16 name length,
/// name, u8 rank, u64 dims, float64 little-endian data). save/load roundtrips
/// every parameter bit-exactly.
void save_checkpoint(const Parameters& params, const ModelConfig& config,
                     const std::string& path);

std::pair<Parameters, ModelConfig> load_checkpoint(const std::string& path);

/// Same format with a "train" section in the JSON and opt/m/, opt/v/ moment
/// records appended. load_checkpoint reads these files too (ignoring the
/// training extras).
void save_train_checkpoint(const Parameters& params, const ModelConfig& config,
                           const TrainState& state, const std::string& path);

struct TrainCheckpoint {
  Parameters params;
  ModelConfig config;
  TrainState state;
};

TrainCheckpoint load_train_checkpoint(const std::string& path);

}  // namespace somoformer
