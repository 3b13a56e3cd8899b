#pragma once

#include <string>
#include <vector>

#include "trisim/model.hpp"

namespace trisim {

// Checkpoint file: magic "TSC1", u32 LE version, u32 LE config-JSON byte
// length + bytes, then per-parameter records (u32 name length, name bytes,
// u32 rank, u32 dims[rank], float32 LE payload).

struct CheckpointTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;
};

struct CheckpointData {
  std::uint32_t version = 1;
  std::string config_json;
  std::vector<CheckpointTensor> tensors;
};

void save_checkpoint(const std::string& path, const RunConfig& cfg, Model<float>& model);
CheckpointData read_checkpoint(const std::string& path);

// Rebuilds the model from the embedded config echo and installs the stored
// parameters. Fails closed on any name/dims mismatch.
Model<float> load_checkpoint_model(const std::string& path);

// Applies tensors onto an existing model; the parameter sets must agree
// exactly.
void apply_checkpoint(const CheckpointData& data, Model<float>& model);

}  // namespace trisim
