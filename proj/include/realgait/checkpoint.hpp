#pragma once

#include <map>
#include <string>
#include <vector>

#include "realgait/model.hpp"

namespace realgait {

// Single-file archive: named float32 tensors plus a JSON metadata block.
// Used for model checkpoints and optimizer state; the format is versioned.
struct NamedTensor {
  std::vector<int> shape;
  std::vector<float> data;
};

struct Archive {
  std::string meta_json = "{}";
  std::map<std::string, NamedTensor> tensors;
};

void save_archive(const std::string& path, const Archive& archive);
Archive load_archive(const std::string& path);

// Model parameters + normalization buffers + ModelConfig.
Archive archive_model(nn::RealGaitNet<float>& model);
void restore_model(nn::RealGaitNet<float>& model, const Archive& archive);
ModelConfig archived_model_config(const Archive& archive);

void save_model(const std::string& path, nn::RealGaitNet<float>& model);
// Builds the network from the archived config and loads its parameters.
std::unique_ptr<nn::RealGaitNet<float>> load_model(const std::string& path);

}  // namespace realgait
