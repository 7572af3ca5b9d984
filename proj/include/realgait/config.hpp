#pragma once

#include <string>
#include <vector>

#include "realgait/evaluation.hpp"
#include "realgait/gei.hpp"
#include "realgait/model.hpp"
#include "realgait/sampling.hpp"
#include "realgait/silhouette.hpp"
#include "realgait/training.hpp"

namespace realgait {

// Every tunable in one place. Values arrive from (in increasing precedence)
// defaults, a config file, REALGAIT_* environment variables, and --set
// flags; unknown keys are rejected.
struct RunConfig {
  SamplingConfig sampling;
  ModelConfig model;
  TrainConfig train;
  GmmParams gmm;
  ExpandFactors expand;

  struct Extract {
    bool write_variants = false;
    InputVariant variant;
  } extract;

  ClusterConfig gei_cluster;
  PiecewiseConfig piecewise;

  struct Eval {
    std::string protocol = "multi_scene";
    DistanceMetric metric = DistanceMetric::euclidean;
    int max_frames = 720;
    std::vector<int> rank_levels = {1, 5, 10, 20};
    std::vector<double> far_levels = {1.0, 10.0, 50.0, 100.0};
    std::string probe_override;  // path to a {subject: video} JSON map
  } eval;

  void validate() const;
};

// Applies a config file: JSON (object of dotted keys or nested sections) or
// plain key=value lines.
void apply_config_file(RunConfig& config, const std::string& path);

// Applies one dotted key, e.g. "sampling.m" = "28". Throws on unknown keys
// or unparsable values.
void apply_key_value(RunConfig& config, const std::string& key,
                     const std::string& value);

// REALGAIT_SAMPLING_M=28 style overrides for every registered key.
void apply_env_overrides(RunConfig& config);

// One line per key: name, default, description.
std::string config_key_help();

}  // namespace realgait
