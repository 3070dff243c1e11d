#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "unrest/embed.hpp"
#include "unrest/gaussian_model.hpp"
#include "unrest/preprocess.hpp"
#include "unrest/synth.hpp"

namespace unrest {

struct ModelConfig {
  std::size_t keep_channels = 100;
  std::uint64_t selection_seed = 0;
  double epsilon = kDefaultCovarianceRegularizer;
  Metric metric = Metric::kWeightedNlml;
};

/// Every pipeline hyperparameter. One TOML table per section:
/// [preprocess], [patch], [model], [weights], [synth]. Omitted keys take the
/// defaults below; unknown keys are rejected.
struct PipelineConfig {
  PreprocessConfig preprocess;
  PatchConfig patch;
  ModelConfig model;
  LayerWeights weights;
  SceneSampler synth;

  void validate() const;
};

PipelineConfig parse_config(const std::string& toml_text, const std::string& source = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);
std::string to_toml(const PipelineConfig& cfg);

/// Hash of the preprocessing, patching and backbone settings a model depends on.
std::string config_fingerprint(const PipelineConfig& cfg, const std::string& backbone_descriptor);

std::string to_string(FillMode mode);
std::string to_string(InputFormat format);

}  // namespace unrest
