#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "unrest/gaussian_model.hpp"
#include "unrest/pipeline.hpp"

namespace unrest {

/// Environment variable naming the default backbone model.
inline constexpr const char* kBackboneEnvVar = "UNREST_BACKBONE";

/// `flag` if non-empty, else $UNREST_BACKBONE; throws ConfigError if neither is set.
std::filesystem::path resolve_backbone(const std::filesystem::path& flag);

struct SynthOptions {
  std::filesystem::path spec;  // TOML file with a [synth] table
  std::size_t count_train = 0;
  std::size_t count_normal = 0;
  std::size_t count_anomaly = 0;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};

/// Writes scene_NNNN.f32 rasters and manifest.tsv into `out`. Manifest rows:
/// `<file>\t<split>\t<label>\tseed=<n>` followed by the scene spec as key=value columns.
std::filesystem::path run_synth(const SynthOptions& opts);

struct FitOptions {
  std::filesystem::path manifest;
  std::filesystem::path backbone;
  std::filesystem::path config;
  std::filesystem::path out;
  std::filesystem::path delay_dir;
};

/// Fits and calibrates on the train split (all entries must be normal) and saves the model.
FittedModel run_fit(const FitOptions& opts, std::ostream& log);

struct ScoreOptions {
  std::filesystem::path model;
  std::filesystem::path backbone;
  std::filesystem::path config;
  std::filesystem::path input;  // raster file or directory of rasters
  std::filesystem::path out;
  std::filesystem::path delay_dir;
  bool overlay = false;
};

struct ScoredImage {
  std::filesystem::path input;
  double score = 0.0;
  double probability = 0.0;
};

/// Per input: `<stem>.prob.f32` probability map, optional `<stem>.png` overlay,
/// plus a `scores.tsv` summary. Writes are temp-file-then-rename.
std::vector<ScoredImage> run_score(const ScoreOptions& opts, std::ostream& log);

struct EvaluateOptions {
  std::optional<std::filesystem::path> model;
  std::filesystem::path manifest;
  std::filesystem::path backbone;
  std::filesystem::path config;
  std::filesystem::path out;
  std::filesystem::path delay_dir;
  std::optional<Metric> metric;
};

/// Fits on the train split unless a model is supplied, scores the test split
/// and writes report_<metric>.json / report_<metric>.txt into `out`.
EvaluationReport run_evaluate(const EvaluateOptions& opts, std::ostream& log);

/// Raster files (.f32 .ifg .raw .tif .tiff) in `dir`, sorted by name.
std::vector<std::filesystem::path> list_rasters(const std::filesystem::path& dir);

}  // namespace unrest
