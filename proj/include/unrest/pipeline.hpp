#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "unrest/backbone.hpp"
#include "unrest/config.hpp"
#include "unrest/eval.hpp"
#include "unrest/gaussian_model.hpp"

namespace unrest {

/// Probability tiers used when flagging images and drawing overlay contours.
inline constexpr double kFlagProbability = 0.5;
inline constexpr double kStrongProbability = 0.8;

/// Preprocess -> embed -> fit/calibrate -> score, bound to one configuration and backbone.
class Detector {
 public:
  Detector(PipelineConfig cfg, const Backbone& backbone);

  const PipelineConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return *backbone_; }
  const ChannelSelection& selection() const { return selection_; }
  const std::string& fingerprint() const { return fingerprint_; }

  RealGrid preprocess(const Interferogram& ifg, const std::optional<DelayMap>& delay = std::nullopt) const;
  EmbeddingMap embed(const Interferogram& ifg, const std::optional<DelayMap>& delay = std::nullopt) const;

  /// Fits position Gaussians and calibrates T_h on the same training embeddings.
  FittedModel fit(std::span<const EmbeddingMap> training, std::optional<Metric> metric = std::nullopt) const;

 private:
  PipelineConfig cfg_;
  const Backbone* backbone_;
  ChannelSelection selection_;
  std::string fingerprint_;
};

/// Copy of `model` switched to `metric` and recalibrated on `training`.
FittedModel with_metric(const FittedModel& model, Metric metric, std::span<const EmbeddingMap> training);

/// Sets model.threshold from the image scores of the training embeddings.
void calibrate(FittedModel& model, std::span<const EmbeddingMap> training);

struct ImageResult {
  ScoreMap scores;
  ProbabilityMap probabilities;
  double score = 0.0;        // image score S (mean of the score map)
  double probability = 0.0;  // P = min(1, S / 2 T_h)
};

/// Needs a calibrated model.
ImageResult score_embedding(const EmbeddingMap& embedding, const FittedModel& model);

enum class Split { kTrain, kTest };

struct ManifestEntry {
  std::filesystem::path path;
  Split split = Split::kTest;
  bool anomaly = false;
  std::string id;
};

/// Tab-separated `<path>\t<train|test>\t<normal|anomaly>` records; extra
/// columns are ignored, blank lines and '#' comments skipped. Relative paths
/// resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Delay file sharing the raster's filename stem in `delay_dir`, if any.
std::optional<DelayMap> find_delay(const std::filesystem::path& delay_dir, const std::filesystem::path& raster_path);

Interferogram load_interferogram(const std::filesystem::path& path);

struct ImageOutcome {
  std::string id;
  bool anomaly = false;
  double score = 0.0;
  double probability = 0.0;
};

struct EvaluationReport {
  std::string metric;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  double threshold = 0.0;
  /// Absent when the test split holds a single class.
  std::optional<double> auroc;
  /// Images with P > 0.5, by label.
  ConfusionCounts confusion;
  std::vector<ImageOutcome> images;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Builds a report from scored test images. AUROC is computed on image scores.
EvaluationReport make_report(Metric metric, std::size_t train_count, double threshold,
                             std::vector<ImageOutcome> images);

}  // namespace unrest
