#pragma once

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unrest/embed.hpp"
#include "unrest/grid.hpp"

namespace unrest {

/// Per-tap channel weights; the diagonal of W over the kept channels.
struct LayerWeights {
  std::array<double, 3> per_layer{0.0, 1.0, 5.0};

  void validate() const;
  /// Diagonal of W, one entry per kept channel, looked up through the channel's tap.
  Eigen::VectorXd expand(const ChannelSelection& selection) const;
};

/// N(mu, C) at one lattice position, stored as C^-1 and log det C.
struct PositionGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
  double log_det = 0.0;

  Eigen::Index dim() const { return mean.size(); }
};

/// Row-major grid of position Gaussians over the embedding lattice.
struct GaussianGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t dim = 0;
  std::vector<PositionGaussian> cells;

  const PositionGaussian& at(std::size_t x, std::size_t y) const { return cells[y * width + x]; }
};

inline constexpr double kDefaultCovarianceRegularizer = 0.01;

/// Per-position sample mean and covariance (N - 1 denominator) plus eps * I.
/// Needs at least dim + 2 maps of identical shape with finite values.
GaussianGrid fit(std::span<const EmbeddingMap> training, double epsilon = kDefaultCovarianceRegularizer);

/// Single-position fit from row-vector samples; the building block of fit().
PositionGaussian fit_position(const Eigen::MatrixXd& samples, double epsilon = kDefaultCovarianceRegularizer);

double mahalanobis(const Eigen::VectorXd& x, const PositionGaussian& g);
/// sqrt((x - mu)^T W C^-1 W (x - mu)) with W = diag(weights).
double weighted_mahalanobis(const Eigen::VectorXd& x, const PositionGaussian& g, const Eigen::VectorXd& weights);
/// Negative log matching likelihood: (k log 2pi + D^2 + log det C) / 2, with D the weighted distance.
/// The log-determinant term is never weighted.
double nlml(const Eigen::VectorXd& x, const PositionGaussian& g, const Eigen::VectorXd& weights);

enum class Metric { kMaha, kWeightedMaha, kNlml, kWeightedNlml };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);
bool is_weighted(Metric metric);

/// Per-pixel anomaly score at raster resolution.
using ScoreMap = RealGrid;
/// Per-pixel probability in [0, 1].
using ProbabilityMap = RealGrid;

struct FittedModel {
  GaussianGrid gaussians;
  ChannelSelection selection;
  LayerWeights weights;
  Metric metric = Metric::kWeightedNlml;
  double epsilon = kDefaultCovarianceRegularizer;
  std::optional<double> threshold;
  std::string fingerprint;
  std::size_t cell = 1;
  std::size_t patch_size = 0;

  /// Constant subtracted from NLML scores so score maps are non-negative:
  /// the smallest Gaussian normaliser (k log 2pi + log det C) / 2 over positions.
  /// Zero for the Mahalanobis metrics. Shifts every score equally.
  double score_offset() const;
};

/// Scores every lattice position with the model's metric (NLML shifted by score_offset()).
RealGrid position_scores(const EmbeddingMap& embedding, const FittedModel& model);

/// Score tile of one patch at pixel resolution, in the padded frame.
struct PatchScoreTile {
  std::size_t origin_x = 0;
  std::size_t origin_y = 0;
  RealGrid scores;  // patch_size x patch_size
};

/// Blend weight of pixel `u` (0-based) inside a patch of size s: the N(s/2, s/6)
/// density at the pixel centre, up to a constant factor.
double blend_weight_1d(std::size_t u, std::size_t patch_size);

/// Blends overlapping tiles with separable Gaussian windows, normalised so the
/// weights at each pixel sum to one, and crops to width x height.
ScoreMap blend_patch_scores(std::span<const PatchScoreTile> tiles, std::size_t patch_size, std::size_t width,
                            std::size_t height);

/// Lattice scores upsampled to pixels by nearest neighbour, cut into the
/// embedding's patch tiles and blended. Throws FingerprintError if the
/// embedding and model fingerprints differ.
ScoreMap score_map(const EmbeddingMap& embedding, const FittedModel& model);

/// Mean of the score map.
double image_score(const ScoreMap& map);

/// Nearest-rank 95th percentile: the ceil(0.95 N)-th smallest score. Needs N >= 20.
double calibrate_threshold(std::span<const double> training_scores);

/// min(1, S / (2 T_h)).
double probability(double score, double threshold);
ProbabilityMap probability_map(const ScoreMap& map, double threshold);

void save_model(const FittedModel& model, const std::filesystem::path& path);
/// Loads and verifies a model container. If `expected_fingerprint` is given
/// and differs from the stored one, throws FingerprintError.
FittedModel load_model(const std::filesystem::path& path,
                       const std::optional<std::string>& expected_fingerprint = std::nullopt);

/// Serialised container bytes (what save_model writes).
std::string serialize_model(const FittedModel& model);
FittedModel deserialize_model(const std::string& bytes);

}  // namespace unrest
