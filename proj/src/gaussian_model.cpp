#include "unrest/gaussian_model.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace unrest {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_dim(const Eigen::VectorXd& x, const PositionGaussian& g) {
  if (x.size() != g.mean.size()) throw ShapeError("observation and Gaussian dimensions differ");
}

}  // namespace

void LayerWeights::validate() const {
  for (double w : per_layer) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("layer weights must be finite and >= 0");
  }
}

Eigen::VectorXd LayerWeights::expand(const ChannelSelection& selection) const {
  validate();
  Eigen::VectorXd diag(static_cast<Eigen::Index>(selection.size()));
  for (std::size_t i = 0; i < selection.size(); ++i) {
    diag[static_cast<Eigen::Index>(i)] = per_layer.at(static_cast<std::size_t>(selection.layer_of[i]));
  }
  return diag;
}

PositionGaussian fit_position(const Eigen::MatrixXd& samples, double epsilon) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index k = samples.cols();
  if (n < 2) throw ConfigError("need at least two samples to estimate a covariance");
  if (!samples.allFinite()) throw ConfigError("non-finite embedding value in training data");
  PositionGaussian g;
  g.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov.diagonal().array() += epsilon;
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw SolverError("regularised covariance is not positive definite");
  Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(k, k));
  g.precision = 0.5 * (precision + precision.transpose());
  g.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return g;
}

GaussianGrid fit(std::span<const EmbeddingMap> training, double epsilon) {
  if (training.empty()) throw ConfigError("no training embeddings");
  if (!(epsilon > 0.0)) throw ConfigError("covariance regulariser must be > 0");
  const EmbeddingMap& first = training.front();
  const std::size_t k = first.dim();
  for (const auto& m : training) {
    if (m.width() != first.width() || m.height() != first.height() || m.dim() != k) {
      throw ShapeError("training embeddings differ in shape");
    }
  }
  if (training.size() < k + 2) {
    throw ConfigError("need at least " + std::to_string(k + 2) + " training images for " + std::to_string(k) +
                      "-dimensional embeddings, got " + std::to_string(training.size()));
  }
  GaussianGrid grid{first.width(), first.height(), k, {}};
  grid.cells.reserve(grid.width * grid.height);
  Eigen::MatrixXd samples(static_cast<Eigen::Index>(training.size()), static_cast<Eigen::Index>(k));
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      for (std::size_t i = 0; i < training.size(); ++i) {
        const auto v = training[i].grid.at(x, y);
        for (std::size_t c = 0; c < k; ++c) samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v[c];
      }
      grid.cells.push_back(fit_position(samples, epsilon));
    }
  }
  return grid;
}

double mahalanobis(const Eigen::VectorXd& x, const PositionGaussian& g) {
  check_dim(x, g);
  const Eigen::VectorXd d = x - g.mean;
  return std::sqrt(std::max(0.0, d.dot(g.precision * d)));
}

double weighted_mahalanobis(const Eigen::VectorXd& x, const PositionGaussian& g, const Eigen::VectorXd& weights) {
  check_dim(x, g);
  if (weights.size() != x.size()) throw ShapeError("weight vector dimension differs from observation");
  if ((weights.array() < 0.0).any()) throw ConfigError("weights must be >= 0");
  const Eigen::VectorXd d = weights.cwiseProduct(x - g.mean);
  return std::sqrt(std::max(0.0, d.dot(g.precision * d)));
}

double nlml(const Eigen::VectorXd& x, const PositionGaussian& g, const Eigen::VectorXd& weights) {
  const double dist = weighted_mahalanobis(x, g, weights);
  return 0.5 * (static_cast<double>(x.size()) * kLog2Pi + dist * dist + g.log_det);
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::kMaha:
      return "maha";
    case Metric::kWeightedMaha:
      return "wmaha";
    case Metric::kNlml:
      return "nlml";
    case Metric::kWeightedNlml:
      return "wnlml";
  }
  return "unknown";
}

Metric metric_from_string(const std::string& name) {
  if (name == "maha") return Metric::kMaha;
  if (name == "wmaha") return Metric::kWeightedMaha;
  if (name == "nlml") return Metric::kNlml;
  if (name == "wnlml") return Metric::kWeightedNlml;
  throw ConfigError("unknown metric '" + name + "' (expected maha, wmaha, nlml or wnlml)");
}

bool is_weighted(Metric metric) { return metric == Metric::kWeightedMaha || metric == Metric::kWeightedNlml; }

double FittedModel::score_offset() const {
  if (metric == Metric::kMaha || metric == Metric::kWeightedMaha || gaussians.cells.empty()) return 0.0;
  double min_log_det = std::numeric_limits<double>::infinity();
  for (const auto& g : gaussians.cells) min_log_det = std::min(min_log_det, g.log_det);
  return 0.5 * (static_cast<double>(gaussians.dim) * kLog2Pi + min_log_det);
}

RealGrid position_scores(const EmbeddingMap& embedding, const FittedModel& model) {
  const GaussianGrid& gg = model.gaussians;
  if (embedding.width() != gg.width || embedding.height() != gg.height || embedding.dim() != gg.dim) {
    throw ShapeError("embedding lattice does not match the fitted model");
  }
  const Eigen::VectorXd weights = is_weighted(model.metric)
                                      ? model.weights.expand(model.selection)
                                      : Eigen::VectorXd::Ones(static_cast<Eigen::Index>(gg.dim));
  const double offset = model.score_offset();
  RealGrid scores(gg.width, gg.height);
  Eigen::VectorXd x(static_cast<Eigen::Index>(gg.dim));
  for (std::size_t y = 0; y < gg.height; ++y) {
    for (std::size_t px = 0; px < gg.width; ++px) {
      const auto v = embedding.grid.at(px, y);
      std::copy(v.begin(), v.end(), x.data());
      const PositionGaussian& g = gg.at(px, y);
      switch (model.metric) {
        case Metric::kMaha:
          scores(px, y) = mahalanobis(x, g);
          break;
        case Metric::kWeightedMaha:
          scores(px, y) = weighted_mahalanobis(x, g, weights);
          break;
        case Metric::kNlml:
        case Metric::kWeightedNlml:
          scores(px, y) = std::max(0.0, nlml(x, g, weights) - offset);
          break;
      }
    }
  }
  return scores;
}

double blend_weight_1d(std::size_t u, std::size_t patch_size) {
  const double s = static_cast<double>(patch_size);
  const double z = (static_cast<double>(u) + 0.5 - s / 2.0) / (s / 6.0);
  return std::exp(-0.5 * z * z);
}

ScoreMap blend_patch_scores(std::span<const PatchScoreTile> tiles, std::size_t patch_size, std::size_t width,
                            std::size_t height) {
  if (tiles.empty()) throw ShapeError("no patch tiles to blend");
  std::vector<double> window(patch_size);
  for (std::size_t u = 0; u < patch_size; ++u) window[u] = blend_weight_1d(u, patch_size);

  RealGrid acc(width, height, 0.0);
  RealGrid weight_sum(width, height, 0.0);
  for (const auto& tile : tiles) {
    if (!tile.scores.same_shape(patch_size, patch_size)) throw ShapeError("patch tile has the wrong size");
    for (std::size_t y = 0; y < patch_size; ++y) {
      const std::size_t py = tile.origin_y + y;
      if (py >= height) break;
      for (std::size_t x = 0; x < patch_size; ++x) {
        const std::size_t px = tile.origin_x + x;
        if (px >= width) break;
        const double w = window[x] * window[y];
        acc(px, py) += w * tile.scores(x, y);
        weight_sum(px, py) += w;
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (!(weight_sum[i] > 0.0)) throw ShapeError("pixel not covered by any patch tile");
    acc[i] /= weight_sum[i];
  }
  return acc;
}

ScoreMap score_map(const EmbeddingMap& embedding, const FittedModel& model) {
  if (embedding.fingerprint != model.fingerprint) {
    throw FingerprintError("embedding fingerprint '" + embedding.fingerprint + "' does not match model '" +
                           model.fingerprint + "'");
  }
  const RealGrid lattice = position_scores(embedding, model);
  const std::size_t s = embedding.patch_size;
  const std::size_t cell = embedding.cell;
  std::vector<PatchScoreTile> tiles;
  tiles.reserve(embedding.patch_origins.size());
  for (const auto& [ox, oy] : embedding.patch_origins) {
    PatchScoreTile tile{ox, oy, RealGrid(s, s)};
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) tile.scores(x, y) = lattice((ox + x) / cell, (oy + y) / cell);
    }
    tiles.push_back(std::move(tile));
  }
  return blend_patch_scores(tiles, s, embedding.raster_width, embedding.raster_height);
}

double image_score(const ScoreMap& map) {
  if (map.empty()) throw ShapeError("empty score map");
  double sum = 0.0;
  for (double v : map.data()) sum += v;
  return sum / static_cast<double>(map.size());
}

double calibrate_threshold(std::span<const double> training_scores) {
  if (training_scores.empty()) throw ConfigError("cannot calibrate a threshold from no scores");
  if (training_scores.size() < 20) throw ConfigError("threshold calibration needs at least 20 training scores");
  std::vector<double> sorted(training_scores.begin(), training_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t rank = (95 * n + 99) / 100;  // ceil(0.95 n) in exact integer arithmetic
  return sorted[rank - 1];
}

double probability(double score, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("probability needs a calibrated threshold > 0");
  return std::min(1.0, score / (2.0 * threshold));
}

ProbabilityMap probability_map(const ScoreMap& map, double threshold) {
  ProbabilityMap out(map.width(), map.height());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = probability(map[i], threshold);
  return out;
}

}  // namespace unrest
