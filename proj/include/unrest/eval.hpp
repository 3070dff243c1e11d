#pragma once

#include <span>
#include <string>

namespace unrest {

struct LabeledScore {
  double score = 0.0;
  bool anomaly = false;
  std::string id;
};

/// Mann-Whitney AUROC: P(pos > neg) + P(pos == neg) / 2.
/// Throws UndefinedAurocError when only one class is present.
double auroc(std::span<const LabeledScore> samples);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

/// A sample is predicted anomalous iff score > threshold.
ConfusionCounts confusion_at_threshold(std::span<const LabeledScore> samples, double threshold);

}  // namespace unrest
