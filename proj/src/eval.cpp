#include "unrest/eval.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "unrest/errors.hpp"

namespace unrest {

double auroc(std::span<const LabeledScore> samples) {
  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(samples.size());
  std::size_t positives = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw ConfigError("AUROC input contains a non-finite score: " + s.id);
    sorted.emplace_back(s.score, s.anomaly);
    positives += s.anomaly ? 1 : 0;
  }
  const std::size_t negatives = sorted.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedAurocError("AUROC is undefined for single-class input");

  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Twice the U statistic stays an exact integer: each positive earns 2 per lower
  // negative and 1 per tied negative.
  std::size_t twice_u = 0;
  std::size_t negatives_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t tied_pos = 0, tied_neg = 0;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      (sorted[j].second ? tied_pos : tied_neg) += 1;
      ++j;
    }
    twice_u += tied_pos * (2 * negatives_below + tied_neg);
    negatives_below += tied_neg;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

ConfusionCounts confusion_at_threshold(std::span<const LabeledScore> samples, double threshold) {
  ConfusionCounts c;
  for (const auto& s : samples) {
    const bool predicted = s.score > threshold;
    if (predicted && s.anomaly) ++c.tp;
    else if (predicted) ++c.fp;
    else if (s.anomaly) ++c.fn;
    else ++c.tn;
  }
  return c;
}

}  // namespace unrest
