#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "unrest/config.hpp"
#include "unrest/pipeline.hpp"
#include "unrest/synth.hpp"

namespace unrest::testing {

std::filesystem::path fixture_path(const std::string& name);

/// Synthetic benchmark: 64 x 64 scenes, 100 normal training scenes
/// (atmosphere std 3 rad), test = 50 normal + 20 deformation scenes with
/// epicentre LOS phase >= 9 rad.
struct BenchmarkSpec {
  std::size_t train_count = 100;
  std::size_t test_normal = 50;
  std::size_t test_anomaly = 20;
  std::uint64_t seed = 20240917;
};

PipelineConfig benchmark_config();

struct BenchmarkScenes {
  std::vector<Interferogram> train;
  std::vector<Interferogram> test;
  std::vector<bool> test_anomaly;
};

BenchmarkScenes generate_benchmark(const PipelineConfig& cfg, const BenchmarkSpec& spec);

/// AUROC of image scores on the test split for each requested metric.
std::map<Metric, double> benchmark_auroc(const PipelineConfig& cfg, const Backbone& backbone,
                                         const BenchmarkScenes& scenes, const std::vector<Metric>& metrics);

}  // namespace unrest::testing
