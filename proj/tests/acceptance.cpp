// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "synthetic_benchmark.hpp"
#include "unrest/commands.hpp"
#include "unrest/eval.hpp"
#include "unrest/gaussian_model.hpp"
#include "unrest/preprocess.hpp"

using namespace unrest;
using namespace unrest::testing;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %-26s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// Sample covariance with an (N - 1) denominator plus eps * I, by explicit loops.
Eigen::MatrixXd naive_covariance(const Eigen::MatrixXd& samples, double eps) {
  const auto n = samples.rows(), k = samples.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) mean += samples.row(i).transpose();
  mean /= static_cast<double>(n);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd d = samples.row(i).transpose() - mean;
    c += d * d.transpose();
  }
  c /= static_cast<double>(n - 1);
  c += eps * Eigen::MatrixXd::Identity(k, k);
  return c;
}

Eigen::MatrixXd correlated_samples(std::mt19937_64& gen, Eigen::Index n, Eigen::Index k) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd mix(k, k), z(n, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) mix(i, j) = normal(gen) / std::sqrt(static_cast<double>(k));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) z(i, j) = normal(gen);
  return z * mix;
}

void distance_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(101);
  std::normal_distribution<double> normal;
  double worst_weighted = 0.0, worst_oracle = 0.0;
  const int ks[] = {2, 10, 100};
  for (int i = 0; i < 1000; ++i) {
    const int k = ks[i % 3];
    const Eigen::MatrixXd samples = correlated_samples(gen, k + 20, k);
    const PositionGaussian g = fit_position(samples, 0.01);
    const Eigen::MatrixXd inv = naive_covariance(samples, 0.01).fullPivLu().inverse();
    Eigen::VectorXd x(k);
    for (int j = 0; j < k; ++j) x(j) = g.mean(j) + 2.0 * normal(gen);
    const double m = mahalanobis(x, g);
    const Eigen::VectorXd d = x - g.mean;
    worst_weighted = std::max(worst_weighted, std::abs(weighted_mahalanobis(x, g, Eigen::VectorXd::Ones(k)) - m));
    worst_oracle = std::max(worst_oracle, std::abs(m - std::sqrt(d.dot(inv * d))));
  }
  const double t = seconds_since(t0);
  report(worst_weighted <= 1e-10 && worst_oracle <= 1e-8 && t < 10.0, "distance identities",
         fmt("max|wmaha(W=I)-maha|=%.2e (<=1e-10), max|maha-oracle|=%.2e (<=1e-8), %.2fs (<10s)", worst_weighted,
             worst_oracle, t));
}

void nlml_density() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(202);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> dim(1, 10);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int k = dim(gen);
    const Eigen::MatrixXd samples = correlated_samples(gen, k + 20, k);
    const PositionGaussian g = fit_position(samples, 0.01);
    const Eigen::MatrixXd c = naive_covariance(samples, 0.01);
    Eigen::VectorXd x(k);
    for (int j = 0; j < k; ++j) x(j) = g.mean(j) + normal(gen);
    const Eigen::VectorXd d = x - g.mean;
    const auto lu = c.fullPivLu();
    const double density =
        std::exp(-0.5 * d.dot(lu.solve(d))) / std::sqrt(std::pow(2.0 * std::numbers::pi, k) * lu.determinant());
    worst = std::max(worst, std::abs(nlml(x, g, Eigen::VectorXd::Ones(k)) + std::log(density)));
  }
  const double t = seconds_since(t0);
  report(worst <= 1e-10 && t < 5.0, "nlml equals -log density",
         fmt("max|nlml+log p|=%.2e (<=1e-10), %.2fs (<5s)", worst, t));
}

RealGrid dense_fill(const RealGrid& values, const MaskGrid& mask) {
  const long w = static_cast<long>(values.width()), h = static_cast<long>(values.height()), n = w * h;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const long i = y * w + x;
      if (!mask(x, y)) {
        a(i, i) = 1.0;
        b(i) = values(x, y);
        continue;
      }
      for (const auto& [u, v] : {std::pair{x - 1, y}, std::pair{x + 1, y}, std::pair{x, y - 1}, std::pair{x, y + 1}}) {
        if (u < 0 || v < 0 || u >= w || v >= h) continue;
        a(i, i) += 1.0;
        a(i, v * w + u) -= 1.0;
      }
    }
  }
  const Eigen::VectorXd sol = a.fullPivLu().solve(b);
  RealGrid out(values.width(), values.height());
  for (long i = 0; i < n; ++i) out[i] = sol(i);
  return out;
}

void region_fill_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> coef(-5.0, 5.0), unit(0.0, 1.0);
  double worst_affine = 0.0, worst_dense = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t w = 20 + trial % 30, h = 15 + (trial * 7) % 35;
    const double a = coef(gen), b = coef(gen), c = coef(gen);
    RealGrid truth(w, h);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) truth(x, y) = a * x + b * y + c;
    // Arbitrary interior mask: random seeds grown into blobs, border ring kept known.
    MaskGrid mask(w, h, 0);
    const double density = 0.02 + 0.2 * unit(gen);
    for (std::size_t y = 1; y + 1 < h; ++y)
      for (std::size_t x = 1; x + 1 < w; ++x) mask(x, y) = unit(gen) < density;
    mask = dilate(mask, 1 + trial % 3);
    for (std::size_t x = 0; x < w; ++x) mask(x, 0) = mask(x, h - 1) = 0;
    for (std::size_t y = 0; y < h; ++y) mask(0, y) = mask(w - 1, y) = 0;
    RealGrid input = truth;
    for (std::size_t i = 0; i < input.size(); ++i)
      if (mask[i]) input[i] = std::nan("");
    const RealGrid filled = region_fill(input, mask);
    for (std::size_t i = 0; i < filled.size(); ++i) worst_affine = std::max(worst_affine, std::abs(filled[i] - truth[i]));
  }
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 200; ++trial) {
    RealGrid values(9, 9);
    MaskGrid mask(9, 9);
    for (std::size_t i = 0; i < 81; ++i) {
      values[i] = normal(gen);
      mask[i] = unit(gen) < 0.5;
    }
    mask[trial % 81] = 0;
    const RealGrid filled = region_fill(values, mask);
    const RealGrid oracle = dense_fill(values, mask);
    for (std::size_t i = 0; i < 81; ++i) worst_dense = std::max(worst_dense, std::abs(filled[i] - oracle[i]));
  }
  const double t = seconds_since(t0);
  report(worst_affine <= 1e-6 && worst_dense <= 1e-6 && t < 5.0, "region fill exactness",
         fmt("affine max err=%.2e (<=1e-6), 9x9 vs dense max err=%.2e (<=1e-6), %.2fs (<5s)", worst_affine,
             worst_dense, t));
}

void calibration_contract() {
  std::mt19937_64 gen(404);
  std::uniform_int_distribution<int> size(20, 1000);
  std::lognormal_distribution<double> scores(0.0, 1.0);
  double worst_coverage = 1.0;
  bool exact = true;
  for (int set = 0; set < 200; ++set) {
    std::vector<double> s(size(gen));
    for (double& v : s) v = scores(gen);
    if (set % 4 == 0) {
      for (std::size_t i = 0; i < s.size(); i += 3) s[i] = s[0];  // ties
    }
    const double th = calibrate_threshold(s);
    std::size_t below = 0;
    for (double v : s) below += v <= th;
    worst_coverage = std::min(worst_coverage, static_cast<double>(below) / s.size());
    exact = exact && probability(th, th) == 0.5 && probability(2.0 * th, th) == 1.0;
  }
  report(worst_coverage >= 0.95 && exact, "calibration contract",
         fmt("min fraction <= T_h = %.4f (>=0.95), P(T_h)=0.5 and P(2T_h)=1 exactly: %s", worst_coverage,
             exact ? "yes" : "no"));
}

void auroc_oracle() {
  std::mt19937_64 gen(505);
  std::uniform_int_distribution<int> size(2, 100), level(0, 9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int set = 0; set < 100; ++set) {
    const int n = size(gen);
    std::vector<LabeledScore> s;
    const bool coarse = set % 2 == 0;  // coarse scores produce many ties
    for (int i = 0; i < n; ++i) s.push_back({coarse ? static_cast<double>(level(gen)) : unit(gen), unit(gen) < 0.4, ""});
    s[0].anomaly = true;
    s[1].anomaly = false;
    double credit = 0.0, pairs = 0.0;
    for (const auto& p : s) {
      if (!p.anomaly) continue;
      for (const auto& q : s) {
        if (q.anomaly) continue;
        pairs += 1.0;
        credit += p.score > q.score ? 1.0 : p.score == q.score ? 0.5 : 0.0;
      }
    }
    worst = std::max(worst, std::abs(auroc(s) - credit / pairs));
  }
  report(worst <= 1e-12, "AUROC oracle", fmt("max|auroc-pairwise|=%.2e (<=1e-12) over 100 sets", worst));
}

struct Variant {
  const char* name;
  FillMode fill;
  InputFormat format;
};

void synthetic_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  const BenchmarkSpec spec;
  const std::vector<Metric> metrics{Metric::kMaha, Metric::kWeightedMaha, Metric::kNlml, Metric::kWeightedNlml};
  const Variant variants[] = {{"interpolated", FillMode::kLaplace, InputFormat::kUnwrapped},
                              {"holes", FillMode::kZero, InputFormat::kUnwrapped},
                              {"wrapped", FillMode::kZero, InputFormat::kWrapped}};
  std::map<Metric, double> by_metric;
  double by_format[3] = {};
  for (int v = 0; v < 3; ++v) {
    PipelineConfig cfg = benchmark_config();
    cfg.preprocess.fill_mode = variants[v].fill;
    cfg.preprocess.input_format = variants[v].format;
    const Backbone backbone = Backbone::load(fixture_path("tiny_backbone.onnx"), cfg.patch.patch_size);
    const auto result = benchmark_auroc(cfg, backbone, generate_benchmark(cfg, spec), metrics);
    if (v == 0) by_metric = result;
    by_format[v] = result.at(Metric::kWeightedNlml);
  }
  const double t = seconds_since(t0);

  const double wnlml = by_metric[Metric::kWeightedNlml];
  report(wnlml >= 0.90 && t < 600.0, "synthetic benchmark",
         fmt("AUROC(wnlml)=%.4f (>=0.90), %zu train / %zu+%zu test, seed %llu, %.1fs (<600s)", wnlml,
             spec.train_count, spec.test_normal, spec.test_anomaly, static_cast<unsigned long long>(spec.seed), t));

  const double nlml = by_metric[Metric::kNlml], wmaha = by_metric[Metric::kWeightedMaha],
               maha = by_metric[Metric::kMaha];
  const bool weighting = wnlml >= nlml - 0.02 && wmaha >= maha - 0.02 && (wnlml > nlml || wmaha > maha);
  report(weighting, "weighting trend",
         fmt("wnlml=%.4f nlml=%.4f wmaha=%.4f maha=%.4f (weighted >= unweighted-0.02, one strictly better)", wnlml,
             nlml, wmaha, maha));

  const bool formats = by_format[0] >= by_format[1] - 0.02 && by_format[1] >= by_format[2] - 0.02;
  report(formats, "input-format trend",
         fmt("AUROC(wnlml) interpolated=%.4f holes=%.4f wrapped=%.4f (each >= next-0.02)", by_format[0], by_format[1],
             by_format[2]));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  const auto root = std::filesystem::temp_directory_path() / "unrest_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  const auto config = root / "config.toml";
  std::ofstream(config) << to_toml(benchmark_config());
  const auto manifest = run_synth({config, 52, 3, 3, root / "data", 99});
  const auto backbone = fixture_path("tiny_backbone.onnx");

  std::ostringstream log;
  run_fit({manifest, backbone, config, root / "a.pdm", {}}, log);
  run_fit({manifest, backbone, config, root / "b.pdm", {}}, log);
  const bool models = slurp(root / "a.pdm") == slurp(root / "b.pdm");

  run_score({root / "a.pdm", backbone, config, root / "data", root / "score_a", {}, false}, log);
  run_score({root / "a.pdm", backbone, config, root / "data", root / "score_b", {}, false}, log);
  bool maps = true;
  std::size_t compared = 0;
  for (const auto& f : list_rasters(root / "score_a")) {
    maps = maps && slurp(f) == slurp(root / "score_b" / f.filename());
    ++compared;
  }
  maps = maps && compared == 58;
  report(models && maps, "determinism",
         fmt("model files byte-identical: %s; %zu probability maps bit-identical: %s", models ? "yes" : "no",
             compared, maps ? "yes" : "no"));
}

void guarded(const char* name, const std::function<void()>& check) {
  try {
    check();
  } catch (const std::exception& e) {
    report(false, name, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded("distance identities", distance_identities);
  guarded("nlml equals -log density", nlml_density);
  guarded("region fill exactness", region_fill_exactness);
  guarded("calibration contract", calibration_contract);
  guarded("AUROC oracle", auroc_oracle);
  guarded("synthetic benchmark", synthetic_benchmark);
  guarded("determinism", determinism);
  std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
