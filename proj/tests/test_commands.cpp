#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "synthetic_benchmark.hpp"
#include "unrest/commands.hpp"

using namespace unrest;
using unrest::testing::fixture_path;

namespace {

const char* kConfig = R"([patch]
size = 32
stride = 16
[model]
keep_channels = 12
selection_seed = 3
[synth]
width = 48
height = 40
atmosphere_amplitude = 3.0
coverage_fraction = 0.05
blob_scale = 6.0
depth_min = 2000.0
depth_max = 3000.0
)";

struct Workspace {
  std::filesystem::path root;
  std::filesystem::path config;
  std::filesystem::path data;

  explicit Workspace(const std::string& name) {
    root = std::filesystem::temp_directory_path() / ("unrest_cmd_" + name);
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
    config = root / "config.toml";
    std::ofstream(config) << kConfig;
    data = root / "data";
  }

  std::filesystem::path synth(std::size_t train, std::size_t normal, std::size_t anomaly) const {
    return run_synth({config, train, normal, anomaly, data, 77});
  }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("synth writes rasters and a manifest") {
  Workspace ws("synth");
  const auto manifest = ws.synth(3, 2, 1);
  const auto rows = lines_of(manifest);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].rfind("scene_0000.f32\ttrain\tnormal\tseed=", 0) == 0);
  CHECK(rows[4].find("\ttest\tnormal\t") != std::string::npos);
  CHECK(rows[5].find("\ttest\tanomaly\t") != std::string::npos);
  CHECK(rows[5].find("synth.deformation.depth=") != std::string::npos);
  const Interferogram ifg = load_interferogram(ws.data / "scene_0005.f32");
  CHECK(ifg.width() == 48);
  CHECK(ifg.height() == 40);
  const auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 6);
  CHECK(entries[5].anomaly);
  CHECK(entries[0].split == Split::kTrain);
  CHECK(entries[0].path == ws.data / "scene_0000.f32");

  // Same seed, same bytes.
  Workspace again("synth_again");
  again.synth(3, 2, 1);
  CHECK(slurp(ws.data / "scene_0005.f32") == slurp(again.data / "scene_0005.f32"));
}

TEST_CASE("fit, score and evaluate end to end") {
  Workspace ws("e2e");
  const auto manifest = ws.synth(24, 4, 4);
  std::ostringstream log;
  const FittedModel model =
      run_fit({manifest, fixture_path("tiny_backbone.onnx"), ws.config, ws.root / "model.pdm", {}}, log);
  CHECK(std::filesystem::exists(ws.root / "model.pdm"));
  CHECK(model.threshold);
  CHECK(log.str().find("threshold T_h = ") != std::string::npos);

  std::ostringstream slog;
  const auto scored = run_score({ws.root / "model.pdm", fixture_path("tiny_backbone.onnx"), ws.config, ws.data,
                                 ws.root / "scores", {}, true},
                                slog);
  CHECK(scored.size() == 32);
  CHECK(std::filesystem::exists(ws.root / "scores" / "scene_0000.prob.f32"));
  CHECK(std::filesystem::exists(ws.root / "scores" / "scene_0000.png"));
  CHECK(lines_of(ws.root / "scores" / "scores.tsv").size() == 33);
  const Interferogram prob = load_interferogram(ws.root / "scores" / "scene_0031.prob.f32");
  CHECK(prob.width() == 48);
  for (double v : prob.values().data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  std::ostringstream elog;
  EvaluateOptions eo;
  eo.manifest = manifest;
  eo.backbone = fixture_path("tiny_backbone.onnx");
  eo.config = ws.config;
  eo.out = ws.root / "reports";
  eo.metric = Metric::kMaha;
  const EvaluationReport report = run_evaluate(eo, elog);
  CHECK(report.train_count == 24);
  CHECK(report.test_count == 8);
  REQUIRE(report.auroc);
  const auto j = nlohmann::json::parse(slurp(ws.root / "reports" / "report_maha.json"));
  CHECK(j.at("metric") == "maha");
  CHECK(j.at("images").size() == 8);
  CHECK(j.at("auroc").get<double>() == *report.auroc);
  CHECK(std::filesystem::exists(ws.root / "reports" / "report_maha.txt"));

  // A saved model is reused as is.
  EvaluateOptions reuse = eo;
  reuse.metric.reset();
  reuse.model = ws.root / "model.pdm";
  reuse.out = ws.root / "reports2";
  const EvaluationReport r2 = run_evaluate(reuse, elog);
  CHECK(r2.metric == "wnlml");
  CHECK(r2.threshold == *model.threshold);
  reuse.metric = Metric::kMaha;
  CHECK_THROWS_AS(run_evaluate(reuse, elog), ConfigError);
}

TEST_CASE("all-normal test split reports false positives without AUROC") {
  Workspace ws("fp");
  const auto manifest = ws.synth(22, 5, 0);
  std::ostringstream log;
  EvaluateOptions eo;
  eo.manifest = manifest;
  eo.backbone = fixture_path("tiny_backbone.onnx");
  eo.config = ws.config;
  eo.out = ws.root / "reports";
  const EvaluationReport report = run_evaluate(eo, log);
  CHECK_FALSE(report.auroc);
  CHECK(report.confusion.tp + report.confusion.fn == 0);
  const auto j = nlohmann::json::parse(slurp(ws.root / "reports" / "report_wnlml.json"));
  CHECK(j.at("auroc").is_null());
  CHECK(j.at("false_positives").get<std::size_t>() == report.confusion.fp);
  CHECK(log.str().find("AUROC undefined") != std::string::npos);
}

TEST_CASE("fit refuses anomalies in the train split") {
  Workspace ws("dirty");
  ws.synth(22, 0, 1);
  std::ofstream(ws.data / "dirty.tsv") << "scene_0000.f32\ttrain\tnormal\nscene_0022.f32\ttrain\tanomaly\n";
  std::ostringstream log;
  CHECK_THROWS_AS(run_fit({ws.data / "dirty.tsv", fixture_path("tiny_backbone.onnx"), ws.config, ws.root / "m.pdm", {}},
                          log),
                  ConfigError);
  CHECK_FALSE(std::filesystem::exists(ws.root / "m.pdm"));
}

TEST_CASE("scoring an empty directory warns and succeeds") {
  Workspace ws("empty");
  const auto manifest = ws.synth(22, 0, 0);
  std::ostringstream log;
  run_fit({manifest, fixture_path("tiny_backbone.onnx"), ws.config, ws.root / "m.pdm", {}}, log);
  std::filesystem::create_directories(ws.root / "nothing");
  std::ostringstream slog;
  const auto r = run_score(
      {ws.root / "m.pdm", fixture_path("tiny_backbone.onnx"), ws.config, ws.root / "nothing", ws.root / "out", {}, false},
      slog);
  CHECK(r.empty());
  CHECK(slog.str().find("warning") != std::string::npos);
}

TEST_CASE("scoring under a different configuration is refused") {
  Workspace ws("mismatch");
  const auto manifest = ws.synth(22, 1, 0);
  std::ostringstream log;
  run_fit({manifest, fixture_path("tiny_backbone.onnx"), ws.config, ws.root / "m.pdm", {}}, log);
  const auto other = ws.root / "other.toml";
  std::ofstream(other) << kConfig << "[preprocess]\nfill_mode = \"zero\"\n";
  CHECK_THROWS_AS(run_score({ws.root / "m.pdm", fixture_path("tiny_backbone.onnx"), other, ws.data / "scene_0022.f32",
                             ws.root / "out", {}, false},
                            log),
                  FingerprintError);
}

TEST_CASE("delay maps are matched by file stem") {
  Workspace ws("delay");
  std::filesystem::create_directories(ws.root / "delays");
  write_raster(Interferogram(RealGrid(4, 3, 0.5)), ws.root / "delays" / "scene_0001.tif", RasterFormat::kGeoTiffFloat32);
  const auto d = find_delay(ws.root / "delays", ws.data / "scene_0001.f32");
  REQUIRE(d);
  CHECK((*d)(3, 2) == 0.5);
  CHECK_FALSE(find_delay(ws.root / "delays", ws.data / "scene_0002.f32"));
  CHECK_FALSE(find_delay({}, ws.data / "scene_0001.f32"));
}

TEST_CASE("backbone path falls back to the environment") {
  CHECK(resolve_backbone("given.onnx") == "given.onnx");
  setenv(kBackboneEnvVar, "from_env.onnx", 1);
  CHECK(resolve_backbone({}) == "from_env.onnx");
  unsetenv(kBackboneEnvVar);
  CHECK_THROWS_AS(resolve_backbone({}), ConfigError);
}

TEST_CASE("manifest parsing errors") {
  Workspace ws("manifest");
  std::ofstream(ws.root / "bad.tsv") << "a.f32\tvalidation\tnormal\n";
  CHECK_THROWS_AS(read_manifest(ws.root / "bad.tsv"), FormatError);
  std::ofstream(ws.root / "short.tsv") << "a.f32\ttrain\n";
  CHECK_THROWS_AS(read_manifest(ws.root / "short.tsv"), FormatError);
  std::ofstream(ws.root / "ok.tsv") << "# comment\n\n/abs/a.f32\ttest\tanomaly\textra\n";
  const auto e = read_manifest(ws.root / "ok.tsv");
  REQUIRE(e.size() == 1);
  CHECK(e[0].path == "/abs/a.f32");
  CHECK(e[0].anomaly);
}

TEST_CASE("shipped benchmark config matches the acceptance settings") {
  const PipelineConfig shipped = load_config(std::filesystem::path(UNREST_FIXTURE_DIR) / ".." / ".." / "configs" /
                                             "benchmark.toml");
  CHECK(to_toml(shipped) == to_toml(unrest::testing::benchmark_config()));
}
