#include "unrest/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "unrest/overlay.hpp"
#include "unrest/synth.hpp"

namespace unrest {

namespace {

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  return tmp;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_raster_atomic(const Interferogram& ifg, const std::filesystem::path& path) {
  const auto tmp = temp_sibling(path);
  write_raster(ifg, tmp, RasterFormat::kRawF32);
  std::filesystem::rename(tmp, path);
}

void write_png_atomic(const Grid<Rgb>& image, const std::filesystem::path& path) {
  const auto tmp = temp_sibling(path);
  write_png(image, tmp);
  std::filesystem::rename(tmp, path);
}

struct LoadedEntry {
  ManifestEntry entry;
  EmbeddingMap embedding;
};

std::vector<LoadedEntry> embed_entries(const Detector& detector, const std::vector<ManifestEntry>& entries,
                                       const std::filesystem::path& delay_dir) {
  std::vector<LoadedEntry> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const Interferogram ifg = load_interferogram(e.path);
    out.push_back({e, detector.embed(ifg, find_delay(delay_dir, e.path))});
  }
  return out;
}

std::vector<EmbeddingMap> training_embeddings(const Detector& detector, const std::vector<ManifestEntry>& entries,
                                              const std::filesystem::path& delay_dir) {
  std::vector<ManifestEntry> train;
  for (const auto& e : entries) {
    if (e.split != Split::kTrain) continue;
    if (e.anomaly) {
      throw ConfigError("train split must contain only normal images; '" + e.id + "' is labelled anomaly");
    }
    train.push_back(e);
  }
  if (train.empty()) throw ConfigError("manifest has no train entries");
  std::vector<EmbeddingMap> maps;
  for (auto& l : embed_entries(detector, train, delay_dir)) maps.push_back(std::move(l.embedding));
  return maps;
}

std::string scene_columns(const SceneSpec& spec) {
  std::string out;
  for (const auto& [k, v] : scene_metadata(spec)) out += "\t" + k + "=" + v;
  return out;
}

}  // namespace

std::filesystem::path resolve_backbone(const std::filesystem::path& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kBackboneEnvVar); env != nullptr && *env != '\0') return env;
  throw ConfigError(std::string("no backbone given: pass --backbone or set ") + kBackboneEnvVar);
}

std::vector<std::filesystem::path> list_rasters(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".f32" || ext == ".ifg" || ext == ".raw" || ext == ".tif" || ext == ".tiff") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::filesystem::path run_synth(const SynthOptions& opts) {
  const PipelineConfig cfg = load_config(opts.spec);
  const SceneSampler& sampler = cfg.synth;
  std::filesystem::create_directories(opts.out);

  std::ostringstream manifest;
  std::size_t index = 0;
  auto emit = [&](const SceneSpec& spec, const char* split) {
    const Scene scene = generate_scene(spec);
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << index << ".f32";
    write_raster_atomic(scene.interferogram, opts.out / name.str());
    manifest << name.str() << "\t" << split << "\t" << to_string(scene.label) << "\tseed=" << spec.rng_seed
             << scene_columns(spec) << "\n";
    ++index;
  };
  for (std::size_t i = 0; i < opts.count_train; ++i) emit(sampler.normal(mix_seed(opts.seed, index)), "train");
  for (std::size_t i = 0; i < opts.count_normal; ++i) emit(sampler.normal(mix_seed(opts.seed, index)), "test");
  for (std::size_t i = 0; i < opts.count_anomaly; ++i) emit(sampler.deformation(mix_seed(opts.seed, index)), "test");

  const auto manifest_path = opts.out / "manifest.tsv";
  write_text_atomic(manifest_path, manifest.str());
  return manifest_path;
}

FittedModel run_fit(const FitOptions& opts, std::ostream& log) {
  const PipelineConfig cfg = load_config(opts.config);
  const Backbone backbone = Backbone::load(resolve_backbone(opts.backbone), cfg.patch.patch_size);
  const Detector detector(cfg, backbone);
  const auto entries = read_manifest(opts.manifest);
  const auto training = training_embeddings(detector, entries, opts.delay_dir);
  const FittedModel model = detector.fit(training);
  save_model(model, opts.out);
  log << "fitted " << training.size() << " training images, metric " << to_string(model.metric) << "\n";
  log << "threshold T_h = " << std::setprecision(17) << *model.threshold << "\n";
  return model;
}

std::vector<ScoredImage> run_score(const ScoreOptions& opts, std::ostream& log) {
  const PipelineConfig cfg = load_config(opts.config);
  const Backbone backbone = Backbone::load(resolve_backbone(opts.backbone), cfg.patch.patch_size);
  const Detector detector(cfg, backbone);
  const FittedModel model = load_model(opts.model, detector.fingerprint());
  if (!model.threshold) throw ConfigError("model is not calibrated");

  std::vector<std::filesystem::path> inputs;
  if (std::filesystem::is_directory(opts.input)) {
    inputs = list_rasters(opts.input);
  } else if (std::filesystem::is_regular_file(opts.input)) {
    inputs.push_back(opts.input);
  } else {
    throw IoError("input not found: " + opts.input.string());
  }
  std::filesystem::create_directories(opts.out);
  if (inputs.empty()) {
    log << "warning: no rasters found in " << opts.input.string() << "\n";
    return {};
  }

  std::vector<ScoredImage> results;
  std::ostringstream summary;
  summary << std::setprecision(17) << "input\tscore\tprobability\tflagged\n";
  for (const auto& path : inputs) {
    const Interferogram ifg = load_interferogram(path);
    const ImageResult r = score_embedding(detector.embed(ifg, find_delay(opts.delay_dir, path)), model);
    const std::string stem = path.stem().string();
    write_raster_atomic(Interferogram(r.probabilities), opts.out / (stem + ".prob.f32"));
    if (opts.overlay) write_png_atomic(render_overlay(r.probabilities), opts.out / (stem + ".png"));
    results.push_back({path, r.score, r.probability});
    summary << path.filename().string() << "\t" << r.score << "\t" << r.probability << "\t"
            << (r.probability > kFlagProbability ? "yes" : "no") << "\n";
  }
  write_text_atomic(opts.out / "scores.tsv", summary.str());

  std::size_t flagged = 0;
  for (const auto& r : results) {
    if (r.probability > kFlagProbability) {
      log << "flagged: " << r.input.filename().string() << " P=" << std::setprecision(4) << r.probability << "\n";
      ++flagged;
    }
  }
  log << "scored " << results.size() << " image(s), " << flagged << " flagged\n";
  return results;
}

EvaluationReport run_evaluate(const EvaluateOptions& opts, std::ostream& log) {
  PipelineConfig cfg = load_config(opts.config);
  if (opts.metric) cfg.model.metric = *opts.metric;
  const Backbone backbone = Backbone::load(resolve_backbone(opts.backbone), cfg.patch.patch_size);
  const Detector detector(cfg, backbone);
  const auto entries = read_manifest(opts.manifest);

  FittedModel model;
  std::size_t train_count = 0;
  if (opts.model) {
    model = load_model(*opts.model, detector.fingerprint());
    if (opts.metric && *opts.metric != model.metric) {
      throw ConfigError("--metric differs from the supplied model's metric; refit instead");
    }
    if (!model.threshold) throw ConfigError("model is not calibrated");
  } else {
    const auto training = training_embeddings(detector, entries, opts.delay_dir);
    train_count = training.size();
    model = detector.fit(training);
  }

  std::vector<ManifestEntry> test;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(test),
               [](const ManifestEntry& e) { return e.split == Split::kTest; });
  std::vector<ImageOutcome> outcomes;
  for (const auto& l : embed_entries(detector, test, opts.delay_dir)) {
    const ImageResult r = score_embedding(l.embedding, model);
    outcomes.push_back({l.entry.id, l.entry.anomaly, r.score, r.probability});
  }
  EvaluationReport report = make_report(model.metric, train_count, *model.threshold, std::move(outcomes));

  std::filesystem::create_directories(opts.out);
  const std::string base = "report_" + report.metric;
  write_text_atomic(opts.out / (base + ".json"), report.to_json().dump(2) + "\n");
  write_text_atomic(opts.out / (base + ".txt"), report.to_text());
  if (report.auroc) {
    log << "AUROC (" << report.metric << ") = " << std::setprecision(6) << *report.auroc << "\n";
  } else {
    log << "AUROC undefined (single-class test set); false positives = " << report.confusion.fp << "\n";
  }
  return report;
}

}  // namespace unrest
