#include "unrest/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace unrest {

Detector::Detector(PipelineConfig cfg, const Backbone& backbone) : cfg_(std::move(cfg)), backbone_(&backbone) {
  cfg_.validate();
  if (cfg_.patch.patch_size != backbone.input_size()) {
    throw ConfigError("patch.size (" + std::to_string(cfg_.patch.patch_size) + ") differs from backbone input size (" +
                      std::to_string(backbone.input_size()) + ")");
  }
  const auto& l = backbone.layers();
  selection_ = sample_channel_selection({l[0].channels, l[1].channels, l[2].channels}, cfg_.model.keep_channels,
                                        cfg_.model.selection_seed);
  fingerprint_ = config_fingerprint(cfg_, backbone.descriptor());
}

RealGrid Detector::preprocess(const Interferogram& ifg, const std::optional<DelayMap>& delay) const {
  return preprocess_pipeline(ifg, delay, cfg_.preprocess);
}

EmbeddingMap Detector::embed(const Interferogram& ifg, const std::optional<DelayMap>& delay) const {
  EmbeddingMap map = embed_image(preprocess(ifg, delay), cfg_.patch, *backbone_, selection_);
  map.fingerprint = fingerprint_;
  return map;
}

FittedModel Detector::fit(std::span<const EmbeddingMap> training, std::optional<Metric> metric) const {
  for (const auto& e : training) {
    if (e.fingerprint != fingerprint_) throw FingerprintError("training embedding was produced under another configuration");
  }
  FittedModel model;
  model.gaussians = unrest::fit(training, cfg_.model.epsilon);
  model.selection = selection_;
  model.weights = cfg_.weights;
  model.metric = metric.value_or(cfg_.model.metric);
  model.epsilon = cfg_.model.epsilon;
  model.fingerprint = fingerprint_;
  model.cell = static_cast<std::size_t>(backbone_->layers()[0].stride);
  model.patch_size = static_cast<std::size_t>(cfg_.patch.patch_size);
  calibrate(model, training);
  return model;
}

void calibrate(FittedModel& model, std::span<const EmbeddingMap> training) {
  std::vector<double> scores;
  scores.reserve(training.size());
  for (const auto& e : training) scores.push_back(image_score(score_map(e, model)));
  const double threshold = calibrate_threshold(scores);
  if (!(threshold > 0.0)) throw SolverError("calibrated threshold is not positive");
  model.threshold = threshold;
}

FittedModel with_metric(const FittedModel& model, Metric metric, std::span<const EmbeddingMap> training) {
  FittedModel out = model;
  out.metric = metric;
  out.threshold.reset();
  calibrate(out, training);
  return out;
}

ImageResult score_embedding(const EmbeddingMap& embedding, const FittedModel& model) {
  if (!model.threshold) throw ConfigError("model is not calibrated");
  ImageResult r;
  r.scores = score_map(embedding, model);
  r.probabilities = probability_map(r.scores, *model.threshold);
  r.score = image_score(r.scores);
  r.probability = probability(r.score, *model.threshold);
  return r;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 3) throw FormatError(where + ": expected <path>\\t<split>\\t<label>");
    ManifestEntry e;
    e.path = fields[0];
    if (e.path.is_relative()) e.path = base / e.path;
    e.id = fields[0];
    if (fields[1] == "train") e.split = Split::kTrain;
    else if (fields[1] == "test") e.split = Split::kTest;
    else throw FormatError(where + ": split must be train or test");
    if (fields[2] == "normal") e.anomaly = false;
    else if (fields[2] == "anomaly") e.anomaly = true;
    else throw FormatError(where + ": label must be normal or anomaly");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::optional<DelayMap> find_delay(const std::filesystem::path& delay_dir, const std::filesystem::path& raster_path) {
  if (delay_dir.empty()) return std::nullopt;
  const std::string stem = raster_path.stem().string();
  for (const char* ext : {".f32", ".ifg", ".raw", ".tif", ".tiff"}) {
    const std::filesystem::path candidate = delay_dir / (stem + ext);
    if (std::filesystem::is_regular_file(candidate)) {
      const Interferogram delay = read_raster(candidate, format_for_path(candidate));
      if (delay.missing_count() != 0) throw FormatError("delay map contains missing pixels: " + candidate.string());
      return delay.values();
    }
  }
  return std::nullopt;
}

Interferogram load_interferogram(const std::filesystem::path& path) {
  return read_raster(path, format_for_path(path));
}

EvaluationReport make_report(Metric metric, std::size_t train_count, double threshold,
                             std::vector<ImageOutcome> images) {
  EvaluationReport report;
  report.metric = to_string(metric);
  report.train_count = train_count;
  report.test_count = images.size();
  report.threshold = threshold;
  std::vector<LabeledScore> by_score, by_probability;
  for (const auto& img : images) {
    by_score.push_back({img.score, img.anomaly, img.id});
    by_probability.push_back({img.probability, img.anomaly, img.id});
  }
  try {
    report.auroc = auroc(by_score);
  } catch (const UndefinedAurocError&) {
    report.auroc.reset();
  }
  report.confusion = confusion_at_threshold(by_probability, kFlagProbability);
  report.images = std::move(images);
  return report;
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json j;
  j["metric"] = metric;
  j["train_count"] = train_count;
  j["test_count"] = test_count;
  j["threshold"] = threshold;
  j["auroc"] = auroc ? nlohmann::json(*auroc) : nlohmann::json(nullptr);
  j["false_positives"] = confusion.fp;
  j["confusion"] = {{"tp", confusion.tp}, {"fp", confusion.fp}, {"tn", confusion.tn}, {"fn", confusion.fn}};
  j["images"] = nlohmann::json::array();
  for (const auto& img : images) {
    j["images"].push_back({{"id", img.id},
                           {"label", img.anomaly ? "anomaly" : "normal"},
                           {"score", img.score},
                           {"probability", img.probability},
                           {"flagged", img.probability > kFlagProbability},
                           {"strong", img.probability > kStrongProbability}});
  }
  return j;
}

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "metric:          " << metric << "\n"
     << "train images:    " << train_count << "\n"
     << "test images:     " << test_count << "\n"
     << "threshold T_h:   " << threshold << "\n";
  if (auroc) {
    os << "AUROC:           " << *auroc << "\n";
  } else {
    os << "AUROC:           undefined (single-class test set)\n";
  }
  os << "false positives: " << confusion.fp << " (P > 0.5)\n"
     << "confusion:       TP=" << confusion.tp << " FP=" << confusion.fp << " TN=" << confusion.tn
     << " FN=" << confusion.fn << "\n\n";
  os << "id\tlabel\tscore\tprobability\tflag\n";
  for (const auto& img : images) {
    os << img.id << "\t" << (img.anomaly ? "anomaly" : "normal") << "\t" << img.score << "\t" << img.probability
       << "\t" << (img.probability > kStrongProbability ? "P>0.8" : img.probability > kFlagProbability ? "P>0.5" : "-")
       << "\n";
  }
  return os.str();
}

}  // namespace unrest
