// unrest: unsupervised deformation detection on unwrapped interferograms.

#include <CLI11.hpp>

#include <iostream>

#include "unrest/commands.hpp"

namespace {

std::optional<unrest::Metric> parse_metric(const std::string& name) {
  if (name.empty()) return std::nullopt;
  return unrest::metric_from_string(name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised volcanic deformation detection on unwrapped interferograms"};
  app.require_subcommand(1);

  unrest::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate labelled synthetic interferograms and a manifest");
  synth_cmd->add_option("--spec", synth.spec, "TOML file with a [synth] table")->required();
  synth_cmd->add_option("--count-train", synth.count_train, "Normal scenes for the train split");
  synth_cmd->add_option("--count-normal", synth.count_normal, "Normal scenes for the test split");
  synth_cmd->add_option("--count-anomaly", synth.count_anomaly, "Deformation scenes for the test split");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Master seed");

  unrest::FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit and calibrate a model on the manifest's train split");
  fit_cmd->add_option("--manifest", fit.manifest)->required();
  fit_cmd->add_option("--backbone", fit.backbone, "ONNX backbone (default: $UNREST_BACKBONE)");
  fit_cmd->add_option("--config", fit.config, "Pipeline TOML config")->required();
  fit_cmd->add_option("--out", fit.out, "Model file to write")->required();
  fit_cmd->add_option("--delay-dir", fit.delay_dir, "Directory of delay maps matched by filename stem");

  unrest::ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Score rasters against a fitted model");
  score_cmd->add_option("--model", score.model)->required();
  score_cmd->add_option("--backbone", score.backbone, "ONNX backbone (default: $UNREST_BACKBONE)");
  score_cmd->add_option("--config", score.config, "Pipeline TOML config")->required();
  score_cmd->add_option("--input", score.input, "Raster file or directory")->required();
  score_cmd->add_option("--out", score.out, "Output directory")->required();
  score_cmd->add_option("--delay-dir", score.delay_dir, "Directory of delay maps matched by filename stem");
  score_cmd->add_flag("--overlay", score.overlay, "Write PNG overlays with P>0.5 / P>0.8 contours");

  unrest::EvaluateOptions evaluate;
  std::string model_path;
  std::string metric_name;
  auto* eval_cmd = app.add_subcommand("evaluate", "Fit (or load) a model and report AUROC on the test split");
  eval_cmd->add_option("--model", model_path, "Use this model instead of fitting");
  eval_cmd->add_option("--manifest", evaluate.manifest)->required();
  eval_cmd->add_option("--backbone", evaluate.backbone, "ONNX backbone (default: $UNREST_BACKBONE)");
  eval_cmd->add_option("--config", evaluate.config, "Pipeline TOML config")->required();
  eval_cmd->add_option("--out", evaluate.out, "Report directory")->default_val(".");
  eval_cmd->add_option("--delay-dir", evaluate.delay_dir, "Directory of delay maps matched by filename stem");
  eval_cmd->add_option("--metric", metric_name, "maha | wmaha | nlml | wnlml (overrides config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      const auto manifest = unrest::run_synth(synth);
      std::cout << "wrote " << manifest.string() << "\n";
    } else if (*fit_cmd) {
      unrest::run_fit(fit, std::cout);
    } else if (*score_cmd) {
      unrest::run_score(score, std::cout);
    } else if (*eval_cmd) {
      if (!model_path.empty()) evaluate.model = model_path;
      evaluate.metric = parse_metric(metric_name);
      unrest::run_evaluate(evaluate, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
