// Command-line entry point: synthesize data, train, evaluate, run the
// ablation grid, compute dataset statistics, or score an external
// prediction dump.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ig/datagen.hpp"
#include "ig/dataset.hpp"
#include "ig/errors.hpp"
#include "ig/eval.hpp"
#include "ig/harness.hpp"
#include "ig/model.hpp"
#include "ig/text_analysis.hpp"

namespace fs = std::filesystem;
using namespace ig;

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content << "\n";
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  datagen::SynthConfig cfg;
  if (!config_path.empty()) cfg = harness::load_config_file(config_path).synth;
  const auto result = datagen::synthesize_scenes(cfg);
  data::Dataset ds;
  ds.scenes = result.scenes;
  ds.splits = data::split_by_scene(result.samples, {0.8, 0.1, 0.1}, cfg.rng_seed);
  data::write_dataset(ds, out_dir);
  std::size_t n_samples = 0;
  for (const auto& s : ds.splits) n_samples += s.samples.size();
  std::cout << "wrote " << ds.scenes.size() << " scenes, " << n_samples << " samples to " << out_dir
            << "\n";
  return 0;
}

int cmd_stats(const std::string& data_dir, const std::string& out_path) {
  const auto ds = data::read_dataset(data_dir);
  const text::LexiconTagger tagger;
  const auto stats = datagen::compute_statistics(ds.splits, tagger);
  write_text(out_path, stats.to_json());
  std::cout << "stats: " << stats.total_texts << " texts, " << stats.num_fine_classes
            << " classes, " << stats.num_scenes << " scenes -> " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
  harness::FileConfig cfg;
  if (!config_path.empty()) {
    cfg = harness::load_config_file(config_path);
  } else {
    const auto preset = harness::desk_preset();
    cfg.model = preset.model;
    cfg.train = preset.train;
  }
  const auto ds = data::read_dataset(data_dir);
  const auto result = harness::train(cfg.train, cfg.model, ds, out_dir);
  std::cout << "trained " << result.epochs_run << " epochs in " << result.minutes_elapsed
            << " min; best checkpoint: " << result.best_checkpoint << "\n";
  if (!result.log.empty() && result.log.back().val_metrics) {
    std::cout << "final val: " << result.log.back().val_metrics->to_json() << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split_name,
             const std::string& out_path) {
  const auto ds = data::read_dataset(data_dir);
  const data::DatasetSplit* split = nullptr;
  for (const auto& s : ds.splits) {
    if (s.name == split_name) split = &s;
  }
  if (!split) throw ValidationError("eval: no split named '" + split_name + "' in " + data_dir);
  const auto m = model::GroundingModel::load_checkpoint(ckpt);
  harness::TrainConfig tc;  // data-pipeline defaults (seeded cloud/candidates)
  const auto report = harness::evaluate_model(m, ds, *split, tc);
  const std::string js = report.to_json();
  std::cout << js << "\n";
  if (!out_path.empty()) write_text(out_path, js);
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& data_dir,
               const std::string& out_path) {
  harness::FileConfig cfg;
  if (!config_path.empty()) {
    cfg = harness::load_config_file(config_path);
  } else {
    const auto preset = harness::desk_preset();
    cfg.model = preset.model;
    cfg.train = preset.train;
  }
  const auto ds = data::read_dataset(data_dir);
  const fs::path out_dir = fs::path(out_path).parent_path().empty()
                               ? fs::path("ablation_runs")
                               : fs::path(out_path).parent_path() / "ablation_runs";
  const auto report = harness::run_ablation(cfg.train, cfg.model, ds, out_dir.string());
  write_text(out_path, report.to_json());
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_score(const std::string& preds_path, const std::string& data_dir,
              const std::string& split_name) {
  const auto ds = data::read_dataset(data_dir);
  const data::DatasetSplit* split = nullptr;
  for (const auto& s : ds.splits) {
    if (s.name == split_name) split = &s;
  }
  if (!split) throw ValidationError("score: no split named '" + split_name + "' in " + data_dir);
  const auto preds = eval::read_predictions(preds_path);
  const auto report =
      eval::compute_metrics(eval::group_predictions(preds), eval::gather_ground_truth(*split));
  std::cout << report.to_json() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D intention grounding toolkit: synthetic data, training, evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, out_path = "stats.json";
  std::string ckpt, split_name = "val", preds_path;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_path, "config file (JSON)");
  synth->add_option("--out", out_dir, "output dataset directory")->required();

  auto* stats = app.add_subcommand("stats", "dataset statistics report");
  stats->add_option("--data", data_dir, "dataset directory")->required();
  stats->add_option("--out", out_path, "output JSON path");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "config file (JSON; desk preset when omitted)");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "run directory (checkpoints, log)")->required();

  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  evalc->add_option("--ckpt", ckpt, "checkpoint file")->required();
  evalc->add_option("--data", data_dir, "dataset directory")->required();
  evalc->add_option("--split", split_name, "split name (default val)");
  evalc->add_option("--out", out_path, "also write the report here");

  auto* ablate = app.add_subcommand("ablate", "train + evaluate the five-row ablation grid");
  ablate->add_option("--config", config_path, "config file (JSON; desk preset when omitted)");
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--out", out_path, "output report JSON")->required();

  auto* score = app.add_subcommand("score", "score an external prediction dump");
  score->add_option("--preds", preds_path, "predictions .jsonl")->required();
  score->add_option("--data", data_dir, "dataset directory")->required();
  score->add_option("--split", split_name, "split name (default val)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, out_dir);
    if (stats->parsed()) return cmd_stats(data_dir, out_path);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_dir);
    if (evalc->parsed()) return cmd_eval(ckpt, data_dir, split_name, out_path);
    if (ablate->parsed()) return cmd_ablate(config_path, data_dir, out_path);
    if (score->parsed()) return cmd_score(preds_path, data_dir, split_name);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
