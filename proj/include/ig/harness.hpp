#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ig/datagen.hpp"
#include "ig/dataset.hpp"
#include "ig/eval.hpp"
#include "ig/losses.hpp"
#include "ig/model.hpp"

namespace ig::harness {

struct TrainConfig {
  int epochs = 90;
  int batch_size = 24;
  double lr_backbone = 1e-3;  // point backbone group
  double lr_rest = 1e-4;
  int lr_decay_epoch = 65;
  double lr_decay_factor = 0.1;
  bool freeze_text_encoder = true;
  std::uint64_t seed = 0;
  // ablation switches (each zeroes its loss; no_adapt forces factors to 1)
  bool no_verb_align = false;
  bool no_verb2obj = false;
  bool no_matchbox = false;
  bool no_adapt = false;
  // loop controls
  int eval_interval = 5;
  double target_train_top1 = 0;  // early stop once train Top1-Acc@0.25 reaches this (0 = off)
  double max_minutes = 0;        // wall-clock budget (0 = off)
  int points_per_object = 64;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  double box_l1_weight = 1.0;
  double box_iou_weight = 1.0;
  // weight on the anchor-in-target affinity inside the matching cost
  // (0 = geometry-only matching); stabilizes query/target roles early on
  double match_affinity_weight = 0.0;
  // epochs before the two contrastive losses start ramping in (0 = always
  // on). From-scratch desk encoders need the detection geometry settled
  // before alignment gradients are useful; pretrained backbones do not.
  int contrastive_warmup_epochs = 0;
  // ramp length after the warm-up window (0 = same as the window)
  int contrastive_ramp_epochs = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  loss::LossBundle mean;  // component means over the epoch
  std::optional<eval::MetricsReport> val_metrics;
  std::optional<double> train_top1_25;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::string best_checkpoint;
  std::string last_checkpoint;
  double best_val_ap50 = -1;
  int epochs_run = 0;
  bool reached_target = false;
  double minutes_elapsed = 0;
};

/// Per-sample precomputation: model inputs (cloud, tokens, candidates) plus
/// the supervision extracted from the text.
struct PreparedSample {
  data::IntentionSample sample;
  model::ModelInputs inputs;
  std::vector<double> v_dist;
  std::vector<int> verb_indices;
  std::vector<std::pair<int, int>> pairs;
  int sentinel_index = 0;
};

std::vector<PreparedSample> prepare_samples(const data::Dataset& ds, const data::DatasetSplit& split,
                                            const TrainConfig& tc, const model::ModelConfig& mc);

/// Forward + all five losses + cascade for one sample. Returns the total
/// tensor (for backward) and the value bundle. contrastive_scale in [0, 1]
/// ramps the two alignment losses (warm-up schedule).
std::pair<nn::Tensor, loss::LossBundle> sample_loss(const model::GroundingModel& m,
                                                    const PreparedSample& ps,
                                                    const TrainConfig& tc,
                                                    double contrastive_scale = 1.0);

/// Full training loop: schedule per config, per-epoch log, best checkpoint
/// by val AP@0.5. Aborts with TrainingError (and a diagnostic dump in
/// out_dir) on non-finite loss.
TrainResult train(const TrainConfig& tc, const model::ModelConfig& mc, const data::Dataset& ds,
                  const std::string& out_dir);

/// Inference over a split; scores from the query-verb softmax confidence.
eval::MetricsReport evaluate_model(const model::GroundingModel& m, const data::Dataset& ds,
                                   const data::DatasetSplit& split, const TrainConfig& tc);

std::vector<eval::Prediction> predict_split(const model::GroundingModel& m, const data::Dataset& ds,
                                            const data::DatasetSplit& split, const TrainConfig& tc);

struct AblationRow {
  std::string id;  // (a) .. (e)
  bool verb = true, verb2obj = true, matchbox = true, adapt = true;
  double top1_acc_25 = 0;
  double top1_acc_50 = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::string to_json() const;
};

/// Trains the five Table-style variants (remove one component at a time,
/// plus the full model) and evaluates each on the val split.
AblationReport run_ablation(const TrainConfig& base, const model::ModelConfig& mc,
                            const data::Dataset& ds, const std::string& out_dir);

/// Desk-scale preset: 32 synthetic scenes, small model, overfit-friendly
/// schedule. The smoke-test target (train Top1-Acc@0.25 >= 90) is reachable
/// on a commodity CPU.
struct DeskPreset {
  datagen::SynthConfig synth;
  model::ModelConfig model;
  TrainConfig train;
};
DeskPreset desk_preset();

// ---- config file (JSON; unknown keys rejected) ----
struct FileConfig {
  model::ModelConfig model;
  TrainConfig train;
  datagen::SynthConfig synth;
};
FileConfig load_config_file(const std::string& path);
void save_config_file(const FileConfig& cfg, const std::string& path);

void write_training_log(const std::vector<EpochRecord>& log, const std::string& path);

}  // namespace ig::harness
