#pragma once

#include <map>
#include <string>
#include <vector>

#include "ig/dataset.hpp"
#include "ig/geometry.hpp"

namespace ig::eval {

struct Prediction {
  std::string sample_id;
  geom::Box3D box;
  double score = 0;  // finite, in [0, 1]
};

struct MetricsReport {
  double top1_acc_25 = 0;
  double top1_acc_50 = 0;
  double ap_25 = 0;
  double ap_50 = 0;
  int num_samples = 0;

  std::string to_json() const;
};

/// Published full-scale validation results, shipped as documented reference
/// values only. They depend on real scans and pretrained backbones and are
/// not reproducible by this toolkit's synthetic pipeline.
struct ReferenceScores {
  double top1_acc_25 = 58.34;
  double top1_acc_50 = 40.83;
  double ap_25 = 41.90;
  double ap_50 = 25.36;
};

using PredictionsBySample = std::map<std::string, std::vector<Prediction>>;
using GtBySample = std::map<std::string, std::vector<geom::Box3D>>;

/// Percentage of samples whose highest-score prediction reaches the IoU
/// threshold against some ground-truth box. Score ties break toward the
/// lower prediction index; samples without predictions count as misses.
double top1_accuracy(const PredictionsBySample& preds, const GtBySample& gts, double iou_threshold);

/// Class-agnostic AP: predictions pooled over all samples, sorted by score
/// (stable), greedily matched one-to-one within their sample, integrated
/// with the every-point precision envelope. Recall denominator is the total
/// ground-truth instance count.
double average_precision(const PredictionsBySample& preds, const GtBySample& gts,
                         double iou_threshold);

/// Runs all four metrics over per-sample predictions.
MetricsReport compute_metrics(const PredictionsBySample& preds, const GtBySample& gts);

GtBySample gather_ground_truth(const data::DatasetSplit& split);

/// Line-delimited {sample_id, box, score} records, so external models can be
/// scored by the same harness.
void write_predictions(const std::vector<Prediction>& preds, const std::string& path);
std::vector<Prediction> read_predictions(const std::string& path);

PredictionsBySample group_predictions(const std::vector<Prediction>& preds);

}  // namespace ig::eval
