#include "ig/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ig/errors.hpp"

using nlohmann::json;

namespace ig::eval {

std::string MetricsReport::to_json() const {
  const ReferenceScores ref;
  json j;
  j["top1_acc_25"] = top1_acc_25;
  j["top1_acc_50"] = top1_acc_50;
  j["ap_25"] = ap_25;
  j["ap_50"] = ap_50;
  j["num_samples"] = num_samples;
  j["reference"] = {
      {"note",
       "published full-scale validation results, for context only: they require real scans and "
       "pretrained backbones and are not reproducible by this synthetic desk-scale pipeline"},
      {"top1_acc_25", ref.top1_acc_25},
      {"top1_acc_50", ref.top1_acc_50},
      {"ap_25", ref.ap_25},
      {"ap_50", ref.ap_50},
  };
  return j.dump(2);
}

double top1_accuracy(const PredictionsBySample& preds, const GtBySample& gts, double iou_threshold) {
  if (gts.empty()) throw ValidationError("top1_accuracy: no samples");
  int correct = 0;
  for (const auto& [sample_id, gt_boxes] : gts) {
    if (gt_boxes.empty()) throw ValidationError("top1_accuracy: sample " + sample_id + " has no gt");
    auto it = preds.find(sample_id);
    if (it == preds.end() || it->second.empty()) continue;  // no predictions -> miss
    const auto& ps = it->second;
    std::size_t best = 0;
    for (std::size_t i = 1; i < ps.size(); ++i) {
      if (ps[i].score > ps[best].score) best = i;  // ties keep the lower index
    }
    for (const auto& gt : gt_boxes) {
      if (geom::iou3d(ps[best].box, gt) >= iou_threshold) {
        ++correct;
        break;
      }
    }
  }
  return 100.0 * correct / static_cast<double>(gts.size());
}

double average_precision(const PredictionsBySample& preds, const GtBySample& gts,
                         double iou_threshold) {
  if (gts.empty()) throw ValidationError("average_precision: no samples");
  std::size_t total_gt = 0;
  for (const auto& [id, boxes] : gts) total_gt += boxes.size();
  if (total_gt == 0) throw ValidationError("average_precision: no ground-truth boxes");

  struct Entry {
    const Prediction* pred;
    std::size_t order;  // original position, for stable sorting
  };
  std::vector<Entry> pool;
  std::size_t order = 0;
  for (const auto& [id, ps] : preds) {
    for (const auto& p : ps) {
      if (!std::isfinite(p.score)) throw ValidationError("average_precision: non-finite score");
      pool.push_back({&p, order++});
    }
  }
  std::sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
    if (a.pred->score != b.pred->score) return a.pred->score > b.pred->score;
    return a.order < b.order;
  });

  std::map<std::string, std::vector<char>> gt_used;
  for (const auto& [id, boxes] : gts) gt_used[id].assign(boxes.size(), 0);

  std::vector<char> is_tp(pool.size(), 0);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& p = *pool[i].pred;
    auto git = gts.find(p.sample_id);
    if (git == gts.end()) continue;  // prediction for an unknown sample -> FP
    auto& used = gt_used[p.sample_id];
    double best_iou = 0;
    int best_j = -1;
    for (std::size_t j = 0; j < git->second.size(); ++j) {
      if (used[j]) continue;
      const double iou = geom::iou3d(p.box, git->second[j]);
      if (iou > best_iou) {
        best_iou = iou;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && best_iou >= iou_threshold) {
      used[static_cast<std::size_t>(best_j)] = 1;
      is_tp[i] = 1;
    }
  }

  // precision-recall curve with every-point (envelope) interpolation
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (is_tp[i]) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return 100.0 * ap;
}

MetricsReport compute_metrics(const PredictionsBySample& preds, const GtBySample& gts) {
  MetricsReport r;
  r.top1_acc_25 = top1_accuracy(preds, gts, 0.25);
  r.top1_acc_50 = top1_accuracy(preds, gts, 0.5);
  r.ap_25 = average_precision(preds, gts, 0.25);
  r.ap_50 = average_precision(preds, gts, 0.5);
  r.num_samples = static_cast<int>(gts.size());
  return r;
}

GtBySample gather_ground_truth(const data::DatasetSplit& split) {
  GtBySample gts;
  for (const auto& s : split.samples) gts[s.sample_id] = s.target_boxes;
  return gts;
}

void write_predictions(const std::vector<Prediction>& preds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& p : preds) {
    json j;
    j["sample_id"] = p.sample_id;
    j["box"] = {{"center", {p.box.center[0], p.box.center[1], p.box.center[2]}},
                {"size", {p.box.size[0], p.box.size[1], p.box.size[2]}}};
    j["score"] = p.score;
    out << j.dump() << "\n";
  }
}

std::vector<Prediction> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Prediction> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Prediction p;
      p.sample_id = j.at("sample_id").get<std::string>();
      const auto& c = j.at("box").at("center");
      const auto& s = j.at("box").at("size");
      for (int a = 0; a < 3; ++a) {
        p.box.center[a] = c.at(a).get<double>();
        p.box.size[a] = s.at(a).get<double>();
      }
      p.score = j.at("score").get<double>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

PredictionsBySample group_predictions(const std::vector<Prediction>& preds) {
  PredictionsBySample out;
  for (const auto& p : preds) out[p.sample_id].push_back(p);
  return out;
}

}  // namespace ig::eval
