#pragma once

#include <optional>
#include <vector>

#include "ig/geometry.hpp"
#include "ig/nn/tensor.hpp"

namespace ig::loss {

struct MatchResult {
  std::vector<std::pair<int, int>> assignment;  // (query index, gt index), injective both sides
  std::vector<int> unmatched_queries;
};

struct MatchWeights {
  double l1 = 1.0;
  double iou = 1.0;
  double affinity = 0.0;  // reserved
};

/// GT[i] = 1 iff some ground-truth box overlaps candidate i with IoU
/// strictly above the threshold.
std::vector<int> label_candidates(const std::vector<geom::Box3D>& candidates,
                                  const std::vector<geom::Box3D>& gts, double iou_threshold = 0.25);

/// Mean binary cross-entropy between per-candidate confidence (clamped to
/// [eps, 1-eps], eps = 1e-7) and the 0/1 labels.
nn::Tensor candidate_matching_loss(const nn::Tensor& confidence, const std::vector<int>& gt_labels);

/// BCE on the point-token scoring head; a point is positive when it lies in
/// any ground-truth box (closed containment).
nn::Tensor point_in_target_loss(const nn::Tensor& point_logits,
                                const std::vector<geom::Vec3>& point_coords,
                                const std::vector<geom::Box3D>& gts);

std::vector<int> point_in_target_labels(const std::vector<geom::Vec3>& point_coords,
                                        const std::vector<geom::Box3D>& gts);

/// Min-cost bipartite assignment between predicted and ground-truth boxes.
/// Pair cost = l1 * (|dcenter|_1 + |dsize|_1) + iou_w * (1 - iou3d)
/// - affinity_w * affinity. Matches min(#preds, #gts) pairs optimally.
MatchResult hungarian_match(const std::vector<geom::Box3D>& pred_boxes,
                            const std::vector<geom::Box3D>& gts,
                            const std::vector<std::vector<double>>* query_gt_affinity = nullptr,
                            const MatchWeights& w = {});

/// Generic min-cost assignment on an arbitrary cost matrix (rows <= cols
/// after internal orientation); exposed for the exhaustive-permutation
/// oracle tests.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

/// Cross-entropy between each query's predicted verb-position distribution
/// (masked softmax over text positions) and the target distribution,
/// averaged over queries.
nn::Tensor verb_position_loss(const nn::Tensor& verb_pos_logits, const std::vector<double>& v_dist,
                              const std::vector<char>& text_mask = {});

/// Symmetric query/verb-token contrastive alignment. links[n] holds the
/// token indices query n aligns to (verb tokens for matched queries, the
/// sentinel for unmatched ones) and must be non-empty. The token-side term
/// runs over every distinct linked token except the sentinel.
nn::Tensor query_verb_contrastive(const nn::Tensor& query_proj, const nn::Tensor& text_proj,
                                  const std::vector<std::vector<int>>& links, int sentinel_index,
                                  double tau = 0.07, bool normalize = true);

/// For each verb-object pair, queries are modulated by the verb projection
/// (element-wise) and contrasted against the object token; matched queries
/// link to the object, unmatched to the sentinel. Averaged over pairs;
/// zero when there are no pairs.
nn::Tensor modulated_query_object_contrastive(const nn::Tensor& query_proj,
                                              const nn::Tensor& verb_proj,
                                              const nn::Tensor& object_proj,
                                              const std::vector<std::pair<int, int>>& pairs,
                                              const std::vector<char>& query_matched,
                                              int sentinel_index, double tau = 0.07,
                                              bool normalize = true);

/// Mean over matched pairs of l1_w * (|dcenter|_1 + |dsize|_1) +
/// iou_w * (1 - iou3d(pred, gt)). box_params rows are (center, size).
nn::Tensor box_regression_loss(const MatchResult& match, const nn::Tensor& box_params,
                               const std::vector<geom::Box3D>& gts, double l1_weight = 1.0,
                               double iou_weight = 1.0);

struct LossBundle {
  double l_bce = 0, l_pts = 0, l_vpos = 0, l_vsem = 0, l_vosem = 0, l_box = 0;
  double f_vsem = 1, f_vosem = 1, f_box = 1;
  double total = 0;
};

struct CascadeInputs {
  nn::Tensor bce, pts, vpos, vsem, vosem, box;
};

/// Cascaded adaptive combination: factor f(x) = sigmoid(x) + 0.5 computed on
/// gradient-stopped values, chained vPos -> vSem -> voSem -> box with each
/// factor fed by the already-scaled predecessor. bce and pts stay unscaled.
/// With adapt_on = false every factor is exactly 1 (plain sum).
std::pair<nn::Tensor, LossBundle> cascaded_total(const CascadeInputs& in, bool adapt_on = true);

/// f(x) = sigmoid(x) + 0.5.
double adaptive_factor(double loss_value);

/// Per-query confidence: softmax over text tokens of projected similarity,
/// then the maximum mass over verb-token positions (sentinel position when
/// no verbs exist).
std::vector<double> inference_confidence(const nn::Tensor& query_proj, const nn::Tensor& text_proj,
                                         const std::vector<int>& verb_indices, int sentinel_index,
                                         double tau = 0.07, bool normalize = true);

}  // namespace ig::loss
