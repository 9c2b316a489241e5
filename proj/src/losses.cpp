#include "ig/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ig/errors.hpp"

namespace ig::loss {

namespace {

constexpr double kBceEps = 1e-7;

nn::Tensor abs_elem(const nn::Tensor& x) { return nn::add(nn::relu(x), nn::relu(nn::neg(x))); }

nn::Tensor prod3(const nn::Tensor& row) {
  // product of the three entries of a 1x3 tensor
  return nn::mul(nn::mul(nn::at(row, 0), nn::at(row, 1)), nn::at(row, 2));
}

nn::Tensor bce_mean(const nn::Tensor& probs, const std::vector<int>& labels) {
  const int n = probs.numel();
  if (static_cast<int>(labels.size()) != n) {
    throw ValidationError("bce: label count mismatch");
  }
  std::vector<double> y(labels.begin(), labels.end());
  const nn::Tensor target = nn::Tensor::from(probs.shape(), std::move(y));
  const nn::Tensor p = nn::clamp(probs, kBceEps, 1.0 - kBceEps);
  const nn::Tensor pos = nn::mul(target, nn::log(p));
  const nn::Tensor negt = nn::mul(nn::rsub_scalar(1.0, target), nn::log(nn::rsub_scalar(1.0, p)));
  return nn::neg(nn::mean(nn::add(pos, negt)));
}

}  // namespace

std::vector<int> label_candidates(const std::vector<geom::Box3D>& candidates,
                                  const std::vector<geom::Box3D>& gts, double iou_threshold) {
  if (gts.empty()) throw ValidationError("label_candidates: ground truth must be non-empty");
  std::vector<int> labels(candidates.size(), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double best = 0;
    for (const auto& gt : gts) best = std::max(best, geom::iou3d(candidates[i], gt));
    labels[i] = best > iou_threshold ? 1 : 0;  // strictly exceeding
  }
  return labels;
}

nn::Tensor candidate_matching_loss(const nn::Tensor& confidence, const std::vector<int>& gt_labels) {
  return bce_mean(confidence, gt_labels);
}

std::vector<int> point_in_target_labels(const std::vector<geom::Vec3>& point_coords,
                                        const std::vector<geom::Box3D>& gts) {
  std::vector<int> labels(point_coords.size(), 0);
  for (std::size_t i = 0; i < point_coords.size(); ++i) {
    for (const auto& gt : gts) {
      if (gt.contains(point_coords[i])) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

nn::Tensor point_in_target_loss(const nn::Tensor& point_logits,
                                const std::vector<geom::Vec3>& point_coords,
                                const std::vector<geom::Box3D>& gts) {
  if (gts.empty()) throw ValidationError("point_in_target_loss: ground truth must be non-empty");
  return bce_mean(nn::sigmoid(point_logits), point_in_target_labels(point_coords, gts));
}

// ---- assignment ----

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  // O(n^2 m) Hungarian with row/column potentials; requires rows <= cols.
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const int m = static_cast<int>(cost[0].size());
  if (n > m) throw ValidationError("solve_assignment: needs rows <= cols");
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0), v(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                           u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<std::size_t>(j)] != 0) {
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
  }
  return row_to_col;
}

MatchResult hungarian_match(const std::vector<geom::Box3D>& pred_boxes,
                            const std::vector<geom::Box3D>& gts,
                            const std::vector<std::vector<double>>* query_gt_affinity,
                            const MatchWeights& w) {
  if (gts.empty()) throw ValidationError("hungarian_match: ground truth must be non-empty");
  const int k = static_cast<int>(pred_boxes.size());
  const int g = static_cast<int>(gts.size());

  auto pair_cost = [&](int q, int j) {
    double l1 = 0;
    for (int a = 0; a < 3; ++a) {
      l1 += std::abs(pred_boxes[static_cast<std::size_t>(q)].center[a] - gts[static_cast<std::size_t>(j)].center[a]);
      l1 += std::abs(pred_boxes[static_cast<std::size_t>(q)].size[a] - gts[static_cast<std::size_t>(j)].size[a]);
    }
    double c = w.l1 * l1 + w.iou * (1.0 - geom::iou3d(pred_boxes[static_cast<std::size_t>(q)],
                                                      gts[static_cast<std::size_t>(j)]));
    if (query_gt_affinity) {
      c -= w.affinity * (*query_gt_affinity)[static_cast<std::size_t>(q)][static_cast<std::size_t>(j)];
    }
    return c;
  };

  MatchResult result;
  if (g <= k) {
    // rows = gts, each gt gets a distinct query
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(g),
                                          std::vector<double>(static_cast<std::size_t>(k)));
    for (int j = 0; j < g; ++j)
      for (int q = 0; q < k; ++q) cost[static_cast<std::size_t>(j)][static_cast<std::size_t>(q)] = pair_cost(q, j);
    const auto gt_to_query = solve_assignment(cost);
    std::vector<char> used(static_cast<std::size_t>(k), 0);
    for (int j = 0; j < g; ++j) {
      result.assignment.emplace_back(gt_to_query[static_cast<std::size_t>(j)], j);
      used[static_cast<std::size_t>(gt_to_query[static_cast<std::size_t>(j)])] = 1;
    }
    for (int q = 0; q < k; ++q)
      if (!used[static_cast<std::size_t>(q)]) result.unmatched_queries.push_back(q);
  } else {
    // more gts than queries: every query gets a gt, extra gts unmatched
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(k),
                                          std::vector<double>(static_cast<std::size_t>(g)));
    for (int q = 0; q < k; ++q)
      for (int j = 0; j < g; ++j) cost[static_cast<std::size_t>(q)][static_cast<std::size_t>(j)] = pair_cost(q, j);
    const auto query_to_gt = solve_assignment(cost);
    for (int q = 0; q < k; ++q) result.assignment.emplace_back(q, query_to_gt[static_cast<std::size_t>(q)]);
  }
  std::sort(result.assignment.begin(), result.assignment.end());
  return result;
}

// ---- text-alignment losses ----

nn::Tensor verb_position_loss(const nn::Tensor& verb_pos_logits, const std::vector<double>& v_dist,
                              const std::vector<char>& text_mask) {
  const int l = verb_pos_logits.cols();
  if (static_cast<int>(v_dist.size()) != l) {
    throw ValidationError("verb_position_loss: V_dist length mismatch");
  }
  double mass = 0;
  for (std::size_t i = 0; i < v_dist.size(); ++i) {
    if (!text_mask.empty() && !text_mask[i] && v_dist[i] != 0.0) {
      throw ValidationError("verb_position_loss: V_dist has mass on a masked position");
    }
    mass += v_dist[i];
  }
  if (std::abs(mass - 1.0) > 1e-6) {
    throw ValidationError("verb_position_loss: V_dist must sum to 1");
  }

  const nn::Tensor log_probs = nn::log_softmax_rows(verb_pos_logits, text_mask);  // k x l
  const nn::Tensor target = nn::Tensor::from({l, 1}, std::vector<double>(v_dist));
  const nn::Tensor per_query = nn::matmul(log_probs, target);  // k x 1
  return nn::neg(nn::mean(per_query));
}

nn::Tensor query_verb_contrastive(const nn::Tensor& query_proj, const nn::Tensor& text_proj,
                                  const std::vector<std::vector<int>>& links, int sentinel_index,
                                  double tau, bool normalize) {
  const int k = query_proj.rows();
  const int l = text_proj.rows();
  if (static_cast<int>(links.size()) != k) {
    throw ValidationError("query_verb_contrastive: links size must equal query count");
  }
  for (const auto& set : links) {
    if (set.empty()) throw ValidationError("query_verb_contrastive: query with empty link set");
    for (int t : set) {
      if (t < 0 || t >= l) throw ValidationError("query_verb_contrastive: link index out of range");
    }
  }

  const nn::Tensor q = normalize ? nn::l2_normalize_rows(query_proj) : query_proj;
  const nn::Tensor t = normalize ? nn::l2_normalize_rows(text_proj) : text_proj;
  const nn::Tensor sim = nn::scale(nn::matmul(q, nn::transpose(t)), 1.0 / tau);  // k x l
  const nn::Tensor lse_q = nn::logsumexp_rows(sim);                              // k x 1

  std::vector<nn::Tensor> terms;
  for (int n = 0; n < k; ++n) {
    std::vector<nn::Tensor> linked;
    linked.reserve(links[static_cast<std::size_t>(n)].size());
    for (int ti : links[static_cast<std::size_t>(n)]) linked.push_back(nn::at2(sim, n, ti));
    const nn::Tensor mean_linked = nn::scale(nn::add_n(linked), 1.0 / static_cast<double>(linked.size()));
    terms.push_back(nn::sub(nn::at(lse_q, n), mean_linked));
  }

  // token-side term over distinct linked verb tokens (sentinel excluded)
  std::set<int> verb_tokens;
  for (const auto& set : links)
    for (int ti : set)
      if (ti != sentinel_index) verb_tokens.insert(ti);
  if (!verb_tokens.empty()) {
    const nn::Tensor simT = nn::transpose(sim);              // l x k
    const nn::Tensor lse_t = nn::logsumexp_rows(simT);       // l x 1
    for (int m : verb_tokens) {
      std::vector<nn::Tensor> linked_q;
      for (int n = 0; n < k; ++n) {
        const auto& set = links[static_cast<std::size_t>(n)];
        if (std::find(set.begin(), set.end(), m) != set.end()) linked_q.push_back(nn::at2(simT, m, n));
      }
      const nn::Tensor mean_linked =
          nn::scale(nn::add_n(linked_q), 1.0 / static_cast<double>(linked_q.size()));
      terms.push_back(nn::sub(nn::at(lse_t, m), mean_linked));
    }
  }
  return nn::add_n(terms);
}

nn::Tensor modulated_query_object_contrastive(const nn::Tensor& query_proj,
                                              const nn::Tensor& verb_proj,
                                              const nn::Tensor& object_proj,
                                              const std::vector<std::pair<int, int>>& pairs,
                                              const std::vector<char>& query_matched,
                                              int sentinel_index, double tau, bool normalize) {
  if (pairs.empty()) return nn::Tensor::scalar(0.0);
  const int k = query_proj.rows();
  const int l = object_proj.rows();
  if (static_cast<int>(query_matched.size()) != k) {
    throw ValidationError("modulated contrastive: query_matched size mismatch");
  }
  if (sentinel_index < 0 || sentinel_index >= l) {
    throw ValidationError("modulated contrastive: sentinel index out of range");
  }

  const nn::Tensor obj = normalize ? nn::l2_normalize_rows(object_proj) : object_proj;
  std::vector<nn::Tensor> pair_losses;
  std::vector<int> matched_ids;
  for (int n = 0; n < k; ++n)
    if (query_matched[static_cast<std::size_t>(n)]) matched_ids.push_back(n);

  for (const auto& [v, o] : pairs) {
    if (v < 0 || v >= verb_proj.rows() || o < 0 || o >= l) {
      throw ValidationError("modulated contrastive: pair index out of range");
    }
    const nn::Tensor vrow = nn::slice_rows(verb_proj, v, 1);        // 1 x d
    nn::Tensor modulated = nn::mul_rowvec(query_proj, vrow);        // k x d
    if (normalize) modulated = nn::l2_normalize_rows(modulated);
    const nn::Tensor sim = nn::scale(nn::matmul(modulated, nn::transpose(obj)), 1.0 / tau);  // k x l
    const nn::Tensor lse_q = nn::logsumexp_rows(sim);

    std::vector<nn::Tensor> terms;
    for (int n = 0; n < k; ++n) {
      const int target = query_matched[static_cast<std::size_t>(n)] ? o : sentinel_index;
      terms.push_back(nn::sub(nn::at(lse_q, n), nn::at2(sim, n, target)));
    }
    if (!matched_ids.empty()) {
      const nn::Tensor simT = nn::transpose(sim);
      const nn::Tensor lse_t = nn::logsumexp_rows(simT);
      std::vector<nn::Tensor> linked;
      linked.reserve(matched_ids.size());
      for (int n : matched_ids) linked.push_back(nn::at2(simT, o, n));
      const nn::Tensor mean_linked = nn::scale(nn::add_n(linked), 1.0 / static_cast<double>(linked.size()));
      terms.push_back(nn::sub(nn::at(lse_t, o), mean_linked));
    }
    pair_losses.push_back(nn::add_n(terms));
  }
  return nn::scale(nn::add_n(pair_losses), 1.0 / static_cast<double>(pair_losses.size()));
}

nn::Tensor box_regression_loss(const MatchResult& match, const nn::Tensor& box_params,
                               const std::vector<geom::Box3D>& gts, double l1_weight,
                               double iou_weight) {
  if (match.assignment.empty()) return nn::Tensor::scalar(0.0);
  if (box_params.cols() != 6) throw ValidationError("box_regression_loss: box_params must be k x 6");

  std::vector<nn::Tensor> pair_losses;
  for (const auto& [q, j] : match.assignment) {
    const auto& gt = gts.at(static_cast<std::size_t>(j));
    const nn::Tensor row = nn::slice_rows(box_params, q, 1);  // 1 x 6
    const nn::Tensor center = nn::slice_cols(row, 0, 3);
    const nn::Tensor size = nn::slice_cols(row, 3, 3);

    const nn::Tensor gt_center = nn::Tensor::from({1, 3}, {gt.center[0], gt.center[1], gt.center[2]});
    const nn::Tensor gt_size = nn::Tensor::from({1, 3}, {gt.size[0], gt.size[1], gt.size[2]});
    const nn::Tensor l1 =
        nn::add(nn::sum(abs_elem(nn::sub(center, gt_center))), nn::sum(abs_elem(nn::sub(size, gt_size))));

    const nn::Tensor half = nn::scale(size, 0.5);
    const nn::Tensor pred_min = nn::sub(center, half);
    const nn::Tensor pred_max = nn::add(center, half);
    const auto gmin = gt.min_corner();
    const auto gmax = gt.max_corner();
    const nn::Tensor gt_min = nn::Tensor::from({1, 3}, {gmin[0], gmin[1], gmin[2]});
    const nn::Tensor gt_max = nn::Tensor::from({1, 3}, {gmax[0], gmax[1], gmax[2]});
    const nn::Tensor edges = nn::relu(nn::sub(nn::minimum(pred_max, gt_max), nn::maximum(pred_min, gt_min)));
    const nn::Tensor inter = prod3(edges);
    const nn::Tensor pred_vol = prod3(size);
    const nn::Tensor uni = nn::sub(nn::add_scalar(pred_vol, gt.volume()), inter);
    const nn::Tensor iou = nn::div(inter, uni);

    pair_losses.push_back(
        nn::add(nn::scale(l1, l1_weight), nn::scale(nn::rsub_scalar(1.0, iou), iou_weight)));
  }
  return nn::scale(nn::add_n(pair_losses), 1.0 / static_cast<double>(pair_losses.size()));
}

double adaptive_factor(double loss_value) { return 1.0 / (1.0 + std::exp(-loss_value)) + 0.5; }

std::pair<nn::Tensor, LossBundle> cascaded_total(const CascadeInputs& in, bool adapt_on) {
  LossBundle b;
  b.l_bce = in.bce.value();
  b.l_pts = in.pts.value();
  b.l_vpos = in.vpos.value();
  b.l_vsem = in.vsem.value();
  b.l_vosem = in.vosem.value();
  b.l_box = in.box.value();
  for (double v : {b.l_bce, b.l_pts, b.l_vpos, b.l_vsem, b.l_vosem, b.l_box}) {
    if (!std::isfinite(v)) throw TrainingError("cascaded_total: non-finite loss component");
  }

  if (adapt_on) {
    // factors computed on detached values; each from the scaled predecessor
    b.f_vsem = adaptive_factor(b.l_vpos);
    b.f_vosem = adaptive_factor(b.f_vsem * b.l_vsem);
    b.f_box = adaptive_factor(b.f_vosem * b.l_vosem);
  } else {
    b.f_vsem = b.f_vosem = b.f_box = 1.0;
  }

  const nn::Tensor total = nn::add_n({in.bce, in.pts, in.vpos, nn::scale(in.vsem, b.f_vsem),
                                      nn::scale(in.vosem, b.f_vosem), nn::scale(in.box, b.f_box)});
  b.total = total.value();
  return {total, b};
}

std::vector<double> inference_confidence(const nn::Tensor& query_proj, const nn::Tensor& text_proj,
                                         const std::vector<int>& verb_indices, int sentinel_index,
                                         double tau, bool normalize) {
  const int k = query_proj.rows();
  const int l = text_proj.rows();
  const int d = query_proj.cols();
  if (text_proj.cols() != d) throw ValidationError("inference_confidence: projection width mismatch");

  std::vector<int> targets = verb_indices;
  if (targets.empty()) targets.push_back(sentinel_index);
  for (int t : targets) {
    if (t < 0 || t >= l) throw ValidationError("inference_confidence: token index out of range");
  }

  auto row_normalized = [d](const std::vector<double>& vals, int row) {
    std::vector<double> out(static_cast<std::size_t>(d));
    double norm = 0;
    for (int j = 0; j < d; ++j) {
      out[static_cast<std::size_t>(j)] = vals[static_cast<std::size_t>(row) * d + j];
      norm += out[static_cast<std::size_t>(j)] * out[static_cast<std::size_t>(j)];
    }
    norm = std::sqrt(norm);
    if (norm >= 1e-12) {
      for (auto& x : out) x /= norm;
    }
    return out;
  };

  std::vector<double> scores(static_cast<std::size_t>(k), 0.0);
  for (int n = 0; n < k; ++n) {
    std::vector<double> qrow = normalize ? row_normalized(query_proj.values(), n)
                                         : std::vector<double>(query_proj.values().begin() + static_cast<std::ptrdiff_t>(n) * d,
                                                               query_proj.values().begin() + static_cast<std::ptrdiff_t>(n + 1) * d);
    std::vector<double> sims(static_cast<std::size_t>(l));
    double mx = -1e300;
    for (int t = 0; t < l; ++t) {
      std::vector<double> trow = normalize ? row_normalized(text_proj.values(), t)
                                           : std::vector<double>(text_proj.values().begin() + static_cast<std::ptrdiff_t>(t) * d,
                                                                 text_proj.values().begin() + static_cast<std::ptrdiff_t>(t + 1) * d);
      double dot = 0;
      for (int j = 0; j < d; ++j) dot += qrow[static_cast<std::size_t>(j)] * trow[static_cast<std::size_t>(j)];
      sims[static_cast<std::size_t>(t)] = dot / tau;
      mx = std::max(mx, sims[static_cast<std::size_t>(t)]);
    }
    double z = 0;
    for (double s : sims) z += std::exp(s - mx);
    double best = 0;
    for (int t : targets) best = std::max(best, std::exp(sims[static_cast<std::size_t>(t)] - mx) / z);
    scores[static_cast<std::size_t>(n)] = best;
  }
  return scores;
}

}  // namespace ig::loss
