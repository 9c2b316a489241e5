#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ig/errors.hpp"
#include "ig/losses.hpp"
#include "ig/text_analysis.hpp"
#include "test_util.hpp"

using namespace ig;
using namespace ig::loss;
using nn::Tensor;
using geom::Box3D;

namespace {

/// Exhaustive minimum assignment cost over all permutations (rows <= cols).
double brute_force_min_cost(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = static_cast<int>(cost[0].size());
  std::vector<int> cols(static_cast<std::size_t>(m));
  std::iota(cols.begin(), cols.end(), 0);
  double best = 1e300;
  do {
    double total = 0;
    for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(cols[static_cast<std::size_t>(i)])];
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

double assignment_cost(const std::vector<std::vector<double>>& cost, const std::vector<int>& r2c) {
  double total = 0;
  for (std::size_t i = 0; i < r2c.size(); ++i) total += cost[i][static_cast<std::size_t>(r2c[i])];
  return total;
}

}  // namespace

// ---- candidate labelling (Eq. 1 targets) ----

TEST_CASE("label_candidates thresholding") {
  const Box3D gt(0, 0, 0, 1, 1, 1);
  const std::vector<Box3D> cands = {
      gt,                         // IoU 1
      Box3D(10, 0, 0, 1, 1, 1),   // disjoint
      Box3D(0, 0, 0, 0.25, 1, 1)  // fully inside: IoU exactly 0.25
  };
  CHECK(geom::iou3d(cands[2], gt) == 0.25);  // the boundary construction is exact
  const auto labels = label_candidates(cands, {gt});
  CHECK(labels == std::vector<int>{1, 0, 0});  // strict inequality at the threshold
}

TEST_CASE("label_candidates requires ground truth") {
  CHECK_THROWS_AS(label_candidates({Box3D(0, 0, 0, 1, 1, 1)}, {}), ValidationError);
}

// ---- Eq. 1 BCE ----

TEST_CASE("candidate_matching_loss closed forms") {
  const Tensor perfect = Tensor::from({3, 1}, {1.0, 0.0, 1.0});
  CHECK(candidate_matching_loss(perfect, {1, 0, 1}).value() < 1e-5);

  const Tensor half = Tensor::from({4, 1}, {0.5, 0.5, 0.5, 0.5});
  CHECK(candidate_matching_loss(half, {1, 0, 1, 0}).value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("candidate_matching_loss gradient vs finite differences") {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 2 + static_cast<int>(rng.uniform_index(6));
    std::vector<int> labels(static_cast<std::size_t>(b));
    for (auto& l : labels) l = rng.uniform() < 0.5;
    std::vector<double> raw(static_cast<std::size_t>(b));
    for (auto& x : raw) x = rng.uniform(0.05, 0.95);
    std::vector<Tensor> leaves = {Tensor::from({b, 1}, raw, true)};
    auto fn = [&labels](std::vector<Tensor>& l) { return candidate_matching_loss(l[0], labels); };
    CHECK(test_util::finite_difference_error(fn, leaves) <= 1e-4);
  }
}

// ---- point-in-target ----

TEST_CASE("point_in_target labels match brute-force containment") {
  Rng rng(67);
  const std::vector<Box3D> gts = {test_util::random_box(rng), test_util::random_box(rng)};
  std::vector<geom::Vec3> pts;
  for (int i = 0; i < 1000; ++i) {
    pts.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)});
  }
  const auto labels = point_in_target_labels(pts, gts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool inside = false;
    for (const auto& gt : gts) {
      const auto lo = gt.min_corner(), hi = gt.max_corner();
      bool in = true;
      for (int a = 0; a < 3; ++a) in = in && pts[i][a] >= lo[a] && pts[i][a] <= hi[a];
      inside = inside || in;
    }
    CHECK(labels[i] == (inside ? 1 : 0));
  }
}

TEST_CASE("point_in_target_loss saturates to zero when confident and right") {
  const Box3D gt(0, 0, 0, 2, 2, 2);
  const std::vector<geom::Vec3> pts = {{0, 0, 0}, {0.5, 0.5, 0.5}};
  const Tensor logits = Tensor::from({2, 1}, {30.0, 30.0});
  CHECK(point_in_target_loss(logits, pts, {gt}).value() < 1e-6);

  // no point inside any gt: all labels zero
  const std::vector<geom::Vec3> outside = {{5, 5, 5}, {-4, 0, 0}};
  CHECK(point_in_target_labels(outside, {gt}) == std::vector<int>{0, 0});
}

TEST_CASE("point_in_target_loss gradient vs finite differences") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Box3D> gts = {test_util::random_box(rng)};
    std::vector<geom::Vec3> pts;
    const int p = 3 + static_cast<int>(rng.uniform_index(5));
    for (int i = 0; i < p; ++i) pts.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)});
    std::vector<Tensor> leaves = {Tensor::randn({p, 1}, rng, 1.0, true)};
    auto fn = [&pts, &gts](std::vector<Tensor>& l) { return point_in_target_loss(l[0], pts, gts); };
    CHECK(test_util::finite_difference_error(fn, leaves) <= 1e-4);
  }
}

// ---- matching ----

TEST_CASE("hungarian_match identity when predictions equal targets") {
  Rng rng(73);
  std::vector<Box3D> boxes;
  for (int i = 0; i < 4; ++i) boxes.push_back(test_util::random_box(rng));
  const auto match = hungarian_match(boxes, boxes);
  REQUIRE(match.assignment.size() == 4);
  for (const auto& [q, j] : match.assignment) CHECK(q == j);
  CHECK(match.unmatched_queries.empty());
}

TEST_CASE("hungarian_match cardinality with extra queries") {
  Rng rng(79);
  std::vector<Box3D> preds = {test_util::random_box(rng), test_util::random_box(rng),
                              test_util::random_box(rng)};
  std::vector<Box3D> gts = {test_util::random_box(rng), test_util::random_box(rng)};
  const auto match = hungarian_match(preds, gts);
  CHECK(match.assignment.size() == 2);
  CHECK(match.unmatched_queries.size() == 1);
  // injectivity
  std::set<int> qs, js;
  for (const auto& [q, j] : match.assignment) {
    CHECK(qs.insert(q).second);
    CHECK(js.insert(j).second);
  }
}

TEST_CASE("hungarian_match with more targets than queries matches every query") {
  Rng rng(81);
  std::vector<Box3D> preds = {test_util::random_box(rng), test_util::random_box(rng)};
  std::vector<Box3D> gts;
  for (int i = 0; i < 5; ++i) gts.push_back(test_util::random_box(rng));
  const auto match = hungarian_match(preds, gts);
  CHECK(match.assignment.size() == 2);  // min(k, #gt)
  CHECK(match.unmatched_queries.empty());
  std::set<int> used_gts;
  for (const auto& [q, j] : match.assignment) CHECK(used_gts.insert(j).second);
}

TEST_CASE("solve_assignment equals exhaustive permutation minimum") {
  Rng rng(83);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 6;
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost)
      for (auto& c : row) c = rng.uniform(0, 10);
    const auto r2c = solve_assignment(cost);
    CHECK(assignment_cost(cost, r2c) == doctest::Approx(brute_force_min_cost(cost)).epsilon(1e-12));
  }
}

TEST_CASE("solve_assignment optimal on rectangular instances up to 7x7") {
  Rng rng(89);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(7));
    const int m = n + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(8 - n)));
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(m)));
    for (auto& row : cost)
      for (auto& c : row) c = rng.uniform(-5, 5);
    const auto r2c = solve_assignment(cost);
    std::set<int> used(r2c.begin(), r2c.end());
    CHECK(used.size() == r2c.size());
    CHECK(assignment_cost(cost, r2c) == doctest::Approx(brute_force_min_cost(cost)).epsilon(1e-12));
  }
}

// ---- Eq. 2 ----

TEST_CASE("verb_position_loss equals ln 6 for uniform logits against 010100") {
  const std::vector<char> v_pos = {0, 1, 0, 1, 0, 0};
  const auto v_dist = text::verb_distribution(v_pos);
  const Tensor logits = Tensor::zeros({3, 6});
  CHECK(verb_position_loss(logits, v_dist).value() ==
        doctest::Approx(std::log(6.0)).epsilon(1e-9));
}

TEST_CASE("verb_position_loss perfect one-hot prediction tends to zero") {
  const std::vector<double> one_hot = {0, 1, 0, 0};
  std::vector<double> raw = {0, 50.0, 0, 0, 0, 50.0, 0, 0};
  const Tensor logits = Tensor::from({2, 4}, raw);
  CHECK(verb_position_loss(logits, one_hot).value() < 1e-9);
}

TEST_CASE("verb_position_loss lower bound is the target entropy") {
  const std::vector<char> v_pos = {1, 0, 1, 0};
  const auto v_dist = text::verb_distribution(v_pos);
  double entropy = 0;
  for (double p : v_dist) entropy -= p * std::log(p);
  // prediction equal to V_dist reaches the entropy exactly
  std::vector<double> raw;
  for (int q = 0; q < 2; ++q)
    for (double p : v_dist) raw.push_back(std::log(p));
  const Tensor logits = Tensor::from({2, 4}, raw);
  CHECK(verb_position_loss(logits, v_dist).value() == doctest::Approx(entropy).epsilon(1e-9));

  Rng rng(97);
  const Tensor noisy = Tensor::randn({2, 4}, rng, 1.0, false);
  CHECK(verb_position_loss(noisy, v_dist).value() >= entropy - 1e-9);
}

TEST_CASE("verb_position_loss gradient vs finite differences") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const int l = 3 + static_cast<int>(rng.uniform_index(5));
    const int k = 1 + static_cast<int>(rng.uniform_index(4));
    std::vector<char> v_pos(static_cast<std::size_t>(l));
    for (auto& v : v_pos) v = rng.uniform() < 0.4;
    const auto v_dist = text::verb_distribution(v_pos);
    std::vector<Tensor> leaves = {Tensor::randn({k, l}, rng, 1.0, true)};
    auto fn = [&v_dist](std::vector<Tensor>& lv) { return verb_position_loss(lv[0], v_dist); };
    CHECK(test_util::finite_difference_error(fn, leaves) <= 1e-4);
  }
}

// ---- Eq. 3 ----

TEST_CASE("query_verb_contrastive zero-similarity closed form is ln 2") {
  // 1 query, 2 tokens, all similarities zero, query linked to token 0
  const Tensor q = Tensor::zeros({1, 3});
  const Tensor t = Tensor::zeros({2, 3});
  // zero rows stay zero under safe normalization, so similarities are 0
  const double v = query_verb_contrastive(q, t, {{0}}, /*sentinel=*/1, 1.0, true).value();
  CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("query_verb_contrastive saturates to zero for a dominant link") {
  // similarity of the linked pair is large, everything else small
  const Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
  const Tensor t = Tensor::from({3, 2}, {1.0, 0.0, -1.0, 0.0, 0.0, -1.0});
  const double v = query_verb_contrastive(q, t, {{0}}, 2, 0.01, true).value();
  CHECK(v < 1e-6);
}

TEST_CASE("query_verb_contrastive invariant to unlinked token reordering") {
  Rng rng(103);
  const Tensor q = Tensor::randn({2, 4}, rng, 1.0, false);
  std::vector<double> tokens;
  for (int i = 0; i < 5 * 4; ++i) tokens.push_back(rng.normal());
  const Tensor t1 = Tensor::from({5, 4}, tokens);
  // swap unlinked token rows 2 and 3 (linked set is {0}, sentinel 4)
  std::vector<double> swapped = tokens;
  for (int c = 0; c < 4; ++c) std::swap(swapped[2 * 4 + c], swapped[3 * 4 + c]);
  const Tensor t2 = Tensor::from({5, 4}, swapped);
  const std::vector<std::vector<int>> links = {{0}, {4}};
  const double a = query_verb_contrastive(q, t1, links, 4).value();
  const double b = query_verb_contrastive(q, t2, links, 4).value();
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("query_verb_contrastive decreases when a linked similarity rises") {
  const double tau = 0.07;
  auto loss_with_alignment = [tau](double align) {
    const Tensor q = Tensor::from({1, 2}, {align, std::sqrt(std::max(0.0, 1 - align * align))});
    const Tensor t = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
    return query_verb_contrastive(q, t, {{0}}, 1, tau, false).value();
  };
  CHECK(loss_with_alignment(0.9) < loss_with_alignment(0.5));
  CHECK(loss_with_alignment(0.5) < loss_with_alignment(0.1));
}

TEST_CASE("query_verb_contrastive rejects empty link sets") {
  const Tensor q = Tensor::zeros({2, 3});
  const Tensor t = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(query_verb_contrastive(q, t, {{0}, {}}, 1), ValidationError);
}

TEST_CASE("query_verb_contrastive gradient vs finite differences") {
  Rng rng(107);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_index(3));
    const int l = 3 + static_cast<int>(rng.uniform_index(3));
    const int sentinel = l - 1;
    std::vector<std::vector<int>> links(static_cast<std::size_t>(k));
    for (auto& set : links) {
      if (rng.uniform() < 0.5) {
        set = {0};
        if (l > 3 && rng.uniform() < 0.5) set.push_back(1);
      } else {
        set = {sentinel};
      }
    }
    std::vector<Tensor> leaves = {Tensor::randn({k, 4}, rng, 1.0, true),
                                  Tensor::randn({l, 4}, rng, 1.0, true)};
    auto fn = [&links, sentinel](std::vector<Tensor>& lv) {
      return query_verb_contrastive(lv[0], lv[1], links, sentinel, 0.5, true);
    };
    CHECK(test_util::finite_difference_error(fn, leaves) <= 1e-4);
  }
}

// ---- modulated query-object ----

TEST_CASE("modulated contrastive: zero modulator gives uniform ln l") {
  const int l = 5;
  const Tensor q = Tensor::from({1, 3}, {0.7, -0.2, 0.4});
  const Tensor verb = Tensor::zeros({l, 3});  // zero verb projection
  Rng rng(109);
  const Tensor obj = Tensor::randn({l, 3}, rng, 1.0, false);
  const double v = modulated_query_object_contrastive(q, verb, obj, {{0, 2}}, {1}, l - 1, 1.0, true)
                       .value();
  CHECK(v == doctest::Approx(std::log(static_cast<double>(l))).epsilon(1e-9));
}

TEST_CASE("modulated contrastive: no pairs yields zero") {
  const Tensor q = Tensor::zeros({2, 3});
  const Tensor t = Tensor::zeros({4, 3});
  const double v = modulated_query_object_contrastive(q, t, t, {}, {1, 0}, 3).value();
  CHECK(v == 0.0);
}

TEST_CASE("modulated contrastive gradient vs finite differences") {
  Rng rng(113);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_index(3));
    const int l = 4 + static_cast<int>(rng.uniform_index(3));
    std::vector<char> matched(static_cast<std::size_t>(k), 0);
    matched[0] = 1;
    std::vector<std::pair<int, int>> pairs = {{0, 1}};
    if (rng.uniform() < 0.5) pairs.push_back({2, 3});
    std::vector<Tensor> leaves = {Tensor::randn({k, 4}, rng, 1.0, true),
                                  Tensor::randn({l, 4}, rng, 1.0, true),
                                  Tensor::randn({l, 4}, rng, 1.0, true)};
    auto fn = [&pairs, &matched, l](std::vector<Tensor>& lv) {
      return modulated_query_object_contrastive(lv[0], lv[1], lv[2], pairs, matched, l - 1, 0.5,
                                                true);
    };
    CHECK(test_util::finite_difference_error(fn, leaves) <= 1e-4);
  }
}

// ---- box regression ----

TEST_CASE("box_regression_loss exact for the closed-form example") {
  // pred = unit cube at origin, gt = unit cube shifted 0.5 on x
  const Tensor params = Tensor::from({1, 6}, {0, 0, 0, 1, 1, 1});
  const std::vector<Box3D> gts = {Box3D(0.5, 0, 0, 1, 1, 1)};
  MatchResult match;
  match.assignment = {{0, 0}};
  const double v = box_regression_loss(match, params, gts).value();
  CHECK(v == doctest::Approx(0.5 + 2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("box_regression_loss zero when matched predictions equal targets") {
  const std::vector<Box3D> gts = {Box3D(1, 2, 3, 0.5, 0.6, 0.7)};
  const Tensor params = Tensor::from({2, 6}, {1, 2, 3, 0.5, 0.6, 0.7, 9, 9, 9, 1, 1, 1});
  MatchResult match;
  match.assignment = {{0, 0}};
  match.unmatched_queries = {1};
  CHECK(box_regression_loss(match, params, gts).value() == doctest::Approx(0.0));
}

TEST_CASE("unmatched queries do not contribute") {
  Rng rng(127);
  const std::vector<Box3D> gts = {Box3D(0, 0, 0, 1, 1, 1)};
  std::vector<double> raw = {0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1};
  const Tensor a = Tensor::from({2, 6}, raw);
  std::vector<double> rogue = raw;
  for (int i = 6; i < 12; ++i) rogue[static_cast<std::size_t>(i)] = rng.uniform(0.5, 3.0);
  const Tensor b = Tensor::from({2, 6}, rogue);
  MatchResult match;
  match.assignment = {{0, 0}};
  match.unmatched_queries = {1};
  CHECK(box_regression_loss(match, a, gts).value() ==
        doctest::Approx(box_regression_loss(match, b, gts).value()).epsilon(1e-12));
}

TEST_CASE("box_regression_loss gradient vs finite differences") {
  Rng rng(131);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_index(3));
    std::vector<Box3D> gts = {test_util::random_box(rng), test_util::random_box(rng)};
    MatchResult match;
    match.assignment = {{0, 0}, {1, 1}};
    std::vector<double> raw;
    for (int q = 0; q < k; ++q) {
      const Box3D b = test_util::random_box(rng);
      for (int a = 0; a < 3; ++a) raw.push_back(b.center[a]);
      for (int a = 0; a < 3; ++a) raw.push_back(b.size[a]);
    }
    std::vector<Tensor> leaves = {Tensor::from({k, 6}, raw, true)};
    auto fn = [&match, &gts](std::vector<Tensor>& lv) {
      return box_regression_loss(match, lv[0], gts);
    };
    CHECK(test_util::finite_difference_error(fn, leaves) <= 1e-4);
  }
}

// ---- cascade ----

TEST_CASE("cascade factors: closed forms") {
  CHECK(adaptive_factor(0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(adaptive_factor(1.0) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-1.0)) + 0.5).epsilon(1e-12));

  CascadeInputs zeros{Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0),
                      Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0)};
  auto [total, bundle] = cascaded_total(zeros);
  CHECK(bundle.f_vsem == doctest::Approx(1.0));
  CHECK(bundle.f_vosem == doctest::Approx(1.0));
  CHECK(bundle.f_box == doctest::Approx(1.0));
  CHECK(bundle.total == doctest::Approx(0.0));

  CascadeInputs one_vpos{Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(1),
                         Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0)};
  auto [t2, b2] = cascaded_total(one_vpos);
  CHECK(b2.f_vsem == doctest::Approx(1.0 / (1.0 + std::exp(-1.0)) + 0.5).epsilon(1e-9));
}

TEST_CASE("cascade factor range and chaining on random tuples") {
  Rng rng(137);
  for (int trial = 0; trial < 1000; ++trial) {
    CascadeInputs in{Tensor::scalar(rng.uniform(0, 10)), Tensor::scalar(rng.uniform(0, 10)),
                     Tensor::scalar(rng.uniform(0, 10)), Tensor::scalar(rng.uniform(0, 10)),
                     Tensor::scalar(rng.uniform(0, 10)), Tensor::scalar(rng.uniform(0, 10))};
    auto [total, b] = cascaded_total(in);
    for (double f : {b.f_vsem, b.f_vosem, b.f_box}) {
      CHECK(f >= 1.0);
      CHECK(f < 1.5);
    }
    // factors chain on scaled predecessors
    CHECK(b.f_vsem == doctest::Approx(adaptive_factor(b.l_vpos)));
    CHECK(b.f_vosem == doctest::Approx(adaptive_factor(b.f_vsem * b.l_vsem)));
    CHECK(b.f_box == doctest::Approx(adaptive_factor(b.f_vosem * b.l_vosem)));
    CHECK(b.total == doctest::Approx(b.l_bce + b.l_pts + b.l_vpos + b.f_vsem * b.l_vsem +
                                     b.f_vosem * b.l_vosem + b.f_box * b.l_box));
  }
}

TEST_CASE("cascade with adaptation off equals the plain sum") {
  Rng rng(139);
  for (int trial = 0; trial < 100; ++trial) {
    const double vals[6] = {rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 5),
                            rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 5)};
    CascadeInputs in{Tensor::scalar(vals[0]), Tensor::scalar(vals[1]), Tensor::scalar(vals[2]),
                     Tensor::scalar(vals[3]), Tensor::scalar(vals[4]), Tensor::scalar(vals[5])};
    auto [total, b] = cascaded_total(in, /*adapt_on=*/false);
    double plain = 0;
    for (double v : vals) plain += v;
    CHECK(std::abs(b.total - plain) <= 1e-9);
    CHECK(b.f_vsem == 1.0);
    CHECK(b.f_vosem == 1.0);
    CHECK(b.f_box == 1.0);
  }
}

TEST_CASE("cascade is monotone in L_vPos") {
  double prev_total = -1;
  for (double vpos : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    CascadeInputs in{Tensor::scalar(0.3), Tensor::scalar(0.2), Tensor::scalar(vpos),
                     Tensor::scalar(0.7), Tensor::scalar(0.4), Tensor::scalar(1.1)};
    auto [total, b] = cascaded_total(in);
    CHECK(b.total > prev_total);
    prev_total = b.total;
  }
}

TEST_CASE("cascade rejects non-finite components") {
  CascadeInputs in{Tensor::scalar(0), Tensor::scalar(0),
                   Tensor::scalar(std::numeric_limits<double>::quiet_NaN()), Tensor::scalar(0),
                   Tensor::scalar(0), Tensor::scalar(0)};
  CHECK_THROWS_AS(cascaded_total(in), TrainingError);
}

TEST_CASE("cascaded total gradient includes detached factors") {
  // gradients flow through the loss terms but not through the factors
  Rng rng(149);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> leaves = {Tensor::from({1}, {rng.uniform(0.1, 2.0)}, true),
                                  Tensor::from({1}, {rng.uniform(0.1, 2.0)}, true),
                                  Tensor::from({1}, {rng.uniform(0.1, 2.0)}, true)};
    // factors are recomputed from the perturbed values inside fn, matching
    // the detached-value semantics only if we freeze them; compare against
    // manually frozen factors instead.
    for (auto& leaf : leaves) leaf.zero_grad();
    CascadeInputs in{Tensor::scalar(0), Tensor::scalar(0), leaves[0], leaves[1], leaves[2],
                     Tensor::scalar(0.5)};
    auto [total, b] = cascaded_total(in);
    total.backward();
    // d total / d vpos = 1 (factor treated as constant)
    CHECK(leaves[0].grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(leaves[1].grad()[0] == doctest::Approx(b.f_vsem).epsilon(1e-12));
    CHECK(leaves[2].grad()[0] == doctest::Approx(b.f_vosem).epsilon(1e-12));
  }
}

// ---- inference confidence ----

TEST_CASE("inference confidence saturates for an aligned query") {
  const Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
  const Tensor t = Tensor::from({3, 2}, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
  const auto scores = inference_confidence(q, t, {0}, 2, 0.01, true);
  CHECK(scores[0] > 0.999);
}

TEST_CASE("inference confidence uniform when similarities equal") {
  const Tensor q = Tensor::zeros({2, 3});
  const Tensor t = Tensor::zeros({5, 3});
  const auto scores = inference_confidence(q, t, {1}, 4, 0.07, true);
  for (double s : scores) CHECK(s == doctest::Approx(0.2));
}

TEST_CASE("inference confidence takes the max over two verbs") {
  // 3 tokens; build similarities by hand with tau = 1, no normalization
  const Tensor q = Tensor::from({1, 3}, {1.0, 2.0, 0.0});
  // token rows give sims 1.0, 2.0, 0.0
  const Tensor t = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto scores = inference_confidence(q, t, {0, 1}, 2, 1.0, false);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.0);
  CHECK(scores[0] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-9));
}

TEST_CASE("inference confidence falls back to the sentinel without verbs") {
  const Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
  const Tensor t = Tensor::from({2, 2}, {0.0, 1.0, 1.0, 0.0});  // sentinel row aligned
  const auto scores = inference_confidence(q, t, {}, 1, 0.05, true);
  CHECK(scores[0] > 0.999);
}
