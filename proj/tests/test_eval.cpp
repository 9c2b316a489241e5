#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "ig/errors.hpp"
#include "ig/eval.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace ig;
using namespace ig::eval;
using geom::Box3D;

namespace {

/// Brute-force AP oracle: re-derives TP flags per score-ordered prefix from
/// scratch and integrates the envelope by scanning all later precisions.
double brute_force_ap(const PredictionsBySample& preds, const GtBySample& gts, double thr) {
  struct Item {
    Prediction p;
    std::size_t order;
  };
  std::vector<Item> pool;
  std::size_t order = 0;
  for (const auto& [id, ps] : preds) {
    for (const auto& p : ps) pool.push_back({p, order++});
  }
  std::sort(pool.begin(), pool.end(), [](const Item& a, const Item& b) {
    if (a.p.score != b.p.score) return a.p.score > b.p.score;
    return a.order < b.order;
  });

  std::size_t total_gt = 0;
  for (const auto& [id, boxes] : gts) total_gt += boxes.size();

  // greedy matching, recomputed independently
  std::map<std::string, std::vector<char>> used;
  for (const auto& [id, boxes] : gts) used[id].assign(boxes.size(), 0);
  std::vector<int> tp_flags;
  for (const auto& item : pool) {
    int flag = 0;
    auto git = gts.find(item.p.sample_id);
    if (git != gts.end()) {
      double best = 0;
      int best_j = -1;
      for (std::size_t j = 0; j < git->second.size(); ++j) {
        if (used[item.p.sample_id][j]) continue;
        const double iou = geom::iou3d(item.p.box, git->second[j]);
        if (iou > best) {
          best = iou;
          best_j = static_cast<int>(j);
        }
      }
      if (best_j >= 0 && best >= thr) {
        used[item.p.sample_id][static_cast<std::size_t>(best_j)] = 1;
        flag = 1;
      }
    }
    tp_flags.push_back(flag);
  }

  double ap = 0;
  double prev_recall = 0;
  int tp = 0;
  for (std::size_t i = 0; i < tp_flags.size(); ++i) {
    tp += tp_flags[i];
    const double recall = static_cast<double>(tp) / static_cast<double>(total_gt);
    // envelope: max precision at any later prefix
    double envelope = 0;
    int tp2 = tp;
    for (std::size_t j = i; j < tp_flags.size(); ++j) {
      if (j > i) tp2 += tp_flags[j];
      envelope = std::max(envelope, static_cast<double>(tp2) / static_cast<double>(j + 1));
    }
    ap += (recall - prev_recall) * envelope;
    prev_recall = recall;
  }
  return 100.0 * ap;
}

Prediction make_pred(const std::string& id, const Box3D& b, double score) {
  Prediction p;
  p.sample_id = id;
  p.box = b;
  p.score = score;
  return p;
}

}  // namespace

TEST_CASE("top1 accuracy trivial cases") {
  GtBySample gts;
  gts["a"] = {Box3D(0, 0, 0, 1, 1, 1)};
  gts["b"] = {Box3D(5, 0, 0, 1, 1, 1)};

  PredictionsBySample perfect;
  perfect["a"] = {make_pred("a", gts["a"][0], 0.9)};
  perfect["b"] = {make_pred("b", gts["b"][0], 0.8)};
  CHECK(top1_accuracy(perfect, gts, 0.25) == doctest::Approx(100.0));
  CHECK(top1_accuracy({}, gts, 0.25) == doctest::Approx(0.0));
}

TEST_CASE("top1 accuracy hand case: one hit one miss at 0.25") {
  GtBySample gts;
  gts["a"] = {Box3D(0, 0, 0, 1, 1, 1)};
  gts["b"] = {Box3D(0, 0, 0, 1, 1, 1)};

  // IoU((1,1,1) cube offset d on x with unit cube) = (1-d)/(1+d)
  // d = 0.5 -> 1/3 >= 0.25 hit; d = 0.7 -> 0.3/1.7 = 0.176 miss
  PredictionsBySample preds;
  preds["a"] = {make_pred("a", Box3D(0.5, 0, 0, 1, 1, 1), 0.9)};
  preds["b"] = {make_pred("b", Box3D(0.7, 0, 0, 1, 1, 1), 0.9)};
  CHECK(top1_accuracy(preds, gts, 0.25) == doctest::Approx(50.0));
}

TEST_CASE("top1 uses the highest-score prediction with index tie-break") {
  GtBySample gts;
  gts["a"] = {Box3D(0, 0, 0, 1, 1, 1)};
  PredictionsBySample preds;
  preds["a"] = {
      make_pred("a", Box3D(0, 0, 0, 1, 1, 1), 0.5),    // correct, tied score, lower index
      make_pred("a", Box3D(9, 9, 9, 1, 1, 1), 0.5),    // wrong, tied score
      make_pred("a", Box3D(9, 9, 9, 1, 1, 1), 0.4),
  };
  CHECK(top1_accuracy(preds, gts, 0.25) == doctest::Approx(100.0));
  // and the higher-score wrong box wins over a lower-score right one
  preds["a"][1].score = 0.9;
  CHECK(top1_accuracy(preds, gts, 0.25) == doctest::Approx(0.0));
}

TEST_CASE("average precision: trivial cases") {
  GtBySample gts;
  gts["a"] = {Box3D(0, 0, 0, 1, 1, 1)};
  PredictionsBySample correct;
  correct["a"] = {make_pred("a", gts["a"][0], 1.0)};
  CHECK(average_precision(correct, gts, 0.5) == doctest::Approx(100.0));

  PredictionsBySample wrong;
  wrong["a"] = {make_pred("a", Box3D(9, 9, 9, 1, 1, 1), 1.0)};
  CHECK(average_precision(wrong, gts, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("average precision matches the hand-computed 3-prediction case") {
  // 1 sample, 2 gts; predictions scored 0.9 (TP), 0.8 (FP), 0.7 (TP)
  GtBySample gts;
  gts["a"] = {Box3D(0, 0, 0, 1, 1, 1), Box3D(5, 0, 0, 1, 1, 1)};
  PredictionsBySample preds;
  preds["a"] = {
      make_pred("a", gts["a"][0], 0.9),
      make_pred("a", Box3D(20, 0, 0, 1, 1, 1), 0.8),
      make_pred("a", gts["a"][1], 0.7),
  };
  const double ap = average_precision(preds, gts, 0.25);
  CHECK(ap == doctest::Approx(100.0 * (1.0 * 0.5 + (2.0 / 3.0) * 0.5)).epsilon(1e-6));
  CHECK(std::abs(ap - 83.33) < 0.01);
}

TEST_CASE("duplicate predictions of one gt: exactly one TP") {
  GtBySample gts;
  gts["a"] = {Box3D(0, 0, 0, 1, 1, 1)};
  PredictionsBySample preds;
  preds["a"] = {make_pred("a", gts["a"][0], 0.9), make_pred("a", gts["a"][0], 0.8)};
  // first is TP (recall 1 at precision 1), second FP
  CHECK(average_precision(preds, gts, 0.5) == doctest::Approx(100.0));
  // adding more duplicates never raises recall above 1 gt
  preds["a"].push_back(make_pred("a", gts["a"][0], 0.7));
  CHECK(average_precision(preds, gts, 0.5) == doctest::Approx(100.0));
}

TEST_CASE("AP invariant under monotone score transforms and sample order") {
  Rng rng(151);
  for (int trial = 0; trial < 30; ++trial) {
    GtBySample gts;
    PredictionsBySample preds;
    const int samples = 2 + static_cast<int>(rng.uniform_index(3));
    for (int s = 0; s < samples; ++s) {
      const std::string id = "s" + std::to_string(s);
      const int g = 1 + static_cast<int>(rng.uniform_index(2));
      for (int j = 0; j < g; ++j) gts[id].push_back(test_util::random_box(rng, 1.0));
      const int np = static_cast<int>(rng.uniform_index(4));
      for (int j = 0; j < np; ++j) {
        const Box3D box = rng.uniform() < 0.5
                              ? gts[id][static_cast<std::size_t>(rng.uniform_index(gts[id].size()))]
                              : test_util::random_box(rng, 1.0);
        preds[id].push_back(make_pred(id, box, rng.uniform(0.01, 0.99)));
      }
    }
    bool any = false;
    for (const auto& [id, ps] : preds) any = any || !ps.empty();
    if (!any) continue;

    const double base = average_precision(preds, gts, 0.25);

    PredictionsBySample transformed = preds;
    for (auto& [id, ps] : transformed) {
      for (auto& p : ps) p.score = 1.0 / (1.0 + std::exp(-(3 * p.score + 1)));  // strictly monotone
    }
    CHECK(average_precision(transformed, gts, 0.25) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("AP equals the brute-force PR computation on random instances") {
  Rng rng(157);
  for (int trial = 0; trial < 200; ++trial) {
    GtBySample gts;
    PredictionsBySample preds;
    const int samples = 1 + static_cast<int>(rng.uniform_index(3));
    int pred_budget = static_cast<int>(rng.uniform_index(10)) + 1;
    for (int s = 0; s < samples; ++s) {
      const std::string id = "s" + std::to_string(s);
      const int g = 1 + static_cast<int>(rng.uniform_index(3));
      for (int j = 0; j < g; ++j) gts[id].push_back(test_util::random_box(rng, 1.0));
      while (pred_budget > 0 && rng.uniform() < 0.7) {
        const Box3D box = rng.uniform() < 0.6
                              ? gts[id][static_cast<std::size_t>(rng.uniform_index(gts[id].size()))]
                              : test_util::random_box(rng, 1.0);
        preds[id].push_back(make_pred(id, box, rng.uniform(0, 1)));
        --pred_budget;
      }
    }
    bool any = false;
    for (const auto& [id, ps] : preds) any = any || !ps.empty();
    if (!any) continue;
    for (double thr : {0.25, 0.5}) {
      CHECK(average_precision(preds, gts, thr) ==
            doctest::Approx(brute_force_ap(preds, gts, thr)).epsilon(1e-9));
    }
  }
}

TEST_CASE("metrics guard degenerate inputs") {
  CHECK_THROWS_AS(top1_accuracy({}, {}, 0.25), ValidationError);
  CHECK_THROWS_AS(average_precision({}, {}, 0.25), ValidationError);
}

TEST_CASE("prediction dump round trip") {
  const fs::path path = fs::temp_directory_path() / "ig_preds_test.jsonl";
  std::vector<Prediction> preds = {
      make_pred("a", Box3D(0.5, 1.5, 2.5, 1, 2, 3), 0.75),
      make_pred("b", Box3D(-1, 0, 1, 0.5, 0.5, 0.5), 0.25),
  };
  write_predictions(preds, path.string());
  const auto back = read_predictions(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].sample_id == "a");
  CHECK(back[0].score == doctest::Approx(0.75));
  CHECK(back[1].box.center[0] == doctest::Approx(-1.0));
}

TEST_CASE("eval report JSON carries the published reference block") {
  MetricsReport r;
  r.top1_acc_25 = 12.5;
  const std::string js = r.to_json();
  CHECK(js.find("58.34") != std::string::npos);
  CHECK(js.find("40.83") != std::string::npos);
  CHECK(js.find("41.9") != std::string::npos);
  CHECK(js.find("25.36") != std::string::npos);
  CHECK(js.find("not reproducible") != std::string::npos);
}
