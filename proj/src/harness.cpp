#include "ig/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ig/errors.hpp"
#include "ig/rng.hpp"
#include "ig/text_analysis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ig::harness {

namespace {

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ValidationError("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json model_to_json(const model::ModelConfig& c) {
  return json{{"hidden_dim", c.hidden_dim},
              {"num_point_tokens", c.num_point_tokens},
              {"max_text_len", c.max_text_len},
              {"num_queries", c.num_queries},
              {"encoder_layers", c.encoder_layers},
              {"decoder_layers", c.decoder_layers},
              {"num_attention_heads", c.num_attention_heads},
              {"ffn_mult", c.ffn_mult},
              {"proj_dim", c.proj_dim},
              {"temperature", c.temperature},
              {"normalize_projections", c.normalize_projections}};
}

model::ModelConfig model_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"hidden_dim", "num_point_tokens", "max_text_len", "num_queries",
                       "encoder_layers", "decoder_layers", "num_attention_heads", "ffn_mult",
                       "proj_dim", "temperature", "normalize_projections", "desk_scale"},
                      "model");
  model::ModelConfig c;
  bool desk = false;
  maybe(j, "desk_scale", desk);
  if (desk) c = model::ModelConfig::desk_scale();
  maybe(j, "hidden_dim", c.hidden_dim);
  maybe(j, "num_point_tokens", c.num_point_tokens);
  maybe(j, "max_text_len", c.max_text_len);
  maybe(j, "num_queries", c.num_queries);
  maybe(j, "encoder_layers", c.encoder_layers);
  maybe(j, "decoder_layers", c.decoder_layers);
  maybe(j, "num_attention_heads", c.num_attention_heads);
  maybe(j, "ffn_mult", c.ffn_mult);
  maybe(j, "proj_dim", c.proj_dim);
  maybe(j, "temperature", c.temperature);
  maybe(j, "normalize_projections", c.normalize_projections);
  c.validate();
  return c;
}

json train_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr_backbone", c.lr_backbone},
              {"lr_rest", c.lr_rest},
              {"lr_decay_epoch", c.lr_decay_epoch},
              {"lr_decay_factor", c.lr_decay_factor},
              {"freeze_text_encoder", c.freeze_text_encoder},
              {"seed", c.seed},
              {"no_verb_align", c.no_verb_align},
              {"no_verb2obj", c.no_verb2obj},
              {"no_matchbox", c.no_matchbox},
              {"no_adapt", c.no_adapt},
              {"eval_interval", c.eval_interval},
              {"target_train_top1", c.target_train_top1},
              {"max_minutes", c.max_minutes},
              {"points_per_object", c.points_per_object},
              {"weight_decay", c.weight_decay},
              {"grad_clip", c.grad_clip},
              {"box_l1_weight", c.box_l1_weight},
              {"box_iou_weight", c.box_iou_weight},
              {"match_affinity_weight", c.match_affinity_weight},
              {"contrastive_warmup_epochs", c.contrastive_warmup_epochs},
              {"contrastive_ramp_epochs", c.contrastive_ramp_epochs}};
}

TrainConfig train_from_json(const json& j) {
  reject_unknown_keys(
      j, {"epochs", "batch_size", "lr_backbone", "lr_rest", "lr_decay_epoch", "lr_decay_factor",
          "freeze_text_encoder", "seed", "no_verb_align", "no_verb2obj", "no_matchbox", "no_adapt",
          "eval_interval", "target_train_top1", "max_minutes", "points_per_object", "weight_decay",
          "grad_clip", "box_l1_weight", "box_iou_weight", "match_affinity_weight",
          "contrastive_warmup_epochs", "contrastive_ramp_epochs"},
      "train");
  TrainConfig c;
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "lr_backbone", c.lr_backbone);
  maybe(j, "lr_rest", c.lr_rest);
  maybe(j, "lr_decay_epoch", c.lr_decay_epoch);
  maybe(j, "lr_decay_factor", c.lr_decay_factor);
  maybe(j, "freeze_text_encoder", c.freeze_text_encoder);
  maybe(j, "seed", c.seed);
  maybe(j, "no_verb_align", c.no_verb_align);
  maybe(j, "no_verb2obj", c.no_verb2obj);
  maybe(j, "no_matchbox", c.no_matchbox);
  maybe(j, "no_adapt", c.no_adapt);
  maybe(j, "eval_interval", c.eval_interval);
  maybe(j, "target_train_top1", c.target_train_top1);
  maybe(j, "max_minutes", c.max_minutes);
  maybe(j, "points_per_object", c.points_per_object);
  maybe(j, "weight_decay", c.weight_decay);
  maybe(j, "grad_clip", c.grad_clip);
  maybe(j, "box_l1_weight", c.box_l1_weight);
  maybe(j, "box_iou_weight", c.box_iou_weight);
  maybe(j, "match_affinity_weight", c.match_affinity_weight);
  maybe(j, "contrastive_warmup_epochs", c.contrastive_warmup_epochs);
  maybe(j, "contrastive_ramp_epochs", c.contrastive_ramp_epochs);
  c.validate();
  return c;
}

json synth_to_json(const datagen::SynthConfig& c) {
  json sel;
  sel["min_scene_occurrences"] = c.selection.min_scene_occurrences;
  sel["max_instances_per_scene"] = c.selection.max_instances_per_scene;
  sel["ambiguity_groups"] = json::array();
  for (const auto& g : c.selection.ambiguity_groups) sel["ambiguity_groups"].push_back(g);
  sel["excluded_structural_classes"] = c.selection.excluded_structural_classes;
  return json{{"num_scenes", c.num_scenes},
              {"room_extent", c.room_extent},
              {"class_catalog", c.class_catalog},
              {"instances_min", c.instances_range.first},
              {"instances_max", c.instances_range.second},
              {"classes_per_scene_min", c.classes_per_scene_min},
              {"classes_per_scene_max", c.classes_per_scene_max},
              {"points_per_object", c.points_per_object},
              {"texts_per_object", c.texts_per_object},
              {"selection", sel},
              {"rng_seed", c.rng_seed}};
}

datagen::SynthConfig synth_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"num_scenes", "room_extent", "class_catalog", "instances_min",
                       "instances_max", "classes_per_scene_min", "classes_per_scene_max",
                       "points_per_object", "texts_per_object", "selection", "rng_seed"},
                      "synth");
  datagen::SynthConfig c;
  maybe(j, "num_scenes", c.num_scenes);
  maybe(j, "room_extent", c.room_extent);
  maybe(j, "class_catalog", c.class_catalog);
  maybe(j, "instances_min", c.instances_range.first);
  maybe(j, "instances_max", c.instances_range.second);
  maybe(j, "classes_per_scene_min", c.classes_per_scene_min);
  maybe(j, "classes_per_scene_max", c.classes_per_scene_max);
  maybe(j, "points_per_object", c.points_per_object);
  maybe(j, "texts_per_object", c.texts_per_object);
  maybe(j, "rng_seed", c.rng_seed);
  if (j.contains("selection")) {
    const auto& js = j.at("selection");
    reject_unknown_keys(js,
                        {"min_scene_occurrences", "max_instances_per_scene", "ambiguity_groups",
                         "excluded_structural_classes"},
                        "synth.selection");
    maybe(js, "min_scene_occurrences", c.selection.min_scene_occurrences);
    maybe(js, "max_instances_per_scene", c.selection.max_instances_per_scene);
    if (js.contains("ambiguity_groups")) {
      c.selection.ambiguity_groups.clear();
      for (const auto& g : js.at("ambiguity_groups")) {
        c.selection.ambiguity_groups.push_back(g.get<std::set<std::string>>());
      }
    }
    maybe(js, "excluded_structural_classes", c.selection.excluded_structural_classes);
  }
  return c;
}

const data::DatasetSplit* find_split(const data::Dataset& ds, const std::string& name) {
  for (const auto& s : ds.splits) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

json bundle_to_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["L_bce"] = r.mean.l_bce;
  j["L_pts"] = r.mean.l_pts;
  j["L_vPos"] = r.mean.l_vpos;
  j["L_vSem"] = r.mean.l_vsem;
  j["L_voSem"] = r.mean.l_vosem;
  j["L_box"] = r.mean.l_box;
  j["f_vSem"] = r.mean.f_vsem;
  j["f_voSem"] = r.mean.f_vosem;
  j["f_box"] = r.mean.f_box;
  j["total"] = r.mean.total;
  if (r.val_metrics) {
    j["val_top1_acc_25"] = r.val_metrics->top1_acc_25;
    j["val_top1_acc_50"] = r.val_metrics->top1_acc_50;
    j["val_ap_25"] = r.val_metrics->ap_25;
    j["val_ap_50"] = r.val_metrics->ap_50;
  }
  if (r.train_top1_25) j["train_top1_acc_25"] = *r.train_top1_25;
  return j;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
  if (lr_decay_factor <= 0 || lr_decay_factor > 1) {
    throw ValidationError("TrainConfig: lr_decay_factor must be in (0, 1]");
  }
  if (lr_decay_epoch > epochs && epochs > 0) {
    throw ValidationError("TrainConfig: lr_decay_epoch must be <= epochs");
  }
  if (points_per_object < 1) throw ValidationError("TrainConfig: points_per_object must be >= 1");
  if (contrastive_warmup_epochs < 0 || contrastive_ramp_epochs < 0) {
    throw ValidationError("TrainConfig: warm-up epochs must be >= 0");
  }
}

std::vector<PreparedSample> prepare_samples(const data::Dataset& ds, const data::DatasetSplit& split,
                                            const TrainConfig& tc, const model::ModelConfig& mc) {
  const text::LexiconTagger tagger;
  const model::JitterOracle oracle({}, mix_seed(tc.seed, 0xCA0D1DA7E));
  std::vector<PreparedSample> out;
  out.reserve(split.samples.size());
  for (const auto& s : split.samples) {
    const data::SceneGraph* scene = ds.find_scene(s.scene_id);
    if (!scene) throw ValidationError("prepare_samples: missing scene " + s.scene_id);
    PreparedSample ps;
    ps.sample = s;
    ps.inputs.points = model::build_point_cloud(*scene, tc.points_per_object,
                                                mix_seed(tc.seed, hash_string(s.scene_id)));
    ps.inputs.tokens = text::tokenize_and_tag(s.text, tagger);
    ps.inputs.candidates = oracle.propose(*scene, s);
    int l = ps.inputs.tokens.length();
    if (l > mc.max_text_len) l = mc.max_text_len;
    std::vector<char> vpos(ps.inputs.tokens.verb_positions.begin(),
                           ps.inputs.tokens.verb_positions.begin() + l);
    ps.v_dist = text::verb_distribution(vpos);
    for (int i = 0; i < l; ++i) {
      if (vpos[static_cast<std::size_t>(i)]) ps.verb_indices.push_back(i);
    }
    for (const auto& [v, o] : ps.inputs.tokens.pairs) {
      if (v < l && o < l) ps.pairs.emplace_back(v, o);
    }
    ps.sentinel_index = l - 1;  // sentinel is the final (possibly truncated) token
    out.push_back(std::move(ps));
  }
  return out;
}

std::pair<nn::Tensor, loss::LossBundle> sample_loss(const model::GroundingModel& m,
                                                    const PreparedSample& ps,
                                                    const TrainConfig& tc,
                                                    double contrastive_scale) {
  const model::DecoderOutput out = m.forward(ps.inputs);
  const auto& gts = ps.sample.target_boxes;
  const auto& cfg = m.config();

  loss::CascadeInputs li;
  if (tc.no_matchbox) {
    li.bce = nn::Tensor::scalar(0.0);
  } else {
    li.bce = loss::candidate_matching_loss(out.candidate_confidence,
                                           loss::label_candidates(ps.inputs.candidates, gts));
  }

  li.pts = loss::point_in_target_loss(out.point_scores, out.point_coords, gts);

  loss::MatchResult match;
  if (tc.match_affinity_weight > 0) {
    std::vector<std::vector<double>> affinity(out.pred_boxes.size(),
                                              std::vector<double>(gts.size(), 0.0));
    for (std::size_t q = 0; q < out.selected_coords.size(); ++q) {
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (gts[j].contains(out.selected_coords[q])) affinity[q][j] = 1.0;
      }
    }
    loss::MatchWeights w;
    w.affinity = tc.match_affinity_weight;
    match = loss::hungarian_match(out.pred_boxes, gts, &affinity, w);
  } else {
    match = loss::hungarian_match(out.pred_boxes, gts);
  }
  std::vector<char> matched(static_cast<std::size_t>(cfg.num_queries), 0);
  for (const auto& [q, j] : match.assignment) matched[static_cast<std::size_t>(q)] = 1;

  if (tc.no_verb_align) {
    li.vpos = nn::Tensor::scalar(0.0);
    li.vsem = nn::Tensor::scalar(0.0);
  } else {
    li.vpos = loss::verb_position_loss(out.verb_pos_logits, ps.v_dist);
    std::vector<std::vector<int>> links(static_cast<std::size_t>(cfg.num_queries));
    for (int q = 0; q < cfg.num_queries; ++q) {
      if (matched[static_cast<std::size_t>(q)] && !ps.verb_indices.empty()) {
        links[static_cast<std::size_t>(q)] = ps.verb_indices;
      } else {
        links[static_cast<std::size_t>(q)] = {ps.sentinel_index};
      }
    }
    li.vsem = loss::query_verb_contrastive(out.query_proj, out.verb_proj, links, ps.sentinel_index,
                                           cfg.temperature, cfg.normalize_projections);
    if (contrastive_scale != 1.0) li.vsem = nn::scale(li.vsem, contrastive_scale);
  }

  if (tc.no_verb2obj) {
    li.vosem = nn::Tensor::scalar(0.0);
  } else {
    li.vosem = loss::modulated_query_object_contrastive(out.query_proj, out.verb_proj,
                                                        out.object_proj, ps.pairs, matched,
                                                        ps.sentinel_index, cfg.temperature,
                                                        cfg.normalize_projections);
    if (contrastive_scale != 1.0) li.vosem = nn::scale(li.vosem, contrastive_scale);
  }

  li.box = loss::box_regression_loss(match, out.box_params, gts, tc.box_l1_weight, tc.box_iou_weight);
  return loss::cascaded_total(li, !tc.no_adapt);
}

std::vector<eval::Prediction> predict_split(const model::GroundingModel& m, const data::Dataset& ds,
                                            const data::DatasetSplit& split, const TrainConfig& tc) {
  const auto prepared = prepare_samples(ds, split, tc, m.config());
  std::vector<eval::Prediction> preds;
  nn::NoGradGuard no_grad;
  for (const auto& ps : prepared) {
    const model::DecoderOutput out = m.forward(ps.inputs);
    const auto scores =
        loss::inference_confidence(out.query_proj, out.verb_proj, ps.verb_indices,
                                   ps.sentinel_index, m.config().temperature,
                                   m.config().normalize_projections);
    for (std::size_t q = 0; q < out.pred_boxes.size(); ++q) {
      preds.push_back({ps.sample.sample_id, out.pred_boxes[q], scores[q]});
    }
  }
  return preds;
}

eval::MetricsReport evaluate_model(const model::GroundingModel& m, const data::Dataset& ds,
                                   const data::DatasetSplit& split, const TrainConfig& tc) {
  if (split.samples.empty()) throw ValidationError("evaluate_model: empty split");
  const auto preds = predict_split(m, ds, split, tc);
  return eval::compute_metrics(eval::group_predictions(preds), eval::gather_ground_truth(split));
}

TrainResult train(const TrainConfig& tc, const model::ModelConfig& mc, const data::Dataset& ds,
                  const std::string& out_dir) {
  tc.validate();
  mc.validate();
  fs::create_directories(out_dir);

  const data::DatasetSplit* train_split = find_split(ds, "train");
  if (!train_split || train_split->samples.empty()) {
    throw ValidationError("train: dataset has no train split (or it is empty)");
  }
  const data::DatasetSplit* val_split = find_split(ds, "val");
  if (val_split && val_split->samples.empty()) val_split = nullptr;

  model::GroundingModel m(mc, tc.seed);

  std::vector<nn::AdamW::Group> groups;
  nn::AdamW::Group backbone;
  backbone.params = m.point_backbone_params();
  backbone.lr = tc.lr_backbone;
  nn::AdamW::Group rest;
  rest.params = m.other_params();
  if (!tc.freeze_text_encoder) {
    for (auto& p : m.text_encoder_params()) rest.params.push_back(p);
  }
  rest.lr = tc.lr_rest;
  groups.push_back(std::move(backbone));
  groups.push_back(std::move(rest));
  nn::AdamW opt(std::move(groups), tc.weight_decay, 0.9, 0.999, 1e-8, tc.grad_clip);

  auto prepared = prepare_samples(ds, *train_split, tc, mc);

  TrainResult result;
  const auto t_start = std::chrono::steady_clock::now();
  auto minutes = [&t_start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count() / 60.0;
  };

  const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
  const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
  m.save_checkpoint(last_path);
  m.save_checkpoint(best_path);  // epoch-0 fallback so epochs=0 still emits a checkpoint
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;

  const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
  std::ofstream log_stream(log_path);
  if (!log_stream) throw IoError("cannot open " + log_path + " for writing");

  Rng order_rng(mix_seed(tc.seed, 0x0D0E));
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    if (epoch == tc.lr_decay_epoch) opt.scale_lr(tc.lr_decay_factor);

    std::vector<std::size_t> order(prepared.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);

    loss::LossBundle sums;
    int count = 0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end = std::min(order.size(), cursor + static_cast<std::size_t>(tc.batch_size));
      double contrastive_scale = 1.0;
      if (tc.contrastive_warmup_epochs > 0) {
        const int ramp = tc.contrastive_ramp_epochs > 0 ? tc.contrastive_ramp_epochs
                                                        : tc.contrastive_warmup_epochs;
        // 0 during the warm-up window, then a linear ramp to full strength
        contrastive_scale = std::clamp(
            (epoch - tc.contrastive_warmup_epochs) / static_cast<double>(ramp), 0.0, 1.0);
      }
      std::vector<nn::Tensor> totals;
      for (std::size_t i = cursor; i < batch_end; ++i) {
        const auto& ps = prepared[order[i]];
        auto [total, bundle] = sample_loss(m, ps, tc, contrastive_scale);
        if (!std::isfinite(bundle.total)) {
          json dump;
          dump["epoch"] = epoch;
          dump["sample_id"] = ps.sample.sample_id;
          dump["bundle"] = {{"L_bce", bundle.l_bce},   {"L_pts", bundle.l_pts},
                            {"L_vPos", bundle.l_vpos}, {"L_vSem", bundle.l_vsem},
                            {"L_voSem", bundle.l_vosem}, {"L_box", bundle.l_box}};
          std::ofstream d(fs::path(out_dir) / "diagnostic.json");
          d << dump.dump(2) << "\n";
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                              ps.sample.sample_id + " (diagnostic.json written)");
        }
        totals.push_back(total);
        sums.l_bce += bundle.l_bce;
        sums.l_pts += bundle.l_pts;
        sums.l_vpos += bundle.l_vpos;
        sums.l_vsem += bundle.l_vsem;
        sums.l_vosem += bundle.l_vosem;
        sums.l_box += bundle.l_box;
        sums.f_vsem += bundle.f_vsem;
        sums.f_vosem += bundle.f_vosem;
        sums.f_box += bundle.f_box;
        sums.total += bundle.total;
        ++count;
      }
      nn::Tensor batch_loss = nn::scale(nn::add_n(totals), 1.0 / static_cast<double>(totals.size()));
      opt.zero_grad();
      batch_loss.backward();
      opt.step();
      cursor = batch_end;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double inv = 1.0 / std::max(1, count);
    rec.mean.l_bce = sums.l_bce * inv;
    rec.mean.l_pts = sums.l_pts * inv;
    rec.mean.l_vpos = sums.l_vpos * inv;
    rec.mean.l_vsem = sums.l_vsem * inv;
    rec.mean.l_vosem = sums.l_vosem * inv;
    rec.mean.l_box = sums.l_box * inv;
    rec.mean.f_vsem = sums.f_vsem * inv;
    rec.mean.f_vosem = sums.f_vosem * inv;
    rec.mean.f_box = sums.f_box * inv;
    rec.mean.total = sums.total * inv;

    const bool eval_now = (tc.eval_interval > 0 && epoch % tc.eval_interval == 0) || epoch == tc.epochs;
    if (eval_now && val_split) {
      rec.val_metrics = evaluate_model(m, ds, *val_split, tc);
      if (rec.val_metrics->ap_50 > result.best_val_ap50) {
        result.best_val_ap50 = rec.val_metrics->ap_50;
        m.save_checkpoint(best_path);
      }
    }
    if (eval_now && tc.target_train_top1 > 0) {
      const auto train_metrics = evaluate_model(m, ds, *train_split, tc);
      rec.train_top1_25 = train_metrics.top1_acc_25;
    }

    result.log.push_back(rec);
    result.epochs_run = epoch;
    log_stream << bundle_to_json(rec).dump() << "\n";
    log_stream.flush();

    if (rec.train_top1_25 && *rec.train_top1_25 >= tc.target_train_top1 && tc.target_train_top1 > 0) {
      result.reached_target = true;
      if (!val_split) m.save_checkpoint(best_path);
      break;
    }
    if (tc.max_minutes > 0 && minutes() > tc.max_minutes) break;
  }

  m.save_checkpoint(last_path);
  if (!val_split && result.best_val_ap50 < 0) {
    // no validation split: best == last
    m.save_checkpoint(best_path);
  }
  result.minutes_elapsed = minutes();
  return result;
}

std::string AblationReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back(json{{"id", r.id},
                             {"verb", r.verb},
                             {"verb2obj", r.verb2obj},
                             {"matchbox", r.matchbox},
                             {"adapt", r.adapt},
                             {"top1_acc_25", r.top1_acc_25},
                             {"top1_acc_50", r.top1_acc_50}});
  }
  return json{{"rows", rows_json}}.dump(2);
}

AblationReport run_ablation(const TrainConfig& base, const model::ModelConfig& mc,
                            const data::Dataset& ds, const std::string& out_dir) {
  struct RowSpec {
    const char* id;
    bool verb, verb2obj, matchbox, adapt;
  };
  const RowSpec specs[] = {
      {"(a)", false, true, true, true},  {"(b)", true, false, true, true},
      {"(c)", true, true, false, true},  {"(d)", true, true, true, false},
      {"(e)", true, true, true, true},
  };

  const data::DatasetSplit* val_split = find_split(ds, "val");
  const data::DatasetSplit* eval_split = (val_split && !val_split->samples.empty())
                                             ? val_split
                                             : find_split(ds, "train");
  if (!eval_split) throw ValidationError("run_ablation: dataset has no usable split");

  AblationReport report;
  for (const auto& spec : specs) {
    TrainConfig tc = base;
    tc.no_verb_align = !spec.verb;
    tc.no_verb2obj = !spec.verb2obj;
    tc.no_matchbox = !spec.matchbox;
    tc.no_adapt = !spec.adapt;
    const std::string row_dir = (fs::path(out_dir) / ("ablation_" + std::string(1, spec.id[1]))).string();
    const TrainResult tr = train(tc, mc, ds, row_dir);
    const model::GroundingModel best = model::GroundingModel::load_checkpoint(tr.best_checkpoint);
    const auto metrics = evaluate_model(best, ds, *eval_split, tc);

    AblationRow row;
    row.id = spec.id;
    row.verb = spec.verb;
    row.verb2obj = spec.verb2obj;
    row.matchbox = spec.matchbox;
    row.adapt = spec.adapt;
    row.top1_acc_25 = metrics.top1_acc_25;
    row.top1_acc_50 = metrics.top1_acc_50;
    report.rows.push_back(row);
  }
  return report;
}

DeskPreset desk_preset() {
  DeskPreset p;
  p.synth.num_scenes = 32;
  p.synth.class_catalog = {"bed", "chair", "couch", "lamp", "monitor", "table"};
  p.synth.instances_range = {1, 2};
  p.synth.classes_per_scene_min = 2;
  p.synth.classes_per_scene_max = 2;
  p.synth.texts_per_object = 1;
  p.synth.points_per_object = 128;  // keeps the raw cloud >= num_point_tokens
  p.synth.rng_seed = 7;

  p.model = model::ModelConfig::desk_scale();

  p.train.epochs = 200;
  p.train.batch_size = 4;
  p.train.lr_backbone = 1e-3;
  p.train.lr_rest = 1e-3;
  p.train.lr_decay_epoch = 170;
  p.train.lr_decay_factor = 0.1;
  p.train.freeze_text_encoder = false;  // the desk text encoder trains from scratch
  p.train.seed = 7;
  p.train.eval_interval = 5;
  p.train.target_train_top1 = 90.0;
  p.train.match_affinity_weight = 4.0;
  p.train.contrastive_warmup_epochs = 130;
  p.train.contrastive_ramp_epochs = 40;
  p.train.points_per_object = 128;
  return p;
}

FileConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  reject_unknown_keys(j, {"model", "train", "synth"}, "top level");
  FileConfig cfg;
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
  if (j.contains("synth")) cfg.synth = synth_from_json(j.at("synth"));
  return cfg;
}

void save_config_file(const FileConfig& cfg, const std::string& path) {
  json j;
  j["model"] = model_to_json(cfg.model);
  j["train"] = train_to_json(cfg.train);
  j["synth"] = synth_to_json(cfg.synth);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

void write_training_log(const std::vector<EpochRecord>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& rec : log) out << bundle_to_json(rec).dump() << "\n";
}

}  // namespace ig::harness
