#include "ig/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ig/datagen.hpp"
#include "ig/errors.hpp"

using nlohmann::json;

namespace ig::model {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'I', 'G', 'C', 'K'};

json config_to_json(const ModelConfig& c) {
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

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.num_point_tokens = j.at("num_point_tokens").get<int>();
  c.max_text_len = j.at("max_text_len").get<int>();
  c.num_queries = j.at("num_queries").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.num_attention_heads = j.at("num_attention_heads").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.normalize_projections = j.at("normalize_projections").get<bool>();
  return c;
}

double sq_dist(const geom::Vec3& a, const geom::Vec3& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Farthest point sampling; starts from index 0 for determinism. When fewer
/// input points than requested, indices repeat cyclically.
std::vector<int> farthest_point_indices(const std::vector<geom::Vec3>& pts, int count) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(count));
  if (n == 0) throw ValidationError("farthest_point_indices: empty cloud");
  if (n <= count) {
    for (int i = 0; i < count; ++i) idx.push_back(i % n);
    return idx;
  }
  std::vector<double> dist(static_cast<std::size_t>(n), 1e30);
  int cur = 0;
  idx.push_back(0);
  for (int step = 1; step < count; ++step) {
    int far = 0;
    double far_d = -1;
    for (int i = 0; i < n; ++i) {
      const double d = sq_dist(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(cur)]);
      if (d < dist[static_cast<std::size_t>(i)]) dist[static_cast<std::size_t>(i)] = d;
      if (dist[static_cast<std::size_t>(i)] > far_d) {
        far_d = dist[static_cast<std::size_t>(i)];
        far = i;
      }
    }
    idx.push_back(far);
    cur = far;
  }
  return idx;
}

/// Row-normalized k-nearest-neighbour averaging matrix (rows x cols), as a
/// constant tensor: entry (i, j) = 1/k when j is among the k nearest
/// sources to target i.
nn::Tensor knn_mean_matrix(const std::vector<geom::Vec3>& targets,
                           const std::vector<geom::Vec3>& sources, int k) {
  const int rows = static_cast<int>(targets.size());
  const int cols = static_cast<int>(sources.size());
  const int kk = std::min(k, cols);
  std::vector<double> mat(static_cast<std::size_t>(rows) * cols, 0.0);
  std::vector<int> order(static_cast<std::size_t>(cols));
  for (int i = 0; i < rows; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + kk, order.end(), [&](int a, int b) {
      const double da = sq_dist(targets[static_cast<std::size_t>(i)], sources[static_cast<std::size_t>(a)]);
      const double db = sq_dist(targets[static_cast<std::size_t>(i)], sources[static_cast<std::size_t>(b)]);
      if (da != db) return da < db;
      return a < b;
    });
    for (int j = 0; j < kk; ++j)
      mat[static_cast<std::size_t>(i) * cols + order[static_cast<std::size_t>(j)]] = 1.0 / kk;
  }
  return nn::Tensor::from({rows, cols}, std::move(mat));
}

}  // namespace

ModelConfig ModelConfig::desk_scale() {
  ModelConfig c;
  c.hidden_dim = 64;
  c.num_point_tokens = 256;
  c.max_text_len = 24;
  c.num_queries = 16;
  c.encoder_layers = 2;
  c.decoder_layers = 3;
  c.num_attention_heads = 8;
  c.ffn_mult = 2;
  c.proj_dim = 32;
  return c;
}

void ModelConfig::validate() const {
  if (hidden_dim <= 0 || num_point_tokens <= 0 || max_text_len <= 0 || num_queries <= 0 ||
      num_attention_heads <= 0 || proj_dim <= 0 || ffn_mult <= 0) {
    throw ValidationError("ModelConfig: dimensions must be positive");
  }
  if (hidden_dim % num_attention_heads != 0) {
    throw ValidationError("ModelConfig: hidden_dim must be divisible by num_attention_heads");
  }
  if (num_queries > num_point_tokens) {
    throw ValidationError("ModelConfig: num_queries must be <= num_point_tokens");
  }
  if (encoder_layers < 0 || decoder_layers < 0) {
    throw ValidationError("ModelConfig: layer counts must be >= 0");
  }
  if (temperature <= 0) throw ValidationError("ModelConfig: temperature must be > 0");
}

// ---- vocabulary ----

Vocab::Vocab() {
  std::set<std::string> words;
  // cover the phrase bank plus everything the tokenizer can emit from it
  const char* extra[] = {"<unk>", "<pad>", text::kSentinelToken};
  for (const auto& s : datagen::bank_sentences()) {
    for (const auto& tok : text::tokenize(s)) words.insert(tok);
  }
  for (const char* w : extra) words.insert(w);

  words_.assign(words.begin(), words.end());
  for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = static_cast<int>(i);
  unk_id_ = index_.at("<unk>");
  pad_id_ = index_.at("<pad>");
}

const Vocab& Vocab::builtin() {
  static const Vocab v;
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_id_ : it->second;
}

// ---- model ----

struct GroundingModel::Blocks {
  // point encoder
  nn::Linear pe_raw, pe_center, pe_merge, pe_local;
  nn::LayerNorm pe_ln1, pe_ln2;
  // text encoder
  nn::Tensor te_embedding;  // vocab x c
  nn::Tensor te_positional; // max_text_len x c
  struct TextBlock {
    nn::MultiheadAttention self_attn;
    nn::Mlp ffn;
    nn::LayerNorm ln1, ln2;
  };
  std::vector<TextBlock> te_blocks;
  // candidate embedding
  nn::Mlp box_embed;
  // encoder fusion blocks
  struct FuseBlock {
    nn::MultiheadAttention p_self, p_cross_t, p_cross_b, b_cross_t, t_self, t_cross_p;
    nn::Mlp p_ffn, b_ffn, t_ffn;
    nn::LayerNorm p_ln1, p_ln2, p_ln3, p_ln4, b_ln1, b_ln2, t_ln1, t_ln2, t_ln3;
  };
  std::vector<FuseBlock> fuse;
  // query selection + decoder
  nn::Linear point_score;  // c -> 1
  nn::Linear query_init;   // c -> c
  nn::Linear query_pos;    // 3 -> c, anchor-coordinate identity for each query
  nn::Tensor query_slots;  // k x c learned slot embeddings
  struct DecBlock {
    nn::MultiheadAttention self_attn, cross_t, cross_b, cross_p;
    nn::Mlp ffn;
    nn::LayerNorm ln1, ln2, ln3, ln4, ln5;
  };
  std::vector<DecBlock> dec;
  // heads
  nn::Mlp box_head;       // c -> 6
  nn::Mlp verb_pos_head;  // c -> max_text_len
  nn::Linear query_proj, verb_proj, object_proj;
  nn::Mlp confidence_head;  // c -> 1
};

GroundingModel::GroundingModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  build(seed);
}

void GroundingModel::build(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x19D37EA1));
  blocks_ = std::make_shared<Blocks>();
  auto& b = *blocks_;
  const int c = cfg_.hidden_dim;
  const int heads = cfg_.num_attention_heads;
  const int ffn = cfg_.ffn_mult * c;
  auto& ps = params_;

  b.pe_raw = nn::Linear::make(ps, "point_enc.raw", 3, c, rng);
  b.pe_center = nn::Linear::make(ps, "point_enc.center", 3, c, rng);
  b.pe_merge = nn::Linear::make(ps, "point_enc.merge", 2 * c, c, rng);
  b.pe_local = nn::Linear::make(ps, "point_enc.local", c, c, rng);
  b.pe_ln1 = nn::LayerNorm::make(ps, "point_enc.ln1", c);
  b.pe_ln2 = nn::LayerNorm::make(ps, "point_enc.ln2", c);

  const int vocab = Vocab::builtin().size();
  b.te_embedding = ps.add("text_enc.embedding", {vocab, c}, rng, 0.1);
  b.te_positional = ps.add("text_enc.positional", {cfg_.max_text_len, c}, rng, 0.1);
  for (int i = 0; i < 2; ++i) {
    const std::string pre = "text_enc.block" + std::to_string(i);
    Blocks::TextBlock tb;
    tb.self_attn = nn::MultiheadAttention::make(ps, pre + ".self", c, heads, rng);
    tb.ffn = nn::Mlp::make(ps, pre + ".ffn", c, ffn, c, rng);
    tb.ln1 = nn::LayerNorm::make(ps, pre + ".ln1", c);
    tb.ln2 = nn::LayerNorm::make(ps, pre + ".ln2", c);
    b.te_blocks.push_back(std::move(tb));
  }

  b.box_embed = nn::Mlp::make(ps, "box_embed", 6, c, c, rng);

  for (int i = 0; i < cfg_.encoder_layers; ++i) {
    const std::string pre = "encoder.block" + std::to_string(i);
    Blocks::FuseBlock fb;
    fb.p_self = nn::MultiheadAttention::make(ps, pre + ".p_self", c, heads, rng);
    fb.p_cross_t = nn::MultiheadAttention::make(ps, pre + ".p_cross_t", c, heads, rng);
    fb.p_cross_b = nn::MultiheadAttention::make(ps, pre + ".p_cross_b", c, heads, rng);
    fb.b_cross_t = nn::MultiheadAttention::make(ps, pre + ".b_cross_t", c, heads, rng);
    fb.t_self = nn::MultiheadAttention::make(ps, pre + ".t_self", c, heads, rng);
    fb.t_cross_p = nn::MultiheadAttention::make(ps, pre + ".t_cross_p", c, heads, rng);
    fb.p_ffn = nn::Mlp::make(ps, pre + ".p_ffn", c, ffn, c, rng);
    fb.b_ffn = nn::Mlp::make(ps, pre + ".b_ffn", c, ffn, c, rng);
    fb.t_ffn = nn::Mlp::make(ps, pre + ".t_ffn", c, ffn, c, rng);
    fb.p_ln1 = nn::LayerNorm::make(ps, pre + ".p_ln1", c);
    fb.p_ln2 = nn::LayerNorm::make(ps, pre + ".p_ln2", c);
    fb.p_ln3 = nn::LayerNorm::make(ps, pre + ".p_ln3", c);
    fb.p_ln4 = nn::LayerNorm::make(ps, pre + ".p_ln4", c);
    fb.b_ln1 = nn::LayerNorm::make(ps, pre + ".b_ln1", c);
    fb.b_ln2 = nn::LayerNorm::make(ps, pre + ".b_ln2", c);
    fb.t_ln1 = nn::LayerNorm::make(ps, pre + ".t_ln1", c);
    fb.t_ln2 = nn::LayerNorm::make(ps, pre + ".t_ln2", c);
    fb.t_ln3 = nn::LayerNorm::make(ps, pre + ".t_ln3", c);
    b.fuse.push_back(std::move(fb));
  }

  b.point_score = nn::Linear::make(ps, "select.point_score", c, 1, rng);
  b.query_init = nn::Linear::make(ps, "select.query_init", c, c, rng);
  b.query_pos = nn::Linear::make(ps, "select.query_pos", 3, c, rng);
  // learned slot identities: selected point features can be near-identical
  // (adjacent surface points), and a purely symmetric decoder cannot pull
  // such queries into different matched/unmatched roles
  b.query_slots = ps.add("select.query_slots", {cfg_.num_queries, c}, rng, 1.0);

  for (int i = 0; i < cfg_.decoder_layers; ++i) {
    const std::string pre = "decoder.block" + std::to_string(i);
    Blocks::DecBlock db;
    db.self_attn = nn::MultiheadAttention::make(ps, pre + ".self", c, heads, rng);
    db.cross_t = nn::MultiheadAttention::make(ps, pre + ".cross_t", c, heads, rng);
    db.cross_b = nn::MultiheadAttention::make(ps, pre + ".cross_b", c, heads, rng);
    db.cross_p = nn::MultiheadAttention::make(ps, pre + ".cross_p", c, heads, rng);
    db.ffn = nn::Mlp::make(ps, pre + ".ffn", c, ffn, c, rng);
    db.ln1 = nn::LayerNorm::make(ps, pre + ".ln1", c);
    db.ln2 = nn::LayerNorm::make(ps, pre + ".ln2", c);
    db.ln3 = nn::LayerNorm::make(ps, pre + ".ln3", c);
    db.ln4 = nn::LayerNorm::make(ps, pre + ".ln4", c);
    db.ln5 = nn::LayerNorm::make(ps, pre + ".ln5", c);
    b.dec.push_back(std::move(db));
  }

  b.box_head = nn::Mlp::make(ps, "heads.box", c, c, 6, rng);
  b.verb_pos_head = nn::Mlp::make(ps, "heads.verb_pos", c, c, cfg_.max_text_len, rng);
  b.query_proj = nn::Linear::make(ps, "heads.query_proj", c, cfg_.proj_dim, rng);
  b.verb_proj = nn::Linear::make(ps, "heads.verb_proj", c, cfg_.proj_dim, rng);
  b.object_proj = nn::Linear::make(ps, "heads.object_proj", c, cfg_.proj_dim, rng);
  b.confidence_head = nn::Mlp::make(ps, "heads.confidence", c, c, 1, rng);
}

EncodedInputs GroundingModel::encode_modalities(const ModelInputs& in) const {
  if (in.candidates.empty()) {
    throw ValidationError("encode_modalities: candidate list must be non-empty");
  }
  if (in.points.empty()) throw ValidationError("encode_modalities: empty point cloud");
  const auto& b = *blocks_;
  const int p = cfg_.num_point_tokens;

  EncodedInputs e;
  e.candidate_boxes = in.candidates;

  // ---- point stream: FPS + two local-pooling layers ----
  const std::vector<int> centers = farthest_point_indices(in.points, p);
  e.point_coords.reserve(static_cast<std::size_t>(p));
  for (int idx : centers) e.point_coords.push_back(in.points[static_cast<std::size_t>(idx)]);

  const int n_raw = static_cast<int>(in.points.size());
  std::vector<double> raw_xyz(static_cast<std::size_t>(n_raw) * 3);
  for (int i = 0; i < n_raw; ++i)
    for (int a = 0; a < 3; ++a) raw_xyz[static_cast<std::size_t>(i) * 3 + a] = in.points[static_cast<std::size_t>(i)][a];
  std::vector<double> center_xyz(static_cast<std::size_t>(p) * 3);
  for (int i = 0; i < p; ++i)
    for (int a = 0; a < 3; ++a) center_xyz[static_cast<std::size_t>(i) * 3 + a] = e.point_coords[static_cast<std::size_t>(i)][a];

  const nn::Tensor raw = nn::Tensor::from({n_raw, 3}, std::move(raw_xyz));
  const nn::Tensor ctr = nn::Tensor::from({p, 3}, std::move(center_xyz));

  const nn::Tensor raw_feats = nn::relu(b.pe_raw(raw));                       // n x c
  const nn::Tensor agg1 = knn_mean_matrix(e.point_coords, in.points, 8);      // p x n
  const nn::Tensor pooled = nn::matmul(agg1, raw_feats);                      // p x c
  const nn::Tensor merged =
      b.pe_ln1(nn::relu(b.pe_merge(nn::concat_cols({pooled, b.pe_center(ctr)}))));
  const nn::Tensor agg2 = knn_mean_matrix(e.point_coords, e.point_coords, 8);  // p x p
  e.P = b.pe_ln2(nn::add(merged, nn::relu(b.pe_local(nn::matmul(agg2, merged)))));

  // ---- text stream: embedding + positions + 2 self-attention blocks ----
  const auto& vocab = Vocab::builtin();
  std::vector<std::string> toks = in.tokens.tokens;
  int l = static_cast<int>(toks.size());
  if (l > cfg_.max_text_len) {
    toks.resize(static_cast<std::size_t>(cfg_.max_text_len));
    l = cfg_.max_text_len;
    e.text_truncated = true;
  }
  int l_pad = std::max(l, in.pad_text_to);
  l_pad = std::min(l_pad, cfg_.max_text_len);
  e.valid_text_len = l;
  e.text_mask.assign(static_cast<std::size_t>(l_pad), 0);
  std::vector<int> ids(static_cast<std::size_t>(l_pad), vocab.pad_id());
  for (int i = 0; i < l; ++i) {
    ids[static_cast<std::size_t>(i)] = vocab.id(toks[static_cast<std::size_t>(i)]);
    e.text_mask[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<int> pos_ids(static_cast<std::size_t>(l_pad));
  std::iota(pos_ids.begin(), pos_ids.end(), 0);
  nn::Tensor T = nn::add(nn::gather_rows(b.te_embedding, ids), nn::gather_rows(b.te_positional, pos_ids));
  for (const auto& tb : b.te_blocks) {
    T = tb.ln1(nn::add(T, tb.self_attn(T, T, e.text_mask)));
    T = tb.ln2(nn::add(T, tb.ffn(T)));
  }
  e.T = T;

  // ---- candidate stream: row-wise MLP on (center, size) ----
  const int nb = static_cast<int>(in.candidates.size());
  std::vector<double> geo(static_cast<std::size_t>(nb) * 6);
  for (int i = 0; i < nb; ++i) {
    for (int a = 0; a < 3; ++a) {
      geo[static_cast<std::size_t>(i) * 6 + a] = in.candidates[static_cast<std::size_t>(i)].center[a];
      geo[static_cast<std::size_t>(i) * 6 + 3 + a] = in.candidates[static_cast<std::size_t>(i)].size[a];
    }
  }
  e.B = b.box_embed(nn::Tensor::from({nb, 6}, std::move(geo)));
  return e;
}

EncodedInputs GroundingModel::encoder_fuse(EncodedInputs e) const {
  const auto& b = *blocks_;
  for (const auto& fb : b.fuse) {
    const nn::Tensor P_in = e.P, T_in = e.T, B_in = e.B;
    // point stream: self-attention, cross with text, cross with boxes
    nn::Tensor P = fb.p_ln1(nn::add(P_in, fb.p_self(P_in, P_in)));
    P = fb.p_ln2(nn::add(P, fb.p_cross_t(P, T_in, e.text_mask)));
    P = fb.p_ln3(nn::add(P, fb.p_cross_b(P, B_in)));
    P = fb.p_ln4(nn::add(P, fb.p_ffn(P)));
    // box stream: cross with text
    nn::Tensor B = fb.b_ln1(nn::add(B_in, fb.b_cross_t(B_in, T_in, e.text_mask)));
    B = fb.b_ln2(nn::add(B, fb.b_ffn(B)));
    // text stream: self-attention, cross with points
    nn::Tensor T = fb.t_ln1(nn::add(T_in, fb.t_self(T_in, T_in, e.text_mask)));
    T = fb.t_ln2(nn::add(T, fb.t_cross_p(T, P_in)));
    T = fb.t_ln3(nn::add(T, fb.t_ffn(T)));
    e.P = P;
    e.T = T;
    e.B = B;
  }
  return e;
}

std::pair<nn::Tensor, std::vector<int>> GroundingModel::score_and_select(
    const nn::Tensor& fused_points, int k) const {
  const auto& b = *blocks_;
  const int p = fused_points.rows();
  if (k > p) throw ValidationError("score_and_select: k exceeds point token count");
  nn::Tensor scores = b.point_score(fused_points);  // p x 1
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  const auto& sv = scores.values();
  std::stable_sort(order.begin(), order.end(), [&sv](int a, int b2) {
    if (sv[static_cast<std::size_t>(a)] != sv[static_cast<std::size_t>(b2)])
      return sv[static_cast<std::size_t>(a)] > sv[static_cast<std::size_t>(b2)];
    return a < b2;  // ties broken by lower index
  });
  order.resize(static_cast<std::size_t>(k));
  return {scores, order};
}

DecoderOutput GroundingModel::decode(const nn::Tensor& initial_queries,
                                     const std::vector<geom::Vec3>& selected_coords,
                                     const EncodedInputs& e) const {
  const auto& b = *blocks_;
  const int k = initial_queries.rows();

  nn::Tensor Q = initial_queries;
  for (const auto& db : b.dec) {
    Q = db.ln1(nn::add(Q, db.self_attn(Q, Q)));
    Q = db.ln2(nn::add(Q, db.cross_t(Q, e.T, e.text_mask)));
    Q = db.ln3(nn::add(Q, db.cross_b(Q, e.B)));
    Q = db.ln4(nn::add(Q, db.cross_p(Q, e.P)));
    Q = db.ln5(nn::add(Q, db.ffn(Q)));
  }

  DecoderOutput out;
  out.queries = Q;
  out.selected_coords = selected_coords;

  // box head: center = selected point + bounded offset, size = exp(log-size).
  // tanh keeps centers near their anchor points, which keeps the bipartite
  // matching stable while the scoring head is still settling.
  const double max_offset = 2.0;
  const nn::Tensor raw_box = b.box_head(Q);  // k x 6
  std::vector<double> anchor(static_cast<std::size_t>(k) * 3);
  for (int i = 0; i < k; ++i)
    for (int a = 0; a < 3; ++a) anchor[static_cast<std::size_t>(i) * 3 + a] = selected_coords[static_cast<std::size_t>(i)][a];
  const nn::Tensor offset =
      nn::scale(nn::tanh(nn::scale(nn::slice_cols(raw_box, 0, 3), 1.0 / max_offset)), max_offset);
  const nn::Tensor center = nn::add(offset, nn::Tensor::from({k, 3}, std::move(anchor)));
  const nn::Tensor size = nn::exp(nn::clamp(nn::slice_cols(raw_box, 3, 3), -8.0, 8.0));
  out.box_params = nn::concat_cols({center, size});
  out.pred_boxes.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    geom::Box3D box;
    for (int a = 0; a < 3; ++a) {
      box.center[a] = out.box_params.at_value(i * 6 + a);
      box.size[a] = out.box_params.at_value(i * 6 + 3 + a);
    }
    out.pred_boxes.push_back(box);
  }

  const int l = e.valid_text_len;
  out.verb_pos_logits = nn::slice_cols(b.verb_pos_head(Q), 0, l);
  out.query_proj = b.query_proj(Q);
  const nn::Tensor T_valid = l == e.T.rows() ? e.T : nn::slice_rows(e.T, 0, l);
  out.verb_proj = b.verb_proj(T_valid);
  out.object_proj = b.object_proj(T_valid);
  out.candidate_confidence = nn::sigmoid(b.confidence_head(e.B));
  return out;
}

DecoderOutput GroundingModel::forward(const ModelInputs& in) const {
  EncodedInputs enc = encoder_fuse(encode_modalities(in));
  auto [scores, indices] = score_and_select(enc.P, cfg_.num_queries);
  const auto& bl = *blocks_;
  std::vector<geom::Vec3> coords;
  coords.reserve(indices.size());
  for (int idx : indices) coords.push_back(enc.point_coords[static_cast<std::size_t>(idx)]);
  // selected point features plus their coordinate embedding; the latter
  // keeps queries anchored at nearby-but-distinct locations apart
  std::vector<double> coord_vals(coords.size() * 3);
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (int a = 0; a < 3; ++a) coord_vals[i * 3 + a] = coords[i][a];
  const nn::Tensor anchor =
      nn::Tensor::from({static_cast<int>(coords.size()), 3}, std::move(coord_vals));
  const nn::Tensor q0 = nn::add(
      nn::add(bl.query_init(nn::gather_rows(enc.P, indices)), bl.query_pos(anchor)),
      bl.query_slots);
  DecoderOutput out = decode(q0, coords, enc);
  out.point_scores = scores;
  out.selected_indices = indices;
  out.point_coords = enc.point_coords;
  return out;
}

std::vector<nn::Tensor> GroundingModel::point_backbone_params() const {
  std::vector<nn::Tensor> out;
  for (const auto& [name, t] : params_.entries()) {
    if (name.rfind("point_enc.", 0) == 0) out.push_back(t);
  }
  return out;
}

std::vector<nn::Tensor> GroundingModel::text_encoder_params() const {
  std::vector<nn::Tensor> out;
  for (const auto& [name, t] : params_.entries()) {
    if (name.rfind("text_enc.", 0) == 0) out.push_back(t);
  }
  return out;
}

std::vector<nn::Tensor> GroundingModel::other_params() const {
  std::vector<nn::Tensor> out;
  for (const auto& [name, t] : params_.entries()) {
    if (name.rfind("point_enc.", 0) != 0 && name.rfind("text_enc.", 0) != 0) out.push_back(t);
  }
  return out;
}

void GroundingModel::save_checkpoint(const std::string& path) const {
  json header;
  header["version"] = kCheckpointVersion;
  header["config"] = config_to_json(cfg_);
  header["params"] = json::array();
  for (const auto& [name, t] : params_.entries()) {
    header["params"].push_back(json{{"name", name}, {"shape", t.shape()}});
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint " + path + " for writing");
  out.write(kCheckpointMagic, 4);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : params_.entries()) {
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

GroundingModel GroundingModel::load_checkpoint(const std::string& path, const ModelConfig* expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw ParseError(path + ": not a checkpoint file");
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError(path + ": truncated header");

  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw ParseError(path + ": bad header: " + e.what());
  }
  if (header.at("version").get<std::uint32_t>() != kCheckpointVersion) {
    throw ValidationError(path + ": unsupported checkpoint version");
  }
  const ModelConfig cfg = config_from_json(header.at("config"));
  if (expect && !(cfg == *expect)) {
    throw ValidationError(path + ": checkpoint config does not match the requested config");
  }

  GroundingModel model(cfg, /*seed=*/0);
  const auto& plist = header.at("params");
  if (plist.size() != model.params_.entries().size()) {
    throw ValidationError(path + ": parameter count mismatch");
  }
  for (std::size_t i = 0; i < plist.size(); ++i) {
    const auto& [name, t] = model.params_.entries()[i];
    if (plist[i].at("name").get<std::string>() != name ||
        plist[i].at("shape").get<std::vector<int>>() != t.shape()) {
      throw ValidationError(path + ": parameter layout mismatch at " + name);
    }
  }
  for (const auto& [name, t] : model.params_.entries()) {
    auto& vals = const_cast<nn::Tensor&>(t).mutable_values();
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(double)));
  }
  if (!in) throw ParseError(path + ": truncated parameter data");
  return model;
}

// ---- candidate oracle and cloud plumbing ----

std::vector<geom::Box3D> JitterOracle::propose(const data::SceneGraph& scene,
                                               const data::IntentionSample& sample) const {
  Rng rng(mix_seed(seed_, hash_string(sample.sample_id)));
  std::vector<geom::Box3D> out;
  auto jitter = [&rng, this](const geom::Box3D& b) {
    geom::Box3D j = b;
    for (int a = 0; a < 3; ++a) {
      j.center[a] += rng.normal() * cfg_.center_sigma_frac * b.size[a];
      j.size[a] = std::max(1e-3, b.size[a] * (1.0 + cfg_.size_jitter_frac * (2 * rng.uniform() - 1)));
    }
    return j;
  };
  for (const auto& tb : sample.target_boxes) out.push_back(jitter(tb));
  int distractors = 0;
  for (const auto& o : scene.objects) {
    if (o.fine_class == sample.target_fine_class) continue;
    if (distractors >= cfg_.max_distractors) break;
    out.push_back(jitter(o.box));
    ++distractors;
  }
  return out;
}

std::vector<geom::Vec3> build_point_cloud(const data::SceneGraph& scene, int points_per_object,
                                          std::uint64_t seed) {
  std::vector<geom::Vec3> cloud;
  for (const auto& o : scene.objects) {
    const auto pts = geom::sample_box_points(
        o.box, static_cast<std::size_t>(points_per_object), geom::SampleMode::Surface,
        mix_seed(seed, hash_string(scene.scene_id + "/" + o.instance_id)));
    cloud.insert(cloud.end(), pts.begin(), pts.end());
  }
  if (cloud.empty()) throw ValidationError("build_point_cloud: scene has no objects");
  return cloud;
}

}  // namespace ig::model
