#include "ig/nn/layers.hpp"

#include <cmath>

#include "ig/errors.hpp"

namespace ig::nn {

Tensor ParamStore::add(const std::string& name, std::vector<int> shape, Rng& rng, double stddev) {
  if (index_.count(name)) throw ValidationError("ParamStore: duplicate parameter " + name);
  Tensor t = Tensor::randn(std::move(shape), rng, stddev, /*requires_grad=*/true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::add_const(const std::string& name, std::vector<int> shape, double value) {
  if (index_.count(name)) throw ValidationError("ParamStore: duplicate parameter " + name);
  Tensor t = Tensor::full(std::move(shape), value, /*requires_grad=*/true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("ParamStore: no parameter named " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::total_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.numel());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Linear Linear::make(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.W = ps.add(name + ".W", {in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  l.b = ps.add_const(name + ".b", {1, out}, 0.0);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return add_rowvec(matmul(x, W), b); }

Mlp Mlp::make(ParamStore& ps, const std::string& name, int in, int hidden, int out, Rng& rng) {
  Mlp m;
  m.fc1 = Linear::make(ps, name + ".fc1", in, hidden, rng);
  m.fc2 = Linear::make(ps, name + ".fc2", hidden, out, rng);
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const { return fc2(relu(fc1(x))); }

LayerNorm LayerNorm::make(ParamStore& ps, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gamma = ps.add_const(name + ".gamma", {1, dim}, 1.0);
  ln.beta = ps.add_const(name + ".beta", {1, dim}, 0.0);
  return ln;
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }

MultiheadAttention MultiheadAttention::make(ParamStore& ps, const std::string& name, int dim,
                                            int heads, Rng& rng) {
  if (dim % heads != 0) throw ValidationError("attention: dim must be divisible by head count");
  MultiheadAttention a;
  a.heads = heads;
  a.wq = Linear::make(ps, name + ".wq", dim, dim, rng);
  a.wk = Linear::make(ps, name + ".wk", dim, dim, rng);
  a.wv = Linear::make(ps, name + ".wv", dim, dim, rng);
  a.wo = Linear::make(ps, name + ".wo", dim, dim, rng);
  return a;
}

Tensor MultiheadAttention::operator()(const Tensor& queries, const Tensor& keys_values,
                                      const std::vector<char>& key_mask) const {
  const int dim = wq.W.cols();
  if (!key_mask.empty()) {
    bool any_valid = false;
    for (char c : key_mask) any_valid = any_valid || c;
    // no valid keys: the sub-layer contributes nothing, leaving only the
    // caller's residual path
    if (!any_valid) return Tensor::zeros({queries.rows(), dim});
  }
  const int dh = dim / heads;
  const Tensor q = wq(queries);
  const Tensor k = wk(keys_values);
  const Tensor v = wv(keys_values);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh = slice_cols(k, h * dh, dh);
    const Tensor vh = slice_cols(v, h * dh, dh);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    const Tensor attn = softmax_rows(scores, key_mask);
    head_outputs.push_back(matmul(attn, vh));
  }
  return wo(concat_cols(head_outputs));
}

Tensor residual_norm(const LayerNorm& ln, const Tensor& x, const Tensor& sub) {
  return ln(add(x, sub));
}

AdamW::AdamW(std::vector<Group> groups, double weight_decay, double beta1, double beta2, double eps,
             double clip_norm)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps), clip_norm_(clip_norm) {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    lrs_.push_back(groups[g].lr);
    for (auto& p : groups[g].params) {
      Slot s;
      s.param = p;
      s.m.assign(static_cast<std::size_t>(p.numel()), 0.0);
      s.v.assign(static_cast<std::size_t>(p.numel()), 0.0);
      s.group = g;
      slots_.push_back(std::move(s));
    }
  }
}

void AdamW::step() {
  ++t_;

  double norm_sq = 0.0;
  for (const auto& s : slots_) {
    for (double g : s.param.grad()) norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  const double clip_scale = (clip_norm_ > 0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;

  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    const double lr = lrs_[s.group];
    auto& vals = s.param.mutable_values();
    const auto& grads = s.param.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double g = grads[i] * clip_scale;
      s.m[i] = beta1_ * s.m[i] + (1 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1 - beta2_) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      vals[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * vals[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

void AdamW::scale_lr(double factor) {
  for (auto& lr : lrs_) lr *= factor;
}

std::vector<double> AdamW::learning_rates() const { return lrs_; }

}  // namespace ig::nn
