#pragma once

#include <map>
#include <string>
#include <vector>

#include "ig/nn/tensor.hpp"

namespace ig::nn {

/// Named parameter registry. Registration order is deterministic, which
/// makes initialization reproducible for a fixed seed.
class ParamStore {
public:
  Tensor add(const std::string& name, std::vector<int> shape, Rng& rng, double stddev);
  Tensor add_const(const std::string& name, std::vector<int> shape, double value);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  Tensor find(const std::string& name) const;  // throws if absent
  std::size_t total_parameters() const;
  void zero_grad();

private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

struct Linear {
  Tensor W;  // (in x out)
  Tensor b;  // (1 x out)

  static Linear make(ParamStore& ps, const std::string& name, int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;  // (m x in) -> (m x out)
};

/// Two-layer perceptron with ReLU.
struct Mlp {
  Linear fc1, fc2;

  static Mlp make(ParamStore& ps, const std::string& name, int in, int hidden, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma, beta;

  static LayerNorm make(ParamStore& ps, const std::string& name, int dim);
  Tensor operator()(const Tensor& x) const;
};

/// Multi-head scaled dot-product attention. key_mask marks valid key
/// positions (empty = all valid).
struct MultiheadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;

  static MultiheadAttention make(ParamStore& ps, const std::string& name, int dim, int heads,
                                 Rng& rng);
  Tensor operator()(const Tensor& queries, const Tensor& keys_values,
                    const std::vector<char>& key_mask = {}) const;
};

/// Pre-built residual block: x + sublayer(x), then layer norm.
Tensor residual_norm(const LayerNorm& ln, const Tensor& x, const Tensor& sub);

/// Decoupled-weight-decay Adam with two learning-rate groups and global
/// gradient-norm clipping.
class AdamW {
public:
  struct Group {
    std::vector<Tensor> params;
    double lr = 1e-4;
  };

  AdamW(std::vector<Group> groups, double weight_decay = 1e-4, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8, double clip_norm = 1.0);

  void step();
  void zero_grad();
  void scale_lr(double factor);
  std::vector<double> learning_rates() const;

private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
    std::size_t group;
  };
  std::vector<Slot> slots_;
  std::vector<double> lrs_;
  double weight_decay_, beta1_, beta2_, eps_, clip_norm_;
  long t_ = 0;
};

}  // namespace ig::nn
