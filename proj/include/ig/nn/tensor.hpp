#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ig/rng.hpp"

namespace ig::nn {

/// Dense double-precision tensor with reverse-mode autodiff.
///
/// A Tensor is a shared handle to a graph node. Ops build the graph; calling
/// backward() on a scalar accumulates gradients into every reachable node
/// that requires_grad. Gradients accumulate across calls until zero_grad().
/// Shapes are row-major; most ops are defined on 2-D matrices.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> vals, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rows() const;
  int cols() const;
  int numel() const;
  bool requires_grad() const;

  double value() const;  // scalar tensors only
  double at_value(int flat_index) const;
  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // leaf mutation (optimizer, FD probes)

  const std::vector<double>& grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Throws on non-scalar roots.
  void backward();

  struct Node;
  Node* node() const { return node_.get(); }

private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_op(std::vector<int> shape, std::vector<double> val,
                        std::vector<Tensor> parents,
                        std::function<void(Node&)> backprop);
};

struct Tensor::Node {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;  // sized lazily
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

/// Disables graph construction while alive (evaluation fast path).
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor rsub_scalar(double s, const Tensor& a);  // s - a
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

// ---- structural ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor slice_cols(const Tensor& a, int c0, int len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int r0, int len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);
Tensor at(const Tensor& a, int flat_index);       // 1x1 view with gradient
Tensor at2(const Tensor& a, int r, int c);
Tensor reshape(const Tensor& a, std::vector<int> shape);

// ---- broadcasting helpers ----
Tensor add_rowvec(const Tensor& x, const Tensor& row);  // (m x n) + (1 x n)
Tensor mul_rowvec(const Tensor& x, const Tensor& row);  // (m x n) * (1 x n)

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor add_n(const std::vector<Tensor>& terms);  // same-shape sum

// ---- row-wise normalized ops; mask (per column) selects valid positions ----
Tensor softmax_rows(const Tensor& a, const std::vector<char>& mask = {});
Tensor log_softmax_rows(const Tensor& a, const std::vector<char>& mask = {});
Tensor logsumexp_rows(const Tensor& a, const std::vector<char>& mask = {});  // (m x 1)
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace ig::nn
