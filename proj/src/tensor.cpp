#include "ig/nn/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ig/errors.hpp"

namespace ig::nn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError("tensor: " + msg);
}

bool any_requires_grad(const std::vector<Tensor>& parents) {
  for (const auto& p : parents) {
    if (p.requires_grad()) return true;
  }
  return false;
}

}  // namespace

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_op(std::vector<int> shape, std::vector<double> val, std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> backprop) {
  auto node = std::make_shared<Tensor::Node>();
  node->shape = std::move(shape);
  node->val = std::move(val);
  node->requires_grad = g_grad_enabled && any_requires_grad(parents);
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

// ---- factories and accessors ----

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  auto node = std::make_shared<Node>();
  const int n = shape_numel(shape);
  node->shape = std::move(shape);
  node->val.assign(static_cast<std::size_t>(n), v);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> vals, bool requires_grad) {
  require(static_cast<int>(vals.size()) == shape_numel(shape), "from(): size mismatch");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->val = std::move(vals);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1}, v, requires_grad); }

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad) {
  const int n = shape_numel(shape);
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (auto& v : vals) v = rng.normal() * stddev;
  return from(std::move(shape), std::move(vals), requires_grad);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }

int Tensor::rows() const {
  require(node_->shape.size() == 2, "rows(): not 2-D");
  return node_->shape[0];
}

int Tensor::cols() const {
  require(node_->shape.size() == 2, "cols(): not 2-D");
  return node_->shape[1];
}

int Tensor::numel() const { return static_cast<int>(node_->val.size()); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::value() const {
  require(node_->val.size() == 1, "value(): not a scalar");
  return node_->val[0];
}

double Tensor::at_value(int flat_index) const { return node_->val[static_cast<std::size_t>(flat_index)]; }

const std::vector<double>& Tensor::values() const { return node_->val; }

std::vector<double>& Tensor::mutable_values() { return node_->val; }

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->val.size(), 0.0); }

void Tensor::backward() {
  require(node_->val.size() == 1, "backward(): root must be scalar");
  if (!node_->requires_grad) return;

  // Post-order DFS; process in reverse for the backward sweep.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [cur, idx] = stack.back();
    bool descended = false;
    while (idx < cur->parents.size()) {
      Node* p = cur->parents[idx].node();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---- helpers for op bodies ----

namespace {

Tensor unary(const Tensor& a, std::vector<double> val,
             std::function<void(const double*, const std::vector<double>&, std::vector<double>&)> dfn) {
  Tensor ac = a;
  return make_op(a.shape(), std::move(val), {a},
                 [ac, dfn](Tensor::Node& self) {
                   auto* p = ac.node();
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   dfn(self.grad.data(), self.val, p->grad);
                 });
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch");
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  Tensor ac = a, bc = b;
  return make_op(a.shape(), std::move(v), {a, b}, [ac, bc](Tensor::Node& self) {
    for (Tensor t : {ac, bc}) {
      auto* p = t.node();
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  Tensor ac = a, bc = b;
  return make_op(a.shape(), std::move(v), {a, b}, [ac, bc](Tensor::Node& self) {
    if (ac.node()->requires_grad) {
      ac.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) ac.node()->grad[i] += self.grad[i];
    }
    if (bc.node()->requires_grad) {
      bc.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bc.node()->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  Tensor ac = a, bc = b;
  return make_op(a.shape(), std::move(v), {a, b}, [ac, bc](Tensor::Node& self) {
    const auto& av = ac.node()->val;
    const auto& bv2 = bc.node()->val;
    if (ac.node()->requires_grad) {
      ac.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) ac.node()->grad[i] += self.grad[i] * bv2[i];
    }
    if (bc.node()->requires_grad) {
      bc.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bc.node()->grad[i] += self.grad[i] * av[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= bv[i];
  Tensor ac = a, bc = b;
  return make_op(a.shape(), std::move(v), {a, b}, [ac, bc](Tensor::Node& self) {
    const auto& av = ac.node()->val;
    const auto& bv2 = bc.node()->val;
    if (ac.node()->requires_grad) {
      ac.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) ac.node()->grad[i] += self.grad[i] / bv2[i];
    }
    if (bc.node()->requires_grad) {
      bc.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        bc.node()->grad[i] -= self.grad[i] * av[i] / (bv2[i] * bv2[i]);
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (auto& x : v) x *= s;
  return unary(a, std::move(v), [s](const double* g, const std::vector<double>& val, std::vector<double>& pg) {
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * s;
    (void)val;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (auto& x : v) x += s;
  return unary(a, std::move(v), [](const double* g, const std::vector<double>&, std::vector<double>& pg) {
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i];
  });
}

Tensor rsub_scalar(double s, const Tensor& a) {
  std::vector<double> v(a.values());
  for (auto& x : v) x = s - x;
  return unary(a, std::move(v), [](const double* g, const std::vector<double>&, std::vector<double>& pg) {
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] -= g[i];
  });
}

Tensor neg(const Tensor& a) { return rsub_scalar(0.0, a); }

Tensor exp(const Tensor& a) {
  std::vector<double> v(a.values());
  for (auto& x : v) x = std::exp(x);
  return unary(a, std::move(v), [](const double* g, const std::vector<double>& val, std::vector<double>& pg) {
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * val[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> v(a.values());
  Tensor ac = a;
  for (auto& x : v) x = std::log(x);
  return make_op(a.shape(), std::move(v), {a}, [ac](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] / p->val[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> v(a.values());
  for (auto& x : v) x = 1.0 / (1.0 + std::exp(-x));
  return unary(a, std::move(v), [](const double* g, const std::vector<double>& val, std::vector<double>& pg) {
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * val[i] * (1.0 - val[i]);
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> v(a.values());
  for (auto& x : v) x = std::tanh(x);
  return unary(a, std::move(v), [](const double* g, const std::vector<double>& val, std::vector<double>& pg) {
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * (1.0 - val[i] * val[i]);
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.values());
  for (auto& x : v) x = x > 0 ? x : 0.0;
  Tensor ac = a;
  return make_op(a.shape(), std::move(v), {a}, [ac](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p->val[i] > 0) p->grad[i] += self.grad[i];
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> v(a.values());
  for (auto& x : v) x = std::min(hi, std::max(lo, x));
  Tensor ac = a;
  return make_op(a.shape(), std::move(v), {a}, [ac, lo, hi](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p->val[i] > lo && p->val[i] < hi) p->grad[i] += self.grad[i];
  });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "maximum");
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(v[i], bv[i]);
  Tensor ac = a, bc = b;
  return make_op(a.shape(), std::move(v), {a, b}, [ac, bc](Tensor::Node& self) {
    const auto& av = ac.node()->val;
    const auto& bv2 = bc.node()->val;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] >= bv2[i]) {
        if (ac.node()->requires_grad) {
          ac.node()->ensure_grad();
          ac.node()->grad[i] += self.grad[i];
        }
      } else if (bc.node()->requires_grad) {
        bc.node()->ensure_grad();
        bc.node()->grad[i] += self.grad[i];
      }
    }
  });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "minimum");
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::min(v[i], bv[i]);
  Tensor ac = a, bc = b;
  return make_op(a.shape(), std::move(v), {a, b}, [ac, bc](Tensor::Node& self) {
    const auto& av = ac.node()->val;
    const auto& bv2 = bc.node()->val;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] <= bv2[i]) {
        if (ac.node()->requires_grad) {
          ac.node()->ensure_grad();
          ac.node()->grad[i] += self.grad[i];
        }
      } else if (bc.node()->requires_grad) {
        bc.node()->ensure_grad();
        bc.node()->grad[i] += self.grad[i];
      }
    }
  });
}

// ---- structural ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, "matmul: operands must be 2-D");
  const int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  require(k == k2, "matmul: inner dimensions differ");
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  {
    CMap A(a.values().data(), m, k);
    CMap B(b.values().data(), k, n);
    MMap C(v.data(), m, n);
    C.noalias() = A * B;
  }
  Tensor ac = a, bc = b;
  return make_op({m, n}, std::move(v), {a, b}, [ac, bc, m, k, n](Tensor::Node& self) {
    CMap G(self.grad.data(), m, n);
    if (ac.node()->requires_grad) {
      ac.node()->ensure_grad();
      CMap B(bc.node()->val.data(), k, n);
      MMap GA(ac.node()->grad.data(), m, k);
      GA.noalias() += G * B.transpose();
    }
    if (bc.node()->requires_grad) {
      bc.node()->ensure_grad();
      CMap A(ac.node()->val.data(), m, k);
      MMap GB(bc.node()->grad.data(), k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require(a.shape().size() == 2, "transpose: 2-D only");
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  const auto& av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
  Tensor ac = a;
  return make_op({n, m}, std::move(v), {a}, [ac, m, n](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        p->grad[static_cast<std::size_t>(i) * n + j] += self.grad[static_cast<std::size_t>(j) * m + i];
  });
}

Tensor slice_cols(const Tensor& a, int c0, int len) {
  const int m = a.rows(), n = a.cols();
  require(c0 >= 0 && len >= 1 && c0 + len <= n, "slice_cols: out of range");
  std::vector<double> v(static_cast<std::size_t>(m) * len);
  const auto& av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j)
      v[static_cast<std::size_t>(i) * len + j] = av[static_cast<std::size_t>(i) * n + c0 + j];
  Tensor ac = a;
  return make_op({m, len}, std::move(v), {a}, [ac, c0, len, m, n](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < len; ++j)
        p->grad[static_cast<std::size_t>(i) * n + c0 + j] += self.grad[static_cast<std::size_t>(i) * len + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  const int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    require(p.rows() == m, "concat_cols: row mismatch");
    total += p.cols();
  }
  std::vector<double> v(static_cast<std::size_t>(m) * total);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    const auto& pv = p.values();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        v[static_cast<std::size_t>(i) * total + off + j] = pv[static_cast<std::size_t>(i) * w + j];
    off += w;
  }
  std::vector<Tensor> parents = parts;
  return make_op({m, total}, std::move(v), parts, [parents, m, total](Tensor::Node& self) {
    int off2 = 0;
    for (const auto& t : parents) {
      auto* p = t.node();
      const int w = p->shape[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            p->grad[static_cast<std::size_t>(i) * w + j] += self.grad[static_cast<std::size_t>(i) * total + off2 + j];
      }
      off2 += w;
    }
  });
}

Tensor slice_rows(const Tensor& a, int r0, int len) {
  const int m = a.rows(), n = a.cols();
  require(r0 >= 0 && len >= 1 && r0 + len <= m, "slice_rows: out of range");
  std::vector<double> v(a.values().begin() + static_cast<std::size_t>(r0) * n,
                        a.values().begin() + static_cast<std::size_t>(r0 + len) * n);
  Tensor ac = a;
  return make_op({len, n}, std::move(v), {a}, [ac, r0, len, n](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < static_cast<std::size_t>(len) * n; ++i)
      p->grad[static_cast<std::size_t>(r0) * n + i] += self.grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  const int n = parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    require(p.cols() == n, "concat_rows: col mismatch");
    total += p.rows();
  }
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(total) * n);
  for (const auto& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> parents = parts;
  return make_op({total, n}, std::move(v), parts, [parents, n](Tensor::Node& self) {
    std::size_t off = 0;
    for (const auto& t : parents) {
      auto* p = t.node();
      const std::size_t cnt = p->val.size();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < cnt; ++i) p->grad[i] += self.grad[off + i];
      }
      off += cnt;
    }
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> v;
  v.reserve(indices.size() * static_cast<std::size_t>(n));
  for (int idx : indices) {
    require(idx >= 0 && idx < m, "gather_rows: index out of range");
    const auto* row = a.values().data() + static_cast<std::size_t>(idx) * n;
    v.insert(v.end(), row, row + n);
  }
  Tensor ac = a;
  std::vector<int> idxs = indices;
  return make_op({static_cast<int>(indices.size()), n}, std::move(v), {a},
                 [ac, idxs, n](Tensor::Node& self) {
                   auto* p = ac.node();
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   for (std::size_t r = 0; r < idxs.size(); ++r)
                     for (int j = 0; j < n; ++j)
                       p->grad[static_cast<std::size_t>(idxs[r]) * n + j] += self.grad[r * n + j];
                 });
}

Tensor at(const Tensor& a, int flat_index) {
  require(flat_index >= 0 && flat_index < a.numel(), "at: out of range");
  Tensor ac = a;
  return make_op({1}, {a.values()[static_cast<std::size_t>(flat_index)]}, {a},
                 [ac, flat_index](Tensor::Node& self) {
                   auto* p = ac.node();
                   if (!p->requires_grad) return;
                   p->ensure_grad();
                   p->grad[static_cast<std::size_t>(flat_index)] += self.grad[0];
                 });
}

Tensor at2(const Tensor& a, int r, int c) { return at(a, r * a.cols() + c); }

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  require(shape_numel(shape) == a.numel(), "reshape: numel mismatch");
  Tensor ac = a;
  return make_op(std::move(shape), a.values(), {a}, [ac](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

// ---- broadcasting ----

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  const int m = x.rows(), n = x.cols();
  require(row.numel() == n, "add_rowvec: width mismatch");
  std::vector<double> v(x.values());
  const auto& rv = row.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] += rv[j];
  Tensor xc = x, rc = row;
  return make_op({m, n}, std::move(v), {x, row}, [xc, rc, m, n](Tensor::Node& self) {
    if (xc.node()->requires_grad) {
      xc.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xc.node()->grad[i] += self.grad[i];
    }
    if (rc.node()->requires_grad) {
      rc.node()->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) rc.node()->grad[j] += self.grad[static_cast<std::size_t>(i) * n + j];
    }
  });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& row) {
  const int m = x.rows(), n = x.cols();
  require(row.numel() == n, "mul_rowvec: width mismatch");
  std::vector<double> v(x.values());
  const auto& rv = row.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] *= rv[j];
  Tensor xc = x, rc = row;
  return make_op({m, n}, std::move(v), {x, row}, [xc, rc, m, n](Tensor::Node& self) {
    const auto& xv = xc.node()->val;
    const auto& rv2 = rc.node()->val;
    if (xc.node()->requires_grad) {
      xc.node()->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          xc.node()->grad[static_cast<std::size_t>(i) * n + j] +=
              self.grad[static_cast<std::size_t>(i) * n + j] * rv2[j];
    }
    if (rc.node()->requires_grad) {
      rc.node()->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          rc.node()->grad[j] += self.grad[static_cast<std::size_t>(i) * n + j] * xv[static_cast<std::size_t>(i) * n + j];
    }
  });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double s = 0;
  for (double x : a.values()) s += x;
  Tensor ac = a;
  return make_op({1}, {s}, {a}, [ac](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (auto& g : p->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0;
  for (double x : a.values()) s += x;
  Tensor ac = a;
  return make_op({1}, {s / n}, {a}, [ac, n](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (auto& g : p->grad) g += self.grad[0] / n;
  });
}

Tensor add_n(const std::vector<Tensor>& terms) {
  require(!terms.empty(), "add_n: empty");
  std::vector<double> v(terms[0].values());
  for (std::size_t t = 1; t < terms.size(); ++t) {
    check_same_shape(terms[0], terms[t], "add_n");
    const auto& tv = terms[t].values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += tv[i];
  }
  std::vector<Tensor> parents = terms;
  return make_op(terms[0].shape(), std::move(v), terms, [parents](Tensor::Node& self) {
    for (const auto& t : parents) {
      auto* p = t.node();
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

// ---- row-wise ops ----

namespace {

std::vector<char> full_mask(int n) { return std::vector<char>(static_cast<std::size_t>(n), 1); }

void check_mask(const std::vector<char>& mask, int n) {
  require(static_cast<int>(mask.size()) == n, "mask length mismatch");
  bool any = false;
  for (char c : mask) any = any || c;
  require(any, "mask has no valid positions");
}

}  // namespace

Tensor softmax_rows(const Tensor& a, const std::vector<char>& mask_in) {
  const int m = a.rows(), n = a.cols();
  std::vector<char> mask = mask_in.empty() ? full_mask(n) : mask_in;
  check_mask(mask, n);
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j)
      if (mask[j]) mx = std::max(mx, av[static_cast<std::size_t>(i) * n + j]);
    double z = 0;
    for (int j = 0; j < n; ++j)
      if (mask[j]) {
        const double e = std::exp(av[static_cast<std::size_t>(i) * n + j] - mx);
        v[static_cast<std::size_t>(i) * n + j] = e;
        z += e;
      }
    for (int j = 0; j < n; ++j)
      if (mask[j]) v[static_cast<std::size_t>(i) * n + j] /= z;
  }
  Tensor ac = a;
  return make_op({m, n}, std::move(v), {a}, [ac, mask, m, n](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < m; ++i) {
      double dot = 0;
      for (int j = 0; j < n; ++j)
        if (mask[j]) dot += self.grad[static_cast<std::size_t>(i) * n + j] * self.val[static_cast<std::size_t>(i) * n + j];
      for (int j = 0; j < n; ++j)
        if (mask[j]) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          p->grad[idx] += self.val[idx] * (self.grad[idx] - dot);
        }
    }
  });
}

Tensor logsumexp_rows(const Tensor& a, const std::vector<char>& mask_in) {
  const int m = a.rows(), n = a.cols();
  std::vector<char> mask = mask_in.empty() ? full_mask(n) : mask_in;
  check_mask(mask, n);
  std::vector<double> v(static_cast<std::size_t>(m));
  const auto& av = a.values();
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j)
      if (mask[j]) mx = std::max(mx, av[static_cast<std::size_t>(i) * n + j]);
    double z = 0;
    for (int j = 0; j < n; ++j)
      if (mask[j]) z += std::exp(av[static_cast<std::size_t>(i) * n + j] - mx);
    v[static_cast<std::size_t>(i)] = mx + std::log(z);
  }
  Tensor ac = a;
  return make_op({m, 1}, std::move(v), {a}, [ac, mask, m, n](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double lse = self.val[static_cast<std::size_t>(i)];
      const double g = self.grad[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      for (int j = 0; j < n; ++j)
        if (mask[j]) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          p->grad[idx] += g * std::exp(p->val[idx] - lse);
        }
    }
  });
}

Tensor log_softmax_rows(const Tensor& a, const std::vector<char>& mask_in) {
  const int m = a.rows(), n = a.cols();
  std::vector<char> mask = mask_in.empty() ? full_mask(n) : mask_in;
  check_mask(mask, n);
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  std::vector<double> lse(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j)
      if (mask[j]) mx = std::max(mx, av[static_cast<std::size_t>(i) * n + j]);
    double z = 0;
    for (int j = 0; j < n; ++j)
      if (mask[j]) z += std::exp(av[static_cast<std::size_t>(i) * n + j] - mx);
    lse[static_cast<std::size_t>(i)] = mx + std::log(z);
    for (int j = 0; j < n; ++j)
      if (mask[j])
        v[static_cast<std::size_t>(i) * n + j] = av[static_cast<std::size_t>(i) * n + j] - lse[static_cast<std::size_t>(i)];
  }
  Tensor ac = a;
  return make_op({m, n}, std::move(v), {a}, [ac, mask, m, n](Tensor::Node& self) {
    auto* p = ac.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < m; ++i) {
      double gsum = 0;
      for (int j = 0; j < n; ++j)
        if (mask[j]) gsum += self.grad[static_cast<std::size_t>(i) * n + j];
      for (int j = 0; j < n; ++j)
        if (mask[j]) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          p->grad[idx] += self.grad[idx] - std::exp(self.val[idx]) * gsum;
        }
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int m = x.rows(), n = x.cols();
  require(gamma.numel() == n && beta.numel() == n, "layer_norm: param width mismatch");
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  std::vector<double> xhat(static_cast<std::size_t>(m) * n);
  std::vector<double> inv_sigma(static_cast<std::size_t>(m));
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (int i = 0; i < m; ++i) {
    double mu = 0;
    for (int j = 0; j < n; ++j) mu += xv[static_cast<std::size_t>(i) * n + j];
    mu /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) {
      const double d = xv[static_cast<std::size_t>(i) * n + j] - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n + j;
      xhat[idx] = (xv[idx] - mu) * is;
      v[idx] = xhat[idx] * gv[j] + bv[j];
    }
  }
  Tensor xc = x, gc = gamma, bc = beta;
  return make_op({m, n}, std::move(v), {x, gamma, beta},
                 [xc, gc, bc, xhat, inv_sigma, m, n](Tensor::Node& self) {
                   const auto& gv2 = gc.node()->val;
                   if (gc.node()->requires_grad) {
                     gc.node()->ensure_grad();
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j)
                         gc.node()->grad[j] += self.grad[static_cast<std::size_t>(i) * n + j] * xhat[static_cast<std::size_t>(i) * n + j];
                   }
                   if (bc.node()->requires_grad) {
                     bc.node()->ensure_grad();
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j) bc.node()->grad[j] += self.grad[static_cast<std::size_t>(i) * n + j];
                   }
                   if (xc.node()->requires_grad) {
                     xc.node()->ensure_grad();
                     for (int i = 0; i < m; ++i) {
                       double mean_dy = 0, mean_dy_xhat = 0;
                       for (int j = 0; j < n; ++j) {
                         const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                         const double dy = self.grad[idx] * gv2[j];
                         mean_dy += dy;
                         mean_dy_xhat += dy * xhat[idx];
                       }
                       mean_dy /= n;
                       mean_dy_xhat /= n;
                       for (int j = 0; j < n; ++j) {
                         const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                         const double dy = self.grad[idx] * gv2[j];
                         xc.node()->grad[idx] += inv_sigma[static_cast<std::size_t>(i)] *
                                                 (dy - mean_dy - xhat[idx] * mean_dy_xhat);
                       }
                     }
                   }
                 });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const int m = x.rows(), n = x.cols();
  std::vector<double> v(x.values());
  std::vector<double> norms(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double s = 0;
    for (int j = 0; j < n; ++j) {
      const double d = v[static_cast<std::size_t>(i) * n + j];
      s += d * d;
    }
    const double norm = std::sqrt(s);
    norms[static_cast<std::size_t>(i)] = norm;
    if (norm >= eps) {
      for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] /= norm;
    }
    // rows with near-zero norm pass through unchanged
  }
  Tensor xc = x;
  return make_op({m, n}, std::move(v), {x}, [xc, norms, eps, m, n](Tensor::Node& self) {
    auto* p = xc.node();
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double norm = norms[static_cast<std::size_t>(i)];
      if (norm < eps) {
        for (int j = 0; j < n; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i) * n + j;
          p->grad[idx] += self.grad[idx];
        }
        continue;
      }
      double dot = 0;
      for (int j = 0; j < n; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * n + j;
        dot += self.grad[idx] * self.val[idx];
      }
      for (int j = 0; j < n; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * n + j;
        p->grad[idx] += (self.grad[idx] - self.val[idx] * dot) / norm;
      }
    }
  });
}

}  // namespace ig::nn
