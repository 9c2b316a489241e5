#include <doctest.h>

#include <cmath>

#include "ig/errors.hpp"
#include "ig/nn/layers.hpp"
#include "ig/nn/tensor.hpp"
#include "test_util.hpp"

using namespace ig;
using nn::Tensor;

namespace {

Tensor random_leaf(Rng& rng, std::vector<int> shape) {
  return Tensor::randn(std::move(shape), rng, 1.0, /*requires_grad=*/true);
}

}  // namespace

TEST_CASE("elementwise ops forward values") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(nn::add(a, b).values() == std::vector<double>{6, 8, 10, 12});
  CHECK(nn::sub(a, b).values() == std::vector<double>{-4, -4, -4, -4});
  CHECK(nn::mul(a, b).values() == std::vector<double>{5, 12, 21, 32});
  CHECK(nn::scale(a, 2).values() == std::vector<double>{2, 4, 6, 8});
  CHECK(nn::matmul(a, b).values() == std::vector<double>{19, 22, 43, 50});
  CHECK(nn::transpose(a).values() == std::vector<double>{1, 3, 2, 4});
}

TEST_CASE("backward on composed scalar") {
  // f = sum((a*b + a)^2); df/da = 2(ab+a)(b+1), df/db = 2(ab+a)a
  const Tensor a = Tensor::from({2}, {1.0, -2.0}, true);
  const Tensor b = Tensor::from({2}, {3.0, 0.5}, true);
  Tensor t = nn::add(nn::mul(a, b), a);
  Tensor f = nn::sum(nn::mul(t, t));
  f.backward();
  CHECK(a.grad()[0] == doctest::Approx(2 * 4 * 4.0));
  CHECK(a.grad()[1] == doctest::Approx(2 * -3 * 1.5));
  CHECK(b.grad()[0] == doctest::Approx(2 * 4 * 1.0));
  CHECK(b.grad()[1] == doctest::Approx(2 * -3 * -2.0));
}

TEST_CASE("finite differences across primitive ops") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> leaves = {random_leaf(rng, {3, 4}), random_leaf(rng, {4, 2})};
    auto fn = [](std::vector<Tensor>& l) {
      return nn::sum(nn::tanh(nn::matmul(l[0], l[1])));
    };
    CHECK(test_util::finite_difference_error(fn, leaves) < 1e-6);
  }
}

TEST_CASE("finite differences: softmax, logsumexp, log_softmax with mask") {
  Rng rng(13);
  const std::vector<char> mask = {1, 1, 0, 1, 1};
  std::vector<Tensor> leaves = {random_leaf(rng, {3, 5})};
  auto f1 = [&mask](std::vector<Tensor>& l) {
    const Tensor s = nn::softmax_rows(l[0], mask);
    return nn::sum(nn::mul(s, s));
  };
  CHECK(test_util::finite_difference_error(f1, leaves) < 1e-6);

  auto f2 = [&mask](std::vector<Tensor>& l) { return nn::sum(nn::logsumexp_rows(l[0], mask)); };
  CHECK(test_util::finite_difference_error(f2, leaves) < 1e-6);

  auto f3 = [&mask](std::vector<Tensor>& l) {
    const Tensor ls = nn::log_softmax_rows(l[0], mask);
    const Tensor w = Tensor::from({3, 5}, {0.1, 0.4, 0, 0.3, 0.2, 0.25, 0.25, 0, 0.25, 0.25,
                                           0.7, 0.1, 0, 0.1, 0.1});
    return nn::neg(nn::sum(nn::mul(w, ls)));
  };
  CHECK(test_util::finite_difference_error(f3, leaves) < 1e-6);
}

TEST_CASE("finite differences: layer norm and l2 normalize") {
  Rng rng(17);
  std::vector<Tensor> leaves = {random_leaf(rng, {4, 6}), random_leaf(rng, {1, 6}),
                                random_leaf(rng, {1, 6})};
  auto fn = [](std::vector<Tensor>& l) {
    return nn::mean(nn::layer_norm_rows(l[0], l[1], l[2]));
  };
  CHECK(test_util::finite_difference_error(fn, leaves) < 1e-5);

  std::vector<Tensor> leaves2 = {random_leaf(rng, {4, 6})};
  auto fn2 = [](std::vector<Tensor>& l) {
    const Tensor n = nn::l2_normalize_rows(l[0]);
    return nn::sum(nn::mul(n, nn::exp(nn::scale(n, 0.3))));
  };
  CHECK(test_util::finite_difference_error(fn2, leaves2) < 1e-5);
}

TEST_CASE("finite differences: slicing, gather, concat, broadcast") {
  Rng rng(19);
  std::vector<Tensor> leaves = {random_leaf(rng, {5, 4}), random_leaf(rng, {1, 4})};
  auto fn = [](std::vector<Tensor>& l) {
    const Tensor g = nn::gather_rows(l[0], {4, 0, 2, 2});
    const Tensor s = nn::slice_cols(nn::add_rowvec(g, l[1]), 1, 2);
    const Tensor c = nn::concat_cols({s, nn::slice_cols(g, 0, 1)});
    const Tensor m = nn::mul_rowvec(nn::concat_rows({c, nn::scale(c, -0.5)}),
                                    Tensor::from({1, 3}, {0.5, 2.0, -1.0}));
    return nn::mean(nn::sigmoid(m));
  };
  CHECK(test_util::finite_difference_error(fn, leaves) < 1e-6);
}

TEST_CASE("finite differences: min, max, clamp, relu, abs composition") {
  Rng rng(23);
  std::vector<Tensor> leaves = {random_leaf(rng, {3, 3}), random_leaf(rng, {3, 3})};
  auto fn = [](std::vector<Tensor>& l) {
    const Tensor mx = nn::maximum(l[0], l[1]);
    const Tensor mn = nn::minimum(l[0], l[1]);
    const Tensor c = nn::clamp(nn::sub(mx, mn), 0.05, 3.0);
    return nn::sum(nn::mul(c, c));
  };
  CHECK(test_util::finite_difference_error(fn, leaves) < 1e-5);
}

TEST_CASE("finite differences: multi-head attention block") {
  Rng rng(29);
  nn::ParamStore ps;
  auto mha = nn::MultiheadAttention::make(ps, "attn", 8, 2, rng);
  std::vector<Tensor> leaves = {random_leaf(rng, {5, 8}), random_leaf(rng, {3, 8})};
  auto fn = [&mha](std::vector<Tensor>& l) { return nn::mean(mha(l[0], l[1])); };
  CHECK(test_util::finite_difference_error(fn, leaves) < 1e-5);

  // parameters get gradients too
  std::vector<Tensor> param_leaves;
  for (const auto& [name, t] : ps.entries()) param_leaves.push_back(t);
  const Tensor q = Tensor::randn({4, 8}, rng, 1.0, false);
  auto fn2 = [&mha, &q](std::vector<Tensor>&) { return nn::mean(mha(q, q)); };
  CHECK(test_util::finite_difference_error(fn2, param_leaves) < 1e-5);
}

TEST_CASE("masked softmax zeroes invalid positions and renormalizes") {
  const Tensor x = Tensor::from({1, 4}, {1.0, 2.0, 100.0, 3.0});
  const std::vector<char> mask = {1, 1, 0, 1};
  const auto p = nn::softmax_rows(x, mask).values();
  CHECK(p[2] == 0.0);
  CHECK(p[0] + p[1] + p[3] == doctest::Approx(1.0));
}

TEST_CASE("grad guard disables graph construction") {
  const Tensor a = Tensor::from({2}, {1, 2}, true);
  nn::NoGradGuard guard;
  Tensor s = nn::sum(nn::mul(a, a));
  CHECK_FALSE(s.requires_grad());
}

TEST_CASE("backward accumulates until zero_grad") {
  const Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor s1 = nn::sum(a);
  s1.backward();
  Tensor s2 = nn::sum(a);
  s2.backward();
  CHECK(a.grad()[0] == doctest::Approx(2.0));
  const_cast<Tensor&>(a).zero_grad();
  CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("shape validation errors") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(nn::add(a, b), ValidationError);
  CHECK_THROWS_AS(nn::matmul(a, a), ValidationError);
  CHECK_THROWS_AS(nn::softmax_rows(a, {1, 0}), ValidationError);
  CHECK_THROWS_AS(nn::softmax_rows(a, {0, 0, 0}), ValidationError);
}
