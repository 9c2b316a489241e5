#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ig/geometry.hpp"
#include "ig/nn/tensor.hpp"
#include "ig/rng.hpp"

namespace test_util {

/// Central finite-difference gradient check. `loss_fn` must rebuild the
/// whole graph from the given leaves on every call. Returns the worst
/// relative error across all leaf elements (absolute error where the
/// reference is tiny).
inline double finite_difference_error(
    const std::function<ig::nn::Tensor(std::vector<ig::nn::Tensor>&)>& loss_fn,
    std::vector<ig::nn::Tensor>& leaves, double step = 1e-5) {
  for (auto& leaf : leaves) leaf.zero_grad();
  ig::nn::Tensor loss = loss_fn(leaves);
  loss.backward();

  double worst = 0.0;
  for (auto& leaf : leaves) {
    const std::vector<double> analytic = leaf.grad();
    auto& vals = leaf.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + step;
      const double up = loss_fn(leaves).value();
      vals[i] = keep - step;
      const double down = loss_fn(leaves).value();
      vals[i] = keep;
      const double numeric = (up - down) / (2 * step);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

inline ig::geom::Box3D random_box(ig::Rng& rng, double center_span = 2.0, double size_min = 0.2,
                                  double size_max = 1.5) {
  ig::geom::Box3D b;
  for (int a = 0; a < 3; ++a) {
    b.center[a] = rng.uniform(-center_span, center_span);
    b.size[a] = rng.uniform(size_min, size_max);
  }
  return b;
}

/// Monte-Carlo IoU oracle: samples uniformly over the union's bounding box.
inline double monte_carlo_iou(const ig::geom::Box3D& a, const ig::geom::Box3D& b,
                              std::size_t samples, std::uint64_t seed) {
  const auto alo = a.min_corner(), ahi = a.max_corner();
  const auto blo = b.min_corner(), bhi = b.max_corner();
  ig::geom::Vec3 lo, hi;
  for (int i = 0; i < 3; ++i) {
    lo[i] = std::min(alo[i], blo[i]);
    hi[i] = std::max(ahi[i], bhi[i]);
  }
  const double bound_vol = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
  ig::Rng rng(seed);
  std::size_t in_a = 0, in_b = 0, in_both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    ig::geom::Vec3 p{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(lo[2], hi[2])};
    const bool ia = a.contains(p);
    const bool ib = b.contains(p);
    in_a += ia;
    in_b += ib;
    in_both += ia && ib;
  }
  const std::size_t in_union = in_a + in_b - in_both;
  if (in_union == 0) return 0.0;
  (void)bound_vol;
  return static_cast<double>(in_both) / static_cast<double>(in_union);
}

}  // namespace test_util
