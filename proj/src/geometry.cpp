#include "ig/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "ig/errors.hpp"
#include "ig/rng.hpp"

namespace ig::geom {

Box3D::Box3D(const Vec3& c, const Vec3& s) : center(c), size(s) {}

Box3D::Box3D(double cx, double cy, double cz, double w, double l, double h)
    : center{cx, cy, cz}, size{w, l, h} {}

Vec3 Box3D::min_corner() const {
  return {center[0] - size[0] / 2, center[1] - size[1] / 2, center[2] - size[2] / 2};
}

Vec3 Box3D::max_corner() const {
  return {center[0] + size[0] / 2, center[1] + size[1] / 2, center[2] + size[2] / 2};
}

double Box3D::volume() const { return size[0] * size[1] * size[2]; }

bool Box3D::contains(const Vec3& p) const {
  const Vec3 lo = min_corner();
  const Vec3 hi = max_corner();
  for (int i = 0; i < 3; ++i) {
    if (p[i] < lo[i] || p[i] > hi[i]) return false;
  }
  return true;
}

bool Box3D::valid() const { return size[0] > 0 && size[1] > 0 && size[2] > 0; }

void validate_box(const Box3D& b) {
  if (!b.valid()) {
    throw ValidationError("Box3D: size components must be strictly positive, got (" +
                          std::to_string(b.size[0]) + ", " + std::to_string(b.size[1]) + ", " +
                          std::to_string(b.size[2]) + ")");
  }
}

double intersection_volume(const Box3D& a, const Box3D& b) {
  const Vec3 alo = a.min_corner(), ahi = a.max_corner();
  const Vec3 blo = b.min_corner(), bhi = b.max_corner();
  double vol = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double edge = std::min(ahi[i], bhi[i]) - std::max(alo[i], blo[i]);
    if (edge <= 0.0) return 0.0;  // touching faces are not overlap
    vol *= edge;
  }
  return vol;
}

double iou3d(const Box3D& a, const Box3D& b) {
  validate_box(a);
  validate_box(b);
  const double inter = intersection_volume(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return inter / uni;
}

std::vector<Vec3> sample_box_points(const Box3D& box, std::size_t n, SampleMode mode,
                                    std::uint64_t rng_seed) {
  validate_box(box);
  if (n == 0) throw ValidationError("sample_box_points: n must be >= 1");

  Rng rng(rng_seed);
  const Vec3 lo = box.min_corner();
  std::vector<Vec3> pts;
  pts.reserve(n);

  if (mode == SampleMode::Interior) {
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back({lo[0] + rng.uniform() * box.size[0], lo[1] + rng.uniform() * box.size[1],
                     lo[2] + rng.uniform() * box.size[2]});
    }
    return pts;
  }

  // Surface: pick a face with probability proportional to its area, then a
  // uniform point on that face.
  const double ax = box.size[1] * box.size[2];  // faces at x = +/- w/2
  const double ay = box.size[0] * box.size[2];
  const double az = box.size[0] * box.size[1];
  const double total = 2 * (ax + ay + az);
  for (std::size_t i = 0; i < n; ++i) {
    double pick = rng.uniform() * total;
    int axis;
    if (pick < 2 * ax) {
      axis = 0;
    } else if (pick < 2 * ax + 2 * ay) {
      axis = 1;
      pick -= 2 * ax;
    } else {
      axis = 2;
      pick -= 2 * ax + 2 * ay;
    }
    const bool positive_side = rng.uniform() < 0.5;
    Vec3 p;
    p[axis] = box.center[axis] + (positive_side ? 0.5 : -0.5) * box.size[axis];
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    p[u] = lo[u] + rng.uniform() * box.size[u];
    p[v] = lo[v] + rng.uniform() * box.size[v];
    pts.push_back(p);
  }
  return pts;
}

}  // namespace ig::geom
