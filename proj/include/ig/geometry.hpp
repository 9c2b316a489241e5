#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ig::geom {

using Vec3 = std::array<double, 3>;

/// Axis-aligned 3D bounding box, center/size parameterization in meters.
/// Sizes must be strictly positive.
struct Box3D {
  Vec3 center{0, 0, 0};
  Vec3 size{1, 1, 1};

  Box3D() = default;
  Box3D(const Vec3& c, const Vec3& s);
  Box3D(double cx, double cy, double cz, double w, double l, double h);

  Vec3 min_corner() const;
  Vec3 max_corner() const;
  double volume() const;
  bool contains(const Vec3& p) const;  // closed box
  bool valid() const;

  bool operator==(const Box3D& other) const = default;
};

/// Throws ValidationError if any size component is not strictly positive.
void validate_box(const Box3D& b);

/// Intersection volume / union volume, in [0, 1]. Touching faces count as
/// zero overlap. Throws ValidationError on degenerate boxes.
double iou3d(const Box3D& a, const Box3D& b);

double intersection_volume(const Box3D& a, const Box3D& b);

enum class SampleMode { Surface, Interior };

/// Draws n points on the surface or in the closed interior of the box.
/// Deterministic for a fixed seed. Throws ValidationError for n == 0.
std::vector<Vec3> sample_box_points(const Box3D& box, std::size_t n, SampleMode mode,
                                    std::uint64_t rng_seed);

}  // namespace ig::geom
