#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>

#include "dbsim/core.hpp"

namespace dbsim {

using Index3 = std::array<std::size_t, 3>;

/// Regular voxel lattice. `origin_mm` is the centre of voxel (0,0,0); voxel
/// (i,j,k) is centred at origin + (i*sx, j*sy, k*sz). Storage order is x fastest.
struct GridGeometry {
  Index3 dims{0, 0, 0};
  Vec3 spacing_mm{1, 1, 1};
  Vec3 origin_mm{0, 0, 0};

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims[0] * (j + dims[1] * k);
  }
  std::size_t index(const Index3& ijk) const { return index(ijk[0], ijk[1], ijk[2]); }

  Index3 unravel(std::size_t idx) const {
    const std::size_t i = idx % dims[0];
    const std::size_t rest = idx / dims[0];
    return {i, rest % dims[1], rest / dims[1]};
  }

  Vec3 center(std::size_t i, std::size_t j, std::size_t k) const {
    return {origin_mm.x + static_cast<double>(i) * spacing_mm.x,
            origin_mm.y + static_cast<double>(j) * spacing_mm.y,
            origin_mm.z + static_cast<double>(k) * spacing_mm.z};
  }
  Vec3 center(std::size_t idx) const {
    const auto ijk = unravel(idx);
    return center(ijk[0], ijk[1], ijk[2]);
  }

  double voxel_volume_mm3() const { return spacing_mm.x * spacing_mm.y * spacing_mm.z; }

  /// Continuous index coordinates of a point (voxel centres are integers).
  Vec3 to_index_space(const Vec3& p) const {
    return {(p.x - origin_mm.x) / spacing_mm.x, (p.y - origin_mm.y) / spacing_mm.y,
            (p.z - origin_mm.z) / spacing_mm.z};
  }

  /// Physical box covered by the voxels (outer faces), per axis.
  double lower_bound(int axis) const { return origin_mm[axis] - 0.5 * spacing_mm[axis]; }
  double upper_bound(int axis) const {
    return origin_mm[axis] + (static_cast<double>(dims[static_cast<std::size_t>(axis)]) - 0.5) *
                                 spacing_mm[axis];
  }

  /// Voxel whose cell contains `p`, if any.
  std::optional<Index3> voxel_of(const Vec3& p) const {
    const Vec3 q = to_index_space(p);
    Index3 out{};
    for (int a = 0; a < 3; ++a) {
      const double r = std::floor(q[a] + 0.5);
      if (r < 0.0 || r >= static_cast<double>(dims[static_cast<std::size_t>(a)])) return std::nullopt;
      out[static_cast<std::size_t>(a)] = static_cast<std::size_t>(r);
    }
    return out;
  }

  bool operator==(const GridGeometry&) const = default;
};

/// Cube of `n`^3 voxels with the given spacing, centred on `center_mm` such that
/// voxel (n/2, n/2, n/2) sits exactly on the centre.
inline GridGeometry centered_cube(std::size_t n, double spacing_mm, Vec3 center_mm = {}) {
  const double half = static_cast<double>(n / 2) * spacing_mm;
  return GridGeometry{{n, n, n},
                      {spacing_mm, spacing_mm, spacing_mm},
                      {center_mm.x - half, center_mm.y - half, center_mm.z - half}};
}

}  // namespace dbsim
