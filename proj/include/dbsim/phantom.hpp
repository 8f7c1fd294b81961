#pragma once

// Synthetic volumes, a standard lead placement and synthetic fiber tracts
// for desk-scale experiments without imaging data.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dbsim/fiber.hpp"
#include "dbsim/grid.hpp"
#include "dbsim/lead.hpp"
#include "dbsim/tissue.hpp"

namespace dbsim {

/// Four-ring lead along +z whose third contact (C3) is centred on `center`.
inline LeadModel standard_lead(Vec3 center = {}) {
  LeadModel lead = LeadModel::four_ring({center.x, center.y, center.z - 5.75});
  return lead;
}

inline TissueVolume uniform_phantom(const GridGeometry& grid, LabelCode fill = labels::background,
                                    SigmaTable table = default_sigma_table()) {
  return TissueVolume(grid, fill, std::move(table));
}

/// Layout of the heterogeneous phantom, in mm relative to the lead axis.
struct HeterogeneousLayout {
  LabelCode bulk = labels::white;
  double csf_x_min = 4.0;
  double csf_x_max = 6.0;
  double csf_half_extent = 6.0;  ///< slab half size along y and z
  double gray_x_max = -5.0;      ///< gray matter fills x < gray_x_max
};

/// White-matter bulk with a gray-matter half space on one side of the lead
/// and a CSF slab a few millimetres away on the other.
inline TissueVolume heterogeneous_phantom(const GridGeometry& grid, Vec3 lead_center = {},
                                          const HeterogeneousLayout& layout = {},
                                          SigmaTable table = default_sigma_table()) {
  TissueVolume vol(grid, layout.bulk, std::move(table));
  const auto [nx, ny, nz] = grid.dims;
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const Vec3 p = grid.center(i, j, k) - lead_center;
        if (p.x >= layout.csf_x_min && p.x <= layout.csf_x_max && std::abs(p.y) <= layout.csf_half_extent &&
            std::abs(p.z) <= layout.csf_half_extent)
          vol.at(i, j, k) = labels::csf;
        else if (p.x < layout.gray_x_max)
          vol.at(i, j, k) = labels::gray;
      }
  return vol;
}

/// Straight fiber crossing the lead at right angles. It passes
/// `surface_distance_mm` from the surface of contact `contact`, running along
/// `direction` (perpendicular to the lead axis); the point of closest
/// approach sits at `closest_fraction` of the fiber length from its entry end.
inline FiberPath straight_fiber(const LeadModel& lead, std::size_t contact, double surface_distance_mm,
                                double length_mm = 8.0, Vec3 direction = {0, 1, 0}, double closest_fraction = 0.5,
                                std::string id = "straight") {
  const Vec3 d = normalized(direction - lead.axis * dot(direction, lead.axis));
  const Vec3 out = normalized(cross(d, lead.axis));
  const Vec3 closest = lead.contact_center(contact) + out * (lead.radius_mm() + surface_distance_mm);
  FiberPath f;
  f.id = std::move(id);
  f.points = {closest - d * (closest_fraction * length_mm), closest + d * ((1.0 - closest_fraction) * length_mm)};
  return f;
}

/// Straight fiber running parallel to the lead axis at `surface_distance_mm`
/// from the lead surface, centred on contact `contact`.
inline FiberPath parallel_fiber(const LeadModel& lead, std::size_t contact, double surface_distance_mm,
                                double length_mm = 8.0, Vec3 side = {1, 0, 0}, std::string id = "parallel") {
  const Vec3 out = normalized(side - lead.axis * dot(side, lead.axis));
  const Vec3 mid = lead.contact_center(contact) + out * (lead.radius_mm() + surface_distance_mm);
  FiberPath f;
  f.id = std::move(id);
  f.points = {mid - lead.axis * (0.5 * length_mm), mid + lead.axis * (0.5 * length_mm)};
  return f;
}

/// Circular arc of `length_mm` in the plane spanned by `u` and `v` around
/// `center`, sampled with `n` points, starting at angle `start_rad`.
inline FiberPath arc_fiber(Vec3 center, Vec3 u, Vec3 v, double radius_mm, double length_mm, double start_rad,
                           std::size_t n = 81, std::string id = "arc") {
  if (n < 2 || !(radius_mm > 0.0)) throw GeometryError("arc fiber needs a positive radius and two points");
  const Vec3 eu = normalized(u);
  const Vec3 ev = normalized(v - eu * dot(v, eu));
  const double sweep = length_mm / radius_mm;
  FiberPath f;
  f.id = std::move(id);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = start_rad + sweep * static_cast<double>(i) / static_cast<double>(n - 1);
    f.points.push_back(center + eu * (radius_mm * std::cos(a)) + ev * (radius_mm * std::sin(a)));
  }
  return f;
}

/// Copy of `fiber` moved by `offset`.
inline FiberPath translated(FiberPath fiber, Vec3 offset) {
  for (auto& p : fiber.points) p = p + offset;
  return fiber;
}

}  // namespace dbsim
