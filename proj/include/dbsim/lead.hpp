#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dbsim/core.hpp"
#include "dbsim/tissue.hpp"

namespace dbsim {

struct ContactGeometry {
  double offset_mm = 0.0;  ///< distance from the tip to the contact's lower edge
  double height_mm = 1.5;
  bool full_ring = true;
  double arc_start_deg = 0.0;  ///< angular span for segmented contacts
  double arc_end_deg = 360.0;
};

/// Cylindrical lead: insulating body from `tip_mm` along `axis`, ring (or
/// segmented) contacts, and a fibrous encapsulation sheath.
struct LeadModel {
  Vec3 tip_mm{};
  Vec3 axis{0, 0, 1};
  double body_diameter_mm = 1.27;
  double shaft_length_mm = 15.0;
  double encapsulation_thickness_mm = 0.5;
  double contact_spacing_mm = 0.5;
  std::vector<ContactGeometry> contacts;

  /// Four 1.5 mm ring contacts with 0.5 mm gaps above a 1 mm tip.
  static LeadModel four_ring(Vec3 tip, Vec3 axis = {0, 0, 1}) {
    LeadModel lead;
    lead.tip_mm = tip;
    lead.axis = normalized(axis);
    for (int k = 0; k < 4; ++k) lead.contacts.push_back({1.0 + 2.0 * k, 1.5});
    return lead;
  }

  double radius_mm() const { return 0.5 * body_diameter_mm; }

  Vec3 contact_center(std::size_t k) const {
    const auto& c = contacts.at(k);
    return tip_mm + axis * (c.offset_mm + 0.5 * c.height_mm);
  }

  void validate() const {
    if (std::abs(norm(axis) - 1.0) > 1e-9) throw GeometryError("lead axis must be a unit vector");
    if (!(body_diameter_mm > 0.0) || !(shaft_length_mm > 0.0))
      throw GeometryError("lead diameter and shaft length must be positive");
    if (!(encapsulation_thickness_mm > 0.0)) throw GeometryError("encapsulation thickness must be positive");
    if (contacts.empty()) throw GeometryError("lead has no contacts");
    if (contacts.size() > labels::max_contacts) throw GeometryError("too many contacts");
    for (std::size_t k = 0; k < contacts.size(); ++k) {
      const auto& c = contacts[k];
      if (!(c.height_mm > 0.0) || c.offset_mm < 0.0 || c.offset_mm + c.height_mm > shaft_length_mm)
        throw GeometryError("contact C" + std::to_string(k + 1) + " does not lie on the shaft");
      if (k > 0) {
        const auto& prev = contacts[k - 1];
        const double gap = c.offset_mm - (prev.offset_mm + prev.height_mm);
        if (gap < -1e-9)
          throw GeometryError("contacts C" + std::to_string(k) + " and C" + std::to_string(k + 1) + " overlap");
        if (std::abs(gap - contact_spacing_mm) > 1e-9)
          throw GeometryError("gap between C" + std::to_string(k) + " and C" + std::to_string(k + 1) +
                              " does not match the contact spacing");
      }
    }
  }
};

namespace detail {

// Axial-aligned bounds of a capped cylinder from a to b with radius r.
inline void cylinder_bounds(const Vec3& a, const Vec3& b, const Vec3& axis, double r, Vec3& lo, Vec3& hi) {
  for (int d = 0; d < 3; ++d) {
    const double e = r * std::sqrt(std::max(0.0, 1.0 - axis[d] * axis[d]));
    const double mn = std::min(a[d], b[d]) - e;
    const double mx = std::max(a[d], b[d]) + e;
    if (d == 0) { lo.x = mn; hi.x = mx; }
    if (d == 1) { lo.y = mn; hi.y = mx; }
    if (d == 2) { lo.z = mn; hi.z = mx; }
  }
}

}  // namespace detail

/// Burns the lead into a copy of `volume`: insulator body, contact-k bands,
/// and an encapsulation shell of the configured thickness around the body.
inline TissueVolume rasterize_lead(TissueVolume volume, const LeadModel& lead) {
  lead.validate();
  const GridGeometry& g = volume.grid;
  for (int a = 0; a < 3; ++a) {
    if (g.spacing_mm[a] > lead.encapsulation_thickness_mm + 1e-12)
      throw ResolutionError("voxel spacing exceeds the encapsulation thickness; the shell would vanish");
  }

  const double R = lead.radius_mm();
  const double L = lead.shaft_length_mm;
  const double t = lead.encapsulation_thickness_mm;
  const Vec3 base = lead.tip_mm - lead.axis * t;
  const Vec3 top = lead.tip_mm + lead.axis * (L + t);
  Vec3 lo, hi;
  detail::cylinder_bounds(base, top, lead.axis, R + t, lo, hi);
  for (int a = 0; a < 3; ++a) {
    if (lo[a] < g.lower_bound(a) || hi[a] > g.upper_bound(a))
      throw GeometryError("lead with its encapsulation does not fit inside the grid");
  }

  const Vec3 ref = any_perpendicular(lead.axis);
  const Vec3 ref2 = cross(lead.axis, ref);
  // Only scan the bounding box.
  Index3 i0{}, i1{};
  for (int a = 0; a < 3; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const double qlo = (lo[a] - g.origin_mm[a]) / g.spacing_mm[a];
    const double qhi = (hi[a] - g.origin_mm[a]) / g.spacing_mm[a];
    i0[ua] = static_cast<std::size_t>(std::max(0.0, std::floor(qlo)));
    i1[ua] = std::min(g.dims[ua] - 1, static_cast<std::size_t>(std::ceil(qhi)));
  }

  std::vector<std::size_t> contact_voxels(lead.contacts.size(), 0);
  for (std::size_t k = i0[2]; k <= i1[2]; ++k) {
    for (std::size_t j = i0[1]; j <= i1[1]; ++j) {
      for (std::size_t i = i0[0]; i <= i1[0]; ++i) {
        const Vec3 d = g.center(i, j, k) - lead.tip_mm;
        const double s = dot(d, lead.axis);
        const Vec3 radial_vec = d - lead.axis * s;
        const double radial = norm(radial_vec);
        const bool in_body = s >= 0.0 && s <= L && radial <= R;
        LabelCode& label = volume.at(i, j, k);
        if (in_body) {
          label = labels::insulator;
          for (std::size_t c = 0; c < lead.contacts.size(); ++c) {
            const auto& cg = lead.contacts[c];
            if (s < cg.offset_mm || s >= cg.offset_mm + cg.height_mm) continue;
            bool hit = cg.full_ring;
            if (!hit && radial > 0.5 * R) {
              double ang = std::atan2(dot(radial_vec, ref2), dot(radial_vec, ref)) * 180.0 / std::numbers::pi;
              if (ang < 0.0) ang += 360.0;
              hit = ang >= cg.arc_start_deg && ang < cg.arc_end_deg;
            }
            if (hit) {
              label = labels::contact(c);
              ++contact_voxels[c];
            }
          }
          continue;
        }
        const double ds = s < 0.0 ? -s : (s > L ? s - L : 0.0);
        const double dr = std::max(radial - R, 0.0);
        if (std::hypot(ds, dr) <= t) label = labels::encapsulation;
      }
    }
  }
  for (std::size_t c = 0; c < contact_voxels.size(); ++c) {
    if (contact_voxels[c] == 0)
      throw ResolutionError("contact C" + std::to_string(c + 1) + " covers no voxel centre at this resolution");
  }
  return volume;
}

}  // namespace dbsim
