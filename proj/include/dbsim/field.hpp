#pragma once

// Post-processing of field solutions: electric-field norm, static VTA, tract
// overlap and extracellular potential series along fibers.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dbsim/fiber.hpp"
#include "dbsim/grid.hpp"
#include "dbsim/solver.hpp"
#include "dbsim/stimulus.hpp"
#include "dbsim/tissue.hpp"

namespace dbsim {

/// |grad u| in V/m for `amplitude_mA` of cathode current. Central
/// differences inside, one-sided at the grid faces.
inline std::vector<double> efield_norm(const FieldSolution& solution, double amplitude_mA = 1.0) {
  const GridGeometry& g = solution.grid;
  const auto [nx, ny, nz] = g.dims;
  const std::array<std::size_t, 3> n{nx, ny, nz};
  const std::array<std::size_t, 3> stride{1, nx, nx * ny};
  const double scale = amplitude_mA / solution.current_mA;
  std::vector<double> out(g.size());
  const auto& u = solution.potential;
  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t idx = g.index(i, j, k);
        const std::array<std::size_t, 3> ijk{i, j, k};
        double sq = 0.0;
        for (int a = 0; a < 3; ++a) {
          const auto ua = static_cast<std::size_t>(a);
          const double h = g.spacing_mm[a] * 1e-3;
          double d = 0.0;
          if (n[ua] < 2) {
            d = 0.0;
          } else if (ijk[ua] == 0) {
            d = (u[idx + stride[ua]] - u[idx]) / h;
          } else if (ijk[ua] + 1 == n[ua]) {
            d = (u[idx] - u[idx - stride[ua]]) / h;
          } else {
            d = (u[idx + stride[ua]] - u[idx - stride[ua]]) / (2.0 * h);
          }
          sq += d * d;
        }
        out[idx] = std::sqrt(sq) * std::abs(scale);
      }
    }
  }
  return out;
}

/// 1 for voxels inside the lead (insulator or contact metal).
inline std::vector<std::uint8_t> lead_interior_mask(const TissueVolume& volume) {
  std::vector<std::uint8_t> mask(volume.labels.size());
  std::transform(volume.labels.begin(), volume.labels.end(), mask.begin(),
                 [](LabelCode c) { return static_cast<std::uint8_t>(labels::is_lead(c) ? 1 : 0); });
  return mask;
}

struct VtaResult {
  std::vector<std::uint8_t> mask;
  std::size_t voxel_count = 0;
  double volume_mm3 = 0.0;
  double threshold_V_per_m = 150.0;
};

/// Voxels where the field norm reaches `threshold`, minus excluded voxels.
inline VtaResult static_vta(std::span<const double> norm, const GridGeometry& grid, double threshold_V_per_m = 150.0,
                            std::span<const std::uint8_t> exclude = {}) {
  if (!(threshold_V_per_m > 0.0)) throw InputError("VTA threshold must be positive");
  if (norm.size() != grid.size()) throw InputError("field norm size does not match the grid");
  VtaResult out;
  out.threshold_V_per_m = threshold_V_per_m;
  out.mask.assign(norm.size(), 0);
  for (std::size_t i = 0; i < norm.size(); ++i) {
    const bool excluded = !exclude.empty() && exclude[i] != 0;
    if (!excluded && norm[i] >= threshold_V_per_m) {
      out.mask[i] = 1;
      ++out.voxel_count;
    }
  }
  out.volume_mm3 = static_cast<double>(out.voxel_count) * grid.voxel_volume_mm3();
  return out;
}

struct OverlapResult {
  std::vector<double> per_fiber;
  double aggregate = 0.0;
  std::vector<std::string> warnings;
};

/// Fraction of each fiber's points that fall in VTA voxels; aggregate is the
/// mean over fibers. Points outside the grid count as non-overlapping.
inline OverlapResult tract_overlap(const VtaResult& vta, const GridGeometry& grid, std::span<const FiberPath> fibers) {
  OverlapResult out;
  for (const auto& fiber : fibers) {
    std::size_t inside = 0, outside = 0;
    for (const auto& p : fiber.points) {
      const auto voxel = grid.voxel_of(p);
      if (!voxel) { ++outside; continue; }
      if (vta.mask[grid.index(*voxel)] != 0) ++inside;
    }
    if (outside > 0)
      out.warnings.push_back("fiber '" + fiber.id + "': " + std::to_string(outside) + " point(s) outside the grid");
    out.per_fiber.push_back(fiber.points.empty() ? 0.0
                                                 : static_cast<double>(inside) / static_cast<double>(fiber.points.size()));
  }
  if (!out.per_fiber.empty()) {
    double sum = 0.0;
    for (double f : out.per_fiber) sum += f;
    out.aggregate = sum / static_cast<double>(out.per_fiber.size());
  }
  return out;
}

/// Trilinear interpolation of the potential per mA at `p` (mm).
inline double interpolate_unit_potential(const FieldSolution& solution, const Vec3& p) {
  const GridGeometry& g = solution.grid;
  const Vec3 q = g.to_index_space(p);
  std::array<std::size_t, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const double upper = static_cast<double>(g.dims[ua] - 1);
    if (!(q[a] >= -1e-9 && q[a] <= upper + 1e-9))
      throw SamplingError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.z) +
                          ") mm lies outside the field grid");
    const double c = std::clamp(q[a], 0.0, upper);
    double fl = std::floor(c);
    if (fl >= upper && upper > 0.0) fl = upper - 1.0;
    base[ua] = static_cast<std::size_t>(fl);
    frac[ua] = c - fl;
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    std::array<std::size_t, 3> ijk{};
    double w = 1.0;
    for (std::size_t a = 0; a < 3; ++a) {
      const bool hi = (corner >> a) & 1;
      if (hi && g.dims[a] == 1) { w = 0.0; break; }
      ijk[a] = base[a] + (hi ? 1 : 0);
      w *= hi ? frac[a] : 1.0 - frac[a];
    }
    if (w != 0.0) acc += w * solution.potential[g.index(ijk[0], ijk[1], ijk[2])];
  }
  return acc / solution.current_mA;
}

/// Extracellular potential (V) on a time x point grid. Row t holds sample
/// t*dt; values are the unit potential scaled by the cathode current.
struct PotentialSeries {
  double dt_ms = 0.005;
  std::size_t n_times = 0;
  std::size_t n_points = 0;
  std::vector<double> volts;

  double at(std::size_t t, std::size_t p) const { return volts[t * n_points + p]; }
  std::span<const double> row(std::size_t t) const { return {volts.data() + t * n_points, n_points}; }
};

inline PotentialSeries sample_potential_series(const FieldSolution& solution, std::span<const Vec3> points,
                                               const StimulusWaveform& waveform, double dt_ms, double duration_ms) {
  if (!(dt_ms > 0.0) || !(duration_ms > 0.0)) throw InputError("sampling step and duration must be positive");
  if (!(waveform.program == solution.program))
    throw ProgramError("waveform program " + waveform.program.describe() + " does not match the solved program " +
                       solution.program.describe());
  PotentialSeries out;
  out.dt_ms = dt_ms;
  out.n_points = points.size();
  out.n_times = static_cast<std::size_t>(std::ceil(duration_ms / dt_ms - 1e-9));
  std::vector<double> unit(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) unit[p] = interpolate_unit_potential(solution, points[p]);
  const auto scale = sample_cathode_current(waveform, dt_ms, out.n_times);
  out.volts.resize(out.n_times * out.n_points);
  for (std::size_t t = 0; t < out.n_times; ++t)
    for (std::size_t p = 0; p < out.n_points; ++p) out.volts[t * out.n_points + p] = unit[p] * scale[t];
  return out;
}

}  // namespace dbsim
