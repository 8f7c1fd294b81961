#pragma once

// Finite-volume solver for div(sigma grad u) = -f on a voxel grid.
//
// Seven-point stencil, harmonic averaging of face conductivities, current
// sources injected per voxel. The outer faces either hold 0 V (distant
// ground) or carry a far-field Robin condition du/dn = -u (r.n)/r, which is
// exact for a monopole centred at the reference point and stands in for the
// large surrounding tissue box.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "dbsim/core.hpp"
#include "dbsim/grid.hpp"
#include "dbsim/stimulus.hpp"
#include "dbsim/tissue.hpp"

namespace dbsim {

enum class OuterBoundary { dirichlet, far_field };

struct SolverOptions {
  double tolerance = 1e-8;         ///< residual current sum|b - Au| over injected current
  std::size_t max_iterations = 0;  ///< 0 selects 10 * N^(1/3) * 100
  OuterBoundary boundary = OuterBoundary::far_field;
  std::optional<Vec3> far_field_center;  ///< defaults to the source centroid
};

struct CurrentSource {
  std::size_t voxel;
  double current_mA;  ///< positive = injected into the tissue
};

/// Assembled symmetric positive-definite operator, applied matrix-free.
class ConductorStencil {
 public:
  ConductorStencil(const GridGeometry& grid, std::span<const double> sigma, OuterBoundary boundary,
                   const Vec3& far_field_center)
      : grid_(grid), cx_(grid.size(), 0.0), cy_(grid.size(), 0.0), cz_(grid.size(), 0.0), diag_(grid.size(), 0.0),
        outer_(grid.size(), 0.0) {
    if (sigma.size() != grid.size()) throw InputError("conductivity size does not match the grid");
    const auto [nx, ny, nz] = grid.dims;
    const Vec3 h = grid.spacing_mm * 1e-3;  // metres
    // Face coefficient = sigma_face * area / distance.
    const double gx = h.y * h.z / h.x;
    const double gy = h.x * h.z / h.y;
    const double gz = h.x * h.y / h.z;
    const auto harmonic = [](double a, double b) { return 2.0 * a * b / (a + b); };

    for (std::size_t k = 0; k < nz; ++k) {
      for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
          const std::size_t idx = grid.index(i, j, k);
          const double s = sigma[idx];
          if (i + 1 < nx) cx_[idx] = harmonic(s, sigma[idx + 1]) * gx;
          if (j + 1 < ny) cy_[idx] = harmonic(s, sigma[idx + nx]) * gy;
          if (k + 1 < nz) cz_[idx] = harmonic(s, sigma[idx + nx * ny]) * gz;
        }
      }
    }
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
      const auto [i, j, k] = grid.unravel(idx);
      double d = cx_[idx] + cy_[idx] + cz_[idx];
      if (i > 0) d += cx_[idx - 1];
      if (j > 0) d += cy_[idx - nx];
      if (k > 0) d += cz_[idx - nx * ny];
      diag_[idx] = d;
    }
    add_outer_faces(sigma, boundary, far_field_center);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) diag_[idx] += outer_[idx];
  }

  const GridGeometry& grid() const { return grid_; }
  std::span<const double> diagonal() const { return diag_; }

  /// y = A x
  void apply(std::span<const double> x, std::span<double> y) const {
    const auto [nx, ny, nz] = grid_.dims;
    const std::size_t plane = nx * ny;
    for (std::size_t k = 0; k < nz; ++k) {
      for (std::size_t j = 0; j < ny; ++j) {
        const std::size_t row = grid_.index(0, j, k);
        const bool has_down_y = j > 0, has_up_y = j + 1 < ny;
        const bool has_down_z = k > 0, has_up_z = k + 1 < nz;
        for (std::size_t i = 0; i < nx; ++i) {
          const std::size_t idx = row + i;
          // Difference form keeps round-off small inside near-equipotential metal.
          const double xi = x[idx];
          double acc = outer_[idx] * xi;
          if (i > 0) acc += cx_[idx - 1] * (xi - x[idx - 1]);
          if (i + 1 < nx) acc += cx_[idx] * (xi - x[idx + 1]);
          if (has_down_y) acc += cy_[idx - nx] * (xi - x[idx - nx]);
          if (has_up_y) acc += cy_[idx] * (xi - x[idx + nx]);
          if (has_down_z) acc += cz_[idx - plane] * (xi - x[idx - plane]);
          if (has_up_z) acc += cz_[idx] * (xi - x[idx + plane]);
          y[idx] = acc;
        }
      }
    }
  }

  /// Current (A) leaving voxel `from` into its +axis neighbour for potential u.
  double face_current(std::span<const double> u, std::size_t from, int axis) const {
    const auto [nx, ny, nz] = grid_.dims;
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? nx : nx * ny);
    const auto& c = axis == 0 ? cx_ : (axis == 1 ? cy_ : cz_);
    (void)nz;
    return c[from] * (u[from] - u[from + stride]);
  }

 private:
  void add_outer_faces(std::span<const double> sigma, OuterBoundary boundary, const Vec3& center) {
    const auto [nx, ny, nz] = grid_.dims;
    const Vec3 h = grid_.spacing_mm * 1e-3;
    const auto add_face = [&](std::size_t idx, int axis, double sign) {
      const double hn = h[axis];
      const double area = axis == 0 ? h.y * h.z : (axis == 1 ? h.x * h.z : h.x * h.y);
      const double s = sigma[idx];
      if (boundary == OuterBoundary::dirichlet) {
        outer_[idx] += s * area / (0.5 * hn);
        return;
      }
      Vec3 face = grid_.center(idx);
      Vec3 normal{};
      if (axis == 0) { face.x += sign * 0.5 * grid_.spacing_mm.x; normal = {sign, 0, 0}; }
      if (axis == 1) { face.y += sign * 0.5 * grid_.spacing_mm.y; normal = {0, sign, 0}; }
      if (axis == 2) { face.z += sign * 0.5 * grid_.spacing_mm.z; normal = {0, 0, sign}; }
      const Vec3 rel = (face - center) * 1e-3;
      const double r = norm(rel);
      const double c = r > 0.0 ? std::max(0.0, dot(rel, normal) / (r * r)) : 0.0;  // (r_hat . n) / r
      outer_[idx] += s * area * c / (1.0 + 0.5 * hn * c);
    };
    for (std::size_t k = 0; k < nz; ++k) {
      for (std::size_t j = 0; j < ny; ++j) {
        add_face(grid_.index(0, j, k), 0, -1.0);
        add_face(grid_.index(nx - 1, j, k), 0, 1.0);
      }
    }
    for (std::size_t k = 0; k < nz; ++k) {
      for (std::size_t i = 0; i < nx; ++i) {
        add_face(grid_.index(i, 0, k), 1, -1.0);
        add_face(grid_.index(i, ny - 1, k), 1, 1.0);
      }
    }
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        add_face(grid_.index(i, j, 0), 2, -1.0);
        add_face(grid_.index(i, j, nz - 1), 2, 1.0);
      }
    }
  }

  GridGeometry grid_;
  std::vector<double> cx_, cy_, cz_, diag_, outer_;  // outer_: boundary-face terms
};

struct CgResult {
  double relative_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Preconditioned conjugate gradients. `op(x, y)` computes y = A x and
/// `precond(r, z)` computes z = M^-1 r. `x` holds the initial guess.
///
/// The residual is measured as sum|b - Ax| over the injected current
/// sum(max(b, 0)), so the net current leaking through any closed voxel
/// surface is bounded by tolerance times the injected current.
template <class Operator, class Preconditioner>
CgResult pcg(const Operator& op, const Preconditioner& precond, std::span<const double> b, std::span<double> x,
             double tolerance, std::size_t max_iterations) {
  const std::size_t n = b.size();
  const auto dotp = [](std::span<const double> a, std::span<const double> c) {
    return std::inner_product(a.begin(), a.end(), c.begin(), 0.0);
  };
  double injected = 0.0, total = 0.0;
  for (double v : b) {
    injected += std::max(v, 0.0);
    total += std::abs(v);
  }
  const double scale = injected > 0.0 ? injected : total;
  CgResult out;
  if (scale == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    out.converged = true;
    return out;
  }
  std::vector<double> r(n), z(n), p(n), q(n);
  const auto true_residual = [&] {
    op(std::span<const double>(x), std::span<double>(q));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = b[i] - q[i];
      sum += std::abs(r[i]);
    }
    return sum / scale;
  };
  // Restart from the true residual whenever the recursive one claims
  // convergence; with large conductivity contrasts the two drift apart.
  for (int restart = 0; restart < 20; ++restart) {
    double res = true_residual();
    out.relative_residual = res;
    if (res <= tolerance || out.iterations >= max_iterations) break;
    precond(std::span<const double>(r), std::span<double>(z));
    p = z;
    double rz = dotp(r, z);
    while (res > tolerance && out.iterations < max_iterations) {
      op(std::span<const double>(p), std::span<double>(q));
      const double alpha = rz / dotp(p, q);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
        sum += std::abs(r[i]);
      }
      res = sum / scale;
      ++out.iterations;
      precond(std::span<const double>(r), std::span<double>(z));
      const double rz_next = dotp(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
  }
  out.relative_residual = true_residual();
  out.converged = out.relative_residual <= tolerance;
  return out;
}

inline std::size_t default_iteration_cap(const GridGeometry& g) {
  return static_cast<std::size_t>(10.0 * std::cbrt(static_cast<double>(g.size())) * 100.0);
}

struct PotentialSolve {
  std::vector<double> potential;  ///< volts
  double residual = 0.0;
  std::size_t iterations = 0;
};

/// Solves for the potential produced by point-wise current sources.
inline PotentialSolve solve_potential(const GridGeometry& grid, std::span<const double> sigma,
                                      std::span<const CurrentSource> sources, const SolverOptions& opts) {
  std::vector<double> b(grid.size(), 0.0);
  Vec3 centroid{};
  double weight = 0.0;
  for (const auto& s : sources) {
    if (s.voxel >= grid.size()) throw InputError("current source outside the grid");
    b[s.voxel] += s.current_mA * 1e-3;
    centroid = centroid + grid.center(s.voxel) * std::abs(s.current_mA);
    weight += std::abs(s.current_mA);
  }
  const Vec3 center = opts.far_field_center.value_or(weight > 0.0 ? centroid / weight : grid.center(grid.size() / 2));
  const ConductorStencil stencil(grid, sigma, opts.boundary, center);
  const auto diag = stencil.diagonal();
  std::vector<double> inv_diag(diag.size());
  std::transform(diag.begin(), diag.end(), inv_diag.begin(), [](double d) { return 1.0 / d; });

  PotentialSolve out;
  out.potential.assign(grid.size(), 0.0);
  const std::size_t cap = opts.max_iterations > 0 ? opts.max_iterations : default_iteration_cap(grid);
  const auto result = pcg(
      [&](std::span<const double> x, std::span<double> y) { stencil.apply(x, y); },
      [&](std::span<const double> r, std::span<double> z) {
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] * inv_diag[i];
      },
      b, out.potential, opts.tolerance, cap);
  out.residual = result.relative_residual;
  out.iterations = result.iterations;
  if (!result.converged) {
    std::ostringstream msg;
    msg << "potential solve did not converge: relative residual " << std::scientific << result.relative_residual
        << " after " << result.iterations << " iterations";
    throw SolverError(msg.str(),
                      result.relative_residual, result.iterations);
  }
  for (double v : out.potential) {
    if (!std::isfinite(v)) throw SolverError("potential solve produced non-finite values", out.residual, out.iterations);
  }
  return out;
}

/// Potential for one contact program. Immutable once built; safe to share.
struct FieldSolution {
  GridGeometry grid;
  std::vector<double> potential;  ///< volts for `current_mA` through the cathodes
  double residual = 0.0;
  std::size_t iterations = 0;
  ContactProgram program;
  double current_mA = 1.0;

  /// Potential per mA of cathode current.
  double unit_potential(std::size_t idx) const { return potential[idx] / current_mA; }
};

/// Current sources realising a contact program: each cathode contact injects
/// an equal share of `current_mA` spread uniformly over its voxels; anodes
/// withdraw the same total.
inline std::vector<CurrentSource> program_sources(const TissueVolume& volume, const ContactProgram& program,
                                                  double current_mA) {
  program.validate();
  std::vector<std::vector<std::size_t>> voxels(labels::max_contacts);
  for (std::size_t idx = 0; idx < volume.labels.size(); ++idx) {
    const LabelCode c = volume.labels[idx];
    if (labels::is_contact(c)) voxels[labels::contact_index(c)].push_back(idx);
  }
  std::vector<CurrentSource> sources;
  for (const auto& [k, role] : program.roles) {
    if (role == ContactRole::floating) continue;
    if (k >= labels::max_contacts || voxels[k].empty())
      throw ProgramError("contact C" + std::to_string(k + 1) + " is not present in the volume");
    // unit_current is the contact current (negative for cathodes); injection is its negation.
    const double per_voxel = -program.unit_current(k) * current_mA / static_cast<double>(voxels[k].size());
    for (std::size_t idx : voxels[k]) sources.push_back({idx, per_voxel});
  }
  return sources;
}

inline FieldSolution solve_field(const TissueVolume& volume, const ContactProgram& program, const SolverOptions& opts,
                                 double current_mA) {
  volume.validate();
  const auto sources = program_sources(volume, program, current_mA);
  const auto sigma = volume.conductivity();
  auto solve = solve_potential(volume.grid, sigma, sources, opts);
  FieldSolution out;
  out.grid = volume.grid;
  out.potential = std::move(solve.potential);
  out.residual = solve.residual;
  out.iterations = solve.iterations;
  out.program = program;
  out.current_mA = current_mA;
  return out;
}

/// Field for 1 mA of cathodic current through `program`.
inline FieldSolution solve_unit_field(const TissueVolume& volume, const ContactProgram& program,
                                      const SolverOptions& opts = {}) {
  return solve_field(volume, program, opts, 1.0);
}

}  // namespace dbsim
