#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "dbsim/field.hpp"
#include "dbsim/phantom.hpp"
#include "dbsim/solver.hpp"
#include "support.hpp"

using namespace dbsim;
using Catch::Approx;

namespace {

constexpr double kSigma = 0.1;

struct PointSolve {
  GridGeometry grid;
  std::vector<double> potential;
};

PointSolve homogeneous_point_solve(std::size_t n, double spacing, double ball_radius) {
  PointSolve out;
  out.grid = centered_cube(n, spacing);
  const std::vector<double> sigma(out.grid.size(), kSigma);
  const auto sources = testing::ball_sources(out.grid, {}, ball_radius, 1.0);
  out.potential = solve_potential(out.grid, sigma, sources, {}).potential;
  return out;
}

FieldSolution as_field(const PointSolve& s) {
  FieldSolution f;
  f.grid = s.grid;
  f.potential = s.potential;
  f.program = parse_program("C1-");
  return f;
}

const TissueVolume& lead_volume() {
  static const TissueVolume v = rasterize_lead(uniform_phantom(centered_cube(48, 0.5)), standard_lead());
  return v;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("point source matches the analytic potential and field") {
  const PointSolve s = homogeneous_point_solve(60, 0.5, 0.75);
  const FieldSolution f = as_field(s);
  const auto norm = efield_norm(f);
  for (double r : {2.0, 3.0, 4.0, 6.0, 8.0, 10.0}) {
    for (const Vec3 dir : {Vec3{1, 0, 0}, Vec3{0, -1, 0}, Vec3{0, 0, 1}}) {
      const double u = interpolate_unit_potential(f, dir * r);
      const double expected = testing::point_source_potential(1.0, kSigma, r);
      CHECK(std::abs(u / expected - 1.0) < 0.03);
    }
  }
  for (double r : {5.0, 6.0, 7.0, 8.0}) {
    const auto idx = s.grid.index(*s.grid.voxel_of({r, 0, 0}));
    const double expected = 1e-3 / (4.0 * std::numbers::pi * kSigma * std::pow(r * 1e-3, 2));
    UNSCOPED_INFO("r = " << r << " ratio " << norm[idx] / expected);
    CHECK(std::abs(norm[idx] / expected - 1.0) < 0.03);
  }
}

TEST_CASE("halving the spacing changes mid-range potentials by less than 2%") {
  const PointSolve coarse = homogeneous_point_solve(30, 1.0, 1.0);
  const PointSolve fine = homogeneous_point_solve(60, 0.5, 1.0);
  for (double r : {4.0, 6.0, 8.0}) {
    const Vec3 p{r, 0.0, 0.0};
    const double a = interpolate_unit_potential(as_field(coarse), p);
    const double b = interpolate_unit_potential(as_field(fine), p);
    CHECK(std::abs(a / b - 1.0) < 0.02);
  }
}

TEST_CASE("discrete current conservation") {
  const auto grid = centered_cube(30, 0.5);
  const std::vector<double> sigma(grid.size(), kSigma);
  const std::size_t src = grid.index(15, 15, 15);
  const std::vector<CurrentSource> sources{{src, 1.0}};
  const SolverOptions opts;
  const auto solve = solve_potential(grid, sigma, sources, opts);
  const ConductorStencil stencil(grid, sigma, opts.boundary, grid.center(src));

  // Net current (A) leaving the box [lo, hi] of voxel indices.
  const auto outflow = [&](Index3 lo, Index3 hi) {
    double total = 0.0;
    for (std::size_t k = lo[2]; k <= hi[2]; ++k)
      for (std::size_t j = lo[1]; j <= hi[1]; ++j)
        for (std::size_t i = lo[0]; i <= hi[0]; ++i) {
          const std::size_t idx = grid.index(i, j, k);
          if (i == hi[0]) total += stencil.face_current(solve.potential, idx, 0);
          if (j == hi[1]) total += stencil.face_current(solve.potential, idx, 1);
          if (k == hi[2]) total += stencil.face_current(solve.potential, idx, 2);
          if (i == lo[0]) total -= stencil.face_current(solve.potential, idx - 1, 0);
          if (j == lo[1]) total -= stencil.face_current(solve.potential, idx - grid.dims[0], 1);
          if (k == lo[2]) total -= stencil.face_current(solve.potential, idx - grid.dims[0] * grid.dims[1], 2);
        }
    return total;
  };
  const double injected = 1e-3;
  CHECK(std::abs(outflow({3, 4, 5}, {10, 12, 9})) <= opts.tolerance * injected);
  CHECK(std::abs(outflow({18, 2, 2}, {27, 27, 27})) <= opts.tolerance * injected);
  CHECK(outflow({10, 10, 10}, {20, 20, 20}) == Approx(injected).epsilon(opts.tolerance));
}

TEST_CASE("solutions with the lead in place") {
  const TissueVolume& vol = lead_volume();
  const auto bipolar = parse_program("C3-,C4+");
  const FieldSolution unit = solve_unit_field(vol, bipolar);
  CHECK(unit.residual <= 1e-8);
  for (double v : unit.potential) REQUIRE(std::isfinite(v));

  SECTION("scaling the current scales the potential") {
    const FieldSolution three = solve_field(vol, bipolar, {}, 3.0);
    const double scale = max_abs(three.potential);
    double worst = 0.0;
    for (std::size_t i = 0; i < unit.potential.size(); ++i)
      worst = std::max(worst, std::abs(three.potential[i] - 3.0 * unit.potential[i]));
    CHECK(worst / scale < 1e-6);
    CHECK(three.unit_potential(1234) == Approx(unit.unit_potential(1234)).epsilon(1e-6));
  }

  SECTION("reversing the polarity negates the potential exactly") {
    const FieldSolution rev = solve_unit_field(vol, bipolar.reversed());
    for (std::size_t i = 0; i < unit.potential.size(); ++i) REQUIRE(rev.potential[i] == -unit.potential[i]);
  }

  SECTION("bipolar solve equals the difference of two unipolar solves") {
    SolverOptions opts;
    opts.far_field_center = Vec3{0, 0, 1};
    const FieldSolution bip = solve_unit_field(vol, bipolar, opts);
    const FieldSolution c3 = solve_unit_field(vol, parse_program("C3-"), opts);
    const FieldSolution c4 = solve_unit_field(vol, parse_program("C4-"), opts);
    const double scale = max_abs(bip.potential);
    double worst = 0.0;
    for (std::size_t i = 0; i < bip.potential.size(); ++i)
      worst = std::max(worst, std::abs(bip.potential[i] - (c3.potential[i] - c4.potential[i])));
    CHECK(worst / scale <= 2.0 * opts.tolerance);
  }

  SECTION("bipolar far field decays faster than unipolar") {
    const FieldSolution uni = solve_unit_field(vol, parse_program("C3-"));
    const auto& g = vol.grid;
    double sum_bip = 0.0, sum_uni = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = norm(g.center(i));
      if (std::abs(r - 10.0) > 0.25) continue;
      sum_bip += unit.potential[i];
      sum_uni += uni.potential[i];
      ++count;
    }
    REQUIRE(count > 100);
    CHECK(std::abs(sum_bip) < 0.05 * std::abs(sum_uni));
  }

  SECTION("floating contacts sit at a single potential") {
    for (std::size_t c : {0u, 1u}) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t i = 0; i < vol.labels.size(); ++i) {
        if (vol.labels[i] != labels::contact(c)) continue;
        lo = std::min(lo, unit.potential[i]);
        hi = std::max(hi, unit.potential[i]);
      }
      CHECK(hi - lo < 1e-4 * max_abs(unit.potential));
    }
  }
}

TEST_CASE("solver errors") {
  const TissueVolume& vol = lead_volume();
  SECTION("iteration cap reached") {
    SolverOptions opts;
    opts.max_iterations = 5;
    try {
      (void)solve_unit_field(vol, parse_program("C3-"), opts);
      FAIL("expected a solver error");
    } catch (const SolverError& e) {
      CHECK(e.residual() > 1e-8);
      CHECK(e.iterations() == 5);
    }
  }
  SECTION("no cathode") {
    ContactProgram anode_only;
    anode_only.roles[2] = ContactRole::anode;
    CHECK_THROWS_AS(solve_unit_field(vol, anode_only), ProgramError);
  }
  SECTION("contact missing from the volume") {
    CHECK_THROWS_AS(solve_unit_field(vol, parse_program("C7-")), ProgramError);
  }
}

TEST_CASE("field norm") {
  const auto grid = centered_cube(10, 0.5);
  SECTION("constant potential gives zero norm") {
    const auto f = testing::analytic_field(grid, parse_program("C1-"), [](const Vec3&) { return 0.7; });
    for (double v : efield_norm(f)) CHECK(v == 0.0);
  }
  SECTION("linear potential gives its gradient everywhere, faces included") {
    // u = 2x - 3y + 6z volts per mm, so |grad u| = 7 V/mm = 7000 V/m.
    const auto f = testing::analytic_field(grid, parse_program("C1-"),
                                           [](const Vec3& p) { return 2.0 * p.x - 3.0 * p.y + 6.0 * p.z; });
    for (double v : efield_norm(f)) CHECK(v == Approx(7000.0));
    const auto doubled = efield_norm(f, 2.0);
    const auto single = efield_norm(f, 1.0);
    for (std::size_t i = 0; i < single.size(); ++i) CHECK(doubled[i] == Approx(2.0 * single[i]));
  }
}

TEST_CASE("static VTA and tract overlap") {
  const PointSolve s = homogeneous_point_solve(40, 0.5, 0.75);
  const FieldSolution f = as_field(s);

  SECTION("volume counts voxels at or above threshold") {
    const auto n = efield_norm(f, 2.0);
    const VtaResult vta = static_vta(n, s.grid, 150.0);
    std::size_t expected = 0;
    for (double v : n) expected += v >= 150.0 ? 1 : 0;
    CHECK(vta.voxel_count == expected);
    CHECK(vta.volume_mm3 == Approx(static_cast<double>(expected) * 0.125));
    for (std::size_t i = 0; i < n.size(); ++i) CHECK((vta.mask[i] != 0) == (n[i] >= 150.0));
  }
  SECTION("zero amplitude and unreachable thresholds give no volume") {
    CHECK(static_vta(efield_norm(f, 0.0), s.grid).volume_mm3 == 0.0);
    const auto n = efield_norm(f, 3.0);
    const double top = *std::max_element(n.begin(), n.end());
    CHECK(static_vta(n, s.grid, top * 1.01).volume_mm3 == 0.0);
    CHECK_THROWS_AS(static_vta(n, s.grid, 0.0), InputError);
  }
  SECTION("monotone in amplitude, anti-monotone in threshold") {
    double prev = -1.0;
    for (double a : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0}) {
      const double v = static_vta(efield_norm(f, a), s.grid).volume_mm3;
      CHECK(v >= prev);
      prev = v;
    }
    const auto n = efield_norm(f, 3.0);
    prev = 1e300;
    for (double t : {50.0, 100.0, 150.0, 200.0, 300.0}) {
      const double v = static_vta(n, s.grid, t).volume_mm3;
      CHECK(v <= prev);
      prev = v;
    }
  }
  SECTION("excluded voxels never enter the mask") {
    const auto n = efield_norm(f, 3.0);
    std::vector<std::uint8_t> exclude(n.size(), 0);
    const std::size_t inside = s.grid.index(24, 20, 20);
    exclude[inside] = 1;
    const VtaResult vta = static_vta(n, s.grid, 150.0, exclude);
    REQUIRE(n[inside] >= 150.0);
    CHECK(vta.mask[inside] == 0);
    CHECK(vta.voxel_count + 1 == static_vta(n, s.grid, 150.0).voxel_count);
  }
  SECTION("overlap fractions") {
    const std::vector<FiberPath> fibers{
        resample_fiber({"near", {{-4, 1, 0}, {4, 1, 0}}}, 40),
        resample_fiber({"far", {{-4, 6, 0}, {4, 6, 0}}}, 40),
        resample_fiber({"outside", {{0, 0, 5}, {0, 0, 40}}}, 40),
    };
    VtaResult empty = static_vta(efield_norm(f, 0.0), s.grid);
    const auto none = tract_overlap(empty, s.grid, fibers);
    for (double v : none.per_fiber) CHECK(v == 0.0);

    VtaResult full = empty;
    std::fill(full.mask.begin(), full.mask.end(), 1);
    const auto all = tract_overlap(full, s.grid, fibers);
    CHECK(all.per_fiber[0] == 1.0);
    CHECK(all.per_fiber[1] == 1.0);
    CHECK(all.per_fiber[2] > 0.0);
    CHECK(all.per_fiber[2] < 1.0);
    REQUIRE(all.warnings.size() == 1);
    CHECK(all.warnings[0].find("outside") != std::string::npos);
    CHECK(all.aggregate == Approx((2.0 + all.per_fiber[2]) / 3.0));

    double prev = 0.0;
    for (double a : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      const auto o = tract_overlap(static_vta(efield_norm(f, a), s.grid), s.grid, fibers);
      for (double v : o.per_fiber) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(o.aggregate >= prev);
      prev = o.aggregate;
    }
    CHECK(prev > 0.0);
  }
}

TEST_CASE("interpolation and potential series") {
  const auto grid = centered_cube(12, 0.5);
  const auto program = parse_program("C3-,C4+");
  const auto f = testing::analytic_field(grid, program, [](const Vec3& p) { return 0.1 + p.x - 0.5 * p.y + 0.25 * p.z; });

  SECTION("trilinear interpolation reproduces linear fields") {
    for (const Vec3 p : {Vec3{0.13, -1.2, 2.07}, Vec3{-2.75, 2.5, 0.0}, Vec3{1.0, 1.0, -2.6}})
      CHECK(interpolate_unit_potential(f, p) == Approx(0.1 + p.x - 0.5 * p.y + 0.25 * p.z));
    CHECK_THROWS_AS(interpolate_unit_potential(f, {5.0, 0.0, 0.0}), SamplingError);
  }

  StimulusWaveform w;
  w.program = program;
  w.amplitude_mA = 3.0;
  w.pulse_width_us = 90.0;
  w.frequency_hz = 140.0;
  w.n_pulses = 1;
  w.onset_ms = 0.5;
  const std::vector<Vec3> points{{0, 0, 0}, {1, 0.5, -0.5}, {-2, 1, 1}};

  SECTION("rectangular pulse scales the unit sample by minus the amplitude") {
    const auto series = sample_potential_series(f, points, w, 0.005, 2.0);
    CHECK(series.n_times == 400);
    CHECK(series.n_points == 3);
    for (std::size_t t = 0; t < series.n_times; ++t) {
      const bool in_pulse = t >= 100 && t < 118;
      for (std::size_t p = 0; p < points.size(); ++p) {
        const double unit = interpolate_unit_potential(f, points[p]);
        CHECK(series.at(t, p) == (in_pulse ? -3.0 * unit : 0.0));
      }
    }
  }
  SECTION("zero waveform gives an all-zero series") {
    w.amplitude_mA = 0.0;
    const auto series = sample_potential_series(f, points, w, 0.005, 2.0);
    for (double v : series.volts) CHECK(v == 0.0);
  }
  SECTION("mismatched program or point outside the grid") {
    auto other = w;
    other.program = parse_program("C3-");
    CHECK_THROWS_AS(sample_potential_series(f, points, other, 0.005, 2.0), ProgramError);
    const std::vector<Vec3> outside{{0, 0, 9}};
    CHECK_THROWS_AS(sample_potential_series(f, outside, w, 0.005, 2.0), SamplingError);
  }
}

TEST_CASE("fiber points nearer the contact see larger potentials") {
  const PointSolve s = homogeneous_point_solve(40, 0.5, 0.75);
  const FieldSolution f = as_field(s);
  StimulusWaveform w;
  w.program = f.program;
  w.n_pulses = 1;
  w.onset_ms = 0.0;
  const FiberPath fiber = resample_fiber({"radial", {{1.5, 0, 0}, {9, 0, 0}}}, 40);
  const auto series = sample_potential_series(f, fiber.points, w, 0.005, 0.05);
  CHECK(std::abs(series.at(2, 0)) > std::abs(series.at(2, 39)));
  for (std::size_t p = 1; p < 40; ++p) CHECK(std::abs(series.at(2, p)) < std::abs(series.at(2, p - 1)));
}
