#pragma once

// Multi-compartment Hodgkin-Huxley cable driven by an extracellular
// potential and an intracellular axonal input.
//
// Units: mV, ms, nA, uS, nF. Each step advances the gates (exponential Euler
// or Markov populations) and then solves the backward-Euler cable system,
// which is tridiagonal with sealed ends.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dbsim/channels.hpp"
#include "dbsim/core.hpp"

namespace dbsim {

enum class GatingMode { deterministic, stochastic };

inline std::string to_string(GatingMode m) { return m == GatingMode::deterministic ? "deterministic" : "stochastic"; }

struct CableConfig {
  double length_mm = 8.0;
  std::size_t n_comp = 40;
  double diameter_um = 2.0;
  double axial_resistivity_ohm_cm = 100.0;
  double membrane_capacitance_uF_cm2 = 1.0;
  double g_na_mS_cm2 = 120.0;
  double g_k_mS_cm2 = 36.0;
  double g_leak_mS_cm2 = 0.3;
  double e_na_mV = 50.0;
  double e_k_mV = -77.0;
  double e_leak_mV = -54.4;
  double temperature_factor = 1.0;
  GatingMode gating = GatingMode::deterministic;
  double na_channels_per_um2 = 60.0;
  double k_channels_per_um2 = 18.0;
  double channel_scale = 1.0;
  double dt_ms = 0.001;

  double compartment_length_um() const { return length_mm * 1000.0 / static_cast<double>(n_comp); }
  double membrane_area_um2() const { return std::numbers::pi * diameter_um * compartment_length_um(); }
  double membrane_area_cm2() const { return membrane_area_um2() * 1e-8; }
  double capacitance_nF() const { return membrane_capacitance_uF_cm2 * membrane_area_cm2() * 1e3; }
  double g_na_uS() const { return g_na_mS_cm2 * membrane_area_cm2() * 1e3; }
  double g_k_uS() const { return g_k_mS_cm2 * membrane_area_cm2() * 1e3; }
  double g_leak_uS() const { return g_leak_mS_cm2 * membrane_area_cm2() * 1e3; }
  /// Conductance between neighbouring compartment centres.
  double axial_conductance_uS() const {
    const double d_cm = diameter_um * 1e-4;
    const double len_cm = compartment_length_um() * 1e-4;
    return std::numbers::pi * d_cm * d_cm / (4.0 * axial_resistivity_ohm_cm * len_cm) * 1e6;
  }
  std::int64_t na_channels() const {
    return static_cast<std::int64_t>(std::llround(na_channels_per_um2 * membrane_area_um2() * channel_scale));
  }
  std::int64_t k_channels() const {
    return static_cast<std::int64_t>(std::llround(k_channels_per_um2 * membrane_area_um2() * channel_scale));
  }
  std::size_t detection_compartment() const { return static_cast<std::size_t>(std::floor(0.75 * static_cast<double>(n_comp))); }

  void validate() const {
    if (n_comp < 3) throw InputError("cable needs at least 3 compartments");
    if (!(length_mm > 0.0) || !(diameter_um > 0.0) || !(axial_resistivity_ohm_cm > 0.0) ||
        !(membrane_capacitance_uF_cm2 > 0.0))
      throw InputError("cable geometry and passive parameters must be positive");
    if (g_na_mS_cm2 < 0.0 || g_k_mS_cm2 < 0.0 || g_leak_mS_cm2 < 0.0)
      throw InputError("channel conductances must be non-negative");
    if (!(temperature_factor > 0.0)) throw InputError("temperature factor must be positive");
    if (!(dt_ms > 0.0) || dt_ms > 0.005 + 1e-12) throw InputError("cable time step must be in (0, 5] us");
    if (gating == GatingMode::stochastic && (na_channels() < 1 || k_channels() < 1))
      throw InputError("stochastic gating needs at least one channel of each type per compartment");
  }
};

struct CableState {
  double t_ms = 0.0;
  std::vector<double> v;        ///< membrane potential, mV
  std::vector<double> m, h, n;  ///< deterministic gates
  std::vector<NaPopulation> na;  ///< stochastic populations
  std::vector<KPopulation> k;
};

/// Intracellular current step injected at one compartment.
struct AxonalInput {
  std::size_t compartment = 0;
  double amplitude_nA = 0.0;
  double duration_ms = 1.0;
  double onset_ms = 0.0;

  bool active(double t_ms) const { return t_ms >= onset_ms && t_ms < onset_ms + duration_ms; }
};

/// Extracellular potential per compartment, row-major time x compartment,
/// in volts; row i holds [i*dt, (i+1)*dt). Rows past the end are zero.
struct ExtracellularDrive {
  double dt_ms = 0.005;
  std::size_t n_comp = 0;
  std::vector<double> volts;

  std::size_t n_times() const { return n_comp == 0 ? 0 : volts.size() / n_comp; }
  double span_ms() const { return static_cast<double>(n_times()) * dt_ms; }
  std::span<const double> row(std::size_t t) const { return {volts.data() + t * n_comp, n_comp}; }
};

/// Resting potential with all gates at steady state (bisection on I_ion = 0).
inline double resting_potential(const CableConfig& c) {
  const auto current = [&](double v) {
    const auto ss = steady_state(v);
    return c.g_na_mS_cm2 * ss.m * ss.m * ss.m * ss.h * (v - c.e_na_mV) +
           c.g_k_mS_cm2 * std::pow(ss.n, 4) * (v - c.e_k_mV) + c.g_leak_mS_cm2 * (v - c.e_leak_mV);
  };
  double lo = -100.0, hi = -40.0;
  if (current(lo) > 0.0 || current(hi) < 0.0) return c.e_leak_mV;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (current(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Integrator for one cable. Holds scratch buffers, so use one per thread.
class Cable {
 public:
  explicit Cable(CableConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    const std::size_t n = cfg_.n_comp;
    sub_.resize(n);
    diag_.resize(n);
    rhs_.resize(n);
    g_na_open_.resize(n);
    g_k_open_.resize(n);
    v_rest_ = resting_potential(cfg_);
  }

  const CableConfig& config() const { return cfg_; }
  double rest_mV() const { return v_rest_; }

  template <class Rng>
  CableState resting_state(Rng& rng) const {
    const std::size_t n = cfg_.n_comp;
    CableState s;
    s.v.assign(n, v_rest_);
    const auto ss = steady_state(v_rest_);
    if (cfg_.gating == GatingMode::deterministic) {
      s.m.assign(n, ss.m);
      s.h.assign(n, ss.h);
      s.n.assign(n, ss.n);
    } else {
      s.na.resize(n);
      s.k.resize(n);
      for (std::size_t c = 0; c < n; ++c) {
        s.na[c] = sample_na_population(cfg_.na_channels(), ss.m, ss.h, rng);
        s.k[c] = sample_k_population(cfg_.k_channels(), ss.n, rng);
      }
    }
    return s;
  }

  /// Advances `s` by dt. `drive_V` (per compartment, volts) may be empty for
  /// no extracellular field; `injected_nA` may be empty for no input.
  template <class Rng>
  void step(CableState& s, std::span<const double> drive_V, std::span<const double> injected_nA, double dt_ms,
            Rng& rng) {
    const std::size_t n = cfg_.n_comp;
    const double phi = cfg_.temperature_factor;
    advance_gates(s, dt_ms, phi, rng);

    const double ga = cfg_.axial_conductance_uS();
    const double cm_dt = cfg_.capacitance_nF() / dt_ms;
    const double gl = cfg_.g_leak_uS();
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t neighbours = (c > 0 ? 1 : 0) + (c + 1 < n ? 1 : 0);
      const double gna = g_na_open_[c];
      const double gk = g_k_open_[c];
      diag_[c] = cm_dt + gna + gk + gl + ga * static_cast<double>(neighbours);
      sub_[c] = -ga;
      double r = cm_dt * s.v[c] + gna * cfg_.e_na_mV + gk * cfg_.e_k_mV + gl * cfg_.e_leak_mV;
      if (!injected_nA.empty()) r += injected_nA[c];
      if (!drive_V.empty()) {
        // Equivalent injected current of the extracellular field.
        double lap = 0.0;
        if (c > 0) lap += drive_V[c - 1] - drive_V[c];
        if (c + 1 < n) lap += drive_V[c + 1] - drive_V[c];
        r += ga * lap * 1e3;
      }
      rhs_[c] = r;
    }
    // Thomas algorithm, symmetric tridiagonal with off-diagonal -ga.
    for (std::size_t c = 1; c < n; ++c) {
      const double w = sub_[c] / diag_[c - 1];
      diag_[c] -= w * sub_[c];
      rhs_[c] -= w * rhs_[c - 1];
    }
    s.v[n - 1] = rhs_[n - 1] / diag_[n - 1];
    for (std::size_t c = n - 1; c-- > 0;) s.v[c] = (rhs_[c] - sub_[c + 1] * s.v[c + 1]) / diag_[c];
    s.t_ms += dt_ms;
    for (std::size_t c = 0; c < n; ++c) {
      if (!std::isfinite(s.v[c]))
        throw NumericalError("membrane potential blew up at compartment " + std::to_string(c) + ", t = " +
                             std::to_string(s.t_ms) + " ms");
    }
  }

 private:
  template <class Rng>
  void advance_gates(CableState& s, double dt, double phi, Rng& rng) {
    const std::size_t n = cfg_.n_comp;
    const double gna = cfg_.g_na_uS();
    const double gk = cfg_.g_k_uS();
    if (cfg_.gating == GatingMode::deterministic) {
      for (std::size_t c = 0; c < n; ++c) {
        const auto r = hh_rates(s.v[c], phi);
        const auto relax = [dt](double x, double a, double b) {
          const double tot = a + b;
          const double inf = a / tot;
          return inf + (x - inf) * std::exp(-dt * tot);
        };
        s.m[c] = relax(s.m[c], r.alpha_m, r.beta_m);
        s.h[c] = relax(s.h[c], r.alpha_h, r.beta_h);
        s.n[c] = relax(s.n[c], r.alpha_n, r.beta_n);
        const double n2 = s.n[c] * s.n[c];
        g_na_open_[c] = gna * s.m[c] * s.m[c] * s.m[c] * s.h[c];
        g_k_open_[c] = gk * n2 * n2;
      }
      return;
    }
    const double n_na = static_cast<double>(cfg_.na_channels());
    const double n_k = static_cast<double>(cfg_.k_channels());
    std::array<Transition, 20> na_tr{};
    std::array<Transition, 8> k_tr{};
    for (std::size_t c = 0; c < n; ++c) {
      const auto r = hh_rates(s.v[c], phi);
      const std::size_t nna = na_transitions(r, na_tr);
      const std::size_t nk = k_transitions(r, k_tr);
      advance_population(s.na[c], na_tr, nna, dt, rng);
      advance_population(s.k[c], k_tr, nk, dt, rng);
      g_na_open_[c] = gna * static_cast<double>(s.na[c][na_open_state]) / n_na;
      g_k_open_[c] = gk * static_cast<double>(s.k[c][k_open_state]) / n_k;
    }
  }

  CableConfig cfg_;
  double v_rest_ = -65.0;
  std::vector<double> sub_, diag_, rhs_, g_na_open_, g_k_open_;
};

/// Single step on a copy of `state`.
template <class Rng>
CableState step(CableState state, const CableConfig& config, std::span<const double> drive_V,
                std::span<const double> injected_nA, double dt_ms, Rng& rng) {
  Cable cable(config);
  cable.step(state, drive_V, injected_nA, dt_ms, rng);
  return state;
}

/// Membrane potential samples, row-major time x compartment.
struct MembraneTrace {
  double dt_ms = 0.0;  ///< spacing between recorded rows
  std::size_t n_comp = 0;
  std::vector<double> mV;

  std::size_t n_samples() const { return n_comp == 0 ? 0 : mV.size() / n_comp; }
  double time(std::size_t i) const { return static_cast<double>(i) * dt_ms; }
  double at(std::size_t i, std::size_t c) const { return mV[i * n_comp + c]; }
  double max() const { return mV.empty() ? -1e300 : *std::max_element(mV.begin(), mV.end()); }
};

struct SimulateOptions {
  std::size_t record_stride = 1;  ///< record every k-th step
};

inline std::size_t step_count(double duration_ms, double dt_ms) {
  return static_cast<std::size_t>(std::llround(duration_ms / dt_ms));
}

/// Runs a cable from rest. Deterministic for a given (config, drive, input, seed).
inline MembraneTrace simulate(const CableConfig& config, const ExtracellularDrive& drive, const AxonalInput& input,
                              double duration_ms, std::uint64_t seed, const SimulateOptions& opts = {}) {
  Cable cable(config);
  const std::size_t n = config.n_comp;
  if (input.compartment >= n) throw InputError("axonal input compartment out of range");
  if (!(input.duration_ms > 0.0)) throw InputError("axonal input duration must be positive");
  if (drive.n_times() > 0) {
    if (drive.n_comp != n) throw InputError("extracellular drive has a different compartment count");
    if (duration_ms + 1e-9 < drive.span_ms()) throw InputError("simulation is shorter than the extracellular drive");
    for (double v : drive.volts)
      if (!std::isfinite(v)) throw InputError("extracellular drive contains non-finite values");
  }
  const double dt = config.dt_ms;
  const std::size_t steps = step_count(duration_ms, dt);
  const std::size_t stride = std::max<std::size_t>(1, opts.record_stride);

  std::mt19937_64 rng(seed);
  CableState state = cable.resting_state(rng);
  MembraneTrace trace;
  trace.dt_ms = dt * static_cast<double>(stride);
  trace.n_comp = n;
  trace.mV.reserve((steps / stride + 1) * n);
  trace.mV.insert(trace.mV.end(), state.v.begin(), state.v.end());

  std::vector<double> injected(n, 0.0);
  const std::span<const double> no_drive;
  for (std::size_t s = 0; s < steps; ++s) {
    const double t_mid = (static_cast<double>(s) + 0.5) * dt;
    injected[input.compartment] = input.active(t_mid) ? input.amplitude_nA : 0.0;
    std::span<const double> row = no_drive;
    if (drive.n_times() > 0) {
      const auto r = static_cast<std::size_t>(std::floor(t_mid / drive.dt_ms));
      if (r < drive.n_times()) row = drive.row(r);
    }
    cable.step(state, row, injected, dt, rng);
    if ((s + 1) % stride == 0) trace.mV.insert(trace.mV.end(), state.v.begin(), state.v.end());
  }
  return trace;
}

/// Time of the first upward crossing of `threshold_mV` at `compartment` at or
/// after `after_ms`, linearly interpolated between samples.
inline std::optional<double> first_crossing(const MembraneTrace& trace, std::size_t compartment, double threshold_mV,
                                            double after_ms = 0.0) {
  if (compartment >= trace.n_comp) throw InputError("detection compartment out of range");
  for (std::size_t i = 1; i < trace.n_samples(); ++i) {
    const double a = trace.at(i - 1, compartment), b = trace.at(i, compartment);
    if (a < threshold_mV && b >= threshold_mV && trace.time(i) >= after_ms) {
      const double f = (threshold_mV - a) / (b - a);
      return trace.time(i - 1) + f * trace.dt_ms;
    }
  }
  return std::nullopt;
}

/// True iff the detection compartment crosses the threshold upwards after the
/// input onset plus the blanking interval.
inline bool detect_firing(const MembraneTrace& trace, std::size_t detection_compartment, double threshold_mV,
                          double input_onset_ms, double artifact_blanking_ms = 0.0) {
  return first_crossing(trace, detection_compartment, threshold_mV, input_onset_ms + artifact_blanking_ms).has_value();
}

struct ThresholdSearch {
  double threshold_nA = 0.0;  ///< smallest amplitude found to fire
  double below_nA = 0.0;      ///< largest amplitude found not to fire
  std::size_t simulations = 0;
};

/// Bisection on the input amplitude (no extracellular drive) until the
/// bracket is within `rel_tol` of the threshold.
inline ThresholdSearch find_input_threshold(const CableConfig& config, AxonalInput input, double duration_ms,
                                            std::uint64_t seed, double rel_tol = 0.01, double start_nA = 0.05,
                                            double cap_nA = 1000.0) {
  const ExtracellularDrive none;
  const std::size_t det = config.detection_compartment();
  ThresholdSearch out;
  const auto fires = [&](double amp) {
    input.amplitude_nA = amp;
    ++out.simulations;
    SimulateOptions opts;
    opts.record_stride = 5;
    return detect_firing(simulate(config, none, input, duration_ms, seed, opts), det, 0.0, input.onset_ms);
  };
  double lo = 0.0, hi = start_nA;
  while (!fires(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > cap_nA) throw CalibrationError("no firing threshold below " + std::to_string(cap_nA) + " nA");
  }
  if (fires(lo)) throw CalibrationError("cable fires without input; cannot calibrate");
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    (fires(mid) ? hi : lo) = mid;
  }
  out.threshold_nA = hi;
  out.below_nA = lo;
  return out;
}

/// Input whose amplitude is `target_fraction` of the firing threshold, so the
/// input alone stays subthreshold (for fractions below 1).
inline AxonalInput calibrate_input(const CableConfig& config, AxonalInput input, double duration_ms,
                                   double target_fraction = 0.9, std::uint64_t seed = 0) {
  if (config.gating != GatingMode::deterministic) throw InputError("calibration requires deterministic gating");
  const auto search = find_input_threshold(config, input, duration_ms, seed);
  input.amplitude_nA = target_fraction * search.threshold_nA;
  return input;
}

}  // namespace dbsim
