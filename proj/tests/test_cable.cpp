#include <catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "dbsim/cable.hpp"
#include "dbsim/channels.hpp"

using namespace dbsim;
using Catch::Approx;

namespace {

// Closed-form squid-axon rates written out independently of the library.
double alpha_m(double v) { return 0.1 * (v + 40.0) / (1.0 - std::exp(-(v + 40.0) / 10.0)); }
double beta_m(double v) { return 4.0 * std::exp(-(v + 65.0) / 18.0); }
double alpha_h(double v) { return 0.07 * std::exp(-(v + 65.0) / 20.0); }
double beta_h(double v) { return 1.0 / (1.0 + std::exp(-(v + 35.0) / 10.0)); }
double alpha_n(double v) { return 0.01 * (v + 55.0) / (1.0 - std::exp(-(v + 55.0) / 10.0)); }
double beta_n(double v) { return 0.125 * std::exp(-(v + 65.0) / 80.0); }

MembraneTrace run(const CableConfig& cfg, double amplitude_nA, double duration_ms, std::uint64_t seed = 1,
                  std::size_t compartment = 0) {
  AxonalInput in;
  in.compartment = compartment;
  in.amplitude_nA = amplitude_nA;
  in.onset_ms = 1.0;
  return simulate(cfg, ExtracellularDrive{}, in, duration_ms, seed);
}

// Threshold of the default cable, shared by several test cases.
const ThresholdSearch& default_threshold() {
  static const ThresholdSearch t = [] {
    AxonalInput in;
    in.onset_ms = 1.0;
    return find_input_threshold(CableConfig{}, in, 25.0, 1);
  }();
  return t;
}

}  // namespace

TEST_CASE("rate functions match the closed-form squid-axon set") {
  for (double v : {-90.0, -70.0, -65.0, -52.3, -30.0, 0.0, 25.0}) {
    const HhRates r = hh_rates(v);
    CHECK(r.alpha_m == Approx(alpha_m(v)));
    CHECK(r.beta_m == Approx(beta_m(v)));
    CHECK(r.alpha_h == Approx(alpha_h(v)));
    CHECK(r.beta_h == Approx(beta_h(v)));
    CHECK(r.alpha_n == Approx(alpha_n(v)));
    CHECK(r.beta_n == Approx(beta_n(v)));
  }
  // Removable singularities stay continuous.
  CHECK(hh_rates(-40.0).alpha_m == Approx(1.0));
  CHECK(hh_rates(-55.0).alpha_n == Approx(0.1));
  CHECK(hh_rates(-40.0 + 1e-9).alpha_m == Approx(hh_rates(-40.0).alpha_m));
  CHECK(hh_rates(-30.0, 3.0).alpha_m == Approx(3.0 * alpha_m(-30.0)));
}

TEST_CASE("derived compartment quantities") {
  const CableConfig c;
  CHECK(c.compartment_length_um() == Approx(200.0));
  CHECK(c.compartment_length_um() / c.diameter_um == Approx(100.0));
  CHECK(c.membrane_area_um2() == Approx(1256.637).margin(1e-3));
  CHECK(c.capacitance_nF() == Approx(0.0125664).epsilon(1e-5));
  // pi r^2 / (R_i L) with r = 1 um, L = 200 um, R_i = 100 ohm cm.
  CHECK(c.axial_conductance_uS() == Approx(std::numbers::pi * 1e-8 / (100.0 * 0.02) * 1e6));
  CHECK(c.detection_compartment() == 30);
  CHECK(c.na_channels() == 75398);
  CHECK(c.k_channels() == 22619);

  CableConfig bad = c;
  bad.n_comp = 2;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = c;
  bad.dt_ms = 0.01;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = c;
  bad.g_k_mS_cm2 = -1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("resting state is an equilibrium") {
  const CableConfig cfg;
  const Cable cable(cfg);
  CHECK(cable.rest_mV() == Approx(-65.0).margin(0.1));
  const MembraneTrace t = run(cfg, 0.0, 50.0);
  for (double v : t.mV) REQUIRE(std::abs(v - cable.rest_mV()) < 1.0);
  CHECK(t.n_samples() == 50001);
}

TEST_CASE("uniform extracellular potential has no effect") {
  const CableConfig cfg;
  Cable a(cfg), b(cfg);
  std::mt19937_64 rng(3);
  CableState sa = a.resting_state(rng);
  CableState sb = sa;
  std::vector<double> injected(cfg.n_comp, 0.0);
  injected[0] = 2.0;
  const std::vector<double> uniform(cfg.n_comp, -0.37);
  for (int i = 0; i < 3000; ++i) {
    a.step(sa, {}, injected, cfg.dt_ms, rng);
    b.step(sb, uniform, injected, cfg.dt_ms, rng);
  }
  CHECK(sa.v == sb.v);
  CHECK(sa.m == sb.m);
}

TEST_CASE("gates relax to their steady state under a voltage clamp") {
  // A huge capacitance pins the membrane potential over the test window.
  CableConfig cfg;
  cfg.membrane_capacitance_uF_cm2 = 1e12;
  Cable cable(cfg);
  std::mt19937_64 rng(1);
  for (double clamp : {-30.0, -50.0, 10.0}) {
    CableState s = cable.resting_state(rng);
    std::fill(s.v.begin(), s.v.end(), clamp);
    const double tau_m = 1.0 / (alpha_m(clamp) + beta_m(clamp));
    const double tau_h = 1.0 / (alpha_h(clamp) + beta_h(clamp));
    const double tau_n = 1.0 / (alpha_n(clamp) + beta_n(clamp));
    const double m_inf = alpha_m(clamp) * tau_m, h_inf = alpha_h(clamp) * tau_h, n_inf = alpha_n(clamp) * tau_n;
    double t = 0.0;
    bool m_checked = false, n_checked = false;
    while (t < 5.0 * tau_h) {
      cable.step(s, {}, {}, cfg.dt_ms, rng);
      t += cfg.dt_ms;
      if (!m_checked && t >= 5.0 * tau_m) {
        CHECK(s.m[7] == Approx(m_inf).epsilon(0.01));
        m_checked = true;
      }
      if (!n_checked && t >= 5.0 * tau_n) {
        CHECK(s.n[7] == Approx(n_inf).epsilon(0.01));
        n_checked = true;
      }
    }
    // h can settle near zero, so measure it against its initial displacement.
    CHECK(std::abs(s.h[7] - h_inf) <= 0.01 * std::abs(steady_state(cable.rest_mV()).h - h_inf));
    CHECK(s.v[7] == Approx(clamp).margin(1e-3));
  }
}

TEST_CASE("suprathreshold input propagates along the cable") {
  const CableConfig cfg;
  const MembraneTrace t = run(cfg, 1.0, 35.0);
  const auto at_far = first_crossing(t, cfg.n_comp - 1, 0.0, 1.0);
  REQUIRE(at_far.has_value());
  CHECK(*at_far > 1.0);
  CHECK(std::isfinite(*at_far));
  double prev = 0.0;
  for (std::size_t c = 5; c < cfg.n_comp; ++c) {
    const auto tc = first_crossing(t, c, 0.0, 1.0);
    REQUIRE(tc.has_value());
    CHECK(*tc > prev);
    prev = *tc;
  }
  double peak = -1e9;
  for (std::size_t i = 0; i < t.n_samples(); ++i) peak = std::max(peak, t.at(i, cfg.n_comp - 1));
  CHECK(peak > 0.0);
  CHECK(detect_firing(t, cfg.detection_compartment(), 0.0, 1.0));
}

TEST_CASE("threshold search brackets the firing threshold") {
  const auto& search = default_threshold();
  const CableConfig cfg;
  CHECK(search.threshold_nA > 0.0);
  CHECK(search.threshold_nA - search.below_nA <= 0.01 * search.threshold_nA);
  CHECK(detect_firing(run(cfg, search.threshold_nA, 25.0), 30, 0.0, 1.0));
  CHECK_FALSE(detect_firing(run(cfg, search.below_nA, 25.0), 30, 0.0, 1.0));

  SECTION("0.9 of threshold stays silent everywhere, 1.1 fires") {
    const MembraneTrace below = run(cfg, 0.9 * search.threshold_nA, 30.0);
    CHECK(below.max() < 0.0);
    CHECK(detect_firing(run(cfg, 1.1 * search.threshold_nA, 30.0), 30, 0.0, 1.0));
  }
  SECTION("calibrate_input applies the target fraction") {
    AxonalInput in;
    in.onset_ms = 1.0;
    const AxonalInput cal = calibrate_input(cfg, in, 25.0, 0.9, 1);
    CHECK(cal.amplitude_nA == Approx(0.9 * search.threshold_nA));
    CHECK(cal.onset_ms == 1.0);
  }
}

TEST_CASE("calibration errors") {
  AxonalInput in;
  in.onset_ms = 1.0;
  SECTION("no threshold below the cap") {
    CableConfig passive;
    passive.g_na_mS_cm2 = 0.0;
    CHECK_THROWS_AS(find_input_threshold(passive, in, 10.0, 1, 0.01, 0.05, 1.0), CalibrationError);
  }
  SECTION("stochastic gating is refused") {
    CableConfig noisy;
    noisy.gating = GatingMode::stochastic;
    CHECK_THROWS_AS(calibrate_input(noisy, in, 10.0), InputError);
  }
}

TEST_CASE("halving the time step barely moves the spike") {
  CableConfig fine;
  fine.dt_ms = 0.0005;
  const double amp = 1.1 * default_threshold().threshold_nA;
  const auto a = first_crossing(run(CableConfig{}, amp, 30.0), 30, 0.0, 1.0);
  const auto b = first_crossing(run(fine, amp, 30.0), 30, 0.0, 1.0);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(std::abs(*a - *b) < 0.1);
}

TEST_CASE("reversing compartment order mirrors the trace") {
  const CableConfig cfg;
  const std::size_t n = cfg.n_comp;
  ExtracellularDrive drive;
  drive.n_comp = n;
  drive.volts.assign(2000 * n, 0.0);
  for (std::size_t t = 200; t < 218; ++t)
    for (std::size_t c = 0; c < n; ++c) drive.volts[t * n + c] = -0.05 / (1.0 + std::pow((c - 12.0) / 3.0, 2));
  ExtracellularDrive mirrored = drive;
  for (std::size_t t = 0; t < 2000; ++t)
    for (std::size_t c = 0; c < n; ++c) mirrored.volts[t * n + c] = drive.volts[t * n + (n - 1 - c)];

  AxonalInput in;
  in.amplitude_nA = 0.9 * default_threshold().threshold_nA;
  in.onset_ms = 0.3;
  AxonalInput in_m = in;
  in_m.compartment = n - 1;
  const MembraneTrace a = simulate(cfg, drive, in, 20.0, 1);
  const MembraneTrace b = simulate(cfg, mirrored, in_m, 20.0, 1);
  REQUIRE(a.n_samples() == b.n_samples());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.n_samples(); ++i)
    for (std::size_t c = 0; c < n; ++c) worst = std::max(worst, std::abs(a.at(i, c) - b.at(i, n - 1 - c)));
  // The tridiagonal sweep runs in one direction, so agreement is to round-off.
  CHECK(worst < 1e-6);
  CHECK(a.max() > -60.0);
}

TEST_CASE("gating stays bounded through spikes") {
  SECTION("deterministic gates") {
    const CableConfig cfg;
    Cable cable(cfg);
    std::mt19937_64 rng(1);
    CableState s = cable.resting_state(rng);
    std::vector<double> injected(cfg.n_comp, 0.0);
    for (int i = 0; i < 20000; ++i) {
      injected[0] = (i % 5000) < 1000 ? 5.0 : 0.0;
      cable.step(s, {}, injected, cfg.dt_ms, rng);
      for (std::size_t c = 0; c < cfg.n_comp; ++c) {
        REQUIRE(s.m[c] >= 0.0);
        REQUIRE(s.m[c] <= 1.0);
        REQUIRE(s.h[c] >= 0.0);
        REQUIRE(s.h[c] <= 1.0);
        REQUIRE(s.n[c] >= 0.0);
        REQUIRE(s.n[c] <= 1.0);
      }
    }
  }
  SECTION("stochastic populations") {
    CableConfig cfg;
    cfg.gating = GatingMode::stochastic;
    cfg.n_comp = 5;
    cfg.length_mm = 1.0;
    Cable cable(cfg);
    std::mt19937_64 rng(9);
    CableState s = cable.resting_state(rng);
    std::vector<double> injected(cfg.n_comp, 0.0);
    for (int i = 0; i < 8000; ++i) {
      injected[0] = i < 1000 ? 2.0 : 0.0;
      cable.step(s, {}, injected, cfg.dt_ms, rng);
      for (std::size_t c = 0; c < cfg.n_comp; ++c) {
        REQUIRE(std::accumulate(s.na[c].begin(), s.na[c].end(), std::int64_t{0}) == cfg.na_channels());
        REQUIRE(std::accumulate(s.k[c].begin(), s.k[c].end(), std::int64_t{0}) == cfg.k_channels());
        for (auto x : s.na[c]) REQUIRE(x >= 0);
        for (auto x : s.k[c]) REQUIRE(x >= 0);
      }
    }
  }
}

TEST_CASE("stationary channel populations follow the gate probabilities") {
  std::mt19937_64 rng(5);
  const std::int64_t total = 1'000'000;
  const double m = 0.3, h = 0.6, n = 0.4;
  const NaPopulation na = sample_na_population(total, m, h, rng);
  const KPopulation k = sample_k_population(total, n, rng);
  CHECK(std::accumulate(na.begin(), na.end(), std::int64_t{0}) == total);
  CHECK(std::accumulate(k.begin(), k.end(), std::int64_t{0}) == total);
  const double open_na = static_cast<double>(na[na_open_state]) / total;
  const double open_k = static_cast<double>(k[k_open_state]) / total;
  CHECK(open_na == Approx(m * m * m * h).margin(0.002));
  CHECK(open_k == Approx(std::pow(n, 4)).margin(0.002));
}

TEST_CASE("Markov populations relax to the deterministic open fraction") {
  // Clamp at -20 mV and compare the mean open fraction with the HH gates.
  std::mt19937_64 rng(11);
  const double v = -20.0;
  const HhRates r = hh_rates(v);
  std::array<Transition, 8> ktr{};
  const std::size_t nk = k_transitions(r, ktr);
  const auto ss_rest = steady_state(-65.0);
  KPopulation pop = sample_k_population(200000, ss_rest.n, rng);
  double n_gate = ss_rest.n;
  const double dt = 0.01;
  for (int i = 0; i < 300; ++i) {
    advance_population(pop, ktr, nk, dt, rng);
    const double inf = r.alpha_n / (r.alpha_n + r.beta_n);
    n_gate = inf + (n_gate - inf) * std::exp(-dt * (r.alpha_n + r.beta_n));
    if (i % 50 == 49) CHECK(static_cast<double>(pop[k_open_state]) / 200000.0 == Approx(std::pow(n_gate, 4)).margin(0.01));
  }
}

TEST_CASE("exact jump fallback conserves channels") {
  std::mt19937_64 rng(2);
  const HhRates r = hh_rates(-65.0);
  std::array<Transition, 20> tr{};
  const std::size_t n_tr = na_transitions(r, tr);
  NaPopulation pop{};
  pop[0] = 3;
  pop[7] = 2;
  for (int i = 0; i < 10000; ++i) {
    advance_population(pop, tr, n_tr, 0.001, rng);
    REQUIRE(std::accumulate(pop.begin(), pop.end(), std::int64_t{0}) == 5);
  }
}

TEST_CASE("stochastic simulations are reproducible from the seed") {
  CableConfig cfg;
  cfg.gating = GatingMode::stochastic;
  const MembraneTrace a = run(cfg, 1.0, 4.0, 77);
  const MembraneTrace b = run(cfg, 1.0, 4.0, 77);
  const MembraneTrace c = run(cfg, 1.0, 4.0, 78);
  CHECK(a.mV == b.mV);
  CHECK(a.mV != c.mV);
}

TEST_CASE("non-finite state is reported with compartment and time") {
  const CableConfig cfg;
  Cable cable(cfg);
  std::mt19937_64 rng(1);
  CableState s = cable.resting_state(rng);
  std::vector<double> injected(cfg.n_comp, 0.0);
  injected[17] = std::numeric_limits<double>::quiet_NaN();
  try {
    cable.step(s, {}, injected, cfg.dt_ms, rng);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("compartment") != std::string::npos);
    CHECK(msg.find("t = ") != std::string::npos);
  }
}

TEST_CASE("simulate preconditions") {
  const CableConfig cfg;
  AxonalInput in;
  in.compartment = 40;
  CHECK_THROWS_AS(simulate(cfg, ExtracellularDrive{}, in, 1.0, 1), InputError);
  in.compartment = 0;
  in.duration_ms = 0.0;
  CHECK_THROWS_AS(simulate(cfg, ExtracellularDrive{}, in, 1.0, 1), InputError);
  in.duration_ms = 1.0;
  ExtracellularDrive drive;
  drive.n_comp = 40;
  drive.volts.assign(40 * 400, 0.0);
  CHECK_THROWS_AS(simulate(cfg, drive, in, 1.0, 1), InputError);  // drive spans 2 ms
  drive.volts[5] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(simulate(cfg, drive, in, 2.0, 1), InputError);
}

TEST_CASE("firing detection examples") {
  const CableConfig cfg;
  const MembraneTrace flat = run(cfg, 0.0, 10.0);
  CHECK_FALSE(detect_firing(flat, 30, 0.0, 1.0));
  const MembraneTrace spike = run(cfg, 1.0, 25.0);
  CHECK(detect_firing(spike, 30, 0.0, 1.0));
  CHECK_FALSE(detect_firing(spike, 30, spike.max() + 1.0, 1.0));
  CHECK_FALSE(detect_firing(spike, 30, 0.0, 24.0));
  CHECK_THROWS_AS(detect_firing(spike, 40, 0.0, 1.0), InputError);

  SECTION("crossing time is interpolated between samples") {
    MembraneTrace t;
    t.dt_ms = 0.5;
    t.n_comp = 1;
    t.mV = {-65.0, -10.0, 30.0, 20.0, -70.0};
    const auto x = first_crossing(t, 0, 0.0);
    REQUIRE(x.has_value());
    CHECK(*x == Approx(0.5 + 0.5 * 10.0 / 40.0));
    CHECK_FALSE(first_crossing(t, 0, 0.0, 1.1).has_value());
  }
}

TEST_CASE("a 35 ms simulation of the 40-compartment cable is fast") {
  const auto start = std::chrono::steady_clock::now();
  (void)run(CableConfig{}, 1.0, 35.0);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 5.0);
}
