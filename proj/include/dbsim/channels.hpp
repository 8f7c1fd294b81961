#pragma once

// Hodgkin-Huxley sodium/potassium kinetics (mV, ms) and the equivalent
// Markov channel populations used for stochastic gating.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>

namespace dbsim {

struct HhRates {
  double alpha_m, beta_m;
  double alpha_h, beta_h;
  double alpha_n, beta_n;
};

namespace detail {
// x / (1 - exp(-x/k)), continuous at x = 0.
inline double vtrap(double x, double k) {
  const double r = x / k;
  if (std::abs(r) < 1e-6) return k * (1.0 + 0.5 * r);
  return x / (1.0 - std::exp(-r));
}
}  // namespace detail

/// Standard squid-axon rate functions (rest near -65 mV), scaled by `phi`.
inline HhRates hh_rates(double v_mV, double phi = 1.0) {
  HhRates r{};
  r.alpha_m = 0.1 * detail::vtrap(v_mV + 40.0, 10.0) * phi;
  r.beta_m = 4.0 * std::exp(-(v_mV + 65.0) / 18.0) * phi;
  r.alpha_h = 0.07 * std::exp(-(v_mV + 65.0) / 20.0) * phi;
  r.beta_h = 1.0 / (1.0 + std::exp(-(v_mV + 35.0) / 10.0)) * phi;
  r.alpha_n = 0.01 * detail::vtrap(v_mV + 55.0, 10.0) * phi;
  r.beta_n = 0.125 * std::exp(-(v_mV + 65.0) / 80.0) * phi;
  return r;
}

struct GateSteadyState {
  double m, h, n;
};

inline GateSteadyState steady_state(double v_mV) {
  const auto r = hh_rates(v_mV);
  return {r.alpha_m / (r.alpha_m + r.beta_m), r.alpha_h / (r.alpha_h + r.beta_h),
          r.alpha_n / (r.alpha_n + r.beta_n)};
}

// ---------------------------------------------------------------------------
// Markov populations. Sodium state (m, h) lives at index 2*m + h, so the
// conducting state m3h1 is index 7. Potassium state n4 (index 4) conducts.

using NaPopulation = std::array<std::int64_t, 8>;
using KPopulation = std::array<std::int64_t, 5>;

inline constexpr std::size_t na_open_state = 7;
inline constexpr std::size_t k_open_state = 4;

struct Transition {
  std::uint8_t from;
  std::uint8_t to;
  double rate;  ///< per channel, 1/ms
};

/// Up to 20 sodium transitions for the given rates.
inline std::size_t na_transitions(const HhRates& r, std::array<Transition, 20>& out) {
  std::size_t n = 0;
  for (int m = 0; m < 4; ++m) {
    for (int h = 0; h < 2; ++h) {
      const auto s = static_cast<std::uint8_t>(2 * m + h);
      if (m < 3) out[n++] = {s, static_cast<std::uint8_t>(s + 2), (3 - m) * r.alpha_m};
      if (m > 0) out[n++] = {s, static_cast<std::uint8_t>(s - 2), m * r.beta_m};
      out[n++] = h == 0 ? Transition{s, static_cast<std::uint8_t>(s + 1), r.alpha_h}
                        : Transition{s, static_cast<std::uint8_t>(s - 1), r.beta_h};
    }
  }
  return n;
}

inline std::size_t k_transitions(const HhRates& r, std::array<Transition, 8>& out) {
  std::size_t n = 0;
  for (int k = 0; k < 5; ++k) {
    const auto s = static_cast<std::uint8_t>(k);
    if (k < 4) out[n++] = {s, static_cast<std::uint8_t>(s + 1), (4 - k) * r.alpha_n};
    if (k > 0) out[n++] = {s, static_cast<std::uint8_t>(s - 1), k * r.beta_n};
  }
  return n;
}

/// Draws populations from the binomial stationary law of independent gates.
template <class Rng>
NaPopulation sample_na_population(std::int64_t total, double m_inf, double h_inf, Rng& rng) {
  NaPopulation pop{};
  std::int64_t left = total;
  double mass = 1.0;
  for (std::size_t s = 0; s < 8; ++s) {
    const int m = static_cast<int>(s / 2), h = static_cast<int>(s % 2);
    const double pm = std::pow(m_inf, m) * std::pow(1.0 - m_inf, 3 - m) * (m == 0 || m == 3 ? 1.0 : 3.0);
    const double p = pm * (h == 1 ? h_inf : 1.0 - h_inf);
    if (s == 7 || mass <= 0.0) {
      pop[s] = left;
      break;
    }
    std::binomial_distribution<std::int64_t> draw(left, std::clamp(p / mass, 0.0, 1.0));
    pop[s] = draw(rng);
    left -= pop[s];
    mass -= p;
  }
  return pop;
}

template <class Rng>
KPopulation sample_k_population(std::int64_t total, double n_inf, Rng& rng) {
  static constexpr std::array<double, 5> binom{1, 4, 6, 4, 1};
  KPopulation pop{};
  std::int64_t left = total;
  double mass = 1.0;
  for (std::size_t s = 0; s < 5; ++s) {
    const int k = static_cast<int>(s);
    const double p = binom[s] * std::pow(n_inf, k) * std::pow(1.0 - n_inf, 4 - k);
    if (s == 4 || mass <= 0.0) {
      pop[s] = left;
      break;
    }
    std::binomial_distribution<std::int64_t> draw(left, std::clamp(p / mass, 0.0, 1.0));
    pop[s] = draw(rng);
    left -= pop[s];
    mass -= p;
  }
  return pop;
}

/// Advances one population by `dt` with rates frozen over the step. Uses a
/// binomial tau-leap, or exact jumps when fewer than `exact_below` events
/// are expected.
template <std::size_t States, std::size_t MaxTransitions, class Rng>
void advance_population(std::array<std::int64_t, States>& pop, const std::array<Transition, MaxTransitions>& tr,
                        std::size_t n_tr, double dt, Rng& rng, double exact_below = 0.1) {
  std::array<double, States> exit_rate{};
  for (std::size_t i = 0; i < n_tr; ++i) exit_rate[tr[i].from] += tr[i].rate;
  double expected = 0.0;
  for (std::size_t s = 0; s < States; ++s) expected += static_cast<double>(pop[s]) * exit_rate[s];
  expected *= dt;
  if (expected == 0.0) return;

  if (expected < exact_below) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double t = 0.0;
    for (;;) {
      double a0 = 0.0;
      for (std::size_t s = 0; s < States; ++s) a0 += static_cast<double>(pop[s]) * exit_rate[s];
      if (a0 <= 0.0) return;
      t += -std::log1p(-unif(rng)) / a0;
      if (t > dt) return;
      double pick = unif(rng) * a0;
      std::size_t chosen = n_tr - 1;
      for (std::size_t i = 0; i < n_tr; ++i) {
        const double a = static_cast<double>(pop[tr[i].from]) * tr[i].rate;
        if (pick < a) {
          chosen = i;
          break;
        }
        pick -= a;
      }
      if (pop[tr[chosen].from] == 0) continue;
      --pop[tr[chosen].from];
      ++pop[tr[chosen].to];
    }
  }

  std::array<std::int64_t, States> delta{};
  std::array<double, States> remaining_rate = exit_rate;
  std::array<std::int64_t, States> remaining{};
  for (std::size_t s = 0; s < States; ++s) {
    if (pop[s] == 0 || exit_rate[s] <= 0.0) continue;
    std::binomial_distribution<std::int64_t> leave(pop[s], -std::expm1(-exit_rate[s] * dt));
    remaining[s] = leave(rng);
  }
  // Split each state's leavers over its outgoing transitions.
  for (std::size_t i = 0; i < n_tr; ++i) {
    const auto s = tr[i].from;
    if (remaining[s] == 0) continue;
    std::int64_t moved = remaining[s];
    if (remaining_rate[s] > tr[i].rate * (1.0 + 1e-12)) {
      std::binomial_distribution<std::int64_t> split(remaining[s], tr[i].rate / remaining_rate[s]);
      moved = split(rng);
    }
    remaining[s] -= moved;
    remaining_rate[s] -= tr[i].rate;
    delta[s] -= moved;
    delta[tr[i].to] += moved;
  }
  for (std::size_t s = 0; s < States; ++s) pop[s] += delta[s];
}

}  // namespace dbsim
