#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dbsim/core.hpp"

namespace dbsim {

enum class ContactRole { cathode, anode, floating };

inline std::string to_string(ContactRole r) {
  switch (r) {
    case ContactRole::cathode: return "cathode";
    case ContactRole::anode: return "anode";
    case ContactRole::floating: return "floating";
  }
  return "?";
}

/// Role of each lead contact (0-based index; displayed as C1, C2, ...).
/// Contacts not listed are floating.
struct ContactProgram {
  std::map<std::size_t, ContactRole> roles;

  std::vector<std::size_t> with_role(ContactRole r) const {
    std::vector<std::size_t> out;
    for (const auto& [k, role] : roles)
      if (role == r) out.push_back(k);
    return out;
  }
  std::vector<std::size_t> cathodes() const { return with_role(ContactRole::cathode); }
  std::vector<std::size_t> anodes() const { return with_role(ContactRole::anode); }
  bool bipolar() const { return !anodes().empty(); }

  /// Unit current (mA) a contact carries during a cathodic phase of a 1 mA
  /// program: cathodes share -1 mA, anodes share +1 mA.
  double unit_current(std::size_t contact) const {
    auto it = roles.find(contact);
    if (it == roles.end()) return 0.0;
    if (it->second == ContactRole::cathode) return -1.0 / static_cast<double>(cathodes().size());
    if (it->second == ContactRole::anode) return 1.0 / static_cast<double>(anodes().size());
    return 0.0;
  }

  void validate() const {
    if (cathodes().empty()) throw ProgramError("contact program has no cathode");
  }

  /// Cathodes become anodes and vice versa.
  ContactProgram reversed() const {
    ContactProgram out;
    for (const auto& [k, role] : roles) {
      out.roles[k] = role == ContactRole::cathode ? ContactRole::anode
                     : role == ContactRole::anode ? ContactRole::cathode
                                                  : role;
    }
    return out;
  }

  /// e.g. "C3-,C4+"
  std::string describe() const {
    std::string s;
    for (const auto& [k, role] : roles) {
      if (role == ContactRole::floating) continue;
      if (!s.empty()) s += ',';
      s += 'C' + std::to_string(k + 1) + (role == ContactRole::cathode ? '-' : '+');
    }
    return s;
  }

  bool operator==(const ContactProgram&) const = default;
};

/// Parses "C3-,C4+" (1-based contact, '-' cathode, '+' anode). Spaces are ignored.
inline ContactProgram parse_program(const std::string& text) {
  ContactProgram p;
  std::string token;
  const auto flush = [&] {
    if (token.empty()) return;
    const char sign = token.back();
    if (token.size() < 3 || (token[0] != 'C' && token[0] != 'c') || (sign != '-' && sign != '+'))
      throw ProgramError("cannot parse contact '" + token + "' (expected e.g. C3-)");
    const std::string digits = token.substr(1, token.size() - 2);
    if (digits.find_first_not_of("0123456789") != std::string::npos)
      throw ProgramError("cannot parse contact '" + token + "' (expected e.g. C3-)");
    const std::size_t k = std::stoul(digits);
    if (k == 0) throw ProgramError("contacts are numbered from C1");
    if (p.roles.contains(k - 1)) throw ProgramError("contact C" + digits + " listed twice");
    p.roles[k - 1] = sign == '-' ? ContactRole::cathode : ContactRole::anode;
    token.clear();
  };
  for (char c : text) {
    if (c == ',') flush();
    else if (c != ' ') token += c;
  }
  flush();
  p.validate();
  return p;
}

enum class PulseShape { monophasic, biphasic };

inline std::string to_string(PulseShape s) { return s == PulseShape::monophasic ? "monophasic" : "biphasic"; }

/// Current-controlled pulse train. Times in ms, widths in us.
struct StimulusWaveform {
  double amplitude_mA = 3.0;
  double pulse_width_us = 90.0;
  double frequency_hz = 140.0;
  int n_pulses = 4;
  double onset_ms = 1.0;
  PulseShape shape = PulseShape::monophasic;
  ContactProgram program;

  double period_ms() const { return 1000.0 / frequency_hz; }
  double pulse_width_ms() const { return pulse_width_us * 1e-3; }
  /// Time from the first pulse onset to the end of the last period.
  double train_duration_ms() const { return n_pulses * period_ms(); }
};

/// Cathodic-phase indicator at time t: -1 during the cathodic phase, +1
/// during the inverted phase of a biphasic pulse, 0 otherwise.
inline double phase_sign(const StimulusWaveform& w, double t_ms) {
  const double rel = t_ms - w.onset_ms;
  if (rel < 0.0) return 0.0;
  const double period = w.period_ms();
  const double k = std::floor(rel / period);
  if (k >= static_cast<double>(w.n_pulses)) return 0.0;
  const double local = rel - k * period;
  const double pw = w.pulse_width_ms();
  if (local < pw) return -1.0;
  if (w.shape == PulseShape::biphasic && local < 2.0 * pw) return 1.0;
  return 0.0;
}

/// Total current (mA) through the cathodes at time t. The unit field of a
/// program corresponds to +1 mA here, so potentials scale by this value.
inline double cathode_current(const StimulusWaveform& w, double t_ms) {
  return phase_sign(w, t_ms) * w.amplitude_mA;
}

/// Current (mA) at every active contact. Cathodic phase: cathodes share
/// -amplitude, anodes share +amplitude.
inline std::map<std::size_t, double> current_at(const StimulusWaveform& w, double t_ms) {
  const double s = phase_sign(w, t_ms);
  std::map<std::size_t, double> out;
  for (const auto& [k, role] : w.program.roles) {
    if (role == ContactRole::floating) continue;
    out[k] = s == 0.0 ? 0.0 : -s * w.amplitude_mA * w.program.unit_current(k);
  }
  return out;
}

struct Diagnostic {
  std::string field;
  std::string message;
};

/// Checks every waveform invariant; an empty list means the waveform is valid.
inline std::vector<Diagnostic> validate(const StimulusWaveform& w) {
  std::vector<Diagnostic> out;
  if (!(w.amplitude_mA >= 0.0) || !std::isfinite(w.amplitude_mA))
    out.push_back({"amplitude_mA", "amplitude must be finite and non-negative"});
  if (!(w.frequency_hz > 0.0) || !std::isfinite(w.frequency_hz))
    out.push_back({"frequency_hz", "frequency must be positive"});
  if (!(w.pulse_width_us > 0.0)) out.push_back({"pulse_width_us", "pulse width must be positive"});
  if (w.n_pulses < 1) out.push_back({"n_pulses", "at least one pulse is required"});
  if (w.onset_ms < 0.0) out.push_back({"onset_ms", "onset must be non-negative"});
  if (w.frequency_hz > 0.0) {
    const double active = w.pulse_width_ms() * (w.shape == PulseShape::biphasic ? 2.0 : 1.0);
    if (!(active < w.period_ms()))
      out.push_back({"pulse_width_us", "pulse width " + std::to_string(w.pulse_width_us) +
                                           " us does not fit in the period of " + std::to_string(w.period_ms()) +
                                           " ms"});
  }
  if (w.program.cathodes().empty()) out.push_back({"program", "contact program has no cathode"});
  if (out.empty() && w.program.bipolar()) {
    // Net current must vanish at every instant; probe every phase of one period.
    const double period = w.period_ms();
    for (int i = 0; i < 64; ++i) {
      const double t = w.onset_ms + period * (i + 0.5) / 64.0;
      double sum = 0.0;
      for (const auto& [k, c] : current_at(w, t)) sum += c;
      if (std::abs(sum) > 1e-12 * (1.0 + w.amplitude_mA)) {
        out.push_back({"program", "bipolar contact currents do not sum to zero"});
        break;
      }
    }
  }
  return out;
}

/// Per-sample cathode current (mA) on a uniform grid. Sample i holds the
/// value at the midpoint of [i*dt, (i+1)*dt), which snaps pulse edges to the
/// nearest sample boundary.
inline std::vector<double> sample_cathode_current(const StimulusWaveform& w, double dt_ms, std::size_t n_samples) {
  std::vector<double> out(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    out[i] = cathode_current(w, (static_cast<double>(i) + 0.5) * dt_ms);
  return out;
}

}  // namespace dbsim
