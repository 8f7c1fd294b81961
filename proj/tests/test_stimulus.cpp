#include <catch_amalgamated.hpp>

#include "dbsim/stimulus.hpp"

using namespace dbsim;
using Catch::Approx;

namespace {

StimulusWaveform make_waveform(const std::string& program) {
  StimulusWaveform w;
  w.amplitude_mA = 3.0;
  w.pulse_width_us = 90.0;
  w.frequency_hz = 140.0;
  w.n_pulses = 4;
  w.onset_ms = 1.0;
  w.program = parse_program(program);
  return w;
}

bool has_field(const std::vector<Diagnostic>& d, const std::string& field) {
  for (const auto& x : d)
    if (x.field == field) return true;
  return false;
}

}  // namespace

TEST_CASE("program parsing") {
  const ContactProgram p = parse_program("C3-, C4+");
  CHECK(p.cathodes() == std::vector<std::size_t>{2});
  CHECK(p.anodes() == std::vector<std::size_t>{3});
  CHECK(p.bipolar());
  CHECK(p.describe() == "C3-,C4+");
  CHECK(p.reversed().describe() == "C3+,C4-");
  CHECK(p.reversed().reversed() == p);
  CHECK(parse_program("c1-").describe() == "C1-");

  CHECK_THROWS_AS(parse_program("C3"), ProgramError);
  CHECK_THROWS_AS(parse_program("C0-"), ProgramError);
  CHECK_THROWS_AS(parse_program("Cx-"), ProgramError);
  CHECK_THROWS_AS(parse_program("C3-,C3+"), ProgramError);
  CHECK_THROWS_AS(parse_program("C4+"), ProgramError);
  CHECK_THROWS_AS(parse_program(""), ProgramError);
}

TEST_CASE("unit currents share the cathodic and anodic totals") {
  const ContactProgram p = parse_program("C1-,C2-,C4+");
  CHECK(p.unit_current(0) == Approx(-0.5));
  CHECK(p.unit_current(1) == Approx(-0.5));
  CHECK(p.unit_current(3) == Approx(1.0));
  CHECK(p.unit_current(2) == 0.0);
}

TEST_CASE("current_at examples") {
  SECTION("unipolar C4- at onset + 10 us") {
    const auto w = make_waveform("C4-");
    const auto c = current_at(w, w.onset_ms + 0.010);
    REQUIRE(c.size() == 1);
    CHECK(c.at(3) == Approx(-3.0));
  }
  SECTION("between pulses every contact is at zero") {
    const auto w = make_waveform("C4-");
    for (const auto& [k, v] : current_at(w, w.onset_ms + 3.0)) CHECK(v == 0.0);
    for (const auto& [k, v] : current_at(w, 0.5)) CHECK(v == 0.0);
    for (const auto& [k, v] : current_at(w, w.onset_ms + w.train_duration_ms() + 0.01)) CHECK(v == 0.0);
  }
  SECTION("bipolar map and its reversal") {
    const auto w = make_waveform("C3-,C4+");
    auto r = w;
    r.program = parse_program("C4-,C3+");
    const double t = w.onset_ms + w.period_ms() + 0.020;
    const auto c = current_at(w, t);
    const auto cr = current_at(r, t);
    CHECK(c.at(2) == Approx(-3.0));
    CHECK(c.at(3) == Approx(3.0));
    for (const auto& [k, v] : c) CHECK(cr.at(k) == -v);
  }
  SECTION("each pulse lasts the pulse width") {
    const auto w = make_waveform("C3-");
    for (int k = 0; k < w.n_pulses; ++k) {
      const double start = w.onset_ms + k * w.period_ms();
      CHECK(cathode_current(w, start + 0.001) == Approx(-3.0));
      CHECK(cathode_current(w, start + 0.089) == Approx(-3.0));
      CHECK(cathode_current(w, start + 0.091) == 0.0);
    }
  }
}

TEST_CASE("protocol arithmetic") {
  const auto w = make_waveform("C3-");
  CHECK(w.period_ms() == Approx(7.142857).margin(1e-6));
  CHECK(w.train_duration_ms() == Approx(28.571428).margin(1e-5));
}

TEST_CASE("waveform validation") {
  auto w = make_waveform("C3-,C4+");
  CHECK(validate(w).empty());

  SECTION("pulse width longer than the period") {
    w.pulse_width_us = 10000.0;
    CHECK(has_field(validate(w), "pulse_width_us"));
  }
  SECTION("biphasic pulse must fit twice") {
    w.frequency_hz = 1000.0;
    w.pulse_width_us = 600.0;
    CHECK(validate(w).empty());
    w.shape = PulseShape::biphasic;
    CHECK(has_field(validate(w), "pulse_width_us"));
  }
  SECTION("anode-only program") {
    w.program = ContactProgram{};
    w.program.roles[3] = ContactRole::anode;
    CHECK(has_field(validate(w), "program"));
  }
  SECTION("other fields") {
    w.n_pulses = 0;
    w.amplitude_mA = -1.0;
    w.frequency_hz = 0.0;
    const auto d = validate(w);
    CHECK(has_field(d, "n_pulses"));
    CHECK(has_field(d, "amplitude_mA"));
    CHECK(has_field(d, "frequency_hz"));
  }
}

TEST_CASE("bipolar currents sum to zero at every instant") {
  for (auto shape : {PulseShape::monophasic, PulseShape::biphasic}) {
    auto w = make_waveform("C1-,C2-,C3+");
    w.shape = shape;
    for (int i = 0; i < 4000; ++i) {
      const double t = 0.01 * i;
      double sum = 0.0;
      for (const auto& [k, v] : current_at(w, t)) sum += v;
      CHECK(sum == Approx(0.0).margin(1e-12));
    }
  }
}

TEST_CASE("periodicity inside the train") {
  const auto w = make_waveform("C3-,C4+");
  const double T = w.period_ms();
  for (int i = 0; i < 500; ++i) {
    const double t = w.onset_ms + T * (i + 0.37) / 500.0;
    for (int k = 1; k < w.n_pulses; ++k) CHECK(cathode_current(w, t) == cathode_current(w, t + k * T));
  }
}

TEST_CASE("biphasic pulses carry zero net charge per period") {
  auto w = make_waveform("C3-,C4+");
  w.shape = PulseShape::biphasic;
  const double dt = 0.001;
  const auto n = static_cast<std::size_t>(std::llround(w.period_ms() / dt));
  std::map<std::size_t, double> charge;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = w.onset_ms + (static_cast<double>(i) + 0.5) * dt;
    for (const auto& [k, v] : current_at(w, t)) charge[k] += v * dt;
  }
  for (const auto& [k, q] : charge) CHECK(q == Approx(0.0).margin(1e-12));
}

TEST_CASE("sampled cathode current snaps edges to the 5 us grid") {
  auto w = make_waveform("C3-");
  w.amplitude_mA = 2.0;
  const auto s = sample_cathode_current(w, 0.005, 400);
  // onset 1 ms = sample 200; 90 us = 18 samples.
  for (std::size_t i = 0; i < 400; ++i) {
    const bool in_pulse = i >= 200 && i < 218;
    CHECK(s[i] == (in_pulse ? -2.0 : 0.0));
  }
}
