#pragma once

// The synthetic near-fiber scenario shipped with the tool: a four-ring lead
// in a homogeneous 50 mm cube, straight 8 mm fibers crossing it at right
// angles with their entry end at the point of closest approach.

#include <string>
#include <vector>

#include "dbsim/cable.hpp"
#include "dbsim/fiber.hpp"
#include "dbsim/grid.hpp"
#include "dbsim/phantom.hpp"
#include "dbsim/scenario.hpp"
#include "dbsim/stimulus.hpp"

namespace dbsim {

struct NearFiberScenario {
  GridGeometry grid = centered_cube(100, 0.5);
  LeadModel lead = standard_lead();
  ContactProgram bipolar = parse_program("C3-,C4+");
  ContactProgram reversed = parse_program("C4-,C3+");
  ContactProgram unipolar = parse_program("C3-");
  CableConfig cable;
  double input_duration_ms = 1.0;
  double calibration_window_ms = 30.0;
  std::vector<double> amplitudes_mA{1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0};
  std::vector<double> pulse_widths_us{30.0, 60.0, 90.0, 120.0};
  std::vector<double> distances_mm{1.0, 2.0, 3.0};

  StimulusWaveform waveform() const {
    StimulusWaveform w;
    w.amplitude_mA = 3.0;
    w.pulse_width_us = 90.0;
    w.frequency_hz = 140.0;
    w.n_pulses = 4;
    w.onset_ms = 1.0;
    w.program = bipolar;
    return w;
  }

  TissueVolume volume() const { return rasterize_lead(uniform_phantom(grid), lead); }

  /// Input template at the entry end; the amplitude still needs calibrating.
  AxonalInput input_template() const {
    AxonalInput in;
    in.compartment = 0;
    in.duration_ms = input_duration_ms;
    return in;
  }

  /// Fibers passing 1, 2 and 3 mm from the surface of C3.
  std::vector<FiberPath> distance_fibers() const {
    std::vector<FiberPath> out;
    for (double d : distances_mm) {
      std::string id = "C3 at " + std::to_string(d).substr(0, 3) + " mm";
      out.push_back(straight_fiber(lead, 2, d, cable.length_mm, {0, 1, 0}, 0.0, id));
    }
    return out;
  }

  FiberPath near_fiber() const { return distance_fibers().front(); }

  /// Two tracts for the polarity study: one entering beside C3, one beside C4
  /// running in another direction.
  std::vector<NamedTract> polarity_tracts() const {
    return {{"dDRTT-like", straight_fiber(lead, 2, 1.0, cable.length_mm, {0, 1, 0}, 0.0, "dDRTT-like")},
            {"ndDRTT-like", straight_fiber(lead, 3, 1.0, cable.length_mm, {1, 0, 0}, 0.0, "ndDRTT-like")}};
  }
};

}  // namespace dbsim
