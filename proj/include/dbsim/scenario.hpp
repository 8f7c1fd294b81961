#pragma once

// Phase-shift sweeps, firing scores, parameter grids and the polarity /
// traffic-direction study.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dbsim/cable.hpp"
#include "dbsim/field.hpp"
#include "dbsim/fiber.hpp"
#include "dbsim/parallel.hpp"
#include "dbsim/solver.hpp"
#include "dbsim/stimulus.hpp"

namespace dbsim {

struct SweepSettings {
  std::size_t n_shifts = 15;
  double tail_ms = 10.0;          ///< simulated time after the last period of the train
  double drive_dt_ms = 0.005;     ///< extracellular sampling step
  double threshold_mV = 0.0;      ///< spike detection level
  double blanking_ms = 0.0;       ///< ignore crossings this soon after input onset
  std::size_t record_stride = 5;  ///< trace decimation used for detection
  std::size_t jobs = 1;
};

/// Theta_k = k * T / n for k = 0..n-1, in ms; T = 1 / frequency.
inline std::vector<double> phase_shifts(double frequency_hz, std::size_t n_shifts) {
  if (!(frequency_hz > 0.0)) throw InputError("frequency must be positive");
  if (n_shifts == 0) throw InputError("at least one phase shift is required");
  const double period_ms = 1000.0 / frequency_hz;
  std::vector<double> out(n_shifts);
  for (std::size_t k = 0; k < n_shifts; ++k)
    out[k] = period_ms * static_cast<double>(k) / static_cast<double>(n_shifts);
  return out;
}

struct FiringRaster {
  std::vector<std::uint8_t> outcomes;  ///< 1 = fired, per phase shift
  std::vector<double> shifts_ms;
  std::string fiber_id;
  TrafficDirection direction = TrafficDirection::forward;
  StimulusWaveform waveform;
  std::uint64_t seed = 0;

  std::size_t fired() const {
    std::size_t n = 0;
    for (auto o : outcomes) n += o != 0 ? 1 : 0;
    return n;
  }
  bool operator==(const FiringRaster& o) const { return outcomes == o.outcomes; }
};

/// Shifts with firing divided by the number of shifts.
inline double firing_score(const FiringRaster& raster) {
  if (raster.outcomes.empty()) return 0.0;
  return static_cast<double>(raster.fired()) / static_cast<double>(raster.outcomes.size());
}

/// Everything one phase sweep needs, with the extracellular drive built once.
struct SweepJob {
  ExtracellularDrive drive;
  AxonalInput input;
  double duration_ms = 0.0;
  std::vector<double> shifts_ms;
  std::uint64_t seed = 0;
  std::uint64_t cell = 0;
  FiringRaster meta;
  std::string label;  ///< used in error messages
};

inline SweepJob prepare_sweep(const FiberPath& fiber, const FieldSolution& field, StimulusWaveform waveform,
                              const CableConfig& cable, const AxonalInput& input, std::uint64_t seed,
                              const SweepSettings& settings, std::uint64_t cell = 0) {
  if (const auto diags = validate(waveform); !diags.empty())
    throw InputError("invalid waveform: " + diags.front().field + ": " + diags.front().message);
  SweepJob job;
  job.duration_ms = waveform.onset_ms + waveform.train_duration_ms() + settings.tail_ms;
  job.shifts_ms = phase_shifts(waveform.frequency_hz, settings.n_shifts);
  const FiberPath sampled =
      fiber.points.size() == cable.n_comp ? fiber : resample_fiber(fiber, cable.n_comp);
  const auto series =
      sample_potential_series(field, sampled.points, waveform, settings.drive_dt_ms, job.duration_ms);
  job.drive.dt_ms = series.dt_ms;
  job.drive.n_comp = series.n_points;
  job.drive.volts = series.volts;
  // Simulated time must cover the whole drive.
  job.duration_ms = std::max(job.duration_ms, job.drive.span_ms());
  job.input = input;
  job.seed = seed;
  job.cell = cell;
  job.meta.shifts_ms = job.shifts_ms;
  job.meta.fiber_id = fiber.id;
  job.meta.direction = fiber.direction;
  job.meta.waveform = std::move(waveform);
  job.meta.seed = seed;
  return job;
}

/// Fire/no-fire for shift k: input onset is Theta_k after the first pulse.
inline bool run_shift(const SweepJob& job, const CableConfig& cable, std::size_t k, const SweepSettings& settings) {
  AxonalInput input = job.input;
  input.onset_ms = job.meta.waveform.onset_ms + job.shifts_ms.at(k);
  SimulateOptions opts;
  opts.record_stride = settings.record_stride;
  const auto trace = simulate(cable, job.drive, input, job.duration_ms, derive_seed(job.seed, job.cell, k), opts);
  return detect_firing(trace, cable.detection_compartment(), settings.threshold_mV, input.onset_ms,
                       settings.blanking_ms);
}

/// Runs every (job, shift) pair on the worker pool; rasters come back in job order.
inline std::vector<FiringRaster> run_sweeps(const std::vector<SweepJob>& jobs, const CableConfig& cable,
                                            const SweepSettings& settings) {
  std::vector<std::size_t> offset(jobs.size() + 1, 0);
  for (std::size_t j = 0; j < jobs.size(); ++j) offset[j + 1] = offset[j] + jobs[j].shifts_ms.size();
  std::vector<std::uint8_t> flat(offset.back(), 0);
  parallel_for(flat.size(), settings.jobs, [&](std::size_t task) {
    const auto j = static_cast<std::size_t>(std::upper_bound(offset.begin(), offset.end(), task) - offset.begin()) - 1;
    try {
      flat[task] = run_shift(jobs[j], cable, task - offset[j], settings) ? 1 : 0;
    } catch (const NumericalError& e) {
      throw NumericalError((jobs[j].label.empty() ? "fiber '" + jobs[j].meta.fiber_id + "'" : jobs[j].label) +
                           ", shift " + std::to_string(task - offset[j]) + ": " + e.what());
    }
  });
  std::vector<FiringRaster> out;
  out.reserve(jobs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    FiringRaster r = jobs[j].meta;
    r.outcomes.assign(flat.begin() + static_cast<std::ptrdiff_t>(offset[j]),
                      flat.begin() + static_cast<std::ptrdiff_t>(offset[j + 1]));
    out.push_back(std::move(r));
  }
  return out;
}

inline FiringRaster run_phase_sweep(const FiberPath& fiber, const FieldSolution& field,
                                    const StimulusWaveform& waveform, const CableConfig& cable,
                                    const AxonalInput& input, std::uint64_t seed, const SweepSettings& settings = {}) {
  std::vector<SweepJob> jobs{prepare_sweep(fiber, field, waveform, cable, input, seed, settings)};
  return run_sweeps(jobs, cable, settings).front();
}

enum class SweepAxis { pulse_width, frequency };

inline std::string to_string(SweepAxis a) { return a == SweepAxis::pulse_width ? "pulse_width_us" : "frequency_Hz"; }

/// Dense amplitude x (pulse width | frequency) table of firing scores.
struct ScoreTable {
  SweepAxis axis = SweepAxis::pulse_width;
  std::vector<double> amplitudes_mA;
  std::vector<double> axis_values;
  std::vector<FiringRaster> rasters;  ///< row-major: axis value, then amplitude

  std::size_t cell(std::size_t axis_index, std::size_t amplitude_index) const {
    return axis_index * amplitudes_mA.size() + amplitude_index;
  }
  double score(std::size_t axis_index, std::size_t amplitude_index) const {
    return firing_score(rasters.at(cell(axis_index, amplitude_index)));
  }
  /// Smallest swept amplitude with a positive score for one axis value.
  std::optional<double> threshold_amplitude(std::size_t axis_index) const {
    for (std::size_t a = 0; a < amplitudes_mA.size(); ++a)
      if (score(axis_index, a) > 0.0) return amplitudes_mA[a];
    return std::nullopt;
  }
};

struct GridSpec {
  SweepAxis axis = SweepAxis::pulse_width;
  std::vector<double> amplitudes_mA;
  std::vector<double> axis_values;
};

inline ScoreTable grid_sweep(const GridSpec& spec, const StimulusWaveform& base, const FiberPath& fiber,
                             const FieldSolution& field, const CableConfig& cable, const AxonalInput& input,
                             std::uint64_t seed, const SweepSettings& settings = {}) {
  if (spec.amplitudes_mA.empty() || spec.axis_values.empty()) throw InputError("grid sweep axes must be non-empty");
  ScoreTable table;
  table.axis = spec.axis;
  table.amplitudes_mA = spec.amplitudes_mA;
  table.axis_values = spec.axis_values;
  std::vector<SweepJob> jobs;
  for (std::size_t v = 0; v < spec.axis_values.size(); ++v) {
    for (std::size_t a = 0; a < spec.amplitudes_mA.size(); ++a) {
      StimulusWaveform w = base;
      w.amplitude_mA = spec.amplitudes_mA[a];
      (spec.axis == SweepAxis::pulse_width ? w.pulse_width_us : w.frequency_hz) = spec.axis_values[v];
      const std::uint64_t cell = table.cell(v, a);
      const std::string label = "grid cell (" + to_string(spec.axis) + " = " + std::to_string(spec.axis_values[v]) +
                                ", amplitude = " + std::to_string(spec.amplitudes_mA[a]) + " mA)";
      try {
        jobs.push_back(prepare_sweep(fiber, field, w, cable, input, seed, settings, cell));
      } catch (const InputError& e) {
        throw InputError(label + ": " + e.what());
      }
      jobs.back().label = label;
    }
  }
  table.rasters = run_sweeps(jobs, cable, settings);
  return table;
}

struct NamedTract {
  std::string name;
  FiberPath fiber;
};

struct PolarityEntry {
  std::string program;
  std::string tract;
  TrafficDirection direction = TrafficDirection::forward;
  FiringRaster raster;
};

/// One raster per (program, tract, direction); `fields` holds one solved
/// field per program. The flipped direction reverses the fiber's point order.
inline std::vector<PolarityEntry> polarity_study(const std::vector<NamedTract>& tracts,
                                                 const std::vector<const FieldSolution*>& fields,
                                                 const StimulusWaveform& base, const CableConfig& cable,
                                                 const AxonalInput& input, std::uint64_t seed,
                                                 const SweepSettings& settings = {}) {
  std::vector<SweepJob> jobs;
  std::vector<PolarityEntry> entries;
  std::uint64_t cell = 0;
  for (const FieldSolution* field : fields) {
    StimulusWaveform w = base;
    w.program = field->program;
    for (const auto& tract : tracts) {
      for (const auto dir : {TrafficDirection::forward, TrafficDirection::flipped}) {
        const FiberPath f = dir == TrafficDirection::forward ? tract.fiber : flipped(tract.fiber);
        jobs.push_back(prepare_sweep(f, *field, w, cable, input, seed, settings, cell++));
        entries.push_back({field->program.describe(), tract.name, dir, {}});
      }
    }
  }
  auto rasters = run_sweeps(jobs, cable, settings);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].raster = std::move(rasters[i]);
  return entries;
}

}  // namespace dbsim
