#pragma once

// Command implementations behind the dbsim executable. Each command reads a
// RunConfig, writes its artifacts into the output directory and reports on
// the given stream. Errors surface as InputError (exit 2) or NumericalError
// (exit 1).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dbsim/cable.hpp"
#include "dbsim/config.hpp"
#include "dbsim/field.hpp"
#include "dbsim/fiber.hpp"
#include "dbsim/lead.hpp"
#include "dbsim/phantom.hpp"
#include "dbsim/presets.hpp"
#include "dbsim/render.hpp"
#include "dbsim/scenario.hpp"
#include "dbsim/solver.hpp"

namespace dbsim::app {

namespace fs = std::filesystem;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// File-name friendly form of a program: "C3-,C4+" -> "C3m_C4p".
inline std::string program_slug(const ContactProgram& p) {
  std::string s;
  for (char c : p.describe()) {
    if (c == '-') s += 'm';
    else if (c == '+') s += 'p';
    else if (c == ',') s += '_';
    else s += c;
  }
  return s;
}

inline fs::path field_path(const RunConfig& cfg, const ContactProgram& p) {
  return cfg.output_dir / ("field_" + program_slug(p) + ".raster");
}

inline std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(6) << v;
  return os.str();
}

inline void write_field(const fs::path& path, const FieldSolution& f, const std::string& config_hash) {
  write_scalar_raster(path, f.grid, f.potential,
                      {{"program", f.program.describe()},
                       {"current_mA", format_number(f.current_mA)},
                       {"residual", sci(f.residual)},
                       {"iterations", std::to_string(f.iterations)},
                       {"config", config_hash}});
}

inline FieldSolution read_field(const fs::path& path) {
  auto [header, values] = read_scalar_raster(path);
  FieldSolution f;
  f.grid = header.grid;
  f.potential = std::move(values);
  bool have_program = false;
  for (const auto& [k, v] : header.meta) {
    if (k == "program") { f.program = parse_program(v); have_program = true; }
    else if (k == "current_mA") f.current_mA = std::stod(v);
    else if (k == "residual") f.residual = std::stod(v);
    else if (k == "iterations") f.iterations = std::stoul(v);
  }
  if (!have_program) throw InputError(path.string() + ": field file has no program");
  return f;
}

inline TissueVolume build_volume(const RunConfig& cfg) {
  TissueVolume vol;
  if (cfg.volume.path) {
    vol = read_volume(*cfg.volume.path, cfg.sigma_table);
  } else {
    const GridGeometry grid = centered_cube(cfg.volume.dims, cfg.volume.spacing_mm, cfg.volume.center_mm);
    vol = cfg.volume.phantom == "uniform"
              ? uniform_phantom(grid, labels::background, cfg.sigma_table)
              : heterogeneous_phantom(grid, cfg.volume.center_mm, cfg.volume.layout, cfg.sigma_table);
  }
  if (cfg.lead) vol = rasterize_lead(std::move(vol), *cfg.lead);
  vol.validate();
  return vol;
}

inline FieldSolution load_field(const RunConfig& cfg, const ContactProgram& p) {
  const fs::path path = field_path(cfg, p);
  if (!fs::exists(path))
    throw InputError("no field solution for program " + p.describe() + " at " + path.string() +
                     "; run solve-field first");
  return read_field(path);
}

inline std::vector<FiberPath> load_tract(const TractSpec& t) {
  auto all = read_tract_file(t.path);
  if (t.fibers.empty()) return all;
  std::vector<FiberPath> out;
  for (std::size_t i : t.fibers) {
    if (i >= all.size())
      throw InputError(t.path.string() + ": fiber index " + std::to_string(i) + " out of range (" +
                       std::to_string(all.size()) + " fibers)");
    out.push_back(all[i]);
  }
  return out;
}

inline FiberPath load_fiber(const RunConfig& cfg, const std::string& tract, std::size_t index) {
  const auto& spec = cfg.tract(tract);
  auto all = read_tract_file(spec.path);
  if (index >= all.size())
    throw InputError(spec.path.string() + ": fiber index " + std::to_string(index) + " out of range");
  return all[index];
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline void ensure_output_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw InputError(cfg.output_dir.string() + ": cannot create output directory");
}

struct CalibrationResult {
  AxonalInput input;
  double threshold_nA = 0.0;
  bool from_config = false;
};

/// Input amplitude from the configuration, or by calibrating a
/// deterministic copy of the cable.
inline CalibrationResult resolve_input(const RunConfig& cfg) {
  CalibrationResult r;
  r.input.compartment = cfg.input.compartment;
  r.input.duration_ms = cfg.input.duration_ms;
  if (cfg.input.amplitude_nA) {
    r.input.amplitude_nA = *cfg.input.amplitude_nA;
    r.from_config = true;
    return r;
  }
  CableConfig det = cfg.cable;
  det.gating = GatingMode::deterministic;
  const auto search = find_input_threshold(det, r.input, cfg.input.calibration_window_ms, cfg.seed);
  r.threshold_nA = search.threshold_nA;
  r.input.amplitude_nA = cfg.input.target_fraction * search.threshold_nA;
  return r;
}

inline Json provenance(const RunConfig& cfg, const std::string& command, double seconds) {
  Json j;
  j["command"] = command;
  j["config_hash"] = cfg.hash;
  j["seed"] = cfg.seed;
  j["seconds"] = seconds;
  return j;
}

// ---------------------------------------------------------------------------

inline int solve_field_cmd(const RunConfig& cfg, std::ostream& out) {
  const Stopwatch total;
  ensure_output_dir(cfg);
  const TissueVolume vol = build_volume(cfg);
  Json solves = Json::array();
  for (const auto& program : cfg.programs()) {
    const Stopwatch sw;
    const FieldSolution f = solve_unit_field(vol, program, cfg.solver);
    const fs::path path = field_path(cfg, program);
    write_field(path, f, cfg.hash);
    out << program.describe() << ": residual " << sci(f.residual) << ", iterations " << f.iterations << ", "
        << std::fixed << std::setprecision(1) << sw.seconds() << " s -> " << path.string() << '\n';
    out.unsetf(std::ios::floatfield);
    solves.push_back({{"program", program.describe()},
                      {"residual", f.residual},
                      {"iterations", f.iterations},
                      {"seconds", sw.seconds()},
                      {"file", path.filename().string()}});
  }
  Json prov = provenance(cfg, "solve-field", total.seconds());
  prov["solves"] = solves;
  write_json(cfg.output_dir / "provenance_solve-field.json", prov);
  return 0;
}

inline int vta_cmd(const RunConfig& cfg, std::optional<double> threshold, std::optional<std::vector<double>> amplitudes,
                   std::ostream& out) {
  const Stopwatch total;
  ensure_output_dir(cfg);
  const double thr = threshold.value_or(cfg.vta.threshold_V_per_m);
  const auto amps = amplitudes.value_or(cfg.vta.amplitudes_mA);
  if (!(thr > 0.0)) throw InputError("VTA threshold must be positive");
  const FieldSolution f = load_field(cfg, cfg.stimulus.program);
  const TissueVolume vol = build_volume(cfg);
  if (!(vol.grid == f.grid)) throw InputError("field solution grid does not match the configured volume");
  const auto unit_norm = efield_norm(f, 1.0);
  const auto exclude = lead_interior_mask(vol);

  std::vector<std::pair<std::string, std::vector<FiberPath>>> tracts;
  for (const auto& t : cfg.tracts) {
    auto fibers = load_tract(t);
    for (auto& fb : fibers) fb = resample_fiber(fb, cfg.cable.n_comp);
    tracts.emplace_back(t.name, std::move(fibers));
  }
  std::vector<VtaRow> rows;
  std::vector<double> norm(unit_norm.size());
  for (double a : amps) {
    if (a < 0.0) throw InputError("amplitudes must be non-negative");
    for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = unit_norm[i] * a;
    const VtaResult vta = static_vta(norm, f.grid, thr, exclude);
    if (tracts.empty()) rows.push_back({a, "none", vta.volume_mm3, 0.0});
    for (const auto& [name, fibers] : tracts) {
      const auto ov = tract_overlap(vta, f.grid, fibers);
      for (const auto& w : ov.warnings) std::cerr << "warning: " << w << '\n';
      rows.push_back({a, name, vta.volume_mm3, ov.aggregate});
    }
    out << "amplitude " << format_number(a) << " mA: VTA " << format_number(vta.volume_mm3) << " mm^3\n";
  }
  write_vta_csv(cfg.output_dir / "vta.csv", rows, thr, cfg.hash);
  write_text(cfg.output_dir / "vta.svg", vta_svg(rows));
  Json prov = provenance(cfg, "vta", total.seconds());
  prov["threshold_V_per_m"] = thr;
  prov["field_residual"] = f.residual;
  write_json(cfg.output_dir / "provenance_vta.json", prov);
  return 0;
}

inline void write_trace_csv(const fs::path& path, const MembraneTrace& trace, const std::string& config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError(path.string() + ": cannot write");
  os << preamble_line({"trace", 1, config_hash}) << '\n' << "time_ms,compartment,mV\n";
  for (std::size_t i = 0; i < trace.n_samples(); ++i)
    for (std::size_t c = 0; c < trace.n_comp; ++c)
      os << format_number(trace.time(i)) << ',' << c << ',' << format_number(trace.at(i, c)) << '\n';
}

inline int calibrate_cmd(const RunConfig& cfg, std::optional<fs::path> trace_path, std::ostream& out) {
  const Stopwatch total;
  ensure_output_dir(cfg);
  const auto cal = resolve_input(cfg);
  if (cal.from_config) out << "input amplitude fixed by configuration: " << format_number(cal.input.amplitude_nA) << " nA\n";
  else
    out << "firing threshold " << format_number(cal.threshold_nA) << " nA; input set to "
        << format_number(cal.input.amplitude_nA) << " nA (" << format_number(cfg.input.target_fraction)
        << " x threshold)\n";
  Json j = provenance(cfg, "calibrate", total.seconds());
  j["threshold_nA"] = cal.threshold_nA;
  j["input_amplitude_nA"] = cal.input.amplitude_nA;
  j["input_duration_ms"] = cal.input.duration_ms;
  j["target_fraction"] = cfg.input.target_fraction;
  write_json(cfg.output_dir / "calibration.json", j);
  if (trace_path) {
    AxonalInput in = cal.input;
    in.onset_ms = 1.0;
    SimulateOptions opts;
    opts.record_stride = 10;
    const auto trace = simulate(cfg.cable, ExtracellularDrive{}, in, cfg.input.calibration_window_ms, cfg.seed, opts);
    write_trace_csv(*trace_path, trace, cfg.hash);
  }
  return 0;
}

inline SweepSettings sweep_settings(const RunConfig& cfg, std::size_t jobs) {
  SweepSettings s = cfg.sweep;
  s.jobs = jobs;
  return s;
}

inline int sweep_cmd(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
  const Stopwatch total;
  ensure_output_dir(cfg);
  const auto cal = resolve_input(cfg);
  const auto settings = sweep_settings(cfg, jobs);
  const FieldSolution base_field = load_field(cfg, cfg.stimulus.program);

  // One phase sweep per configured fiber at the base stimulus.
  std::vector<SweepJob> sweep_jobs;
  std::vector<std::string> tract_of_job;
  std::uint64_t cell = 0;
  for (const auto& t : cfg.tracts) {
    for (const auto& fiber : load_tract(t)) {
      sweep_jobs.push_back(prepare_sweep(fiber, base_field, cfg.stimulus, cfg.cable, cal.input, cfg.seed, settings, cell++));
      tract_of_job.push_back(t.name);
    }
  }
  if (!sweep_jobs.empty()) {
    const auto rasters = run_sweeps(sweep_jobs, cfg.cable, settings);
    std::vector<RasterRow> rows;
    for (std::size_t i = 0; i < rasters.size(); ++i) {
      rows.push_back(raster_row(rasters[i], cfg.stimulus.program.describe(), tract_of_job[i]));
      out << tract_of_job[i] << " / " << rasters[i].fiber_id << ": " << raster_string(rasters[i]) << "  score "
          << format_number(firing_score(rasters[i])) << '\n';
    }
    write_raster_csv(cfg.output_dir / "phase_rasters.csv", rows, cfg.hash);
    write_text(cfg.output_dir / "phase_rasters.svg", raster_svg(rows));
  }

  Json grids = Json::array();
  for (const auto& g : cfg.grids) {
    const FiberPath fiber = load_fiber(cfg, g.tract, g.fiber);
    const ScoreTable table = grid_sweep(g.grid, cfg.stimulus, fiber, base_field, cfg.cable, cal.input, cfg.seed, settings);
    write_score_csv(cfg.output_dir / ("scores_" + g.name + ".csv"), table, cfg.hash);
    write_text(cfg.output_dir / ("heatmap_" + g.name + ".pgm"), heatmap_pgm(to_score_grid(table)));
    std::vector<RasterRow> rows;
    for (std::size_t v = 0; v < table.axis_values.size(); ++v)
      for (std::size_t a = 0; a < table.amplitudes_mA.size(); ++a)
        rows.push_back(raster_row(table.rasters[table.cell(v, a)],
                                  to_string(table.axis) + "=" + format_number(table.axis_values[v]) + " " +
                                      format_number(table.amplitudes_mA[a]) + "mA",
                                  g.tract));
    write_text(cfg.output_dir / ("rasters_" + g.name + ".svg"), raster_svg(rows));
    out << "grid " << g.name << ": " << table.rasters.size() << " cells -> scores_" << g.name << ".csv\n";
    grids.push_back(g.name);
  }
  Json prov = provenance(cfg, "sweep", total.seconds());
  prov["input_amplitude_nA"] = cal.input.amplitude_nA;
  prov["field_residual"] = base_field.residual;
  prov["grids"] = grids;
  write_json(cfg.output_dir / "provenance_sweep.json", prov);
  return 0;
}

inline int polarity_cmd(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
  const Stopwatch total;
  ensure_output_dir(cfg);
  if (cfg.polarity.programs.empty() || cfg.polarity.tracts.empty())
    throw InputError("scenario.polarity needs programs and tracts");
  const auto cal = resolve_input(cfg);
  std::vector<FieldSolution> fields;
  for (const auto& p : cfg.polarity.programs) fields.push_back(load_field(cfg, p));
  std::vector<const FieldSolution*> ptrs;
  for (const auto& f : fields) ptrs.push_back(&f);
  std::vector<NamedTract> tracts;
  for (const auto& name : cfg.polarity.tracts) tracts.push_back({name, load_fiber(cfg, name, cfg.polarity.fiber)});
  const auto entries = polarity_study(tracts, ptrs, cfg.stimulus, cfg.cable, cal.input, cfg.seed, sweep_settings(cfg, jobs));
  std::vector<RasterRow> rows;
  Json panel = Json::array();
  for (const auto& e : entries) {
    rows.push_back(raster_row(e.raster, e.program, e.tract));
    out << std::left << std::setw(10) << e.program << std::setw(14) << e.tract << std::setw(9) << to_string(e.direction)
        << raster_string(e.raster) << '\n';
    panel.push_back({{"program", e.program}, {"tract", e.tract}, {"direction", to_string(e.direction)},
                     {"seed", e.raster.seed}, {"raster", raster_string(e.raster)}});
  }
  write_raster_csv(cfg.output_dir / "polarity.csv", rows, cfg.hash);
  write_text(cfg.output_dir / "polarity.svg", raster_svg(rows));
  Json prov = provenance(cfg, "polarity", total.seconds());
  prov["input_amplitude_nA"] = cal.input.amplitude_nA;
  prov["panel"] = panel;
  Json residuals = Json::object();
  for (const auto& f : fields) residuals[f.program.describe()] = f.residual;
  prov["field_residuals"] = residuals;
  write_json(cfg.output_dir / "provenance_polarity.json", prov);
  return 0;
}

/// Re-renders the image that belongs to a CSV table.
inline int render_cmd(const fs::path& csv, std::optional<fs::path> output, std::ostream& out) {
  if (!fs::exists(csv)) throw InputError(csv.string() + ": file not found");
  std::ifstream in(csv);
  std::string first;
  std::getline(in, first);
  const CsvPreamble pre = parse_preamble(first, csv.string());
  fs::path target;
  if (pre.kind == "scores") {
    target = output.value_or(fs::path(csv).replace_extension(".pgm"));
    write_text(target, heatmap_pgm(read_score_csv(csv).second));
  } else if (pre.kind == "rasters") {
    target = output.value_or(fs::path(csv).replace_extension(".svg"));
    write_text(target, raster_svg(read_raster_csv(csv).second));
  } else if (pre.kind == "vta") {
    target = output.value_or(fs::path(csv).replace_extension(".svg"));
    write_text(target, vta_svg(read_vta_csv(csv).second));
  } else {
    throw InputError(csv.string() + ": cannot render tables of kind '" + pre.kind + "'");
  }
  out << "wrote " << target.string() << " (config " << pre.config_hash << ")\n";
  return 0;
}

/// Writes the synthetic near-fiber scenario: config.json plus tract files.
inline int make_scenario_cmd(const fs::path& dir, std::ostream& out) {
  const NearFiberScenario sc;
  std::error_code ec;
  fs::create_directories(dir / "tracts", ec);
  if (ec) throw InputError(dir.string() + ": cannot create directory");
  write_tract_file(dir / "tracts" / "distance.txt", sc.distance_fibers());
  const auto tracts = sc.polarity_tracts();
  write_tract_file(dir / "tracts" / "ddrtt_like.txt", {tracts[0].fiber});
  write_tract_file(dir / "tracts" / "nddrtt_like.txt", {tracts[1].fiber});
  const StimulusWaveform w = sc.waveform();
  Json j;
  j["output_dir"] = "out";
  j["volume"] = {{"phantom", "uniform"}, {"dims", sc.grid.dims[0]}, {"spacing_mm", sc.grid.spacing_mm.x}};
  j["lead"] = {{"standard_center_mm", {0.0, 0.0, 0.0}}};
  j["solver"] = {{"tolerance", 1e-8}, {"boundary", "far_field"}};
  j["stimulus"] = {{"amplitude_mA", w.amplitude_mA}, {"pulse_width_us", w.pulse_width_us},
                   {"frequency_Hz", w.frequency_hz}, {"n_pulses", w.n_pulses},
                   {"onset_ms", w.onset_ms},         {"shape", "monophasic"},
                   {"contacts", w.program.describe()}};
  j["cable"] = {{"gating", "deterministic"},
                {"input", {{"duration_ms", sc.input_duration_ms}, {"target_fraction", 0.9},
                           {"calibration_window_ms", sc.calibration_window_ms}}}};
  j["scenario"] = {
      {"seed", 1},
      {"n_shifts", 15},
      {"tracts", Json::array({Json{{"name", "distance"}, {"path", "tracts/distance.txt"}},
                              Json{{"name", tracts[0].name}, {"path", "tracts/ddrtt_like.txt"}},
                              Json{{"name", tracts[1].name}, {"path", "tracts/nddrtt_like.txt"}}})},
      {"vta", {{"threshold_V_per_m", 150.0}, {"amplitudes_mA", {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0}}}},
      {"grids", Json::array({Json{{"name", "pulse_width"}, {"tract", "distance"}, {"fiber", 0},
                                  {"axis", "pulse_width_us"}, {"amplitudes_mA", sc.amplitudes_mA},
                                  {"values", sc.pulse_widths_us}},
                             Json{{"name", "frequency"}, {"tract", "distance"}, {"fiber", 0},
                                  {"axis", "frequency_Hz"}, {"amplitudes_mA", sc.amplitudes_mA},
                                  {"values", {60.0, 100.0, 140.0, 180.0}}}})},
      {"polarity", {{"programs", {sc.bipolar.describe(), sc.reversed.describe(), sc.unipolar.describe()}},
                    {"tracts", {tracts[0].name, tracts[1].name}}}}};
  write_json(dir / "config.json", j);
  out << "wrote " << (dir / "config.json").string() << " and tract files\n";
  return 0;
}

}  // namespace dbsim::app
