#pragma once

// Run configuration: one JSON file with sections for the volume, lead,
// solver, stimulus, cable and scenario. Unknown keys are rejected and
// relative paths resolve against the configuration file's directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbsim/cable.hpp"
#include "dbsim/lead.hpp"
#include "dbsim/phantom.hpp"
#include "dbsim/scenario.hpp"
#include "dbsim/solver.hpp"
#include "dbsim/stimulus.hpp"
#include "dbsim/tissue.hpp"

namespace dbsim {

using Json = nlohmann::json;

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

/// Reads one JSON object, tracking which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InputError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw InputError(where_ + ": missing key '" + key + "'");
    return convert<T>(key);
  }

  ObjectReader child(const std::string& key) {
    used_.insert(key);
    return ObjectReader(j_.at(key), where_ + "." + key);
  }

  const Json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return where_ + "." + key; }

  /// Throws on any key that was never read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) throw InputError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  template <class T>
  T convert(const std::string& key) {
    used_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InputError(where_ + "." + key + ": wrong type");
    }
  }

  const Json& j_;
  std::string where_;
  std::set<std::string> used_;
};

inline Vec3 to_vec3(const std::vector<double>& v, const std::string& where) {
  if (v.size() != 3) throw InputError(where + ": expected three numbers");
  return {v[0], v[1], v[2]};
}

struct VolumeSpec {
  std::optional<std::filesystem::path> path;  ///< label volume file; otherwise a phantom
  std::string phantom = "uniform";             ///< uniform | heterogeneous
  std::size_t dims = 100;
  double spacing_mm = 0.5;
  Vec3 center_mm{};
  HeterogeneousLayout layout;
};

struct TractSpec {
  std::string name;
  std::filesystem::path path;
  std::vector<std::size_t> fibers;  ///< empty selects every fiber
};

struct InputSpec {
  std::optional<double> amplitude_nA;  ///< unset: calibrate
  double duration_ms = 1.0;
  double target_fraction = 0.9;
  std::size_t compartment = 0;
  double calibration_window_ms = 30.0;
};

struct GridSweepSpec {
  std::string name;
  std::string tract;
  std::size_t fiber = 0;
  GridSpec grid;
};

struct VtaSpec {
  double threshold_V_per_m = 150.0;
  std::vector<double> amplitudes_mA{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
};

struct PolaritySpec {
  std::vector<ContactProgram> programs;
  std::vector<std::string> tracts;  ///< two tract names
  std::size_t fiber = 0;
};

struct RunConfig {
  std::filesystem::path base_dir;
  std::filesystem::path output_dir = "out";
  VolumeSpec volume;
  SigmaTable sigma_table = default_sigma_table();
  std::optional<LeadModel> lead;
  SolverOptions solver;
  StimulusWaveform stimulus;
  CableConfig cable;
  InputSpec input;
  std::vector<TractSpec> tracts;
  std::uint64_t seed = 1;
  SweepSettings sweep;
  VtaSpec vta;
  std::vector<GridSweepSpec> grids;
  PolaritySpec polarity;
  std::string hash;  ///< of the canonical JSON after overrides

  const TractSpec& tract(const std::string& name) const {
    for (const auto& t : tracts)
      if (t.name == name) return t;
    throw InputError("no tract named '" + name + "' in the configuration");
  }

  /// Every distinct program the scenario needs a field for.
  std::vector<ContactProgram> programs() const {
    std::vector<ContactProgram> out{stimulus.program};
    for (const auto& p : polarity.programs)
      if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    return out;
  }
};

namespace detail {

inline ContactProgram read_program(const Json& j, const std::string& where) {
  if (j.is_string()) return parse_program(j.get<std::string>());
  if (!j.is_object()) throw InputError(where + ": expected \"C3-,C4+\" or an object of contact roles");
  ContactProgram p;
  for (const auto& [name, role] : j.items()) {
    if (name.size() < 2 || (name[0] != 'C' && name[0] != 'c') ||
        name.find_first_not_of("0123456789", 1) != std::string::npos)
      throw InputError(where + ": bad contact name '" + name + "'");
    const std::size_t k = std::stoul(name.substr(1));
    if (k == 0) throw InputError(where + ": contacts are numbered from C1");
    const std::string r = role.is_string() ? role.get<std::string>() : "";
    if (r == "cathode") p.roles[k - 1] = ContactRole::cathode;
    else if (r == "anode") p.roles[k - 1] = ContactRole::anode;
    else if (r == "floating") p.roles[k - 1] = ContactRole::floating;
    else throw InputError(where + "." + name + ": role must be cathode, anode or floating");
  }
  p.validate();
  return p;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw InputError(p.string() + ": file not found");
}

inline void read_volume_block(ObjectReader r, RunConfig& c) {
  if (r.has("path")) c.volume.path = resolve(c.base_dir, r.require<std::string>("path"));
  c.volume.phantom = r.get<std::string>("phantom", c.volume.phantom);
  if (c.volume.phantom != "uniform" && c.volume.phantom != "heterogeneous")
    throw InputError(r.where("phantom") + ": expected uniform or heterogeneous");
  c.volume.dims = r.get<std::size_t>("dims", c.volume.dims);
  c.volume.spacing_mm = r.get<double>("spacing_mm", c.volume.spacing_mm);
  if (r.has("center_mm")) c.volume.center_mm = to_vec3(r.require<std::vector<double>>("center_mm"), r.where("center_mm"));
  if (r.has("layout")) {
    auto l = r.child("layout");
    auto& L = c.volume.layout;
    L.csf_x_min = l.get<double>("csf_x_min_mm", L.csf_x_min);
    L.csf_x_max = l.get<double>("csf_x_max_mm", L.csf_x_max);
    L.csf_half_extent = l.get<double>("csf_half_extent_mm", L.csf_half_extent);
    L.gray_x_max = l.get<double>("gray_x_max_mm", L.gray_x_max);
    l.finish();
  }
  if (c.volume.dims < 3 || !(c.volume.spacing_mm > 0.0)) throw InputError("volume: dims >= 3 and spacing > 0 required");
  r.finish();
}

inline LeadModel read_lead_block(ObjectReader r) {
  LeadModel lead;
  if (r.has("standard_center_mm")) {
    lead = standard_lead(to_vec3(r.require<std::vector<double>>("standard_center_mm"), r.where("standard_center_mm")));
  } else {
    lead = LeadModel::four_ring(to_vec3(r.require<std::vector<double>>("tip_mm"), r.where("tip_mm")));
    if (r.has("axis")) lead.axis = normalized(to_vec3(r.require<std::vector<double>>("axis"), r.where("axis")));
  }
  lead.body_diameter_mm = r.get<double>("body_diameter_mm", lead.body_diameter_mm);
  lead.shaft_length_mm = r.get<double>("shaft_length_mm", lead.shaft_length_mm);
  lead.encapsulation_thickness_mm = r.get<double>("encapsulation_thickness_mm", lead.encapsulation_thickness_mm);
  lead.contact_spacing_mm = r.get<double>("contact_spacing_mm", lead.contact_spacing_mm);
  if (r.has("contacts")) {
    lead.contacts.clear();
    const Json& arr = r.raw("contacts");
    if (!arr.is_array()) throw InputError(r.where("contacts") + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader cr(arr[i], r.where("contacts") + "[" + std::to_string(i) + "]");
      ContactGeometry g;
      g.offset_mm = cr.require<double>("offset_mm");
      g.height_mm = cr.get<double>("height_mm", g.height_mm);
      g.full_ring = cr.get<bool>("full_ring", g.full_ring);
      g.arc_start_deg = cr.get<double>("arc_start_deg", g.arc_start_deg);
      g.arc_end_deg = cr.get<double>("arc_end_deg", g.arc_end_deg);
      cr.finish();
      lead.contacts.push_back(g);
    }
  }
  r.finish();
  lead.validate();
  return lead;
}

inline void read_stimulus_block(ObjectReader r, StimulusWaveform& w) {
  w.amplitude_mA = r.get<double>("amplitude_mA", w.amplitude_mA);
  w.pulse_width_us = r.get<double>("pulse_width_us", w.pulse_width_us);
  w.frequency_hz = r.get<double>("frequency_Hz", w.frequency_hz);
  w.n_pulses = r.get<int>("n_pulses", w.n_pulses);
  w.onset_ms = r.get<double>("onset_ms", w.onset_ms);
  const std::string shape = r.get<std::string>("shape", to_string(w.shape));
  if (shape == "monophasic") w.shape = PulseShape::monophasic;
  else if (shape == "biphasic") w.shape = PulseShape::biphasic;
  else throw InputError(r.where("shape") + ": expected monophasic or biphasic");
  w.program = read_program(r.raw("contacts"), r.where("contacts"));
  r.finish();
  if (const auto diags = validate(w); !diags.empty())
    throw InputError("stimulus." + diags.front().field + ": " + diags.front().message);
}

inline void read_cable_block(ObjectReader r, CableConfig& c, InputSpec& in) {
  c.length_mm = r.get<double>("length_mm", c.length_mm);
  c.n_comp = r.get<std::size_t>("n_comp", c.n_comp);
  c.diameter_um = r.get<double>("diameter_um", c.diameter_um);
  c.axial_resistivity_ohm_cm = r.get<double>("axial_resistivity_ohm_cm", c.axial_resistivity_ohm_cm);
  c.membrane_capacitance_uF_cm2 = r.get<double>("membrane_capacitance_uF_cm2", c.membrane_capacitance_uF_cm2);
  c.g_na_mS_cm2 = r.get<double>("g_na_mS_cm2", c.g_na_mS_cm2);
  c.g_k_mS_cm2 = r.get<double>("g_k_mS_cm2", c.g_k_mS_cm2);
  c.g_leak_mS_cm2 = r.get<double>("g_leak_mS_cm2", c.g_leak_mS_cm2);
  c.e_na_mV = r.get<double>("e_na_mV", c.e_na_mV);
  c.e_k_mV = r.get<double>("e_k_mV", c.e_k_mV);
  c.e_leak_mV = r.get<double>("e_leak_mV", c.e_leak_mV);
  c.temperature_factor = r.get<double>("temperature_factor", c.temperature_factor);
  const std::string gating = r.get<std::string>("gating", to_string(c.gating));
  if (gating == "deterministic") c.gating = GatingMode::deterministic;
  else if (gating == "stochastic") c.gating = GatingMode::stochastic;
  else throw InputError(r.where("gating") + ": expected deterministic or stochastic");
  c.na_channels_per_um2 = r.get<double>("na_channels_per_um2", c.na_channels_per_um2);
  c.k_channels_per_um2 = r.get<double>("k_channels_per_um2", c.k_channels_per_um2);
  c.channel_scale = r.get<double>("channel_scale", c.channel_scale);
  c.dt_ms = r.get<double>("dt_us", c.dt_ms * 1000.0) / 1000.0;
  if (r.has("input")) {
    auto ir = r.child("input");
    if (ir.has("amplitude_nA")) in.amplitude_nA = ir.require<double>("amplitude_nA");
    in.duration_ms = ir.get<double>("duration_ms", in.duration_ms);
    in.target_fraction = ir.get<double>("target_fraction", in.target_fraction);
    in.compartment = ir.get<std::size_t>("compartment", in.compartment);
    in.calibration_window_ms = ir.get<double>("calibration_window_ms", in.calibration_window_ms);
    ir.finish();
  }
  r.finish();
  c.validate();
  if (in.compartment >= c.n_comp) throw InputError("cable.input.compartment out of range");
  if (!(in.duration_ms > 0.0)) throw InputError("cable.input.duration_ms must be positive");
}

inline void read_scenario_block(ObjectReader r, RunConfig& c) {
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.sweep.n_shifts = r.get<std::size_t>("n_shifts", c.sweep.n_shifts);
  c.sweep.tail_ms = r.get<double>("tail_ms", c.sweep.tail_ms);
  c.sweep.threshold_mV = r.get<double>("detection_threshold_mV", c.sweep.threshold_mV);
  c.sweep.blanking_ms = r.get<double>("artifact_blanking_ms", c.sweep.blanking_ms);
  if (r.has("tracts")) {
    const Json& arr = r.raw("tracts");
    if (!arr.is_array()) throw InputError(r.where("tracts") + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader tr(arr[i], r.where("tracts") + "[" + std::to_string(i) + "]");
      TractSpec t;
      t.name = tr.require<std::string>("name");
      t.path = resolve(c.base_dir, tr.require<std::string>("path"));
      t.fibers = tr.get<std::vector<std::size_t>>("fibers", {});
      tr.finish();
      require_file(t.path);
      c.tracts.push_back(std::move(t));
    }
  }
  if (r.has("vta")) {
    auto vr = r.child("vta");
    c.vta.threshold_V_per_m = vr.get<double>("threshold_V_per_m", c.vta.threshold_V_per_m);
    c.vta.amplitudes_mA = vr.get<std::vector<double>>("amplitudes_mA", c.vta.amplitudes_mA);
    vr.finish();
  }
  if (r.has("grids")) {
    const Json& arr = r.raw("grids");
    if (!arr.is_array()) throw InputError(r.where("grids") + ": expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      ObjectReader gr(arr[i], r.where("grids") + "[" + std::to_string(i) + "]");
      GridSweepSpec g;
      g.name = gr.require<std::string>("name");
      g.tract = gr.require<std::string>("tract");
      g.fiber = gr.get<std::size_t>("fiber", 0);
      const std::string axis = gr.require<std::string>("axis");
      if (axis == "pulse_width_us") g.grid.axis = SweepAxis::pulse_width;
      else if (axis == "frequency_Hz") g.grid.axis = SweepAxis::frequency;
      else throw InputError(gr.where("axis") + ": expected pulse_width_us or frequency_Hz");
      g.grid.amplitudes_mA = gr.require<std::vector<double>>("amplitudes_mA");
      g.grid.axis_values = gr.require<std::vector<double>>("values");
      gr.finish();
      if (g.grid.amplitudes_mA.empty() || g.grid.axis_values.empty())
        throw InputError(r.where("grids") + "[" + std::to_string(i) + "]: axes must be non-empty");
      c.grids.push_back(std::move(g));
    }
  }
  if (r.has("polarity")) {
    auto pr = r.child("polarity");
    const Json& progs = pr.raw("programs");
    if (!progs.is_array()) throw InputError(pr.where("programs") + ": expected an array");
    for (std::size_t i = 0; i < progs.size(); ++i)
      c.polarity.programs.push_back(read_program(progs[i], pr.where("programs") + "[" + std::to_string(i) + "]"));
    c.polarity.tracts = pr.require<std::vector<std::string>>("tracts");
    c.polarity.fiber = pr.get<std::size_t>("fiber", 0);
    pr.finish();
  }
  r.finish();
  if (c.sweep.n_shifts == 0) throw InputError("scenario.n_shifts must be positive");
  for (const auto& g : c.grids) (void)c.tract(g.tract);
  for (const auto& t : c.polarity.tracts) (void)c.tract(t);
}

}  // namespace detail

/// Overrides applied before hashing (they change results).
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
};

inline RunConfig parse_config(Json j, const std::filesystem::path& base_dir, const ConfigOverrides& ov = {}) {
  if (!j.is_object()) throw InputError("configuration must be a JSON object");
  if (ov.seed) j["scenario"]["seed"] = *ov.seed;
  RunConfig c;
  c.base_dir = base_dir;
  c.hash = fnv1a_hex(j.dump());
  ObjectReader r(j, "config");
  if (r.has("output_dir")) c.output_dir = detail::resolve(base_dir, r.require<std::string>("output_dir"));
  else c.output_dir = base_dir / "out";
  if (ov.output_dir) c.output_dir = *ov.output_dir;
  if (r.has("sigma_table")) {
    for (const auto& [name, value] : r.raw("sigma_table").items()) {
      if (!value.is_number()) throw InputError("config.sigma_table." + name + ": expected a number");
      c.sigma_table[name] = value.get<double>();
    }
  }
  if (r.has("volume")) detail::read_volume_block(r.child("volume"), c);
  if (c.volume.path) detail::require_file(*c.volume.path);
  if (r.has("lead")) c.lead = detail::read_lead_block(r.child("lead"));
  if (r.has("solver")) {
    auto sr = r.child("solver");
    c.solver.tolerance = sr.get<double>("tolerance", c.solver.tolerance);
    c.solver.max_iterations = sr.get<std::size_t>("max_iterations", c.solver.max_iterations);
    const std::string b = sr.get<std::string>("boundary", "far_field");
    if (b == "far_field") c.solver.boundary = OuterBoundary::far_field;
    else if (b == "dirichlet") c.solver.boundary = OuterBoundary::dirichlet;
    else throw InputError("config.solver.boundary: expected far_field or dirichlet");
    sr.finish();
  }
  detail::read_stimulus_block(r.child("stimulus"), c.stimulus);
  if (r.has("cable")) detail::read_cable_block(r.child("cable"), c.cable, c.input);
  if (r.has("scenario")) detail::read_scenario_block(r.child("scenario"), c);
  r.finish();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& ov = {}) {
  if (!std::filesystem::exists(path)) throw InputError(path.string() + ": file not found");
  std::ifstream in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return parse_config(std::move(j), path.parent_path().empty() ? "." : path.parent_path(), ov);
}

}  // namespace dbsim
