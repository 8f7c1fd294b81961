#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dbsim/core.hpp"
#include "dbsim/grid.hpp"

namespace dbsim {

using LabelCode = std::uint8_t;

namespace labels {
inline constexpr LabelCode background = 0;
inline constexpr LabelCode gray = 1;
inline constexpr LabelCode white = 2;
inline constexpr LabelCode csf = 3;
inline constexpr LabelCode encapsulation = 4;
inline constexpr LabelCode insulator = 5;
/// Contact k (0-based) carries code contact_base + k.
inline constexpr LabelCode contact_base = 16;
inline constexpr std::size_t max_contacts = 32;

constexpr bool is_contact(LabelCode c) { return c >= contact_base && c < contact_base + max_contacts; }
constexpr std::size_t contact_index(LabelCode c) { return static_cast<std::size_t>(c - contact_base); }
constexpr LabelCode contact(std::size_t k) { return static_cast<LabelCode>(contact_base + k); }
constexpr bool is_lead(LabelCode c) { return c == insulator || is_contact(c); }

inline std::string name_of(LabelCode c) {
  switch (c) {
    case background: return "background";
    case gray: return "gray";
    case white: return "white";
    case csf: return "csf";
    case encapsulation: return "encapsulation";
    case insulator: return "insulator";
    default: break;
  }
  if (is_contact(c)) return "contact-" + std::to_string(contact_index(c) + 1);
  return "label-" + std::to_string(c);
}
}  // namespace labels

using SigmaTable = std::map<std::string, double>;

/// Conductivities in S/m. Contacts fall back to the "contact" entry when no
/// per-contact "contact-k" entry exists.
inline SigmaTable default_sigma_table() {
  return {{"background", 0.1}, {"gray", 0.09},         {"white", 0.06},      {"csf", 2.0},
          {"encapsulation", 0.18}, {"insulator", 1e-6}, {"contact", 1e6}};
}

/// Labelled voxel volume plus the label -> conductivity table.
struct TissueVolume {
  GridGeometry grid;
  std::vector<LabelCode> labels;
  SigmaTable sigma_table = default_sigma_table();

  TissueVolume() = default;
  TissueVolume(GridGeometry g, LabelCode fill, SigmaTable table = default_sigma_table())
      : grid(g), labels(g.size(), fill), sigma_table(std::move(table)) {}

  LabelCode& at(std::size_t i, std::size_t j, std::size_t k) { return labels[grid.index(i, j, k)]; }
  LabelCode at(std::size_t i, std::size_t j, std::size_t k) const { return labels[grid.index(i, j, k)]; }

  double sigma_of(LabelCode code) const {
    const std::string name = labels::name_of(code);
    if (auto it = sigma_table.find(name); it != sigma_table.end()) return it->second;
    if (labels::is_contact(code)) {
      if (auto it = sigma_table.find("contact"); it != sigma_table.end()) return it->second;
    }
    throw InputError("no conductivity for tissue label '" + name + "'");
  }

  std::set<LabelCode> present_labels() const { return {labels.begin(), labels.end()}; }

  std::size_t count(LabelCode code) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), code));
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (!(grid.spacing_mm[a] > 0.0)) throw InputError("voxel spacing must be positive");
      if (grid.dims[static_cast<std::size_t>(a)] == 0) throw InputError("grid dimensions must be positive");
    }
    if (labels.size() != grid.size()) throw InputError("label count does not match grid dimensions");
    for (const auto& [name, sigma] : sigma_table) {
      if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw InputError("conductivity of '" + name + "' must be finite and positive");
    }
    for (LabelCode code : present_labels()) (void)sigma_of(code);
  }

  /// Per-voxel conductivity in S/m.
  std::vector<double> conductivity() const {
    std::array<double, 256> lut{};
    for (LabelCode code : present_labels()) lut[code] = sigma_of(code);
    std::vector<double> out(labels.size());
    std::transform(labels.begin(), labels.end(), out.begin(), [&](LabelCode c) { return lut[c]; });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Raster files: a short text header followed by raw little-endian samples.
//
//   DBSIM-RASTER 1
//   dims 100 100 100
//   spacing 0.5 0.5 0.5
//   origin -25 -25 -25
//   labels 0:background 2:white ...      (label volumes)
//   meta <key> <value...>                (optional, repeatable)
//   data uint8 | float32
//   end
//   <payload>

struct RasterHeader {
  GridGeometry grid;
  std::string data_type;
  std::map<LabelCode, std::string> label_names;
  std::vector<std::pair<std::string, std::string>> meta;
};

namespace detail {

inline void write_header(std::ostream& os, const RasterHeader& h) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "DBSIM-RASTER 1\n";
  ss << "dims " << h.grid.dims[0] << ' ' << h.grid.dims[1] << ' ' << h.grid.dims[2] << '\n';
  ss << "spacing " << h.grid.spacing_mm.x << ' ' << h.grid.spacing_mm.y << ' ' << h.grid.spacing_mm.z << '\n';
  ss << "origin " << h.grid.origin_mm.x << ' ' << h.grid.origin_mm.y << ' ' << h.grid.origin_mm.z << '\n';
  if (!h.label_names.empty()) {
    ss << "labels";
    for (const auto& [code, name] : h.label_names) ss << ' ' << static_cast<int>(code) << ':' << name;
    ss << '\n';
  }
  for (const auto& [k, v] : h.meta) ss << "meta " << k << ' ' << v << '\n';
  ss << "data " << h.data_type << "\nend\n";
  os << ss.str();
}

inline RasterHeader read_header(std::istream& is, const std::string& path) {
  RasterHeader h;
  std::string line;
  if (!std::getline(is, line) || line != "DBSIM-RASTER 1")
    throw InputError(path + ": not a raster file (bad magic line)");
  bool have_dims = false;
  while (std::getline(is, line)) {
    if (line == "end") {
      if (!have_dims || h.data_type.empty()) throw InputError(path + ": incomplete header");
      return h;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dims") {
      ls >> h.grid.dims[0] >> h.grid.dims[1] >> h.grid.dims[2];
      have_dims = static_cast<bool>(ls);
    } else if (key == "spacing") {
      ls >> h.grid.spacing_mm.x >> h.grid.spacing_mm.y >> h.grid.spacing_mm.z;
    } else if (key == "origin") {
      ls >> h.grid.origin_mm.x >> h.grid.origin_mm.y >> h.grid.origin_mm.z;
    } else if (key == "labels") {
      std::string tok;
      while (ls >> tok) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) throw InputError(path + ": malformed label entry '" + tok + "'");
        h.label_names[static_cast<LabelCode>(std::stoi(tok.substr(0, colon)))] = tok.substr(colon + 1);
      }
    } else if (key == "meta") {
      std::string k;
      ls >> k;
      std::string rest;
      std::getline(ls >> std::ws, rest);
      h.meta.emplace_back(k, rest);
    } else if (key == "data") {
      ls >> h.data_type;
    } else {
      throw InputError(path + ": unknown header key '" + key + "'");
    }
    if (!ls && key != "meta" && key != "labels") throw InputError(path + ": malformed header line '" + line + "'");
  }
  throw InputError(path + ": header not terminated");
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError(path.string() + ": file not found");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path.string() + ": cannot open");
  return in;
}

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
}

}  // namespace detail

inline void write_volume(const std::filesystem::path& path, const TissueVolume& vol) {
  RasterHeader h;
  h.grid = vol.grid;
  h.data_type = "uint8";
  for (LabelCode c : vol.present_labels()) h.label_names[c] = labels::name_of(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot write");
  detail::write_header(out, h);
  out.write(reinterpret_cast<const char*>(vol.labels.data()), static_cast<std::streamsize>(vol.labels.size()));
}

/// Reads a label volume. Label names in the header must match the built-in
/// code table so conductivities resolve consistently.
inline TissueVolume read_volume(const std::filesystem::path& path, SigmaTable sigma_table) {
  auto in = detail::open_input(path);
  const RasterHeader h = detail::read_header(in, path.string());
  if (h.data_type != "uint8") throw InputError(path.string() + ": label volume must have uint8 data");
  for (const auto& [code, name] : h.label_names) {
    if (labels::name_of(code) != name)
      throw InputError(path.string() + ": label " + std::to_string(code) + " is '" + name + "', expected '" +
                       labels::name_of(code) + "'");
  }
  TissueVolume vol;
  vol.grid = h.grid;
  vol.sigma_table = std::move(sigma_table);
  vol.labels.resize(h.grid.size());
  in.read(reinterpret_cast<char*>(vol.labels.data()), static_cast<std::streamsize>(vol.labels.size()));
  if (static_cast<std::size_t>(in.gcount()) != vol.labels.size())
    throw InputError(path.string() + ": truncated label payload");
  vol.validate();
  return vol;
}

/// Writes a scalar field as float32 samples with the raster header.
inline void write_scalar_raster(const std::filesystem::path& path, const GridGeometry& grid,
                                const std::vector<double>& values,
                                const std::vector<std::pair<std::string, std::string>>& meta) {
  RasterHeader h;
  h.grid = grid;
  h.data_type = "float32";
  h.meta = meta;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot write");
  detail::write_header(out, h);
  std::vector<std::uint32_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    raw[i] = detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

inline std::pair<RasterHeader, std::vector<double>> read_scalar_raster(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  RasterHeader h = detail::read_header(in, path.string());
  if (h.data_type != "float32") throw InputError(path.string() + ": expected float32 data");
  std::vector<std::uint32_t> raw(h.grid.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != raw.size() * 4)
    throw InputError(path.string() + ": truncated float payload");
  std::vector<double> values(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    values[i] = static_cast<double>(std::bit_cast<float>(detail::to_little_endian(raw[i])));
  return {std::move(h), std::move(values)};
}

}  // namespace dbsim
