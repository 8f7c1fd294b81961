#pragma once

// Result files: versioned CSV tables and dependency-free images (binary
// PGM heatmaps, SVG rasters). Every file carries the configuration hash in
// its first line: "# dbsim <kind> schema=<n> config=<hash>".

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dbsim/core.hpp"
#include "dbsim/scenario.hpp"

namespace dbsim {

inline constexpr int score_schema = 1;
inline constexpr int vta_schema = 1;
inline constexpr int raster_schema = 1;

struct CsvPreamble {
  std::string kind;
  int schema = 0;
  std::string config_hash;
};

inline std::string preamble_line(const CsvPreamble& p) {
  return "# dbsim " + p.kind + " schema=" + std::to_string(p.schema) + " config=" + p.config_hash;
}

inline CsvPreamble parse_preamble(const std::string& line, const std::string& path) {
  std::istringstream is(line);
  std::string hash_mark, tool, schema, config;
  CsvPreamble p;
  if (!(is >> hash_mark >> tool >> p.kind >> schema >> config) || hash_mark != "#" || tool != "dbsim" ||
      schema.rfind("schema=", 0) != 0 || config.rfind("config=", 0) != 0)
    throw InputError(path + ": missing dbsim preamble line");
  p.schema = std::stoi(schema.substr(7));
  p.config_hash = config.substr(7);
  return p;
}

/// Splits one CSV line; fields may be double-quoted with "" for a quote.
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

/// Quotes a field when it holds a comma or a quote.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline std::string raster_string(const FiringRaster& r) {
  std::string s;
  for (auto o : r.outcomes) s += o != 0 ? '1' : '0';
  return s;
}

// ---------------------------------------------------------------------------
// Score tables

/// Score grid as stored on disk; enough to re-render without re-simulating.
struct ScoreGrid {
  std::string axis;
  std::vector<double> amplitudes_mA;
  std::vector<double> axis_values;
  std::vector<double> scores;  ///< row-major: axis value, then amplitude

  double at(std::size_t axis_index, std::size_t amplitude_index) const {
    return scores.at(axis_index * amplitudes_mA.size() + amplitude_index);
  }
};

inline ScoreGrid to_score_grid(const ScoreTable& t) {
  ScoreGrid g;
  g.axis = to_string(t.axis);
  g.amplitudes_mA = t.amplitudes_mA;
  g.axis_values = t.axis_values;
  for (const auto& r : t.rasters) g.scores.push_back(firing_score(r));
  return g;
}

inline void write_score_csv(const std::filesystem::path& path, const ScoreTable& t, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot write");
  out << preamble_line({"scores", score_schema, config_hash}) << '\n';
  out << "axis,axis_value,amplitude_mA,score,fired,n_shifts,raster\n";
  for (std::size_t v = 0; v < t.axis_values.size(); ++v) {
    for (std::size_t a = 0; a < t.amplitudes_mA.size(); ++a) {
      const auto& r = t.rasters.at(t.cell(v, a));
      out << to_string(t.axis) << ',' << format_number(t.axis_values[v]) << ',' << format_number(t.amplitudes_mA[a])
          << ',' << format_number(firing_score(r)) << ',' << r.fired() << ',' << r.outcomes.size() << ','
          << raster_string(r) << '\n';
    }
  }
}

inline std::pair<CsvPreamble, ScoreGrid> read_score_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + ": file not found");
  std::string line;
  std::getline(in, line);
  const CsvPreamble pre = parse_preamble(line, path.string());
  if (pre.kind != "scores" || pre.schema != score_schema)
    throw InputError(path.string() + ": expected a schema " + std::to_string(score_schema) + " score table");
  std::getline(in, line);  // column names
  ScoreGrid g;
  std::map<double, std::size_t> amp_index, axis_index;
  std::vector<std::tuple<double, double, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw InputError(path.string() + ": malformed row '" + line + "'");
    g.axis = f[0];
    rows.emplace_back(std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
  }
  for (const auto& [v, a, s] : rows) {
    if (!axis_index.contains(v)) { axis_index[v] = g.axis_values.size(); g.axis_values.push_back(v); }
    if (!amp_index.contains(a)) { amp_index[a] = g.amplitudes_mA.size(); g.amplitudes_mA.push_back(a); }
  }
  g.scores.assign(g.axis_values.size() * g.amplitudes_mA.size(), 0.0);
  for (const auto& [v, a, s] : rows) g.scores[axis_index[v] * g.amplitudes_mA.size() + amp_index[a]] = s;
  return {pre, g};
}

/// Grey level of a score: 0 -> 255 (white), 1 -> 0 (black).
inline std::uint8_t score_gray(double score) {
  const double s = std::clamp(score, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - s)));
}

/// Binary PGM, one `cell_px` square per cell; amplitude runs left to right,
/// the swept axis top to bottom in table order.
inline std::string heatmap_pgm(const ScoreGrid& g, std::size_t cell_px = 16) {
  const std::size_t w = g.amplitudes_mA.size() * cell_px;
  const std::size_t h = g.axis_values.size() * cell_px;
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.push_back(static_cast<char>(score_gray(g.at(y / cell_px, x / cell_px))));
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot write");
  out << content;
}

// ---------------------------------------------------------------------------
// Rasters

struct RasterRow {
  std::string program;
  std::string tract;
  std::string direction;
  std::string fiber_id;
  std::uint64_t seed = 0;
  double frequency_hz = 0.0;
  double onset_ms = 0.0;
  int n_pulses = 0;
  std::string outcomes;  ///< '0'/'1' per shift
};

inline RasterRow raster_row(const FiringRaster& r, std::string program, std::string tract) {
  return {std::move(program), std::move(tract), to_string(r.direction), r.fiber_id, r.seed,
          r.waveform.frequency_hz, r.waveform.onset_ms, r.waveform.n_pulses, raster_string(r)};
}

inline void write_raster_csv(const std::filesystem::path& path, const std::vector<RasterRow>& rows,
                             const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot write");
  out << preamble_line({"rasters", raster_schema, config_hash}) << '\n';
  out << "program,tract,direction,fiber,seed,frequency_hz,onset_ms,n_pulses,score,raster\n";
  for (const auto& r : rows) {
    std::size_t fired = 0;
    for (char c : r.outcomes) fired += c == '1' ? 1 : 0;
    const double score = r.outcomes.empty() ? 0.0 : static_cast<double>(fired) / static_cast<double>(r.outcomes.size());
    out << csv_field(r.program) << ',' << csv_field(r.tract) << ',' << r.direction << ',' << csv_field(r.fiber_id) << ',' << r.seed << ','
        << format_number(r.frequency_hz) << ',' << format_number(r.onset_ms) << ',' << r.n_pulses << ','
        << format_number(score) << ',' << r.outcomes << '\n';
  }
}

inline std::pair<CsvPreamble, std::vector<RasterRow>> read_raster_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + ": file not found");
  std::string line;
  std::getline(in, line);
  const CsvPreamble pre = parse_preamble(line, path.string());
  if (pre.kind != "rasters" || pre.schema != raster_schema)
    throw InputError(path.string() + ": expected a schema " + std::to_string(raster_schema) + " raster table");
  std::getline(in, line);
  std::vector<RasterRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 10) throw InputError(path.string() + ": malformed row '" + line + "'");
    rows.push_back({f[0], f[1], f[2], f[3], std::stoull(f[4]), std::stod(f[5]), std::stod(f[6]), std::stoi(f[7]), f[9]});
  }
  return {pre, rows};
}

/// Raster strip per row: cells for the shifts over the first period, red =
/// fired, blue = silent, on a time axis covering the whole pulse train with
/// dashed lines at every pulse onset.
inline std::string raster_svg(const std::vector<RasterRow>& rows) {
  constexpr double px_per_ms = 24.0, row_h = 22.0, label_w = 220.0, top = 10.0;
  double span_ms = 0.0;
  for (const auto& r : rows) span_ms = std::max(span_ms, r.n_pulses * 1000.0 / r.frequency_hz);
  const double width = label_w + span_ms * px_per_ms + 20.0;
  const double height = top + row_h * static_cast<double>(rows.size()) + 30.0;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double y = top + row_h * static_cast<double>(i);
    const double period = 1000.0 / r.frequency_hz;
    const double cell_w = period / static_cast<double>(std::max<std::size_t>(1, r.outcomes.size())) * px_per_ms;
    os << "<text x=\"4\" y=\"" << y + 15 << "\" font-family=\"monospace\" font-size=\"11\">" << r.program << ' '
       << r.tract << ' ' << r.direction << "</text>\n";
    for (std::size_t k = 0; k < r.outcomes.size(); ++k) {
      os << "<rect x=\"" << label_w + cell_w * static_cast<double>(k) << "\" y=\"" << y + 2 << "\" width=\"" << cell_w
         << "\" height=\"" << row_h - 4 << "\" fill=\"" << (r.outcomes[k] == '1' ? "#d62728" : "#1f77b4")
         << "\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
    }
  }
  if (!rows.empty()) {
    const auto& r = rows.front();
    const double period = 1000.0 / r.frequency_hz;
    for (int p = 0; p < r.n_pulses; ++p) {
      const double x = label_w + period * p * px_per_ms;
      os << "<line x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << height - 25
         << "\" stroke=\"black\" stroke-dasharray=\"4,3\"/>\n";
    }
    os << "<text x=\"" << label_w << "\" y=\"" << height - 8
       << "\" font-family=\"monospace\" font-size=\"11\">time after first pulse (ms); dashed: pulse onsets</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// VTA tables

struct VtaRow {
  double amplitude_mA = 0.0;
  std::string tract;
  double volume_mm3 = 0.0;
  double overlap = 0.0;
};

inline void write_vta_csv(const std::filesystem::path& path, const std::vector<VtaRow>& rows, double threshold,
                          const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot write");
  out << preamble_line({"vta", vta_schema, config_hash}) << '\n';
  out << "amplitude_mA,threshold_V_per_m,tract,volume_mm3,overlap\n";
  for (const auto& r : rows)
    out << format_number(r.amplitude_mA) << ',' << format_number(threshold) << ',' << csv_field(r.tract) << ','
        << format_number(r.volume_mm3) << ',' << format_number(r.overlap) << '\n';
}

inline std::pair<CsvPreamble, std::vector<VtaRow>> read_vta_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + ": file not found");
  std::string line;
  std::getline(in, line);
  const CsvPreamble pre = parse_preamble(line, path.string());
  if (pre.kind != "vta" || pre.schema != vta_schema)
    throw InputError(path.string() + ": expected a schema " + std::to_string(vta_schema) + " VTA table");
  std::getline(in, line);
  std::vector<VtaRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw InputError(path.string() + ": malformed row '" + line + "'");
    rows.push_back({std::stod(f[0]), f[2], std::stod(f[3]), std::stod(f[4])});
  }
  return {pre, rows};
}

/// Overlap-versus-amplitude curves, one polyline per tract.
inline std::string vta_svg(const std::vector<VtaRow>& rows) {
  constexpr double w = 480, h = 320, m = 40;
  double amax = 0.0;
  std::map<std::string, std::vector<std::pair<double, double>>> curves;
  for (const auto& r : rows) {
    amax = std::max(amax, r.amplitude_mA);
    curves[r.tract].emplace_back(r.amplitude_mA, r.overlap);
  }
  if (amax <= 0.0) amax = 1.0;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - 10 << "\" y2=\"" << h - m
     << "\" stroke=\"black\"/>\n<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << m << "\" y2=\"10\" stroke=\"black\"/>\n";
  std::size_t c = 0;
  for (const auto& [tract, pts] : curves) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[c % 5] << "\" points=\"";
    for (const auto& [a, o] : pts)
      os << m + a / amax * (w - m - 10) << ',' << (h - m) - o * (h - m - 10) << ' ';
    os << "\"/>\n<text x=\"" << m + 8 << "\" y=\"" << 24 + 14 * c << "\" font-size=\"11\" fill=\"" << colors[c % 5]
       << "\">" << tract << "</text>\n";
    ++c;
  }
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 8 << "\" font-size=\"11\">amplitude (mA)</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace dbsim
