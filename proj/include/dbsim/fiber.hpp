#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dbsim/core.hpp"

namespace dbsim {

enum class TrafficDirection { forward, flipped };

inline std::string to_string(TrafficDirection d) { return d == TrafficDirection::forward ? "forward" : "flipped"; }

/// Polyline in mm. Neural traffic enters at points.front().
struct FiberPath {
  std::string id;
  std::vector<Vec3> points;
  TrafficDirection direction = TrafficDirection::forward;

  double arc_length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) len += distance(points[i - 1], points[i]);
    return len;
  }
};

/// Same path with neural traffic running the other way (point order reversed).
inline FiberPath flipped(FiberPath path) {
  std::reverse(path.points.begin(), path.points.end());
  path.direction = path.direction == TrafficDirection::forward ? TrafficDirection::flipped : TrafficDirection::forward;
  return path;
}

/// `n` points at equal arc-length spacing along the polyline, endpoints kept.
inline FiberPath resample_fiber(const FiberPath& path, std::size_t n) {
  if (n < 2) throw GeometryError("resampling needs at least two points");
  if (path.points.size() < 2) throw GeometryError("fiber '" + path.id + "' has fewer than two points");
  std::vector<double> cumulative(path.points.size(), 0.0);
  for (std::size_t i = 1; i < path.points.size(); ++i)
    cumulative[i] = cumulative[i - 1] + distance(path.points[i - 1], path.points[i]);
  const double total = cumulative.back();
  if (!(total > 0.0)) throw GeometryError("fiber '" + path.id + "' has zero length");

  FiberPath out;
  out.id = path.id;
  out.direction = path.direction;
  out.points.reserve(n);
  std::size_t seg = 1;
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 0) { out.points.push_back(path.points.front()); continue; }
    if (k + 1 == n) { out.points.push_back(path.points.back()); continue; }
    const double target = total * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg + 1 < cumulative.size() && cumulative[seg] < target) ++seg;
    const double seg_len = cumulative[seg] - cumulative[seg - 1];
    const double f = seg_len > 0.0 ? (target - cumulative[seg - 1]) / seg_len : 0.0;
    out.points.push_back(path.points[seg - 1] + (path.points[seg] - path.points[seg - 1]) * f);
  }
  return out;
}

/// Tract file: one "x y z" triple (mm) per line, fibers separated by blank
/// lines. Lines starting with '#' are comments.
inline std::vector<FiberPath> read_tract_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError(path.string() + ": file not found");
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + ": cannot open");
  std::vector<FiberPath> fibers;
  FiberPath current;
  std::string line;
  std::size_t lineno = 0;
  const auto flush = [&] {
    if (current.points.empty()) return;
    if (current.points.size() < 2) throw InputError(path.string() + ": fiber with a single point");
    current.id = path.stem().string() + ":" + std::to_string(fibers.size());
    fibers.push_back(std::move(current));
    current = FiberPath{};
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) { flush(); continue; }
    if (line[first] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y >> p.z))
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
    current.points.push_back(p);
  }
  flush();
  return fibers;
}

inline void write_tract_file(const std::filesystem::path& path, const std::vector<FiberPath>& fibers) {
  std::ofstream out(path);
  if (!out) throw InputError(path.string() + ": cannot write");
  out.precision(10);
  for (std::size_t f = 0; f < fibers.size(); ++f) {
    if (f > 0) out << '\n';
    out << "# " << fibers[f].id << '\n';
    for (const auto& p : fibers[f].points) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
  }
}

}  // namespace dbsim
