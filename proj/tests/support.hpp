#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include "dbsim/field.hpp"
#include "dbsim/grid.hpp"
#include "dbsim/solver.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dbsim_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Field whose potential is an analytic function of position (volts per mA).
inline dbsim::FieldSolution analytic_field(const dbsim::GridGeometry& grid, dbsim::ContactProgram program,
                                           const std::function<double(const dbsim::Vec3&)>& u) {
  dbsim::FieldSolution f;
  f.grid = grid;
  f.program = std::move(program);
  f.potential.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) f.potential[i] = u(grid.center(i));
  return f;
}

/// Sources spreading `total_mA` evenly over the voxels within `radius_mm` of `center`.
inline std::vector<dbsim::CurrentSource> ball_sources(const dbsim::GridGeometry& grid, const dbsim::Vec3& center,
                                                      double radius_mm, double total_mA) {
  std::vector<dbsim::CurrentSource> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (dbsim::distance(grid.center(i), center) <= radius_mm + 1e-9) out.push_back({i, 0.0});
  for (auto& s : out) s.current_mA = total_mA / static_cast<double>(out.size());
  return out;
}

/// Potential of a point current source in an infinite homogeneous medium,
/// in volts, for current in mA, distance in mm and sigma in S/m.
inline double point_source_potential(double current_mA, double sigma, double r_mm) {
  return current_mA * 1e-3 / (4.0 * std::numbers::pi * sigma * r_mm * 1e-3);
}

}  // namespace testing

