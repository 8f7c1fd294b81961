// dbsim: volume-conductor + cable simulations of DBS settings.
//
//   dbsim solve-field --config run.json
//   dbsim vta --config run.json --threshold 150 --amplitudes 0,1,2,3
//   dbsim calibrate | sweep | polarity --config run.json [--jobs N]
//   dbsim render scores_pulse_width.csv
//   dbsim make-scenario scenarios/near_fiber
//
// Exit codes: 0 ok, 1 numerical failure, 2 input error.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dbsim/app.hpp"

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw dbsim::InputError("cannot parse amplitude '" + item + "'");
    }
  }
  if (out.empty()) throw dbsim::InputError("amplitude list is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"DBS volume-conductor and cable-neuron simulator"};
  cli.require_subcommand(1);
  cli.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string output_dir;
  cli.add_option("--config", config_path, "run configuration (JSON)");
  cli.add_option("--seed", seed, "master seed (overrides scenario.seed)");
  cli.add_option("--jobs", jobs, "worker threads; 0 uses every hardware thread")->capture_default_str();
  cli.add_option("--output-dir", output_dir, "output directory (overrides output_dir)");

  auto* solve = cli.add_subcommand("solve-field", "solve unit fields for every configured program");
  auto* vta = cli.add_subcommand("vta", "VTA volume and tract overlap versus amplitude");
  std::optional<double> threshold;
  std::string amplitudes;
  vta->add_option("--threshold", threshold, "field-norm threshold in V/m");
  vta->add_option("--amplitudes", amplitudes, "comma-separated amplitudes in mA");
  auto* calibrate = cli.add_subcommand("calibrate", "find the axonal input threshold");
  std::string trace_path;
  calibrate->add_option("--trace", trace_path, "also dump the calibrated membrane trace as CSV");
  auto* sweep = cli.add_subcommand("sweep", "phase sweeps and amplitude grids");
  auto* polarity = cli.add_subcommand("polarity", "program x tract x direction raster panel");
  auto* render = cli.add_subcommand("render", "re-render the image of a result CSV");
  std::string render_input, render_output;
  render->add_option("input", render_input, "CSV written by sweep, polarity or vta")->required();
  render->add_option("-o,--output", render_output, "image path");
  auto* make = cli.add_subcommand("make-scenario", "write the synthetic near-fiber scenario");
  std::string scenario_dir;
  make->add_option("dir", scenario_dir, "target directory")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (render->parsed()) {
      return dbsim::app::render_cmd(render_input,
                                    render_output.empty() ? std::nullopt : std::optional<std::filesystem::path>(render_output),
                                    std::cout);
    }
    if (make->parsed()) return dbsim::app::make_scenario_cmd(scenario_dir, std::cout);

    if (config_path.empty()) throw dbsim::InputError("--config is required for this command");
    dbsim::ConfigOverrides ov;
    ov.seed = seed;
    if (!output_dir.empty()) ov.output_dir = output_dir;
    const dbsim::RunConfig cfg = dbsim::load_config(config_path, ov);

    if (solve->parsed()) return dbsim::app::solve_field_cmd(cfg, std::cout);
    if (vta->parsed()) {
      std::optional<std::vector<double>> amps;
      if (!amplitudes.empty()) amps = parse_list(amplitudes);
      return dbsim::app::vta_cmd(cfg, threshold, amps, std::cout);
    }
    if (calibrate->parsed())
      return dbsim::app::calibrate_cmd(
          cfg, trace_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(trace_path), std::cout);
    if (sweep->parsed()) return dbsim::app::sweep_cmd(cfg, jobs, std::cout);
    if (polarity->parsed()) return dbsim::app::polarity_cmd(cfg, jobs, std::cout);
  } catch (const dbsim::InputError& e) {
    std::cerr << "dbsim: " << e.what() << '\n';
    return 2;
  } catch (const dbsim::NumericalError& e) {
    std::cerr << "dbsim: numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "dbsim: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
