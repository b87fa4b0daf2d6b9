#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sandlab/dynamics.hpp"
#include "sandlab/model.hpp"

namespace sandlab {

// Declarative description of one experiment run, parsed from the sectioned
// key = value config format (sections [model], [topology], [initial], [run]).
struct ExperimentSpec {
  std::string scenario = "custom";  // E1..E7 or custom
  ModelSpec model;
  Topology topology;
  InitialDistribution initial = InitialDistribution::product(0.5);
  int replicas = 4;
  std::vector<double> sample_times;
  uint64_t seed = 1;
  std::string output_dir = "out";
  double t_end = 2.0;
  double t_burn = 10.0;
  double epsilon = 1e-3;
  std::vector<double> alpha_grid;  // E4
  std::vector<double> rho_values;  // E6
  std::vector<int> size_grid;      // E7
  int window = 10;                 // E7 half-width
  int block_samples = 200000;      // E3 / E6
  int block_ring_n = 1024;

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&);
};

// Throws std::invalid_argument naming the offending line on bad input.
ExperimentSpec parse_config(const std::string& text);
std::string emit_config(const ExperimentSpec& spec);

struct ManifestFile {
  std::string path;  // relative to the manifest location
  std::string digest;
};

struct RunManifest {
  std::string scenario;
  std::string version;
  uint64_t master_seed = 0;
  std::vector<uint64_t> replica_seeds;
  double wall_clock_seconds = 0.0;
  std::string spec_echo;
  std::vector<ManifestFile> outputs;
  std::string manifest_path;
};

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Executes the scenario across replicas and writes <scenario>_data.csv,
// <scenario>_summary.json and <scenario>_manifest.json under output_dir.
// Re-running the same spec and seed reproduces the CSV and summary bytes.
RunManifest run_experiment(const ExperimentSpec& spec);

uint64_t fnv1a64_file(const std::string& path);

// Gnuplot script rendering measured-vs-theory curves for the manifest's data
// files; paths inside the script stay relative.
std::string emit_plot_script(const std::string& manifest_path);

// Fast property sweep used by `sandlab check`; prints one line per property.
bool run_self_check(std::ostream& out);

int cli_main(const std::vector<std::string>& args);

}  // namespace sandlab
