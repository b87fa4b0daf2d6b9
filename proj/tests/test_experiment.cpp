#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sandlab/experiment.hpp"

using namespace sandlab;
namespace fs = std::filesystem;

namespace {

std::string minimal_sf_config() {
  return R"(# minimal sand-flip experiment
[model]
variant = sf
alpha = 0.5

[topology]
n = 100000

[run]
scenario = E1
)";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sandlab_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("minimal config parses with defaults") {
  const auto spec = parse_config(minimal_sf_config());
  CHECK(spec.scenario == "E1");
  CHECK(spec.model.kind == ModelKind::kSandFlip);
  CHECK(spec.model.alpha == 0.5);
  CHECK(spec.model.flip.family == FlipFamily::kPure);
  CHECK(spec.topology == Topology::ring(100000));
  CHECK(spec.initial == InitialDistribution::product(0.5));
  CHECK(spec.replicas == 4);
  CHECK(spec.seed == 1);
}

TEST_CASE("config errors name the offending line") {
  // negative rate
  try {
    parse_config("[model]\nvariant = sf\nalpha = -1\n[topology]\nn = 8\n[run]\nscenario = E1\n");
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  // unknown key for the variant
  try {
    parse_config(
        "[model]\nvariant = sa\nalpha = 0.5\nbeta = 0.5\ngamma = 0.2\n"
        "[topology]\nn = 8\n[run]\nscenario = E6\n");
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gamma") != std::string::npos);
    CHECK(msg.find("line 5") != std::string::npos);
  }
  // malformed lines
  CHECK_THROWS_AS(parse_config("alpha = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("[model\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("[model]\nvariant sf\n"), std::invalid_argument);
  // scenario constraints
  CHECK_THROWS_AS(
      parse_config("[model]\nvariant = sf\nalpha = 0.5\n[topology]\nn = 8\n[run]\nscenario = E2\n"),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_config("[model]\nvariant = sa\nalpha = 0.3\nbeta = 0.7\n[topology]\nn = 8\n[run]\nscenario = E6\n"),
      std::invalid_argument);
}

TEST_CASE("emit/parse round trip") {
  std::vector<ExperimentSpec> specs;
  {
    ExperimentSpec s;
    s.scenario = "E5";
    s.model = ModelSpec::sand_anti_sand(0.3, 0.7);
    s.topology = Topology::ring(100000);
    s.initial = InitialDistribution::product(0.2);
    s.replicas = 20;
    s.sample_times = {0.5, 1.0, 1.5, 1.9};
    s.seed = 987654321;
    s.t_end = 4.0;
    specs.push_back(s);
  }
  {
    ExperimentSpec s;
    s.scenario = "E4";
    s.model = ModelSpec::sand_flip(0.25, FlipRateSpec::glauber(0.25));
    s.topology = Topology::ring(20000);
    s.initial = InitialDistribution::all_twos();
    s.alpha_grid = {0.2, 0.25, 0.6};
    s.t_burn = 10.0;
    s.t_end = 30.0;
    specs.push_back(s);
  }
  {
    ExperimentSpec s;
    s.scenario = "E7";
    s.model = ModelSpec::sand_flip(1.0);
    s.topology = Topology::interval(1000);
    s.initial = InitialDistribution::single_one(500);
    s.size_grid = {1000, 10000};
    s.window = 10;
    s.replicas = 100;
    specs.push_back(s);
  }
  for (const auto& s : specs) {
    const auto round = parse_config(emit_config(s));
    CHECK(round == s);
  }
}

TEST_CASE("experiment runs are reproducible byte for byte") {
  ExperimentSpec spec;
  spec.scenario = "E1";
  spec.model = ModelSpec::sand_flip(0.5);
  spec.topology = Topology::ring(2000);
  spec.initial = InitialDistribution::product(0.5);
  spec.replicas = 4;
  spec.sample_times = {0.25, 0.5, 1.0};
  spec.seed = 24680;

  const auto dir1 = fresh_dir("repro1");
  const auto dir2 = fresh_dir("repro2");
  spec.output_dir = dir1.string();
  const auto m1 = run_experiment(spec);
  spec.output_dir = dir2.string();
  const auto m2 = run_experiment(spec);

  const std::string csv1 = read_file(dir1 / "E1_data.csv");
  const std::string csv2 = read_file(dir2 / "E1_data.csv");
  CHECK(!csv1.empty());
  CHECK(csv1 == csv2);
  CHECK(read_file(dir1 / "E1_summary.json") == read_file(dir2 / "E1_summary.json"));

  // header row and manifest digests
  CHECK(csv1.rfind("t,replica,observable,value,theory,window_ok\n", 0) == 0);
  for (const auto& m : {m1, m2})
    for (const auto& f : m.outputs) {
      const fs::path p = fs::path(m.manifest_path).parent_path() / f.path;
      char buf[20];
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(fnv1a64_file(p.string())));
      CHECK(f.digest == buf);
    }
}

TEST_CASE("plot script generation") {
  ExperimentSpec spec;
  spec.scenario = "E1";
  spec.model = ModelSpec::sand_flip(0.5);
  spec.topology = Topology::ring(500);
  spec.replicas = 2;
  spec.sample_times = {0.5, 1.0};
  spec.seed = 5;
  const auto dir = fresh_dir("plot");
  spec.output_dir = dir.string();
  const auto manifest = run_experiment(spec);

  const std::string script = emit_plot_script(manifest.manifest_path);
  CHECK(script.find("E1_data.csv") != std::string::npos);
  CHECK(script.find("density_ones") != std::string::npos);
  // only relative paths inside the script
  CHECK(script.find(dir.string()) == std::string::npos);

  CHECK_THROWS_AS(emit_plot_script((dir / "missing.json").string()),
                  std::invalid_argument);
}

TEST_CASE("cli exit codes") {
  CHECK(cli_main({"run", "/nonexistent/missing.cfg"}) == 1);
  CHECK(cli_main({"definitely-not-a-command"}) == 1);

  // oracle refuses oversized rings as a validation error
  const auto dir = fresh_dir("cli");
  {
    std::ofstream cfg(dir / "big.cfg");
    cfg << "[model]\nvariant = sf\nalpha = 0.5\n[topology]\nn = 20\n"
           "[run]\nscenario = custom\n";
  }
  CHECK(cli_main({"oracle", (dir / "big.cfg").string()}) == 1);
  {
    std::ofstream cfg(dir / "small.cfg");
    cfg << "[model]\nvariant = sf\nalpha = 0.5\n[topology]\nn = 6\n"
           "[run]\nscenario = custom\nsample_times = 0.5\n";
  }
  CHECK(cli_main({"oracle", (dir / "small.cfg").string()}) == 0);

  // run + plot end to end
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "[model]\nvariant = sf\nalpha = 0.5\n[topology]\nn = 500\n"
           "[run]\nscenario = E1\nreplicas = 2\nsample_times = 0.5 1\n"
           "output_dir = " << (dir / "out").string() << "\n";
  }
  CHECK(cli_main({"run", (dir / "run.cfg").string()}) == 0);
  CHECK(cli_main({"plot", (dir / "out" / "E1_manifest.json").string(), "--out",
                  (dir / "plot.gp").string()}) == 0);
  CHECK(fs::exists(dir / "plot.gp"));
}
