#include "sandlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sandlab/observables.hpp"
#include "sandlab/oracle.hpp"
#include "sandlab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sandlab {

bool operator==(const ExperimentSpec& a, const ExperimentSpec& b) {
  return a.scenario == b.scenario && a.model == b.model && a.topology == b.topology &&
         a.initial == b.initial && a.replicas == b.replicas &&
         a.sample_times == b.sample_times && a.seed == b.seed &&
         a.output_dir == b.output_dir && a.t_end == b.t_end && a.t_burn == b.t_burn &&
         a.epsilon == b.epsilon && a.alpha_grid == b.alpha_grid &&
         a.rho_values == b.rho_values && a.size_grid == b.size_grid &&
         a.window == b.window && a.block_samples == b.block_samples &&
         a.block_ring_n == b.block_ring_n;
}

// ---------------------------------------------------------------------------
// Config parsing.

namespace {

struct RawEntry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct RawConfig {
  std::map<std::string, std::map<std::string, RawEntry>> sections;

  RawEntry* find(const std::string& sec, const std::string& key) {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  }
};

[[noreturn]] void config_error(int line, const std::string& msg) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

RawConfig tokenize_config(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') config_error(ln, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "topology" && section != "initial" &&
          section != "run")
        config_error(ln, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error(ln, "expected key = value");
    if (section.empty()) config_error(ln, "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) config_error(ln, "expected key = value");
    auto [it, fresh] = raw.sections[section].emplace(key, RawEntry{val, ln, false});
    if (!fresh) config_error(ln, "duplicate key '" + key + "'");
  }
  return raw;
}

double parse_double(const RawEntry& e, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    config_error(e.line, "'" + key + "' expects a number, got '" + e.value + "'");
  }
}

long long parse_int(const RawEntry& e, const std::string& key) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    config_error(e.line, "'" + key + "' expects an integer, got '" + e.value + "'");
  }
}

uint64_t parse_u64(const RawEntry& e, const std::string& key) {
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    config_error(e.line, "'" + key + "' expects an unsigned integer, got '" + e.value + "'");
  }
}

template <typename T, typename Parse>
std::vector<T> parse_list(const RawEntry& e, const std::string& key, Parse p) {
  std::vector<T> out;
  std::istringstream in(e.value);
  std::string tok;
  while (in >> tok) {
    RawEntry sub{tok, e.line, true};
    out.push_back(p(sub, key));
  }
  if (out.empty()) config_error(e.line, "'" + key + "' expects a list");
  return out;
}

}  // namespace

ExperimentSpec parse_config(const std::string& text) {
  RawConfig raw = tokenize_config(text);
  ExperimentSpec spec;

  // [model]
  auto* variant = raw.find("model", "variant");
  if (!variant) throw std::invalid_argument("config: [model] variant is required");
  auto* alpha_e = raw.find("model", "alpha");
  if (!alpha_e) throw std::invalid_argument("config: [model] alpha is required");
  const double alpha = parse_double(*alpha_e, "alpha");

  if (variant->value == "sf") {
    FlipRateSpec flip = FlipRateSpec::pure();
    std::string family = "pure";
    if (auto* f = raw.find("model", "flip")) family = f->value;
    if (family == "pure") {
      flip = FlipRateSpec::pure();
    } else if (family == "glauber") {
      double g = 0.0;
      if (auto* e = raw.find("model", "gamma")) g = parse_double(*e, "gamma");
      try {
        flip = FlipRateSpec::glauber(g);
      } catch (const std::invalid_argument& err) {
        config_error(raw.find("model", "gamma") ? raw.sections["model"]["gamma"].line
                                                : variant->line,
                     err.what());
      }
    } else if (family == "biased") {
      double k = 0.0;
      if (auto* e = raw.find("model", "kappa")) k = parse_double(*e, "kappa");
      try {
        flip = FlipRateSpec::biased(k);
      } catch (const std::invalid_argument& err) {
        config_error(raw.find("model", "kappa") ? raw.sections["model"]["kappa"].line
                                                : variant->line,
                     err.what());
      }
    } else {
      config_error(raw.sections["model"]["flip"].line,
                   "flip must be pure, glauber or biased");
    }
    try {
      spec.model = ModelSpec::sand_flip(alpha, flip);
    } catch (const std::invalid_argument& err) {
      config_error(alpha_e->line, err.what());
    }
  } else if (variant->value == "sa") {
    auto* beta_e = raw.find("model", "beta");
    if (!beta_e) throw std::invalid_argument("config: [model] beta is required for sa");
    try {
      spec.model = ModelSpec::sand_anti_sand(alpha, parse_double(*beta_e, "beta"));
    } catch (const std::invalid_argument& err) {
      config_error(alpha_e->line, err.what());
    }
  } else {
    config_error(variant->line, "variant must be sf or sa");
  }

  // [topology]
  auto* n_e = raw.find("topology", "n");
  if (!n_e) throw std::invalid_argument("config: [topology] n is required");
  const long long n = parse_int(*n_e, "n");
  std::string kind = "ring";
  if (auto* e = raw.find("topology", "kind")) kind = e->value;
  if (kind != "ring" && kind != "interval")
    config_error(raw.sections["topology"]["kind"].line, "kind must be ring or interval");
  if (n < 3 || n > (1 << 18)) config_error(n_e->line, "n must lie in [3, 262144]");
  spec.topology = kind == "ring" ? Topology::ring(static_cast<int>(n))
                                 : Topology::interval(static_cast<int>(n));

  // [initial]
  if (auto* e = raw.find("initial", "kind")) {
    const std::string& k = e->value;
    if (k == "product") {
      double rho = 0.5;
      if (auto* r = raw.find("initial", "rho")) rho = parse_double(*r, "rho");
      try {
        spec.initial = InitialDistribution::product(rho);
      } catch (const std::invalid_argument& err) {
        config_error(raw.find("initial", "rho") ? raw.sections["initial"]["rho"].line
                                                : e->line,
                     err.what());
      }
    } else if (k == "all_ones") {
      spec.initial = InitialDistribution::all_ones();
    } else if (k == "all_twos") {
      spec.initial = InitialDistribution::all_twos();
    } else if (k == "single_one") {
      int site = 0;
      if (auto* s = raw.find("initial", "site"))
        site = static_cast<int>(parse_int(*s, "site"));
      if (site < 0 || site >= spec.topology.n)
        config_error(e->line, "single_one site out of range");
      spec.initial = InitialDistribution::single_one(site);
    } else {
      config_error(e->line, "kind must be product, all_ones, all_twos or single_one");
    }
  } else if (auto* r = raw.find("initial", "rho")) {
    try {
      spec.initial = InitialDistribution::product(parse_double(*r, "rho"));
    } catch (const std::invalid_argument& err) {
      config_error(r->line, err.what());
    }
  }

  // [run]
  auto* sc = raw.find("run", "scenario");
  if (!sc) throw std::invalid_argument("config: [run] scenario is required");
  static const std::vector<std::string> kScenarios = {"E1", "E2", "E3", "E4",
                                                      "E5", "E6", "E7", "custom"};
  if (std::find(kScenarios.begin(), kScenarios.end(), sc->value) == kScenarios.end())
    config_error(sc->line, "scenario must be E1..E7 or custom");
  spec.scenario = sc->value;

  if (auto* e = raw.find("run", "replicas")) {
    const long long r = parse_int(*e, "replicas");
    if (r < 1) config_error(e->line, "replicas must be >= 1");
    spec.replicas = static_cast<int>(r);
  }
  if (auto* e = raw.find("run", "seed")) spec.seed = parse_u64(*e, "seed");
  if (auto* e = raw.find("run", "sample_times")) {
    spec.sample_times = parse_list<double>(*e, "sample_times", parse_double);
    if (!std::is_sorted(spec.sample_times.begin(), spec.sample_times.end()))
      config_error(e->line, "sample_times must be ascending");
  }
  if (auto* e = raw.find("run", "t_end")) spec.t_end = parse_double(*e, "t_end");
  if (auto* e = raw.find("run", "t_burn")) spec.t_burn = parse_double(*e, "t_burn");
  if (auto* e = raw.find("run", "epsilon")) {
    spec.epsilon = parse_double(*e, "epsilon");
    if (!(spec.epsilon > 0.0 && spec.epsilon < 1.0))
      config_error(e->line, "epsilon must lie in (0, 1)");
  }
  if (auto* e = raw.find("run", "output_dir")) spec.output_dir = e->value;
  if (auto* e = raw.find("run", "alpha_grid"))
    spec.alpha_grid = parse_list<double>(*e, "alpha_grid", parse_double);
  if (auto* e = raw.find("run", "rho_values"))
    spec.rho_values = parse_list<double>(*e, "rho_values", parse_double);
  if (auto* e = raw.find("run", "size_grid")) {
    auto v = parse_list<long long>(*e, "size_grid", parse_int);
    spec.size_grid.assign(v.begin(), v.end());
  }
  if (auto* e = raw.find("run", "window")) {
    spec.window = static_cast<int>(parse_int(*e, "window"));
    if (spec.window < 1) config_error(e->line, "window must be >= 1");
  }
  if (auto* e = raw.find("run", "block_samples"))
    spec.block_samples = static_cast<int>(parse_int(*e, "block_samples"));
  if (auto* e = raw.find("run", "block_ring_n"))
    spec.block_ring_n = static_cast<int>(parse_int(*e, "block_ring_n"));

  // reject unknown keys
  for (const auto& [sec, kv] : raw.sections)
    for (const auto& [key, entry] : kv)
      if (!entry.used)
        config_error(entry.line, "unknown key '" + key + "' in section [" + sec + "]");

  // scenario constraints
  const bool sf = spec.model.kind == ModelKind::kSandFlip;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) config_error(sc->line, msg);
  };
  if (spec.scenario == "E1" || spec.scenario == "E2" || spec.scenario == "E3" ||
      spec.scenario == "E4" || spec.scenario == "E7")
    require(sf, spec.scenario + " needs an sf model");
  if (spec.scenario == "E5" || spec.scenario == "E6")
    require(!sf, spec.scenario + " needs an sa model");
  if (spec.scenario == "E2") require(spec.model.alpha >= 1.0, "E2 needs alpha >= 1");
  if (spec.scenario == "E3") require(spec.model.alpha < 1.0, "E3 needs alpha < 1");
  if (spec.scenario == "E5")
    require(spec.model.alpha != spec.model.beta, "E5 needs alpha != beta");
  if (spec.scenario == "E6")
    require(spec.model.alpha == spec.model.beta, "E6 needs alpha == beta");
  if (spec.scenario == "E7") {
    require(!spec.topology.is_ring(), "E7 needs an interval topology");
    require(sf && spec.model.flip.family == FlipFamily::kPure, "E7 needs pure flip rates");
  }
  return spec;
}

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt12(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::string emit_config(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "[model]\n";
  if (spec.model.kind == ModelKind::kSandFlip) {
    out << "variant = sf\n";
    out << "alpha = " << fmt(spec.model.alpha) << "\n";
    switch (spec.model.flip.family) {
      case FlipFamily::kPure:
        out << "flip = pure\n";
        break;
      case FlipFamily::kGlauber:
        out << "flip = glauber\n";
        out << "gamma = " << fmt(spec.model.flip.gamma) << "\n";
        break;
      case FlipFamily::kBiased:
        out << "flip = biased\n";
        out << "kappa = " << fmt(spec.model.flip.kappa) << "\n";
        break;
    }
  } else {
    out << "variant = sa\n";
    out << "alpha = " << fmt(spec.model.alpha) << "\n";
    out << "beta = " << fmt(spec.model.beta) << "\n";
  }

  out << "\n[topology]\n";
  out << "kind = " << (spec.topology.is_ring() ? "ring" : "interval") << "\n";
  out << "n = " << spec.topology.n << "\n";

  out << "\n[initial]\n";
  switch (spec.initial.kind) {
    case InitialDistribution::Kind::kProduct:
      out << "kind = product\nrho = " << fmt(spec.initial.rho) << "\n";
      break;
    case InitialDistribution::Kind::kAllOnes:
      out << "kind = all_ones\n";
      break;
    case InitialDistribution::Kind::kAllTwos:
      out << "kind = all_twos\n";
      break;
    case InitialDistribution::Kind::kSingleOne:
      out << "kind = single_one\nsite = " << spec.initial.site << "\n";
      break;
  }

  out << "\n[run]\n";
  out << "scenario = " << spec.scenario << "\n";
  out << "replicas = " << spec.replicas << "\n";
  out << "seed = " << spec.seed << "\n";
  if (!spec.sample_times.empty()) {
    out << "sample_times =";
    for (double t : spec.sample_times) out << " " << fmt(t);
    out << "\n";
  }
  out << "t_end = " << fmt(spec.t_end) << "\n";
  out << "t_burn = " << fmt(spec.t_burn) << "\n";
  out << "epsilon = " << fmt(spec.epsilon) << "\n";
  out << "output_dir = " << spec.output_dir << "\n";
  if (!spec.alpha_grid.empty()) {
    out << "alpha_grid =";
    for (double a : spec.alpha_grid) out << " " << fmt(a);
    out << "\n";
  }
  if (!spec.rho_values.empty()) {
    out << "rho_values =";
    for (double r : spec.rho_values) out << " " << fmt(r);
    out << "\n";
  }
  if (!spec.size_grid.empty()) {
    out << "size_grid =";
    for (int n : spec.size_grid) out << " " << n;
    out << "\n";
  }
  out << "window = " << spec.window << "\n";
  out << "block_samples = " << spec.block_samples << "\n";
  out << "block_ring_n = " << spec.block_ring_n << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Scenario execution.

namespace {

struct Row {
  double t = 0.0;
  int replica = -1;
  std::string observable;
  double value = 0.0;
  double theory = 0.0;
  int window_ok = 1;
};

struct ScenarioOutput {
  std::vector<Row> rows;
  std::vector<CheckResult> checks;
  json params;
};

int window_ok_for(double density, int n) {
  const double margin = 4.0 / n;
  return (density > margin && 1.0 - density > margin) ? 1 : 0;
}

double initial_density(const ExperimentSpec& es) {
  switch (es.initial.kind) {
    case InitialDistribution::Kind::kProduct: return es.initial.rho;
    case InitialDistribution::Kind::kAllOnes: return 1.0;
    case InitialDistribution::Kind::kAllTwos: return 0.0;
    case InitialDistribution::Kind::kSingleOne: return 1.0 / es.topology.n;
  }
  return 0.0;
}

CheckResult near(const std::string& name, double measured, double expected, double tol) {
  return {name, measured, expected, tol, std::abs(measured - expected) <= tol};
}

CheckResult at_most(const std::string& name, double measured, double limit) {
  return {name, measured, limit, limit, measured <= limit};
}

CheckResult at_least(const std::string& name, double measured, double limit) {
  return {name, measured, limit, limit, measured >= limit};
}

// density trajectories sampled at `times`, one row of values per replica
std::vector<std::vector<double>> replica_densities(const ExperimentSpec& es,
                                                   const std::vector<double>& times,
                                                   uint64_t salt) {
  std::vector<std::vector<double>> values(es.replicas);
  const double horizon = times.empty() ? es.t_end : std::max(es.t_end, times.back());
  for_each_replica(es.replicas, [&](int r) {
    Rng stream(replica_seed(es.seed ^ salt, r));
    Configuration cfg = sample_initial(es.initial, es.topology, stream);
    SimState state(std::move(cfg), stream.u64());
    std::vector<SampleHook> hooks{{"density_ones", times, density_of_ones}};
    auto series = run_until(state, es.model, horizon, hooks);
    values[r] = series[0].values;
  });
  return values;
}

void density_rows(ScenarioOutput& out, const ExperimentSpec& es,
                  const std::vector<double>& times,
                  const std::vector<std::vector<double>>& values,
                  const std::string& name,
                  const std::function<double(double)>& theory_at) {
  const int n = es.topology.n;
  for (int r = 0; r < es.replicas; ++r)
    for (size_t i = 0; i < times.size(); ++i)
      out.rows.push_back({times[i], r, name, values[r][i], theory_at(times[i]),
                          window_ok_for(values[r][i], n)});
  for (size_t i = 0; i < times.size(); ++i) {
    double mean = 0.0;
    for (int r = 0; r < es.replicas; ++r) mean += values[r][i];
    mean /= es.replicas;
    out.rows.push_back(
        {times[i], -1, name, mean, theory_at(times[i]), window_ok_for(mean, n)});
  }
}

std::vector<double> default_times(const ExperimentSpec& es, std::vector<double> fallback) {
  return es.sample_times.empty() ? fallback : es.sample_times;
}

ScenarioOutput run_e1(const ExperimentSpec& es) {
  ScenarioOutput out;
  const auto times = default_times(es, {0.25, 0.5, 1.0, 2.0});
  const auto values = replica_densities(es, times, 0);
  const double rho0 = initial_density(es);
  auto theory = [&](double t) {
    return theory::predicted_density(t, rho0, es.model.alpha, es.model.flip);
  };
  density_rows(out, es, times, values, "density_ones", theory);
  for (size_t i = 0; i < times.size(); ++i) {
    double mean = 0.0;
    for (int r = 0; r < es.replicas; ++r) mean += values[r][i];
    mean /= es.replicas;
    out.checks.push_back(near("density_vs_theory_t=" + fmt12(times[i]), mean,
                              theory(times[i]), 5e-3));
  }
  return out;
}

ScenarioOutput run_e2(const ExperimentSpec& es) {
  ScenarioOutput out;
  const double theory_hit =
      theory::epsilon_hitting_time(initial_density(es), es.model.alpha, es.epsilon);
  const double horizon = std::max(es.t_end, 2.0 * theory_hit + 2.0);
  std::vector<double> hits(es.replicas), final_density(es.replicas);
  for_each_replica(es.replicas, [&](int r) {
    Rng stream(replica_seed(es.seed, r));
    Configuration cfg = sample_initial(es.initial, es.topology, stream);
    SimState state(std::move(cfg), stream.u64());
    auto hit = freezing_time(state, es.model, es.epsilon, horizon);
    hits[r] = hit.value_or(std::numeric_limits<double>::quiet_NaN());
    run_until(state, es.model, horizon);
    final_density[r] = density_of_ones(state.cfg);
  });
  double mean_hit = 0.0, mean_final = 0.0;
  int hit_count = 0;
  for (int r = 0; r < es.replicas; ++r) {
    out.rows.push_back({horizon, r, "hit_time", hits[r], theory_hit, 1});
    out.rows.push_back({horizon, r, "final_density", final_density[r], 0.0,
                        window_ok_for(final_density[r], es.topology.n)});
    if (!std::isnan(hits[r])) {
      mean_hit += hits[r];
      ++hit_count;
    }
    mean_final += final_density[r];
  }
  mean_hit = hit_count ? mean_hit / hit_count : std::numeric_limits<double>::quiet_NaN();
  mean_final /= es.replicas;
  out.rows.push_back({horizon, -1, "hit_time", mean_hit, theory_hit, 1});
  out.rows.push_back({horizon, -1, "final_density", mean_final, 0.0, 1});
  out.checks.push_back(near("hit_time_vs_ode", mean_hit, theory_hit, 0.02));
  out.checks.push_back(at_most("frozen_density", mean_final, 5e-3));
  out.params["theory_hit_time"] = theory_hit;
  return out;
}

std::vector<double> stationary_averages(const ExperimentSpec& es, const ModelSpec& model,
                                        uint64_t salt) {
  std::vector<double> avg(es.replicas);
  for_each_replica(es.replicas, [&](int r) {
    Rng stream(replica_seed(es.seed ^ salt, r));
    Configuration cfg = sample_initial(es.initial, es.topology, stream);
    SimState state(std::move(cfg), stream.u64());
    run_until(state, model, es.t_burn);
    avg[r] = time_averaged_ones_density(state, model, es.t_end);
  });
  return avg;
}

void block_check_rows(ScenarioOutput& out, const ExperimentSpec& es, double rho,
                      theory::BlockGenerator which, int n_block, const std::string& name,
                      uint64_t salt) {
  Rng rng(replica_seed(es.seed ^ 0x9e3779b9u, salt));
  const auto est = mc_generator_block_estimate(rho, n_block, which, es.block_samples,
                                               es.block_ring_n, rng);
  const double target = theory::predicted_generator_block(rho, n_block, which);
  out.rows.push_back({0.0, -1, name, est.mean, target, 1});
  CheckResult c = near(name + "_covers_closed_form", est.mean, target, est.half_width);
  out.checks.push_back(c);
  out.checks.push_back(at_most(name + "_ci_half_width", est.half_width, 0.02));
}

ScenarioOutput run_e3(const ExperimentSpec& es) {
  ScenarioOutput out;
  const auto avg = stationary_averages(es, es.model, 0);
  const double target = theory::predicted_stationary_density(es.model.alpha, es.model.flip);
  double mean = 0.0;
  for (int r = 0; r < es.replicas; ++r) {
    out.rows.push_back({es.t_end, r, "density_time_avg", avg[r], target, 1});
    mean += avg[r];
  }
  mean /= es.replicas;
  out.rows.push_back({es.t_end, -1, "density_time_avg", mean, target, 1});
  out.checks.push_back(near("stationary_density", mean, target, 5e-3));

  block_check_rows(out, es, 0.5, theory::BlockGenerator::kSandpile, 2, "block_LS_n2", 1);
  block_check_rows(out, es, 0.5, theory::BlockGenerator::kFlip, 2, "block_LF_n2", 2);

  const double r2 = theory::product_consistency_rho(2, es.model.alpha);
  const double r3 = theory::product_consistency_rho(3, es.model.alpha);
  out.params["product_consistency_rho_n2"] = r2;
  out.params["product_consistency_rho_n3"] = r3;
  out.checks.push_back(
      at_least("non_product_rho_gap", std::abs(r2 - r3), 1e-6));
  return out;
}

ScenarioOutput run_e4(const ExperimentSpec& es) {
  ScenarioOutput out;
  std::vector<double> grid = es.alpha_grid;
  if (grid.empty()) {
    const double ac = theory::critical_alpha(es.model.flip);
    grid = {0.4 * ac, 0.5 * ac, 0.8 * ac, 1.2 * ac};
  }
  const double m = es.model.flip.min_rate();
  for (size_t gi = 0; gi < grid.size(); ++gi) {
    const double alpha = grid[gi];
    ModelSpec model = es.model;
    model.alpha = alpha;
    model.validate();
    const auto avg = stationary_averages(es, model, gi + 1);
    const double target = theory::predicted_stationary_density(alpha, es.model.flip);
    double mean = 0.0;
    for (int r = 0; r < es.replicas; ++r) {
      out.rows.push_back({alpha, r, "stationary_density", avg[r], target, 1});
      mean += avg[r];
    }
    mean /= es.replicas;
    out.rows.push_back({alpha, -1, "stationary_density", mean, target, 1});
    const std::string tag = "alpha=" + fmt12(alpha);
    if (target > 0.0)
      out.checks.push_back(near("density_" + tag, mean, target, 0.01));
    else
      out.checks.push_back(at_most("frozen_density_" + tag, mean, 5e-3));
    if (alpha < m) {
      const double bound = theory::stationary_density_lower_bound(alpha, es.model.flip);
      out.checks.push_back(at_least("lower_bound_" + tag, mean, bound));
      out.rows.push_back({alpha, -1, "stationary_lower_bound", bound, bound, 1});
    }
  }
  return out;
}

ScenarioOutput run_e5(const ExperimentSpec& es) {
  ScenarioOutput out;
  const double drift = es.model.beta - es.model.alpha;
  const double rho0 = initial_density(es);
  const auto times = default_times(es, {0.5, 1.0, 1.5, 1.9});
  const auto values = replica_densities(es, times, 0);
  auto theory_line = [&](double t) { return std::clamp(rho0 + drift * t, 0.0, 1.0); };
  density_rows(out, es, times, values, "density_ones", theory_line);
  for (size_t i = 0; i < times.size(); ++i) {
    double mean = 0.0;
    for (int r = 0; r < es.replicas; ++r) mean += values[r][i];
    mean /= es.replicas;
    if (window_ok_for(mean, es.topology.n))
      out.checks.push_back(
          near("drift_t=" + fmt12(times[i]), mean, theory_line(times[i]), 0.01));
  }

  // absorption side
  std::vector<double> final_density(es.replicas);
  for_each_replica(es.replicas, [&](int r) {
    Rng stream(replica_seed(es.seed ^ 0x5a5a5a5aull, r));
    Configuration cfg = sample_initial(es.initial, es.topology, stream);
    SimState state(std::move(cfg), stream.u64());
    run_until(state, es.model, es.t_end);
    final_density[r] = density_of_ones(state.cfg);
  });
  double mean_final = 0.0;
  for (int r = 0; r < es.replicas; ++r) {
    mean_final += final_density[r];
    out.rows.push_back({es.t_end, r, "final_density", final_density[r],
                        drift > 0 ? 1.0 : 0.0, 0});
  }
  mean_final /= es.replicas;
  out.rows.push_back({es.t_end, -1, "final_density", mean_final, drift > 0 ? 1.0 : 0.0, 0});
  if (drift > 0)
    out.checks.push_back(at_least("absorption_density", mean_final, 0.999));
  else
    out.checks.push_back(at_most("absorption_density", mean_final, 0.001));
  return out;
}

ScenarioOutput run_e6(const ExperimentSpec& es) {
  ScenarioOutput out;
  const auto times = default_times(es, {2.5, 5.0, 7.5, 10.0});
  std::vector<double> rhos = es.rho_values.empty() ? std::vector<double>{0.3, 0.5, 0.7}
                                                   : es.rho_values;
  for (size_t ri = 0; ri < rhos.size(); ++ri) {
    ExperimentSpec sub = es;
    sub.initial = InitialDistribution::product(rhos[ri]);
    sub.seed = es.seed ^ (0x100000ull * (ri + 1));
    const auto values = replica_densities(sub, times, 0);
    const std::string name = "density_ones_rho=" + fmt12(rhos[ri]);
    auto constant = [&](double) { return rhos[ri]; };
    density_rows(out, sub, times, values, name, constant);
    for (size_t i = 0; i < times.size(); ++i) {
      double mean = 0.0;
      for (int r = 0; r < es.replicas; ++r) mean += values[r][i];
      mean /= es.replicas;
      out.checks.push_back(near("conservation_rho=" + fmt12(rhos[ri]) +
                                    "_t=" + fmt12(times[i]),
                                mean, rhos[ri], 0.01));
    }
  }
  block_check_rows(out, es, 0.5, theory::BlockGenerator::kSandAntiSand, 2, "block_SA_n2", 3);
  block_check_rows(out, es, 0.5, theory::BlockGenerator::kSandAntiSand, 3, "block_SA_n3", 4);
  return out;
}

ScenarioOutput run_e7(const ExperimentSpec& es) {
  ScenarioOutput out;
  std::vector<int> sizes = es.size_grid.empty() ? std::vector<int>{1000, 10000, 100000}
                                                : es.size_grid;
  std::vector<double> medians;
  for (size_t si = 0; si < sizes.size(); ++si) {
    const int n = sizes[si];
    std::vector<double> vt(es.replicas);
    for_each_replica(es.replicas, [&](int r) {
      Rng stream(replica_seed(es.seed ^ (0x414141ull * (si + 1)), r));
      vt[r] = lone_one_vanish_time(n, es.model.alpha, es.window, stream);
    });
    const double ref = std::log(2.0) / (es.model.alpha * n);
    for (int r = 0; r < es.replicas; ++r)
      out.rows.push_back({static_cast<double>(n), r, "vanish_time", vt[r], ref, 1});
    std::vector<double> sorted = vt;
    std::nth_element(sorted.begin(), sorted.begin() + es.replicas / 2, sorted.end());
    const double median = sorted[es.replicas / 2];
    medians.push_back(median);
    out.rows.push_back({static_cast<double>(n), -1, "vanish_time_median", median, ref, 1});
  }
  for (size_t i = 0; i + 1 < sizes.size(); ++i) {
    const double expected = static_cast<double>(sizes[i + 1]) / sizes[i];
    const double ratio = medians[i] / medians[i + 1];
    CheckResult c;
    c.name = "median_ratio_" + std::to_string(sizes[i]) + "_" + std::to_string(sizes[i + 1]);
    c.measured = ratio;
    c.expected = expected;
    c.tolerance = 0.3 * expected;
    c.pass = ratio >= expected / 1.3 && ratio <= expected * 1.3;
    out.checks.push_back(c);
  }
  return out;
}

ScenarioOutput run_custom(const ExperimentSpec& es) {
  // a plain relaxation run: density samples against the matching theory curve
  ScenarioOutput out;
  const auto times = default_times(es, {es.t_end});
  const auto values = replica_densities(es, times, 0);
  const double rho0 = initial_density(es);
  auto theory_at = [&](double t) {
    if (es.model.kind == ModelKind::kSandFlip)
      return theory::predicted_density(t, rho0, es.model.alpha, es.model.flip);
    return std::clamp(rho0 + (es.model.beta - es.model.alpha) * t, 0.0, 1.0);
  };
  density_rows(out, es, times, values, "density_ones", theory_at);
  return out;
}

}  // namespace

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for digest: " + path);
  uint64_t h = 14695981039346656037ull;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

static std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

RunManifest run_experiment(const ExperimentSpec& spec) {
  spec.model.validate();
  spec.initial.validate();
  if (spec.replicas < 1) throw std::invalid_argument("experiment: replicas must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();

  ScenarioOutput out;
  if (spec.scenario == "E1") out = run_e1(spec);
  else if (spec.scenario == "E2") out = run_e2(spec);
  else if (spec.scenario == "E3") out = run_e3(spec);
  else if (spec.scenario == "E4") out = run_e4(spec);
  else if (spec.scenario == "E5") out = run_e5(spec);
  else if (spec.scenario == "E6") out = run_e6(spec);
  else if (spec.scenario == "E7") out = run_e7(spec);
  else if (spec.scenario == "custom") out = run_custom(spec);
  else throw std::invalid_argument("experiment: unknown scenario " + spec.scenario);

  fs::create_directories(spec.output_dir);
  const std::string base = spec.scenario;
  const fs::path dir(spec.output_dir);
  const fs::path csv_path = dir / (base + "_data.csv");
  const fs::path summary_path = dir / (base + "_summary.json");
  const fs::path manifest_path = dir / (base + "_manifest.json");

  {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << "t,replica,observable,value,theory,window_ok\n";
    for (const Row& r : out.rows)
      csv << fmt12(r.t) << ',' << r.replica << ',' << r.observable << ','
          << fmt12(r.value) << ',' << fmt12(r.theory) << ',' << r.window_ok << '\n';
  }

  json summary;
  summary["scenario"] = spec.scenario;
  summary["params"] = out.params.is_null() ? json::object() : out.params;
  summary["params"]["alpha"] = spec.model.alpha;
  if (spec.model.kind == ModelKind::kSandAntiSand)
    summary["params"]["beta"] = spec.model.beta;
  summary["params"]["n"] = spec.topology.n;
  summary["params"]["replicas"] = spec.replicas;
  summary["params"]["seed"] = spec.seed;
  summary["checks"] = json::array();
  for (const CheckResult& c : out.checks)
    summary["checks"].push_back({{"name", c.name},
                                 {"measured", c.measured},
                                 {"expected", c.expected},
                                 {"tolerance", c.tolerance},
                                 {"pass", c.pass}});
  summary["manifest_path"] = manifest_path.filename().string();
  {
    std::ofstream js(summary_path);
    js << summary.dump(2) << "\n";
  }

  RunManifest manifest;
  manifest.scenario = spec.scenario;
  manifest.version = kVersion;
  manifest.master_seed = spec.seed;
  for (int r = 0; r < spec.replicas; ++r)
    manifest.replica_seeds.push_back(replica_seed(spec.seed, r));
  manifest.spec_echo = emit_config(spec);
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.outputs.push_back(
      {csv_path.filename().string(), hex64(fnv1a64_file(csv_path.string()))});
  manifest.outputs.push_back(
      {summary_path.filename().string(), hex64(fnv1a64_file(summary_path.string()))});
  manifest.manifest_path = manifest_path.string();

  json mj;
  mj["scenario"] = manifest.scenario;
  mj["version"] = manifest.version;
  mj["master_seed"] = manifest.master_seed;
  mj["replica_seeds"] = manifest.replica_seeds;
  mj["wall_clock_seconds"] = manifest.wall_clock_seconds;
  mj["spec_echo"] = manifest.spec_echo;
  mj["outputs"] = json::array();
  for (const auto& f : manifest.outputs)
    mj["outputs"].push_back({{"path", f.path}, {"digest", f.digest}});
  {
    std::ofstream js(manifest_path);
    js << mj.dump(2) << "\n";
  }
  return manifest;
}

// ---------------------------------------------------------------------------

std::string emit_plot_script(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::invalid_argument("plot: cannot open manifest " + manifest_path);
  json mj;
  in >> mj;
  const fs::path dir = fs::path(manifest_path).parent_path();

  std::ostringstream out;
  out << "# generated by sandlab plot\n";
  out << "set datafile separator comma\n";
  out << "set key outside\n";
  out << "set term pngcairo size 1000,640\n";

  bool any = false;
  for (const auto& f : mj.at("outputs")) {
    const std::string rel = f.at("path").get<std::string>();
    if (rel.size() < 4 || rel.substr(rel.size() - 4) != ".csv") continue;
    const fs::path csv = dir / rel;
    std::ifstream data(csv);
    if (!data) throw std::invalid_argument("plot: data file missing: " + csv.string());
    // observables present in aggregate rows
    std::vector<std::string> names;
    std::string line;
    std::getline(data, line);  // header
    while (std::getline(data, line)) {
      std::istringstream row(line);
      std::string t, rep, obs;
      std::getline(row, t, ',');
      std::getline(row, rep, ',');
      std::getline(row, obs, ',');
      if (rep == "-1" && std::find(names.begin(), names.end(), obs) == names.end())
        names.push_back(obs);
    }
    if (names.empty()) continue;
    any = true;
    const std::string png = rel.substr(0, rel.size() - 4) + ".png";
    out << "\nset output \"" << png << "\"\n";
    out << "plot \\\n";
    for (size_t i = 0; i < names.size(); ++i) {
      out << "  \"" << rel << "\" using 1:((strcol(3) eq \"" << names[i]
          << "\" && $2 == -1) ? $4 : 1/0) with linespoints title \"" << names[i]
          << " measured\", \\\n";
      out << "  \"" << rel << "\" using 1:((strcol(3) eq \"" << names[i]
          << "\" && $2 == -1) ? $5 : 1/0) with lines title \"" << names[i]
          << " theory\"" << (i + 1 < names.size() ? ", \\" : "") << "\n";
    }
  }
  if (!any) throw std::invalid_argument("plot: manifest lists no plottable data files");
  return out.str();
}

// ---------------------------------------------------------------------------
// Self check.

namespace {

bool check_line(std::ostream& out, const std::string& name, bool ok) {
  out << (ok ? "  ok   " : "  FAIL ") << name << "\n";
  return ok;
}

std::vector<int> random_heights(Rng& rng, int n) {
  std::vector<int> h(n);
  for (int i = 0; i < n; ++i) h[i] = rng.bernoulli(0.5) ? 1 : 2;
  return h;
}

}  // namespace

bool run_self_check(std::ostream& out) {
  bool all = true;
  Rng rng(20240901);

  {
    bool ok = true;
    for (int trial = 0; trial < 300 && ok; ++trial) {
      const int n = 3 + rng.below(30);
      const Topology topo = rng.bernoulli(0.5) ? Topology::ring(n) : Topology::interval(n);
      Configuration cfg(topo, random_heights(rng, n));
      const int x = rng.below(n);
      ok = flipped(flipped(cfg, x), x) == cfg &&
           global_flipped(global_flipped(cfg)) == cfg;
    }
    all &= check_line(out, "flip involutions", ok);
  }
  {
    bool ok = true;
    for (int trial = 0; trial < 300 && ok; ++trial) {
      const int n = 3 + rng.below(40);
      Configuration cfg(Topology::interval(n), random_heights(rng, n));
      const int x = rng.below(n);
      auto u = UnstableConfiguration::from(cfg);
      u.add_grain(x);
      ok = with_addition(cfg, x) == stabilize_by_toppling(u, ToppleMode::kForward);
      auto v = UnstableConfiguration::from(cfg);
      v.remove_grain(x);
      ok = ok && with_anti_addition(cfg, x) ==
                     stabilize_by_toppling(v, ToppleMode::kReverse);
    }
    all &= check_line(out, "closed form matches toppling oracle", ok);
  }
  {
    bool ok = true;
    for (int trial = 0; trial < 300 && ok; ++trial) {
      const int n = 3 + rng.below(30);
      const Topology topo = rng.bernoulli(0.5) ? Topology::ring(n) : Topology::interval(n);
      Configuration cfg(topo, random_heights(rng, n));
      const int x = rng.below(n);
      ok = with_anti_addition(cfg, x) ==
           global_flipped(with_addition(global_flipped(cfg), x));
    }
    all &= check_line(out, "anti-addition is the global-flip conjugate", ok);
  }
  {
    bool ok = true;
    for (int trial = 0; trial < 2000 && ok; ++trial) {
      const int n = 4 + rng.below(120);
      Configuration cfg(Topology::ring(n), random_heights(rng, n));
      if (cfg.inactive_count() < 1) continue;
      ok = renewal_identity_residual(cfg) == 0.0;
    }
    all &= check_line(out, "renewal identity residual is exactly zero", ok);
  }
  {
    bool ok = true;
    int done = 0;
    while (done < 300) {
      const int n = 16 + rng.below(48);
      Configuration cfg(Topology::ring(n), random_heights(rng, n));
      if (!wrap_safe_at_origin(cfg)) continue;
      ++done;
      const double alpha = 3.0 * rng.u01();
      const auto spec = ModelSpec::sand_flip(alpha);
      if (std::abs(pointwise_generator_at_origin(cfg, spec) -
                   generator_origin_closed_form(cfg, alpha)) > 1e-9) {
        ok = false;
        break;
      }
    }
    all &= check_line(out, "pointwise generator matches closed form", ok);
  }
  {
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
      const int n = 3 + rng.below(24);
      Configuration cfg(Topology::interval(n), random_heights(rng, n));
      auto u = UnstableConfiguration::from(cfg);
      u.add_grain(rng.below(n));
      u.add_grain(rng.below(n));
      const auto a = stabilize_by_toppling(u, ToppleMode::kForward, ToppleOrder::kFifo);
      const auto b = stabilize_by_toppling(u, ToppleMode::kForward, ToppleOrder::kLifo);
      const auto c = stabilize_by_toppling(u, ToppleMode::kForward,
                                           ToppleOrder::kShuffled, rng.u64());
      ok = a == b && b == c;
    }
    all &= check_line(out, "toppling is order independent", ok);
  }
  {
    const auto chain =
        enumerate_chain(Topology::ring(6), ModelSpec::sand_flip(1.0));
    bool ok = chain.max_abs_row_sum_residual() < 1e-14;
    const auto d1 = Distribution::dirac((1 << 6) - 1, chain.num_states());
    const auto tr = transient_distribution(chain, d1, 0.7);
    ok = ok && std::abs(tr.sum() - 1.0) < 1e-12;
    all &= check_line(out, "exact chain row sums and transient mass", ok);
  }
  {
    const int n = 64;
    SimState state(Configuration::uniform(Topology::ring(n), 1), 77);
    const auto spec = ModelSpec::sand_flip(1.0);
    const int events = 200000;
    for (int i = 0; i < events; ++i) step(state, spec);
    const double frac =
        static_cast<double>(state.counters.additions) / state.counters.total();
    const double sigma = std::sqrt(0.25 / events);
    bool ok = std::abs(frac - 0.5) < 4.0 * sigma;
    audit_configuration(state.cfg);
    all &= check_line(out, "event kind statistics and audit", ok);
  }
  return all;
}

// ---------------------------------------------------------------------------

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"simulator and exact analysis for sandpile/spin-flip and "
               "sandpile/anti-sandpile chains"};
  app.require_subcommand(1);

  std::string run_config, oracle_config, manifest_path, plot_out, out_override;
  auto* cmd_run = app.add_subcommand("run", "run an experiment from a config file");
  cmd_run->add_option("config", run_config, "config file path")->required();
  cmd_run->add_option("--out", out_override, "output directory override");
  auto* cmd_oracle =
      app.add_subcommand("oracle", "exact small-ring analysis from a config file");
  cmd_oracle->add_option("config", oracle_config, "config file path")->required();
  auto* cmd_check = app.add_subcommand("check", "run the property self-check suite");
  auto* cmd_plot = app.add_subcommand("plot", "emit a gnuplot script for a manifest");
  cmd_plot->add_option("manifest", manifest_path, "manifest json path")->required();
  cmd_plot->add_option("--out", plot_out, "write the script here instead of stdout");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto load_config = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto spec = parse_config(ss.str());
    return spec;
  };

  try {
    if (cmd_run->parsed()) {
      ExperimentSpec spec = load_config(run_config);
      if (!out_override.empty())
        spec.output_dir = out_override;
      else if (const char* env = std::getenv("SANDLAB_OUT"); env && spec.output_dir == "out")
        spec.output_dir = env;
      const RunManifest manifest = run_experiment(spec);
      std::cout << "wrote " << manifest.manifest_path << " ("
                << manifest.outputs.size() << " data files, "
                << fmt12(manifest.wall_clock_seconds) << "s)\n";
      return 0;
    }
    if (cmd_oracle->parsed()) {
      ExperimentSpec spec = load_config(oracle_config);
      const auto chain = enumerate_chain(spec.topology, spec.model);
      const auto pi = stationary_distribution(chain);
      const double p1 = marginal_one(pi, 0);
      const double p11 = expectation(pi, [](int s) { return (s & 3) == 3 ? 1.0 : 0.0; });
      std::cout << "exact ring n=" << spec.topology.n << "\n";
      std::cout << "stationary density of ones = " << fmt12(mean_ones_density(pi, chain.n))
                << "\n";
      std::cout << "stationary pair gap pi(1,1) - pi(1)^2 = " << fmt12(p11 - p1 * p1)
                << "\n";
      std::cout << "residual |pi Q|_inf = " << fmt12(stationary_residual(chain, pi))
                << "\n";
      Distribution init;
      switch (spec.initial.kind) {
        case InitialDistribution::Kind::kProduct:
          init = Distribution::product(spec.initial.rho, chain.n);
          break;
        case InitialDistribution::Kind::kAllOnes:
          init = Distribution::dirac(chain.num_states() - 1, chain.num_states());
          break;
        case InitialDistribution::Kind::kAllTwos:
          init = Distribution::dirac(0, chain.num_states());
          break;
        case InitialDistribution::Kind::kSingleOne:
          init = Distribution::dirac(1 << spec.initial.site, chain.num_states());
          break;
      }
      for (double t : spec.sample_times) {
        const auto tr = transient_distribution(chain, init, t);
        std::cout << "P(eta_t(0) = 1) at t=" << fmt12(t) << " : "
                  << fmt12(marginal_one(tr, 0)) << "\n";
      }
      return 0;
    }
    if (cmd_check->parsed()) {
      std::cout << "self check:\n";
      const bool ok = run_self_check(std::cout);
      std::cout << (ok ? "all checks passed\n" : "SELF CHECK FAILED\n");
      return ok ? 0 : 2;
    }
    if (cmd_plot->parsed()) {
      const std::string script = emit_plot_script(manifest_path);
      if (plot_out.empty()) {
        std::cout << script;
      } else {
        std::ofstream o(plot_out);
        if (!o) throw std::runtime_error("cannot write " + plot_out);
        o << script;
        std::cout << "wrote " << plot_out << "\n";
      }
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace sandlab
