#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sandlab/lattice.hpp"
#include "sandlab/model.hpp"
#include "sandlab/rng.hpp"

namespace sandlab {

struct EventCounters {
  uint64_t additions = 0;
  uint64_t anti_additions = 0;
  uint64_t flips_accepted = 0;
  uint64_t flips_rejected = 0;

  uint64_t total() const {
    return additions + anti_additions + flips_accepted + flips_rejected;
  }
  friend bool operator==(const EventCounters&, const EventCounters&) = default;
};

enum class EventKind { kAddition, kAntiAddition, kFlipAccepted, kFlipRejected };

struct SimState {
  Configuration cfg;
  double t = 0.0;
  Rng rng;
  EventCounters counters;

  SimState(Configuration c, uint64_t seed) : cfg(std::move(c)), rng(seed) {}
};

Configuration sample_initial(const InitialDistribution& dist, Topology topo, Rng& rng);

struct StepResult {
  EventKind kind;
  int site;
  double dt;
};

// One exact continuous-time event. Every Poisson clock tick advances the
// simulation clock, including identity additions and rejected flip
// proposals; proposals are thinned against c(x,eta)/M.
StepResult step(SimState& state, const ModelSpec& spec);

struct SampleHook {
  std::string name;
  std::vector<double> times;  // ascending
  std::function<double(const Configuration&)> observable;
};

struct SampleSeries {
  std::string name;
  std::vector<double> times;
  std::vector<double> values;
};

// Runs events until t_end, recording each hook observable at its requested
// times (the value held since the last event before the sample time).
std::vector<SampleSeries> run_until(SimState& state, const ModelSpec& spec, double t_end,
                                    const std::vector<SampleHook>& hooks = {});

enum class DensityKind { kOnes, kTwos };

// First time the chosen density drops strictly below eps; nullopt on timeout.
std::optional<double> freezing_time(SimState& state, const ModelSpec& spec, double eps,
                                    double t_max, DensityKind which = DensityKind::kOnes);

// Exact time integral of the ones-density over [state.t, t1], divided by the
// window length. Consumes the state.
double time_averaged_ones_density(SimState& state, const ModelSpec& spec, double t1);

// Pure sand-flip process on an interval, started from a single inactive site
// at the center: first time no inactive site remains within +-window of the
// center (the finite-size proxy for the instantaneous removal of an isolated
// defect).
double lone_one_vanish_time(int n, double alpha, int window, Rng& rng,
                            double t_max = 1e9);

// Runs fn(replica_id) for each replica on a small pool; results must be
// written to replica-indexed slots, which keeps output deterministic.
void for_each_replica(int replicas, const std::function<void(int)>& fn,
                      int max_workers = 0);

}  // namespace sandlab
