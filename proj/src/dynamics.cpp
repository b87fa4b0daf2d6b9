#include "sandlab/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace sandlab {

Configuration sample_initial(const InitialDistribution& dist, Topology topo, Rng& rng) {
  dist.validate();
  switch (dist.kind) {
    case InitialDistribution::Kind::kAllOnes:
      return Configuration::uniform(topo, 1);
    case InitialDistribution::Kind::kAllTwos:
      return Configuration::uniform(topo, 2);
    case InitialDistribution::Kind::kSingleOne: {
      if (dist.site < 0 || dist.site >= topo.n)
        throw std::invalid_argument("initial: single-one site out of range");
      Configuration cfg = Configuration::uniform(topo, 2);
      cfg.flip(dist.site);
      return cfg;
    }
    case InitialDistribution::Kind::kProduct: {
      std::vector<int> h(topo.n);
      for (int x = 0; x < topo.n; ++x) h[x] = rng.u01() < dist.rho ? 1 : 2;
      return Configuration(topo, h);
    }
  }
  throw std::logic_error("initial: unknown kind");
}

// Kind selection and operator application at a chosen site; shared by step()
// and run_until() so both consume the stream identically (dt, site, kind,
// and an acceptance draw only for thinned flip families).
static EventKind apply_at_site(SimState& state, const ModelSpec& spec, int x) {
  const double per_site = spec.per_site_rate();

  if (spec.kind == ModelKind::kSandAntiSand) {
    if (state.rng.u01() < spec.alpha / per_site) {
      state.cfg.add(x);
      state.counters.additions += 1;
      return EventKind::kAddition;
    }
    state.cfg.anti_add(x);
    state.counters.anti_additions += 1;
    return EventKind::kAntiAddition;
  }

  if (state.rng.u01() < spec.alpha / per_site) {
    state.cfg.add(x);
    state.counters.additions += 1;
    return EventKind::kAddition;
  }
  // flip proposal; pure rates need no thinning draw
  if (spec.flip.family != FlipFamily::kPure) {
    const double accept = flip_rate(spec.flip, state.cfg, x) / spec.flip.max_rate();
    if (state.rng.u01() >= accept) {
      state.counters.flips_rejected += 1;
      return EventKind::kFlipRejected;
    }
  }
  state.cfg.flip(x);
  state.counters.flips_accepted += 1;
  return EventKind::kFlipAccepted;
}

StepResult step(SimState& state, const ModelSpec& spec) {
  const int n = state.cfg.size();
  const double dt = state.rng.exponential(spec.per_site_rate() * n);
  state.t += dt;
  const int x = state.rng.below(n);
  return {apply_at_site(state, spec, x), x, dt};
}

std::vector<SampleSeries> run_until(SimState& state, const ModelSpec& spec, double t_end,
                                    const std::vector<SampleHook>& hooks) {
  if (t_end < state.t)
    throw std::invalid_argument("run_until: t_end must not precede the current time");
  std::vector<SampleSeries> out(hooks.size());
  std::vector<size_t> next(hooks.size(), 0);
  for (size_t h = 0; h < hooks.size(); ++h) {
    out[h].name = hooks[h].name;
    if (!std::is_sorted(hooks[h].times.begin(), hooks[h].times.end()))
      throw std::invalid_argument("run_until: sample times must be ascending");
  }

  auto emit_upto = [&](double t) {
    for (size_t h = 0; h < hooks.size(); ++h) {
      while (next[h] < hooks[h].times.size() && hooks[h].times[next[h]] <= t) {
        out[h].times.push_back(hooks[h].times[next[h]]);
        out[h].values.push_back(hooks[h].observable(state.cfg));
        ++next[h];
      }
    }
  };

  const int n = state.cfg.size();
  const double total_rate = spec.per_site_rate() * n;
  while (state.t < t_end) {
    // draw the waiting time first so samples inside it use the held state
    const double dt = state.rng.exponential(total_rate);
    const double t_next = state.t + dt;
    emit_upto(std::min(t_next, t_end));
    if (t_next > t_end) {
      state.t = t_end;  // the overshooting event falls past the horizon
      return out;
    }
    state.t = t_next;
    const int x = state.rng.below(n);
    apply_at_site(state, spec, x);
  }
  emit_upto(t_end);
  return out;
}

std::optional<double> freezing_time(SimState& state, const ModelSpec& spec, double eps,
                                    double t_max, DensityKind which) {
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("freezing time: eps must lie in (0, 1)");
  const int n = state.cfg.size();
  auto density = [&] {
    const int c = which == DensityKind::kOnes ? state.cfg.inactive_count()
                                              : state.cfg.active_count();
    return static_cast<double>(c) / n;
  };
  if (density() < eps) return state.t;
  while (true) {
    step(state, spec);
    if (state.t > t_max) return std::nullopt;
    if (density() < eps) return state.t;
  }
}

double time_averaged_ones_density(SimState& state, const ModelSpec& spec, double t1) {
  const double t0 = state.t;
  if (t1 <= t0) throw std::invalid_argument("time average: empty window");
  const int n = state.cfg.size();
  double acc = 0.0;
  while (state.t < t1) {
    const double d = static_cast<double>(state.cfg.inactive_count()) / n;
    const double before = state.t;
    step(state, spec);
    acc += d * (std::min(state.t, t1) - before);
  }
  return acc / (t1 - t0);
}

double lone_one_vanish_time(int n, double alpha, int window, Rng& rng, double t_max) {
  if (window < 1 || window >= n / 2)
    throw std::invalid_argument("vanish time: window must lie in [1, n/2)");
  const int center = n / 2;
  Configuration cfg = Configuration::uniform(Topology::interval(n), 2);
  cfg.flip(center);
  SimState state(std::move(cfg), rng.u64());
  const ModelSpec spec = ModelSpec::sand_flip(alpha);

  auto window_occupied = [&] {
    auto p = state.cfg.inactive_index().next_geq(center - window);
    return p && *p <= center + window;
  };
  while (window_occupied()) {
    step(state, spec);
    if (state.t > t_max) return t_max;
  }
  return state.t;
}

void for_each_replica(int replicas, const std::function<void(int)>& fn, int max_workers) {
  if (replicas < 1) throw std::invalid_argument("replicas must be >= 1");
  int workers = max_workers > 0 ? max_workers
                                : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, replicas);
  if (workers == 1) {
    for (int r = 0; r < replicas; ++r) fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int r = next.fetch_add(1); r < replicas; r = next.fetch_add(1)) fn(r);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace sandlab
