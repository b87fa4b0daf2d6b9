#include "sandlab/lattice.hpp"

#include <algorithm>
#include <deque>

#include "sandlab/rng.hpp"

namespace sandlab {

Configuration::Configuration(Topology topo, const std::vector<int>& heights)
    : Configuration(topo) {
  if (static_cast<int>(heights.size()) != topo_.n)
    throw std::invalid_argument("configuration: heights length must equal site count");
  for (int x = 0; x < topo_.n; ++x) {
    if (heights[x] == 1)
      ones_.set(x);
    else if (heights[x] == 2)
      twos_.set(x);
    else
      throw std::invalid_argument("configuration: heights must be 1 or 2");
  }
}

Configuration Configuration::uniform(Topology topo, int height) {
  if (height != 1 && height != 2)
    throw std::invalid_argument("configuration: heights must be 1 or 2");
  Configuration cfg(topo);
  for (int x = 0; x < topo.n; ++x)
    (height == 1 ? cfg.ones_ : cfg.twos_).set(x);
  return cfg;
}

std::vector<int> Configuration::heights() const {
  std::vector<int> h(topo_.n, 2);
  for (int x : ones_.collect()) h[x] = 1;
  return h;
}

void Configuration::flip(int x) {
  check_site(x);
  if (ones_.test(x))
    set_two(x);
  else
    set_one(x);
}

void Configuration::add(int x) {
  check_site(x);
  if (ones_.test(x)) {  // inactive becomes active, nothing else moves
    set_two(x);
    return;
  }
  if (topo_.is_ring())
    add_ring(x);
  else
    add_interval(x);
}

// Cyclic successor/predecessor in the ones index; `from` may be any integer.
static std::optional<int> cyc_next(const BitIndex& idx, int from, int n) {
  from = ((from % n) + n) % n;
  if (auto p = idx.next_geq(from)) return p;
  return idx.min();
}
static std::optional<int> cyc_prev(const BitIndex& idx, int from, int n) {
  from = ((from % n) + n) % n;
  if (auto p = idx.prev_leq(from)) return p;
  return idx.max();
}

void Configuration::add_ring(int x) {
  const int n = topo_.n;
  if (ones_.empty()) return;  // fully active ring: nothing to relax
  const int xr = *cyc_next(ones_, x + 1, n);
  const int xl = *cyc_prev(ones_, x - 1, n);
  const int dr = wrap(xr - x);  // x is active, so both distances are >= 1
  const int dl = wrap(x - xl);
  // Mirror of x about the midpoint of [x - dl, x + dr]. With a single
  // inactive site y this reduces to (2y - x) mod n: the lone one moves.
  const int mirror = wrap(static_cast<long long>(x) + dr - dl);
  set_two(xl);
  set_two(xr);
  set_one(mirror);
}

void Configuration::add_interval(int x) {
  const int n = topo_.n;
  const int xl = ones_.prev_leq(x - 1).value_or(-1);
  const int xr = ones_.next_geq(x + 1).value_or(n);
  const int mirror = xl + xr - x;
  if (xl >= 0) set_two(xl);
  if (xr < n) set_two(xr);
  // The mirror of an interior site always lands in the interior; a virtual
  // mirror would dissipate instead.
  if (mirror >= 0 && mirror < n) set_one(mirror);
}

void Configuration::anti_add(int x) {
  check_site(x);
  if (twos_.test(x)) {  // active loses its grain, nothing else moves
    set_one(x);
    return;
  }
  if (topo_.is_ring())
    anti_add_ring(x);
  else
    anti_add_interval(x);
}

void Configuration::anti_add_ring(int x) {
  const int n = topo_.n;
  if (twos_.empty()) return;  // fully inactive ring: nothing to relax
  const int xr = *cyc_next(twos_, x + 1, n);
  const int xl = *cyc_prev(twos_, x - 1, n);
  const int dr = wrap(xr - x);
  const int dl = wrap(x - xl);
  const int mirror = wrap(static_cast<long long>(x) + dr - dl);
  set_one(xl);
  set_one(xr);
  set_two(mirror);
}

void Configuration::anti_add_interval(int x) {
  const int n = topo_.n;
  // reversed topplings source grains at the boundary: virtual active sites
  const int xl = twos_.prev_leq(x - 1).value_or(-1);
  const int xr = twos_.next_geq(x + 1).value_or(n);
  const int mirror = xl + xr - x;
  if (xl >= 0) set_one(xl);
  if (xr < n) set_one(xr);
  if (mirror >= 0 && mirror < n) set_two(mirror);
}

std::optional<int> Configuration::nearest_one_right(int x) const {
  check_site(x);
  if (topo_.is_ring()) {
    if (ones_.empty()) return std::nullopt;
    return cyc_next(ones_, x + 1, topo_.n);
  }
  return ones_.next_geq(x + 1).value_or(topo_.n);
}

std::optional<int> Configuration::nearest_one_left(int x) const {
  check_site(x);
  if (topo_.is_ring()) {
    if (ones_.empty()) return std::nullopt;
    return cyc_prev(ones_, x - 1, topo_.n);
  }
  return ones_.prev_leq(x - 1).value_or(-1);
}

std::optional<int> Configuration::nearest_two_right(int x) const {
  check_site(x);
  if (topo_.is_ring()) {
    if (twos_.empty()) return std::nullopt;
    return cyc_next(twos_, x + 1, topo_.n);
  }
  return twos_.next_geq(x + 1).value_or(topo_.n);
}

std::optional<int> Configuration::nearest_two_left(int x) const {
  check_site(x);
  if (topo_.is_ring()) {
    if (twos_.empty()) return std::nullopt;
    return cyc_prev(twos_, x - 1, topo_.n);
  }
  return twos_.prev_leq(x - 1).value_or(-1);
}

Configuration flipped(Configuration cfg, int x) {
  cfg.flip(x);
  return cfg;
}
Configuration with_addition(Configuration cfg, int x) {
  cfg.add(x);
  return cfg;
}
Configuration with_anti_addition(Configuration cfg, int x) {
  cfg.anti_add(x);
  return cfg;
}
Configuration global_flipped(Configuration cfg) {
  cfg.global_flip();
  return cfg;
}

std::optional<int> nearest_inactive(const Configuration& cfg, int x, Direction d) {
  return d == Direction::kRight ? cfg.nearest_one_right(x) : cfg.nearest_one_left(x);
}

std::optional<int> k_plus(const Configuration& cfg, int i) {
  const int n = cfg.size();
  if (i < 0 || i >= n) throw std::invalid_argument("invalid site index");
  if (cfg.inactive(i)) return 0;
  auto p = cfg.nearest_one_right(i);
  if (!p) return std::nullopt;
  if (!cfg.topology().is_ring()) return *p - i;
  return ((*p - i) % n + n) % n;  // i is active, so the distance is in [1, n-1]
}

std::optional<int> k_minus(const Configuration& cfg, int i) {
  const int n = cfg.size();
  if (i < 0 || i >= n) throw std::invalid_argument("invalid site index");
  if (cfg.topology().is_ring()) {
    auto p = cfg.nearest_one_left(i);
    if (!p) return std::nullopt;
    const int d = ((i - *p) % n + n) % n;
    return d == 0 ? n : d;
  }
  auto p = cfg.nearest_one_left(i);
  return i - *p;
}

void audit_configuration(const Configuration& cfg) {
  const int n = cfg.size();
  if (cfg.inactive_count() + cfg.active_count() != n)
    throw std::logic_error("configuration audit: index counts do not partition sites");
  int ones = 0;
  for (int x = 0; x < n; ++x) {
    const bool o = cfg.inactive_index().test(x);
    const bool t = cfg.active_index().test(x);
    if (o == t) throw std::logic_error("configuration audit: indexes not complementary");
    if (cfg.height(x) != (o ? 1 : 2))
      throw std::logic_error("configuration audit: height/index mismatch");
    ones += o;
  }
  if (ones != cfg.inactive_count())
    throw std::logic_error("configuration audit: stale inactive count");
}

// ---------------------------------------------------------------------------

UnstableConfiguration UnstableConfiguration::from(const Configuration& cfg) {
  return {cfg.topology(), cfg.heights()};
}

Configuration stabilize_by_toppling(const UnstableConfiguration& u, ToppleMode mode,
                                    ToppleOrder order, uint64_t shuffle_seed) {
  if (u.topo.is_ring())
    throw std::invalid_argument("toppling oracle: interval topology required");
  const int n = u.topo.n;
  if (static_cast<int>(u.heights.size()) != n)
    throw std::invalid_argument("toppling oracle: heights length must equal site count");

  std::vector<int> h = u.heights;
  const bool fwd = mode == ToppleMode::kForward;
  for (int v : h) {
    if (fwd ? v < 1 : v > 2)
      throw std::invalid_argument("toppling oracle: heights out of range for mode");
  }
  auto unstable = [&](int x) { return fwd ? h[x] >= 3 : h[x] <= 0; };

  std::deque<int> work;
  std::vector<char> queued(n, 0);
  for (int x = 0; x < n; ++x)
    if (unstable(x)) {
      work.push_back(x);
      queued[x] = 1;
    }

  Rng shuffle_rng(shuffle_seed);
  const long long cap = static_cast<long long>(n) * n + 4LL * n;
  long long topples = 0;
  while (!work.empty()) {
    int x = work.front();
    switch (order) {
      case ToppleOrder::kFifo:
        x = work.front();
        work.pop_front();
        break;
      case ToppleOrder::kLifo:
        x = work.back();
        work.pop_back();
        break;
      case ToppleOrder::kShuffled: {
        const int i = shuffle_rng.below(static_cast<int>(work.size()));
        x = work[i];
        work[i] = work.back();
        work.pop_back();
        break;
      }
    }
    queued[x] = 0;
    if (!unstable(x)) continue;

    if (++topples > cap)
      throw std::logic_error("toppling oracle: iteration cap exceeded (rule bug)");

    // grains past the boundary vanish (forward) / are sourced (reverse)
    h[x] += fwd ? -2 : 2;
    for (int nb : {x - 1, x + 1}) {
      if (nb < 0 || nb >= n) continue;
      h[nb] += fwd ? 1 : -1;
      if (unstable(nb) && !queued[nb]) {
        work.push_back(nb);
        queued[nb] = 1;
      }
    }
    if (unstable(x) && !queued[x]) {
      work.push_back(x);
      queued[x] = 1;
    }
  }

  for (int v : h)
    if (v != 1 && v != 2)
      throw std::logic_error("toppling oracle: stabilization left an invalid height");
  return Configuration(u.topo, h);
}

// ---------------------------------------------------------------------------

double flip_rate(const FlipRateSpec& spec, const Configuration& cfg, int x) {
  const int n = cfg.size();
  auto f = [&](int y) {
    if (cfg.topology().is_ring()) y = ((y % n) + n) % n;
    if (y < 0 || y >= n) return -1.0;  // virtual boundary sites are inactive
    return cfg.inactive(y) ? -1.0 : 1.0;
  };
  switch (spec.family) {
    case FlipFamily::kPure:
      return 1.0;
    case FlipFamily::kGlauber:
      return 1.0 - spec.gamma * f(x) * (f(x - 1) + f(x + 1));
    case FlipFamily::kBiased:
      return 1.0 - spec.kappa * f(x);
  }
  return 1.0;
}

bool wrap_safe_at_origin(const Configuration& cfg) {
  if (!cfg.topology().is_ring()) return false;
  const int n = cfg.size();
  if (cfg.inactive_count() < 2 || cfg.active_count() < 2) return false;
  const int right_gap = *k_plus(cfg, 1 % n);
  const int left_gap = *k_minus(cfg, 0);
  return 2 * right_gap < n && 2 * left_gap < n;
}

double pointwise_generator_at_origin(const Configuration& cfg, const ModelSpec& spec) {
  if (!wrap_safe_at_origin(cfg))
    throw std::domain_error(
        "pointwise generator: configuration is not wrap-safe at the origin");
  const int n = cfg.size();
  const double f0 = cfg.height(0);
  double sum = 0.0;
  Configuration scratch = cfg;
  for (int x = 0; x < n; ++x) {
    scratch = cfg;
    scratch.add(x);
    sum += spec.alpha * (scratch.height(0) - f0);
    if (spec.kind == ModelKind::kSandFlip) {
      scratch = cfg;
      scratch.flip(x);
      sum += flip_rate(spec.flip, cfg, x) * (scratch.height(0) - f0);
    } else {
      scratch = cfg;
      scratch.anti_add(x);
      sum += spec.beta * (scratch.height(0) - f0);
    }
  }
  return sum;
}

double generator_origin_closed_form(const Configuration& cfg, double alpha) {
  if (!wrap_safe_at_origin(cfg))
    throw std::domain_error(
        "pointwise generator: configuration is not wrap-safe at the origin");
  const int n = cfg.size();
  const double chi = cfg.inactive(0) ? 1.0 : 0.0;
  const double kp = *k_plus(cfg, 1 % n);
  const double km = *k_minus(cfg, 0);
  return alpha * chi * (kp + km + 1.0) + 3.0 - alpha - 2.0 * cfg.height(0);
}

double decency_statistic(const Configuration& cfg, int window) {
  if (window < 1) throw std::invalid_argument("decency statistic: window must be >= 1");
  if (cfg.inactive_count() < 2)
    throw std::invalid_argument("decency statistic: needs at least two inactive sites");
  const int n = cfg.size();
  const auto& ones = cfg.inactive_index();

  if (cfg.topology().is_ring()) {
    // walk `window` consecutive gaps starting from the first inactive site at
    // or right of the origin, wrapping as needed
    int start = ones.next_geq(0) ? *ones.next_geq(0) : 0;
    long long total = 0;
    int pos = start;
    for (int i = 0; i < window; ++i) {
      const int nxt = *cyc_next(ones, pos + 1, n);
      int d = ((nxt - pos) % n + n) % n;
      if (d == 0) d = n;
      total += d;
      pos = nxt;
    }
    return static_cast<double>(total) / window;
  }

  // interval: gaps between the inactive sites nearest the origin
  const auto xs = ones.collect();
  const int gaps = static_cast<int>(xs.size()) - 1;
  const int use = std::min(window, gaps);
  long long total = 0;
  for (int i = 0; i < use; ++i) total += xs[i + 1] - xs[i];
  return static_cast<double>(total) / use;
}

}  // namespace sandlab
