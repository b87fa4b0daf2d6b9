#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sandlab/bit_index.hpp"
#include "sandlab/model.hpp"

namespace sandlab {

enum class TopologyKind { kRing, kInterval };

// Interval carries virtual inactive sites at -1 and n that are consulted by
// the addition rule (and, dually, virtual active sites for anti-additions)
// but never stored.
struct Topology {
  TopologyKind kind = TopologyKind::kRing;
  int n = 3;

  static Topology ring(int n) { return make(TopologyKind::kRing, n); }
  static Topology interval(int n) { return make(TopologyKind::kInterval, n); }

  bool is_ring() const { return kind == TopologyKind::kRing; }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.kind == b.kind && a.n == b.n;
  }

 private:
  static Topology make(TopologyKind k, int n) {
    if (n < 3) throw std::invalid_argument("topology: need at least 3 sites");
    return {k, n};
  }
};

// Heights in {1,2}: 1 = inactive, 2 = active. The configuration is stored as
// two complementary position indexes, so nearest-inactive and nearest-active
// queries are a few word operations and a global flip is a swap.
class Configuration {
 public:
  Configuration(Topology topo, const std::vector<int>& heights);

  // all sites at the given height
  static Configuration uniform(Topology topo, int height);

  const Topology& topology() const { return topo_; }
  int size() const { return topo_.n; }

  int height(int x) const {
    check_site(x);
    return ones_.test(x) ? 1 : 2;
  }
  bool inactive(int x) const {
    check_site(x);
    return ones_.test(x);
  }
  int inactive_count() const { return ones_.size(); }
  int active_count() const { return twos_.size(); }
  const BitIndex& inactive_index() const { return ones_; }
  const BitIndex& active_index() const { return twos_; }
  std::vector<int> heights() const;

  // closed-form operators, in place
  void flip(int x);
  void add(int x);
  void anti_add(int x);
  void global_flip() { std::swap(ones_, twos_); }

  // nearest inactive/active site strictly left/right of x. Ring: wraps, and
  // comes back to x itself if x is the only such site; empty if none exist.
  // Interval: the virtual positions -1 and n stand in when no interior site
  // qualifies (inactive for the one-queries, active for the two-queries).
  std::optional<int> nearest_one_right(int x) const;
  std::optional<int> nearest_one_left(int x) const;
  std::optional<int> nearest_two_right(int x) const;
  std::optional<int> nearest_two_left(int x) const;

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.topo_ == b.topo_ && a.ones_ == b.ones_;
  }

 private:
  Configuration(Topology topo) : topo_(topo), ones_(topo.n), twos_(topo.n) {}

  void check_site(int x) const {
    if (x < 0 || x >= topo_.n) throw std::invalid_argument("invalid site index");
  }
  void set_one(int x) {
    ones_.set(x);
    twos_.clear(x);
  }
  void set_two(int x) {
    twos_.set(x);
    ones_.clear(x);
  }
  int wrap(long long v) const {
    int n = topo_.n;
    int r = static_cast<int>(v % n);
    return r < 0 ? r + n : r;
  }
  void add_ring(int x);
  void add_interval(int x);
  void anti_add_ring(int x);
  void anti_add_interval(int x);

  Topology topo_;
  BitIndex ones_;
  BitIndex twos_;
};

// pure variants
Configuration flipped(Configuration cfg, int x);
Configuration with_addition(Configuration cfg, int x);
Configuration with_anti_addition(Configuration cfg, int x);
Configuration global_flipped(Configuration cfg);

enum class Direction { kLeft, kRight };

// Nearest inactive site scanning from x+1 (right) or x-1 (left).
std::optional<int> nearest_inactive(const Configuration& cfg, int x, Direction d);

// Gap queries: k_plus(i) = inf{j >= 0 : eta(i+j) = 1} and
// k_minus(i) = inf{j > 0 : eta(i-j) = 1}; note the deliberate asymmetry in
// whether i itself counts. Ring queries wrap and are empty when no inactive
// site exists; interval queries fall back to the virtual boundary.
std::optional<int> k_plus(const Configuration& cfg, int i);
std::optional<int> k_minus(const Configuration& cfg, int i);

// Verifies the internal invariants (complementary indexes, counts).
void audit_configuration(const Configuration& cfg);

// ---------------------------------------------------------------------------
// Toppling oracle. Kept deliberately independent of the closed-form
// operators: plain height arrays, local toppling moves, no position index.

struct UnstableConfiguration {
  Topology topo;               // interval only
  std::vector<int> heights;    // transiently 0 or >= 3

  static UnstableConfiguration from(const Configuration& cfg);
  void add_grain(int x) { heights.at(x) += 1; }
  void remove_grain(int x) { heights.at(x) -= 1; }
};

enum class ToppleMode { kForward, kReverse };
enum class ToppleOrder { kFifo, kLifo, kShuffled };

// Forward: a site at height >= 3 sheds two grains, one to each neighbour;
// grains falling off the boundary vanish. Reverse: a site at height <= 0
// absorbs two grains, one from each neighbour; the boundary acts as a source.
// The result is order-independent; `order` only selects the processing
// schedule so tests can exercise that.
Configuration stabilize_by_toppling(const UnstableConfiguration& u, ToppleMode mode,
                                    ToppleOrder order = ToppleOrder::kFifo,
                                    uint64_t shuffle_seed = 0);

// ---------------------------------------------------------------------------
// Pointwise generator at the origin.

// Flip rate c(x, eta) for the given family; interval neighbours outside the
// volume count as inactive.
double flip_rate(const FlipRateSpec& spec, const Configuration& cfg, int x);

// A ring configuration is wrap-safe at the origin when it has at least two
// inactive and two active sites and the inactive gaps on both sides of the
// origin are shorter than n/2. Inside that window the finite ring evaluates
// generators exactly as the infinite lattice would.
bool wrap_safe_at_origin(const Configuration& cfg);

// Explicit finite sum  sum_x rate(x) * [f(op_x eta)(0) - eta(0)]  over every
// site, for f(eta) = eta(0). Refuses wrap-unsafe ring configurations.
double pointwise_generator_at_origin(const Configuration& cfg, const ModelSpec& spec);

// Closed form alpha*chi(eta(0)=1)*(k+(1)+k-(0)+1) + 3 - alpha - 2*eta(0) for
// the pure sand-flip model; same wrap-safety requirement.
double generator_origin_closed_form(const Configuration& cfg, double alpha);

// Average distance between consecutive inactive sites over `window` gaps
// around the origin. Needs at least two inactive sites.
double decency_statistic(const Configuration& cfg, int window);

}  // namespace sandlab
