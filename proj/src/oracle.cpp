#include "sandlab/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <numeric>
#include <unordered_map>

namespace sandlab {

Distribution Distribution::dirac(int state, int num_states) {
  Distribution d;
  d.w.assign(num_states, 0.0);
  d.w.at(state) = 1.0;
  return d;
}

Distribution Distribution::uniform(int num_states) {
  Distribution d;
  d.w.assign(num_states, 1.0 / num_states);
  return d;
}

Distribution Distribution::product(double rho, int n) {
  Distribution d;
  d.w.assign(1 << n, 0.0);
  for (int s = 0; s < (1 << n); ++s) {
    const int ones = std::popcount(static_cast<unsigned>(s));
    d.w[s] = std::pow(rho, ones) * std::pow(1.0 - rho, n - ones);
  }
  return d;
}

double Distribution::sum() const { return std::accumulate(w.begin(), w.end(), 0.0); }

void Distribution::validate() const {
  for (double v : w)
    if (v < -1e-15) throw std::logic_error("distribution: negative weight");
  if (std::abs(sum() - 1.0) > 1e-12)
    throw std::logic_error("distribution: weights do not sum to 1");
}

Configuration ExactChain::config_of(int state) const {
  std::vector<int> h(n);
  for (int x = 0; x < n; ++x) h[x] = (state >> x) & 1 ? 1 : 2;
  return Configuration(topo, h);
}

int ExactChain::state_of(const Configuration& cfg) {
  int s = 0;
  for (int x : cfg.inactive_index().collect()) s |= 1 << x;
  return s;
}

std::vector<double> ExactChain::apply_generator(const std::vector<double>& x) const {
  const int S = num_states();
  std::vector<double> y(S, 0.0);
  for (int s = 0; s < S; ++s) {
    const double xs = x[s];
    if (xs == 0.0) continue;
    for (int k = row_ptr[s]; k < row_ptr[s + 1]; ++k) y[col[k]] += xs * rate[k];
    y[s] -= xs * exit_rate[s];
  }
  return y;
}

double ExactChain::max_abs_row_sum_residual() const {
  double worst = 0.0;
  for (int s = 0; s < num_states(); ++s) {
    double sum = -exit_rate[s];
    for (int k = row_ptr[s]; k < row_ptr[s + 1]; ++k) sum += rate[k];
    worst = std::max(worst, std::abs(sum));
  }
  return worst;
}

ExactChain enumerate_chain(Topology topo, const ModelSpec& spec) {
  spec.validate();
  if (!topo.is_ring())
    throw std::invalid_argument("exact chain: ring topology required");
  if (topo.n > kMaxExactSites)
    throw std::invalid_argument("exact chain: at most 12 sites");

  ExactChain chain;
  chain.topo = topo;
  chain.spec = spec;
  chain.n = topo.n;
  const int S = chain.num_states();
  chain.row_ptr.assign(S + 1, 0);
  chain.exit_rate.assign(S, 0.0);

  std::vector<std::pair<int, double>> row;
  for (int s = 0; s < S; ++s) {
    row.clear();
    const Configuration cfg = chain.config_of(s);
    Configuration scratch = cfg;
    for (int x = 0; x < chain.n; ++x) {
      scratch = cfg;
      scratch.add(x);
      if (const int t = ExactChain::state_of(scratch); t != s && spec.alpha > 0.0)
        row.emplace_back(t, spec.alpha);
      if (spec.kind == ModelKind::kSandFlip) {
        const double c = flip_rate(spec.flip, cfg, x);
        if (c > 0.0) row.emplace_back(s ^ (1 << x), c);
      } else {
        scratch = cfg;
        scratch.anti_add(x);
        if (const int t = ExactChain::state_of(scratch); t != s && spec.beta > 0.0)
          row.emplace_back(t, spec.beta);
      }
    }
    chain.row_ptr[s + 1] = chain.row_ptr[s] + static_cast<int>(row.size());
    for (auto [t, r] : row) {
      chain.col.push_back(t);
      chain.rate.push_back(r);
      chain.exit_rate[s] += r;
    }
    chain.uniformization_rate = std::max(chain.uniformization_rate, chain.exit_rate[s]);
  }
  return chain;
}

// one step of the uniformized kernel P = I + Q/lambda (left multiplication)
static std::vector<double> uniform_step(const ExactChain& chain,
                                        const std::vector<double>& v, double lambda) {
  const int S = chain.num_states();
  std::vector<double> y(S, 0.0);
  for (int s = 0; s < S; ++s) {
    const double vs = v[s];
    if (vs == 0.0) continue;
    y[s] += vs * (1.0 - chain.exit_rate[s] / lambda);
    const double f = vs / lambda;
    for (int k = chain.row_ptr[s]; k < chain.row_ptr[s + 1]; ++k)
      y[chain.col[k]] += f * chain.rate[k];
  }
  return y;
}

Distribution transient_distribution(const ExactChain& chain, const Distribution& init,
                                    double t) {
  if (t < 0.0) throw std::invalid_argument("transient: t must be nonnegative");
  if (static_cast<int>(init.w.size()) != chain.num_states())
    throw std::invalid_argument("transient: dimension mismatch");
  if (t == 0.0) return init;

  const double lambda = std::max(chain.uniformization_rate, 1e-12);
  const double a = lambda * t;
  std::vector<double> v = init.w;
  std::vector<double> acc(v.size(), 0.0);

  double pk = std::exp(-a);  // Poisson(a) weight at k=0; a stays << 700 here
  double cum = 0.0;
  const long long k_max =
      static_cast<long long>(a + 12.0 * std::sqrt(a + 1.0) + 60.0);
  for (long long k = 0;; ++k) {
    if (pk > 0.0) {
      for (size_t i = 0; i < v.size(); ++i) acc[i] += pk * v[i];
      cum += pk;
    }
    if (1.0 - cum < 1e-12 || k >= k_max) break;
    v = uniform_step(chain, v, lambda);
    pk *= a / (k + 1);
  }
  Distribution out;
  out.w = std::move(acc);
  for (double& x : out.w) x /= cum;  // renormalize away the truncated tail
  return out;
}

double stationary_residual(const ExactChain& chain, const Distribution& pi) {
  const auto r = chain.apply_generator(pi.w);
  double worst = 0.0;
  for (double v : r) worst = std::max(worst, std::abs(v));
  return worst;
}

// Dense LU with partial pivoting on the transposed system, the guaranteed
// route when power iteration stalls.
static Distribution stationary_by_lu(const ExactChain& chain) {
  const int S = chain.num_states();
  if (S > 4096) throw std::invalid_argument("stationary: dense solve capped at 4096 states");
  std::vector<double> A(static_cast<size_t>(S) * S, 0.0);
  // rows 1..S-1 carry the columns of Q; row 0 is the normalization sum(pi)=1
  for (int s = 0; s < S; ++s) {
    for (int k = chain.row_ptr[s]; k < chain.row_ptr[s + 1]; ++k) {
      const int t = chain.col[k];
      if (t != 0) A[static_cast<size_t>(t) * S + s] += chain.rate[k];
    }
    if (s != 0) A[static_cast<size_t>(s) * S + s] -= chain.exit_rate[s];
  }
  for (int s = 0; s < S; ++s) A[static_cast<size_t>(0) * S + s] = 1.0;

  std::vector<double> b(S, 0.0);
  b[0] = 1.0;
  std::vector<int> piv(S);
  std::iota(piv.begin(), piv.end(), 0);
  for (int k = 0; k < S; ++k) {
    int p = k;
    double best = std::abs(A[static_cast<size_t>(k) * S + k]);
    for (int i = k + 1; i < S; ++i) {
      const double v = std::abs(A[static_cast<size_t>(i) * S + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best == 0.0) throw std::runtime_error("stationary: singular system (reducible chain?)");
    if (p != k) {
      for (int j = 0; j < S; ++j)
        std::swap(A[static_cast<size_t>(p) * S + j], A[static_cast<size_t>(k) * S + j]);
      std::swap(b[p], b[k]);
    }
    const double inv = 1.0 / A[static_cast<size_t>(k) * S + k];
    for (int i = k + 1; i < S; ++i) {
      const double f = A[static_cast<size_t>(i) * S + k] * inv;
      if (f == 0.0) continue;
      A[static_cast<size_t>(i) * S + k] = 0.0;
      double* __restrict ai = &A[static_cast<size_t>(i) * S];
      const double* __restrict ak = &A[static_cast<size_t>(k) * S];
      for (int j = k + 1; j < S; ++j) ai[j] -= f * ak[j];
      b[i] -= f * b[k];
    }
  }
  for (int i = S - 1; i >= 0; --i) {
    double v = b[i];
    const double* ai = &A[static_cast<size_t>(i) * S];
    for (int j = i + 1; j < S; ++j) v -= ai[j] * b[j];
    b[i] = v / ai[i];
  }

  Distribution pi;
  pi.w = std::move(b);
  double total = 0.0;
  for (double& v : pi.w) {
    if (v < 0.0 && v > -1e-12) v = 0.0;
    total += v;
  }
  for (double& v : pi.w) v /= total;
  return pi;
}

Distribution stationary_distribution(const ExactChain& chain) {
  const int S = chain.num_states();
  // strictly positive diagonal keeps the uniformized kernel aperiodic
  const double lambda = 1.05 * std::max(chain.uniformization_rate, 1e-12);
  Distribution pi = Distribution::uniform(S);
  std::vector<double> v = pi.w;
  const int check_every = 16;
  const int max_iters = 20000;
  for (int it = 1; it <= max_iters; ++it) {
    v = uniform_step(chain, v, lambda);
    if (it % check_every == 0) {
      pi.w = v;
      if (stationary_residual(chain, pi) < 5e-11) {
        pi.validate();
        return pi;
      }
    }
  }
  pi = stationary_by_lu(chain);
  if (stationary_residual(chain, pi) >= 1e-10)
    throw std::runtime_error("stationary: residual above tolerance");
  pi.validate();
  return pi;
}

double expectation(const Distribution& dist, const std::function<double(int)>& f) {
  double s = 0.0;
  for (size_t i = 0; i < dist.w.size(); ++i)
    if (dist.w[i] != 0.0) s += dist.w[i] * f(static_cast<int>(i));
  return s;
}

double marginal_one(const Distribution& dist, int site) {
  return expectation(dist, [site](int s) { return (s >> site) & 1 ? 1.0 : 0.0; });
}

double mean_ones_density(const Distribution& dist, int n) {
  return expectation(dist, [n](int s) {
    return static_cast<double>(std::popcount(static_cast<unsigned>(s))) / n;
  });
}

// ---------------------------------------------------------------------------
// Domination.

bool domination_prefilter_refutes(const Distribution& lower, const Distribution& upper,
                                  int n) {
  if (lower.w.size() != upper.w.size() ||
      static_cast<int>(lower.w.size()) != (1 << n))
    throw std::invalid_argument("domination: dimension mismatch");
  // increasing cylinder events {eta(s) = 2 for all s in S}, |S| <= 4
  std::vector<int> subsets;
  for (int mask = 1; mask < (1 << n); ++mask)
    if (std::popcount(static_cast<unsigned>(mask)) <= 4) subsets.push_back(mask);
  for (int set : subsets) {
    double pl = 0.0, pu = 0.0;
    for (int s = 0; s < (1 << n); ++s) {
      if ((s & set) == 0) {  // every site of the set is active
        pl += lower.w[s];
        pu += upper.w[s];
      }
    }
    if (pl > pu + 1e-11) return true;
  }
  return false;
}

namespace {

// Dinic max-flow on doubles; graphs here are tiny (a few hundred nodes).
class MaxFlow {
 public:
  explicit MaxFlow(int nodes) : head_(nodes, -1), level_(nodes), it_(nodes) {}

  void add_edge(int u, int v, double cap) {
    edges_.push_back({v, head_[u], cap});
    head_[u] = static_cast<int>(edges_.size()) - 1;
    edges_.push_back({u, head_[v], 0.0});
    head_[v] = static_cast<int>(edges_.size()) - 1;
  }

  double run(int s, int t) {
    double flow = 0.0;
    while (bfs(s, t)) {
      it_ = head_;
      while (true) {
        const double f = dfs(s, t, 1e18);
        if (f <= 1e-14) break;
        flow += f;
      }
    }
    return flow;
  }

 private:
  struct Edge {
    int to;
    int next;
    double cap;
  };

  bool bfs(int s, int t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::deque<int> q{s};
    level_[s] = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      for (int e = head_[u]; e != -1; e = edges_[e].next) {
        if (edges_[e].cap > 1e-14 && level_[edges_[e].to] < 0) {
          level_[edges_[e].to] = level_[u] + 1;
          q.push_back(edges_[e].to);
        }
      }
    }
    return level_[t] >= 0;
  }

  double dfs(int u, int t, double limit) {
    if (u == t) return limit;
    for (int& e = it_[u]; e != -1; e = edges_[e].next) {
      Edge& ed = edges_[e];
      if (ed.cap > 1e-14 && level_[ed.to] == level_[u] + 1) {
        const double f = dfs(ed.to, t, std::min(limit, ed.cap));
        if (f > 1e-14) {
          ed.cap -= f;
          edges_[e ^ 1].cap += f;
          return f;
        }
      }
    }
    return 0.0;
  }

  std::vector<Edge> edges_;
  std::vector<int> head_;
  std::vector<int> level_;
  std::vector<int> it_;
};

}  // namespace

bool dominated_exact(const Distribution& lower, const Distribution& upper, int n) {
  if (n > kMaxExactDomination)
    throw std::invalid_argument("domination: exact check capped at 8 sites");
  if (lower.w.size() != upper.w.size() ||
      static_cast<int>(lower.w.size()) != (1 << n))
    throw std::invalid_argument("domination: dimension mismatch");
  if (domination_prefilter_refutes(lower, upper, n)) return false;

  const int S = 1 << n;
  const int src = 2 * S, sink = 2 * S + 1;
  MaxFlow mf(2 * S + 2);
  for (int i = 0; i < S; ++i) {
    if (lower.w[i] > 0.0) mf.add_edge(src, i, lower.w[i]);
    if (upper.w[i] > 0.0) mf.add_edge(S + i, sink, upper.w[i]);
  }
  // eta_i <= eta_j exactly when ones(i) is a superset of ones(j)
  for (int j = 0; j < S; ++j) {
    if (upper.w[j] <= 0.0) continue;
    const int rest = ~j & (S - 1);
    for (int t = rest;; t = (t - 1) & rest) {
      const int i = j | t;
      if (lower.w[i] > 0.0) mf.add_edge(i, S + j, 2.0);
      if (t == 0) break;
    }
  }
  return mf.run(src, sink) >= 1.0 - 1e-9;
}

DominationVerdict stochastic_domination_check(const Distribution& lower,
                                              const Distribution& upper, int n) {
  if (n <= kMaxExactDomination)
    return dominated_exact(lower, upper, n) ? DominationVerdict::kDominated
                                            : DominationVerdict::kRefuted;
  return domination_prefilter_refutes(lower, upper, n) ? DominationVerdict::kRefuted
                                                       : DominationVerdict::kNotRefuted;
}

// ---------------------------------------------------------------------------
// Series semigroup.

double series_trust_window(const Configuration& cfg, const ModelSpec& spec) {
  if (cfg.inactive_count() < 2) return 0.0;  // not decent at this size
  const double mean_gap =
      static_cast<double>(cfg.size()) / cfg.inactive_count();
  const double r = spec.per_site_rate();
  return 1.0 / (4.0 * r * std::exp(1.0) * mean_gap);
}

SeriesResult series_semigroup(const Configuration& cfg, const LocalObservable& f,
                              const ModelSpec& spec, double t, int n_max) {
  spec.validate();
  if (!cfg.topology().is_ring())
    throw std::invalid_argument("series: ring topology required");
  if (cfg.size() > 24)
    throw std::invalid_argument("series: ring too large for exact expansion");
  if (n_max < 0 || n_max > 8)
    throw std::invalid_argument("series: n_max must lie in [0, 8]");
  if (t < 0.0) throw std::invalid_argument("series: t must be nonnegative");
  if (t > series_trust_window(cfg, spec))
    throw std::domain_error("series: t outside the trusted convergence window");

  const int n = cfg.size();
  const uint32_t root = static_cast<uint32_t>(ExactChain::state_of(cfg));

  // transitions are built lazily per visited configuration
  std::unordered_map<uint32_t, std::vector<std::pair<uint32_t, double>>> trans;
  auto transitions = [&](uint32_t s) -> const std::vector<std::pair<uint32_t, double>>& {
    auto it = trans.find(s);
    if (it != trans.end()) return it->second;
    std::vector<int> h(n);
    for (int x = 0; x < n; ++x) h[x] = (s >> x) & 1 ? 1 : 2;
    const Configuration base(cfg.topology(), h);
    std::vector<std::pair<uint32_t, double>> out;
    Configuration scratch = base;
    for (int x = 0; x < n; ++x) {
      scratch = base;
      scratch.add(x);
      const auto ta = static_cast<uint32_t>(ExactChain::state_of(scratch));
      if (ta != s && spec.alpha > 0.0) out.emplace_back(ta, spec.alpha);
      if (spec.kind == ModelKind::kSandFlip) {
        out.emplace_back(s ^ (1u << x), flip_rate(spec.flip, base, x));
      } else if (spec.beta > 0.0) {
        scratch = base;
        scratch.anti_add(x);
        const auto tb = static_cast<uint32_t>(ExactChain::state_of(scratch));
        if (tb != s) out.emplace_back(tb, spec.beta);
      }
    }
    return trans.emplace(s, std::move(out)).first->second;
  };

  std::unordered_map<uint64_t, double> memo;
  std::function<double(int, uint32_t)> iterate = [&](int k, uint32_t s) -> double {
    if (k == 0) {
      std::vector<int> h(n);
      for (int x = 0; x < n; ++x) h[x] = (s >> x) & 1 ? 1 : 2;
      return f.fn(Configuration(cfg.topology(), h));
    }
    const uint64_t key = (static_cast<uint64_t>(k) << 32) | s;
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    double v = 0.0;
    const double base = iterate(k - 1, s);
    for (const auto& [tgt, r] : transitions(s)) v += r * (iterate(k - 1, tgt) - base);
    memo.emplace(key, v);
    return v;
  };

  SeriesResult res;
  res.terms = n_max;
  double factorial = 1.0;
  double tk = 1.0;
  for (int k = 0; k <= n_max; ++k) {
    if (k > 0) {
      factorial *= k;
      tk *= t;
    }
    res.estimate += tk * iterate(k, root) / factorial;
  }

  // remainder from the crude operator-norm bound ||L g|| <= 2 Lambda ||g||
  const double two_lambda_t = 2.0 * spec.per_site_rate() * n * t;
  double term = f.sup_norm;
  for (int k = 1; k <= n_max + 1; ++k) term *= two_lambda_t / k;
  double bound = 0.0;
  for (int k = n_max + 1; k <= n_max + 400; ++k) {
    bound += term;
    term *= two_lambda_t / (k + 1);
    if (term < bound * 1e-16) break;
  }
  res.remainder_bound = bound;
  return res;
}

}  // namespace sandlab
