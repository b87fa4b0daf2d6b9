#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sandlab/lattice.hpp"
#include "sandlab/model.hpp"

namespace sandlab {

// Probability vector over the 2^n ring configurations; state s encodes
// eta(x) = 1 exactly when bit x of s is set.
struct Distribution {
  std::vector<double> w;

  static Distribution dirac(int state, int num_states);
  static Distribution uniform(int num_states);
  static Distribution product(double rho, int n);  // lambda_rho as a vector

  double sum() const;
  void validate() const;  // nonnegative, sums to 1 within 1e-12
};

// Exact generator of the finite-ring process: every off-diagonal entry is one
// operator application with its rate; identity events contribute nothing.
class ExactChain {
 public:
  Topology topo;
  ModelSpec spec;
  int n = 0;

  // CSR transitions, diagonal implicit (row sums are zero)
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> rate;
  std::vector<double> exit_rate;
  double uniformization_rate = 0.0;  // max total exit rate

  int num_states() const { return 1 << n; }
  Configuration config_of(int state) const;
  static int state_of(const Configuration& cfg);

  // y = x Q (left multiplication by the generator)
  std::vector<double> apply_generator(const std::vector<double>& x) const;
  double max_abs_row_sum_residual() const;
};

constexpr int kMaxExactSites = 12;

ExactChain enumerate_chain(Topology topo, const ModelSpec& spec);

// exp(tQ) evolution by uniformization, Poisson tail truncated below 1e-12.
Distribution transient_distribution(const ExactChain& chain, const Distribution& init,
                                    double t);

// Stationary vector with ||pi Q||_inf < 1e-10: uniformized power iteration
// with a dense LU solve of (pi Q = 0, sum pi = 1) as the fallback.
Distribution stationary_distribution(const ExactChain& chain);

double stationary_residual(const ExactChain& chain, const Distribution& pi);

double expectation(const Distribution& dist, const std::function<double(int)>& f);

// convenience observables on encoded states
double marginal_one(const Distribution& dist, int site);
double mean_ones_density(const Distribution& dist, int n);

// ---------------------------------------------------------------------------
// Stochastic domination. Heights order sitewise, so eta <= xi exactly when
// the ones of eta contain the ones of xi.

constexpr int kMaxExactDomination = 8;

// Necessary condition on increasing cylinder events over at most four sites:
// returns true when some event has P_lower > P_upper (domination refuted).
bool domination_prefilter_refutes(const Distribution& lower, const Distribution& upper,
                                  int n);

// Strassen feasibility via max-flow; exact for n <= kMaxExactDomination.
bool dominated_exact(const Distribution& lower, const Distribution& upper, int n);

enum class DominationVerdict { kDominated, kRefuted, kNotRefuted };

// Exact verdict for n <= 8; for larger n only the prefilter runs and a pass
// is reported as "not refuted".
DominationVerdict stochastic_domination_check(const Distribution& lower,
                                              const Distribution& upper, int n);

// ---------------------------------------------------------------------------
// Truncated series for the semigroup acting on a local observable,
// S(t) f = sum_k t^k (L^k f) / k!, evaluated matrix-free by repeated
// pointwise application of the generator.

struct LocalObservable {
  std::function<double(const Configuration&)> fn;
  double sup_norm = 1.0;
};

struct SeriesResult {
  double estimate = 0.0;
  double remainder_bound = 0.0;
  int terms = 0;
};

// Largest trusted t: 1 / (4 r e a(eta)) with r the per-site event rate and
// a(eta) the mean inactive gap of the configuration.
double series_trust_window(const Configuration& cfg, const ModelSpec& spec);

// Refuses t outside the trust window; n_max <= 8.
SeriesResult series_semigroup(const Configuration& cfg, const LocalObservable& f,
                              const ModelSpec& spec, double t, int n_max);

}  // namespace sandlab
