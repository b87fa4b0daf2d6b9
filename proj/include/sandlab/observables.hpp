#pragma once

#include <map>
#include <span>
#include <vector>

#include "sandlab/lattice.hpp"
#include "sandlab/model.hpp"
#include "sandlab/rng.hpp"

namespace sandlab {

double density_of_ones(const Configuration& cfg);

// chi(eta(offset+1) = ... = eta(offset+n) = 1); blocks wrap on rings.
int block_indicator(const Configuration& cfg, int n, int offset = 0);

// Multiset of distances between consecutive inactive sites on a ring; the
// weighted sum of gaps equals the ring size.
std::map<int, int> gap_statistics(const Configuration& cfg);

// (1/N) sum_x chi(eta(x)=1) k_minus(x) - 1; identically zero on any ring
// configuration with at least one inactive site, because the gaps partition
// the ring.
double renewal_identity_residual(const Configuration& cfg);

struct EstimateWithCI {
  enum class Method { kBatchMeans, kReplicateMeans };
  double mean = 0.0;
  double half_width = 0.0;  // 95% level
  int n_samples = 0;
  Method method = Method::kBatchMeans;

  bool covers(double target) const {
    return mean - half_width <= target && target <= mean + half_width;
  }
};

EstimateWithCI batch_means(std::span<const double> series, int n_batches = 20);
EstimateWithCI replicate_means(std::span<const double> replicates);

namespace theory {

// rho(t) = rho0 e^{-2t} + (1-alpha)/2 (1 - e^{-2t}), clipped to [0,1]
// (pure flip rates).
double predicted_density(double t, double rho0, double alpha);

// General flip families: the ones-density solves d rho/dt = a - b rho with
//   pure     a = 1 - alpha,            b = 2
//   glauber  a = alpha_c - alpha,      b = 2 alpha_c   (alpha_c = 1 - 2 gamma)
//   biased   a = 1 - kappa - alpha,    b = 2
double predicted_density(double t, double rho0, double alpha, const FlipRateSpec& flip);

// Time at which the predicted density hits zero; +infinity when it never
// does (alpha <= critical value).
double freeze_time(double rho0, double alpha);

// Time at which the pure-model density first reaches eps; +infinity if the
// stationary density exceeds eps.
double epsilon_hitting_time(double rho0, double alpha, double eps);

double critical_alpha(const FlipRateSpec& flip);

// Stationary density of ones, max(0, a/b) in the notation above. For pure
// and glauber rates this is (1/2)(1 - alpha/alpha_c).
double predicted_stationary_density(double alpha, const FlipRateSpec& flip);

// (m - alpha) / 2M: every translation-invariant stationary measure puts at
// least this much density on ones when alpha < m.
double stationary_density_lower_bound(double alpha, const FlipRateSpec& flip);

enum class BlockGenerator { kSandpile, kFlip, kSandAntiSand };

// Exact product-measure block identities for H_n, n >= 2:
//   sandpile        -n rho^n - 2 rho^{n-1} (1-rho)
//   flip            -n rho^n + n rho^{n-1} (1-rho)
//   sand/anti-sand   rho^{n-1} (1-rho) (n-2)
double predicted_generator_block(double rho, int n, BlockGenerator which);

// The product density that would make lambda_rho stationary for block size n;
// its dependence on n is the non-product contradiction.
double product_consistency_rho(int n, double alpha);

}  // namespace theory

// Monte Carlo evaluation of the block-generator integrals: sample a ring from
// the product measure and enumerate the finitely many contributing operator
// sites around the block.
EstimateWithCI mc_generator_block_estimate(double rho, int n, theory::BlockGenerator which,
                                           int samples, int ring_n, Rng& rng);

// Exact per-configuration value of sum_x [H_n(op_x eta) - H_n(eta)] used by
// the estimator; exposed for cross-checking against brute force.
double block_generator_term(const Configuration& cfg, int n, theory::BlockGenerator which);

}  // namespace sandlab
