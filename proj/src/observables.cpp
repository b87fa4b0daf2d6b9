#include "sandlab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sandlab {

double density_of_ones(const Configuration& cfg) {
  return static_cast<double>(cfg.inactive_count()) / cfg.size();
}

int block_indicator(const Configuration& cfg, int n, int offset) {
  if (n < 1) throw std::invalid_argument("block indicator: n must be >= 1");
  const int size = cfg.size();
  if (cfg.topology().is_ring()) {
    if (n > size) throw std::invalid_argument("block indicator: block exceeds lattice");
    for (int i = 1; i <= n; ++i)
      if (!cfg.inactive(((offset + i) % size + size) % size)) return 0;
    return 1;
  }
  if (offset + 1 < 0 || offset + n > size - 1)
    throw std::invalid_argument("block indicator: block exceeds lattice");
  for (int i = 1; i <= n; ++i)
    if (!cfg.inactive(offset + i)) return 0;
  return 1;
}

std::map<int, int> gap_statistics(const Configuration& cfg) {
  if (!cfg.topology().is_ring())
    throw std::invalid_argument("gap statistics: ring topology required");
  if (cfg.inactive_count() < 2)
    throw std::invalid_argument("gap statistics: needs at least two inactive sites");
  const int n = cfg.size();
  const auto xs = cfg.inactive_index().collect();
  std::map<int, int> hist;
  for (size_t i = 0; i + 1 < xs.size(); ++i) hist[xs[i + 1] - xs[i]] += 1;
  hist[xs.front() + n - xs.back()] += 1;  // wrap gap
  return hist;
}

double renewal_identity_residual(const Configuration& cfg) {
  if (!cfg.topology().is_ring())
    throw std::invalid_argument("renewal identity: ring topology required");
  if (cfg.inactive_count() < 1)
    throw std::invalid_argument("renewal identity: needs at least one inactive site");
  const int n = cfg.size();
  long long sum = 0;
  for (int x : cfg.inactive_index().collect()) sum += *k_minus(cfg, x);
  return static_cast<double>(sum) / n - 1.0;
}

static EstimateWithCI summarize(const std::vector<double>& means,
                                EstimateWithCI::Method method, int n_samples) {
  const int b = static_cast<int>(means.size());
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / b;
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  const double sd = b > 1 ? std::sqrt(ss / (b - 1)) : 0.0;
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(b)), n_samples, method};
}

EstimateWithCI batch_means(std::span<const double> series, int n_batches) {
  if (n_batches < 20) throw std::invalid_argument("batch means: need >= 20 batches");
  const int len = static_cast<int>(series.size());
  if (len < n_batches) throw std::invalid_argument("batch means: series too short");
  const int bs = len / n_batches;
  std::vector<double> means(n_batches, 0.0);
  for (int b = 0; b < n_batches; ++b) {
    double s = 0.0;
    for (int i = b * bs; i < (b + 1) * bs; ++i) s += series[i];
    means[b] = s / bs;
  }
  return summarize(means, EstimateWithCI::Method::kBatchMeans, n_batches * bs);
}

EstimateWithCI replicate_means(std::span<const double> replicates) {
  if (replicates.size() < 20)
    throw std::invalid_argument("replicate means: need >= 20 replicates");
  std::vector<double> v(replicates.begin(), replicates.end());
  return summarize(v, EstimateWithCI::Method::kReplicateMeans,
                   static_cast<int>(v.size()));
}

namespace theory {

double predicted_density(double t, double rho0, double alpha) {
  const double decay = std::exp(-2.0 * t);
  const double v = rho0 * decay + 0.5 * (1.0 - alpha) * (1.0 - decay);
  return std::clamp(v, 0.0, 1.0);
}

static void ode_coefficients(double alpha, const FlipRateSpec& flip, double& a, double& b) {
  a = 1.0 - alpha;
  b = 2.0;
  switch (flip.family) {
    case FlipFamily::kPure:
      a = 1.0 - alpha;
      b = 2.0;
      return;
    case FlipFamily::kGlauber: {
      const double ac = 1.0 - 2.0 * flip.gamma;
      a = ac - alpha;
      b = 2.0 * ac;
      return;
    }
    case FlipFamily::kBiased:
      a = 1.0 - flip.kappa - alpha;
      b = 2.0;
      return;
  }
}

double predicted_density(double t, double rho0, double alpha, const FlipRateSpec& flip) {
  double a, b;
  ode_coefficients(alpha, flip, a, b);
  if (b <= 0.0) return std::clamp(rho0 + a * t, 0.0, 1.0);  // gamma = 1/2 edge
  const double inf = a / b;
  const double v = inf + (rho0 - inf) * std::exp(-b * t);
  return std::clamp(v, 0.0, 1.0);
}

double freeze_time(double rho0, double alpha) {
  if (!(rho0 >= 0.0 && rho0 <= 1.0))
    throw std::invalid_argument("freeze time: rho0 must lie in [0, 1]");
  if (rho0 == 0.0) return 0.0;
  if (alpha <= 1.0) return std::numeric_limits<double>::infinity();
  // (rho0 + (alpha-1)/2) e^{-2t} = (alpha-1)/2
  return 0.5 * std::log((2.0 * rho0 + alpha - 1.0) / (alpha - 1.0));
}

double epsilon_hitting_time(double rho0, double alpha, double eps) {
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("hitting time: eps must lie in (0, 1)");
  const double inf = 0.5 * (1.0 - alpha);
  if (rho0 <= eps) return 0.0;
  if (eps <= inf) return std::numeric_limits<double>::infinity();
  return 0.5 * std::log((rho0 - inf) / (eps - inf));
}

double critical_alpha(const FlipRateSpec& flip) {
  switch (flip.family) {
    case FlipFamily::kPure: return 1.0;
    case FlipFamily::kGlauber: return 1.0 - 2.0 * flip.gamma;
    case FlipFamily::kBiased: return 1.0 - flip.kappa;
  }
  return 1.0;
}

double predicted_stationary_density(double alpha, const FlipRateSpec& flip) {
  double a, b;
  ode_coefficients(alpha, flip, a, b);
  if (b <= 0.0) return 0.0;
  return std::max(0.0, a / b);
}

double stationary_density_lower_bound(double alpha, const FlipRateSpec& flip) {
  return (flip.min_rate() - alpha) / (2.0 * flip.max_rate());
}

double predicted_generator_block(double rho, int n, BlockGenerator which) {
  if (n < 2)
    throw std::invalid_argument("block generator: identities hold for n >= 2 only");
  const double pn1 = std::pow(rho, n - 1);
  switch (which) {
    case BlockGenerator::kSandpile:
      return -n * pn1 * rho - 2.0 * pn1 * (1.0 - rho);
    case BlockGenerator::kFlip:
      return -n * pn1 * rho + n * pn1 * (1.0 - rho);
    case BlockGenerator::kSandAntiSand:
      return pn1 * (1.0 - rho) * (n - 2);
  }
  return 0.0;
}

double product_consistency_rho(int n, double alpha) {
  if (n < 2)
    throw std::invalid_argument("product consistency: defined for n >= 2 only");
  return (n - 2.0 * alpha) / (2.0 * n + (n - 2.0) * alpha);
}

}  // namespace theory

// ---------------------------------------------------------------------------

// Contributions to sum_x [H_n(op_x eta) - H_n(eta)] can only come from sites
// in the block or in the maximal runs adjoining it: active runs for
// additions (their relaxation intervals stop at the first inactive site),
// inactive runs for anti-additions (dually).
static double windowed_operator_sum(const Configuration& cfg, int n, bool anti) {
  const int size = cfg.size();
  auto at = [size](int x) { return ((x % size) + size) % size; };
  const int h0 = block_indicator(cfg, n, 0);

  auto in_run = [&](int x) {
    return anti ? cfg.inactive(at(x)) : !cfg.inactive(at(x));
  };
  int lo = 1;
  while (lo > 1 - size && in_run(lo - 1)) --lo;
  int hi = n;
  while (hi < n + size && in_run(hi + 1)) ++hi;
  // runs may wrap; never visit a site twice
  hi = std::min(hi, lo + size - 1);

  double sum = 0.0;
  Configuration scratch = cfg;
  for (int x = lo; x <= hi; ++x) {
    scratch = cfg;
    if (anti)
      scratch.anti_add(at(x));
    else
      scratch.add(at(x));
    sum += block_indicator(scratch, n, 0) - h0;
  }
  return sum;
}

double block_generator_term(const Configuration& cfg, int n, theory::BlockGenerator which) {
  if (n < 2) throw std::invalid_argument("block generator: n must be >= 2");
  if (!cfg.topology().is_ring())
    throw std::invalid_argument("block generator: ring topology required");
  switch (which) {
    case theory::BlockGenerator::kSandpile:
      return windowed_operator_sum(cfg, n, false);
    case theory::BlockGenerator::kFlip: {
      // flips only act site by site: count block occupancy directly
      int twos = 0;
      for (int i = 1; i <= n; ++i) twos += !cfg.inactive(i % cfg.size());
      if (twos == 0) return -static_cast<double>(n);
      if (twos == 1) return 1.0;
      return 0.0;
    }
    case theory::BlockGenerator::kSandAntiSand:
      return windowed_operator_sum(cfg, n, false) + windowed_operator_sum(cfg, n, true);
  }
  return 0.0;
}

EstimateWithCI mc_generator_block_estimate(double rho, int n, theory::BlockGenerator which,
                                           int samples, int ring_n, Rng& rng) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("block estimate: rho must lie strictly inside (0, 1)");
  if (n < 2) throw std::invalid_argument("block estimate: n must be >= 2");
  if (ring_n < 16 * n || ring_n < 64)
    throw std::invalid_argument("block estimate: ring too small for the block");
  const int n_batches = 25;
  if (samples < n_batches * 4)
    throw std::invalid_argument("block estimate: too few samples");

  const int bs = samples / n_batches;
  std::vector<int> heights(ring_n);
  std::vector<double> means(n_batches, 0.0);
  for (int b = 0; b < n_batches; ++b) {
    double acc = 0.0;
    for (int s = 0; s < bs; ++s) {
      for (int x = 0; x < ring_n; ++x) heights[x] = rng.u01() < rho ? 1 : 2;
      Configuration cfg(Topology::ring(ring_n), heights);
      acc += block_generator_term(cfg, n, which);
    }
    means[b] = acc / bs;
  }
  double mean = std::accumulate(means.begin(), means.end(), 0.0) / n_batches;
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  const double sd = std::sqrt(ss / (n_batches - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(n_batches)), n_batches * bs,
          EstimateWithCI::Method::kBatchMeans};
}

}  // namespace sandlab
