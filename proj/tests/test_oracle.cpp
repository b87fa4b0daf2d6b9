#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>

#include "sandlab/observables.hpp"
#include "sandlab/oracle.hpp"

using namespace sandlab;

namespace {

Distribution delta_all_ones(int n) {
  return Distribution::dirac((1 << n) - 1, 1 << n);
}
Distribution delta_all_twos(int n) { return Distribution::dirac(0, 1 << n); }

}  // namespace

TEST_CASE("chain enumeration basics") {
  CHECK_THROWS_AS(enumerate_chain(Topology::ring(14), ModelSpec::sand_flip(1.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(enumerate_chain(Topology::interval(6), ModelSpec::sand_flip(1.0)),
                  std::invalid_argument);

  // alpha=0: independent flips, uniform stationary distribution
  const auto chain = enumerate_chain(Topology::ring(3), ModelSpec::sand_flip(0.0));
  CHECK(chain.max_abs_row_sum_residual() == 0.0);
  const auto pi = stationary_distribution(chain);
  for (double w : pi.w) CHECK(w == doctest::Approx(1.0 / 8).epsilon(1e-9));

  const auto chain1 = enumerate_chain(Topology::ring(3), ModelSpec::sand_flip(1.0));
  CHECK(chain1.max_abs_row_sum_residual() < 1e-14);
  // all-2 additions are identity events: exit rate there is the flip mass only
  CHECK(chain1.exit_rate[0] == doctest::Approx(3.0));
  CHECK(chain1.uniformization_rate == doctest::Approx(6.0));
}

TEST_CASE("transient distribution") {
  const auto chain = enumerate_chain(Topology::ring(8), ModelSpec::sand_flip(0.5));
  const auto init = delta_all_ones(8);
  CHECK(transient_distribution(chain, init, 0.0).w == init.w);
  for (double t : {0.05, 0.3, 1.0, 10.0}) {
    const auto d = transient_distribution(chain, init, t);
    CHECK(std::abs(d.sum() - 1.0) < 1e-12);
    d.validate();
  }
  // frozen value from an independent dense-exponential computation
  const auto d1 = transient_distribution(chain, init, 1.0);
  CHECK(marginal_one(d1, 0) == doctest::Approx(0.3708730940).epsilon(1e-8));
}

TEST_CASE("stationary distribution") {
  // subcritical pure model on n=12: marginal near (1-alpha)/2 with a finite
  // size gap; value frozen from an independent dense linear solve
  const auto chain = enumerate_chain(Topology::ring(12), ModelSpec::sand_flip(0.4));
  const auto pi = stationary_distribution(chain);
  CHECK(stationary_residual(chain, pi) < 1e-10);
  const double p1 = marginal_one(pi, 0);
  CHECK(p1 == doctest::Approx(0.31939446).epsilon(1e-6));
  CHECK(std::abs(p1 - 0.3) < 0.05);

  // translation invariance of the stationary law
  for (int site = 1; site < 12; ++site)
    CHECK(marginal_one(pi, site) == doctest::Approx(p1).epsilon(1e-9));

  // sand/anti-sand with dominant anti rate drifts toward all ones as n grows
  double prev = 0.0;
  for (int n : {8, 10, 12}) {
    const auto c = enumerate_chain(Topology::ring(n), ModelSpec::sand_anti_sand(0.3, 0.7));
    const auto p = stationary_distribution(c);
    const double dens = mean_ones_density(p, n);
    CHECK(dens > prev);
    prev = dens;
  }
  CHECK(prev > 0.8);
}

TEST_CASE("sand/anti-sand at alpha=beta conserves the mean density") {
  // the drift cancels exactly on configurations with at least two sites of
  // each height; at rho0 = 1/2 global-flip symmetry makes the conservation
  // exact at any finite size, while asymmetric starts pick up a boundary
  // correction proportional to the near-uniform configuration mass
  const auto chain = enumerate_chain(Topology::ring(12), ModelSpec::sand_anti_sand(0.5, 0.5));
  const auto sym = Distribution::product(0.5, 12);
  for (double t : {0.5, 2.0, 8.0}) {
    const auto d = transient_distribution(chain, sym, t);
    CHECK(mean_ones_density(d, 12) == doctest::Approx(0.5).epsilon(1e-9));
  }
  const auto skew = Distribution::product(0.4, 12);
  const auto short_run = transient_distribution(chain, skew, 0.2);
  CHECK(std::abs(mean_ones_density(short_run, 12) - 0.4) < 0.01);
}

TEST_CASE("expectation") {
  const auto u = Distribution::uniform(1 << 3);
  CHECK(expectation(u, [](int s) {
          return 2.0 - ((s >> 0) & 1);  // eta(0)
        }) == doctest::Approx(1.5));
  CHECK(mean_ones_density(delta_all_twos(3), 3) == 0.0);
  // product measure block expectation: lambda_rho(H_2) = rho^2
  const auto lam = Distribution::product(0.3, 6);
  CHECK(expectation(lam, [](int s) { return (s & 0b110) == 0b110 ? 1.0 : 0.0; }) ==
        doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("stochastic domination basics") {
  const int n = 4;
  const auto d1 = delta_all_ones(n);
  const auto d2 = delta_all_twos(n);
  CHECK(dominated_exact(d1, d1, n));
  CHECK(dominated_exact(d1, d2, n));   // all-ones is the minimal configuration
  CHECK(!dominated_exact(d2, d1, n));
  CHECK(domination_prefilter_refutes(d2, d1, n));
  CHECK(!domination_prefilter_refutes(d1, d2, n));

  // a mixture strictly between the extremes
  Distribution mix;
  mix.w.assign(1 << n, 0.0);
  mix.w[0] = 0.5;
  mix.w[(1 << n) - 1] = 0.5;
  CHECK(dominated_exact(mix, d2, n));
  CHECK(!dominated_exact(mix, d1, n));

  CHECK(stochastic_domination_check(d1, d2, n) == DominationVerdict::kDominated);
  CHECK(stochastic_domination_check(d2, d1, n) == DominationVerdict::kRefuted);
  CHECK_THROWS_AS(dominated_exact(delta_all_ones(9), delta_all_ones(9), 9),
                  std::invalid_argument);
  // n > 8 falls back to the prefilter and reports "not refuted"
  CHECK(stochastic_domination_check(delta_all_ones(10), delta_all_twos(10), 10) ==
        DominationVerdict::kNotRefuted);
}

TEST_CASE("domination along sand-flip transients") {
  const auto chain = enumerate_chain(Topology::ring(8), ModelSpec::sand_flip(0.5));
  for (double t : {0.1, 1.0, 10.0}) {
    const auto lower = transient_distribution(chain, delta_all_ones(8), t);
    const auto upper = transient_distribution(chain, delta_all_twos(8), t);
    CHECK(dominated_exact(lower, upper, 8));
    // strict order while the laws are still separated; by t=10 both sit at
    // the stationary distribution and dominate each other
    if (t < 5.0) CHECK(!dominated_exact(upper, lower, 8));
  }
}

TEST_CASE("domination along sand/anti-sand transients") {
  const auto chain = enumerate_chain(Topology::ring(6), ModelSpec::sand_anti_sand(0.5, 0.5));
  for (double t : {0.1, 1.0}) {
    const auto lower = transient_distribution(chain, delta_all_ones(6), t);
    const auto upper = transient_distribution(chain, delta_all_twos(6), t);
    CHECK(dominated_exact(lower, upper, 6));
  }
}

TEST_CASE("domination is reflexive, antisymmetric on Diracs, and never"
          " contradicts the prefilter") {
  const int n = 6;
  Rng rng(31);
  // reflexivity on random distributions
  for (int trial = 0; trial < 10; ++trial) {
    Distribution d;
    d.w.assign(1 << n, 0.0);
    double total = 0.0;
    for (auto& w : d.w) total += (w = rng.u01());
    for (auto& w : d.w) w /= total;
    CHECK(dominated_exact(d, d, n));
  }
  // antisymmetry on distinct Dirac pairs
  for (int trial = 0; trial < 200; ++trial) {
    const int a = rng.below(1 << n), b = rng.below(1 << n);
    if (a == b) continue;
    const auto da = Distribution::dirac(a, 1 << n);
    const auto db = Distribution::dirac(b, 1 << n);
    const bool ab = dominated_exact(da, db, n);
    const bool ba = dominated_exact(db, da, n);
    CHECK(!(ab && ba));
    // Diracs dominate exactly by pointwise order: ones(a) must contain ones(b)
    CHECK(ab == ((a & b) == b));
  }
  // a prefilter rejection always implies an exact rejection
  for (int trial = 0; trial < 100; ++trial) {
    Distribution u, v;
    u.w.assign(1 << n, 0.0);
    v.w.assign(1 << n, 0.0);
    double su = 0.0, sv = 0.0;
    for (int i = 0; i < (1 << n); ++i) {
      su += (u.w[i] = rng.u01());
      sv += (v.w[i] = rng.u01());
    }
    for (auto& w : u.w) w /= su;
    for (auto& w : v.w) w /= sv;
    if (domination_prefilter_refutes(u, v, n)) CHECK(!dominated_exact(u, v, n));
  }
}

TEST_CASE("series semigroup") {
  const auto spec = ModelSpec::sand_flip(0.5);
  std::vector<int> h(10);
  for (int i = 0; i < 10; ++i) h[i] = i % 2 == 0 ? 1 : 2;
  const Configuration alt(Topology::ring(10), h);
  const LocalObservable f{[](const Configuration& c) { return c.inactive(0) ? 1.0 : 0.0; },
                          1.0};

  // t = 0 returns f itself with a zero bound
  const auto at0 = series_semigroup(alt, f, spec, 0.0, 4);
  CHECK(at0.estimate == 1.0);
  CHECK(at0.remainder_bound == 0.0);

  // first order term is t * Lf
  const double t = 0.01;
  const auto first = series_semigroup(alt, f, spec, t, 1);
  // Lf = -(k+(1) + k-(0)) alpha - 1 on this configuration = -2.5
  CHECK(first.estimate == doctest::Approx(1.0 - 2.5 * t).epsilon(1e-12));

  // n_max=6 at t=0.02 agrees with uniformization far inside the bound
  const auto chain = enumerate_chain(Topology::ring(10), spec);
  const auto res = series_semigroup(alt, f, spec, 0.02, 6);
  const auto tr = transient_distribution(
      chain, Distribution::dirac(ExactChain::state_of(alt), 1 << 10), 0.02);
  const double exact = marginal_one(tr, 0);
  CHECK(std::abs(res.estimate - exact) < 1e-8);
  CHECK(std::abs(res.estimate - exact) <= res.remainder_bound);

  // refuses t beyond the trusted window
  CHECK(series_trust_window(alt, spec) == doctest::Approx(1.0 / (4 * 1.5 * std::exp(1.0) * 2)));
  CHECK_THROWS_AS(series_semigroup(alt, f, spec, 0.05, 6), std::domain_error);

  // discrepancy stays inside the reported bound for the anti-sand model too
  const auto sa = ModelSpec::sand_anti_sand(0.4, 0.6);
  const auto sa_chain = enumerate_chain(Topology::ring(10), sa);
  const auto sa_res = series_semigroup(alt, f, sa, 0.015, 6);
  const auto sa_tr = transient_distribution(
      sa_chain, Distribution::dirac(ExactChain::state_of(alt), 1 << 10), 0.015);
  CHECK(std::abs(sa_res.estimate - marginal_one(sa_tr, 0)) <= sa_res.remainder_bound);
}
