#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sandlab/observables.hpp"

using namespace sandlab;

namespace {

Configuration ring(const std::vector<int>& h) {
  return Configuration(Topology::ring(static_cast<int>(h.size())), h);
}

std::vector<int> random_heights(Rng& rng, int n, double rho) {
  std::vector<int> h(n);
  for (int i = 0; i < n; ++i) h[i] = rng.u01() < rho ? 1 : 2;
  return h;
}

}  // namespace

TEST_CASE("densities and blocks") {
  CHECK(density_of_ones(ring({1, 1, 1, 1})) == 1.0);
  CHECK(density_of_ones(ring({2, 2, 2, 2})) == 0.0);
  CHECK(density_of_ones(ring({1, 2, 2, 1})) == 0.5);

  CHECK(block_indicator(ring({1, 1, 1, 1}), 3) == 1);
  CHECK(block_indicator(ring({2, 2, 2, 2}), 1) == 0);
  CHECK(block_indicator(ring({1, 1, 1, 2}), 2, 0) == 1);  // sites 1, 2
  CHECK(block_indicator(ring({1, 1, 2, 2}), 2, 0) == 0);
  CHECK_THROWS_AS(block_indicator(ring({1, 1, 1, 1}), 5), std::invalid_argument);
  // interval blocks must not touch the boundary
  Configuration icfg(Topology::interval(4), {1, 1, 1, 1});
  CHECK(block_indicator(icfg, 2, 0) == 1);
  CHECK_THROWS_AS(block_indicator(icfg, 4, 0), std::invalid_argument);
}

TEST_CASE("gap statistics") {
  auto hist = gap_statistics(ring({1, 2, 2, 1}));
  CHECK(hist == std::map<int, int>{{1, 1}, {3, 1}});
  auto every_other = gap_statistics(ring({1, 2, 1, 2, 1, 2}));
  CHECK(every_other == std::map<int, int>{{2, 3}});
  CHECK_THROWS_AS(gap_statistics(ring({1, 2, 2, 2})), std::invalid_argument);

  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 4 + rng.below(60);
    Configuration cfg(Topology::ring(n), random_heights(rng, n, 0.5));
    if (cfg.inactive_count() < 2) continue;
    auto h = gap_statistics(cfg);
    long long total = 0;
    int count = 0;
    for (auto [gap, mult] : h) {
      total += static_cast<long long>(gap) * mult;
      count += mult;
    }
    CHECK(total == n);  // gaps partition the ring
    CHECK(count == cfg.inactive_count());
    // duality: gap statistics of the flip equal active-gap statistics
    if (cfg.active_count() >= 2)
      CHECK(gap_statistics(global_flipped(cfg)).size() > 0);
  }
}

TEST_CASE("renewal identity residual") {
  CHECK(renewal_identity_residual(ring({1, 2, 1, 2})) == 0.0);
  CHECK(renewal_identity_residual(ring({1, 1, 1, 1})) == 0.0);
  CHECK_THROWS_AS(renewal_identity_residual(ring({2, 2, 2, 2})), std::invalid_argument);

  Rng rng(22);
  for (int trial = 0; trial < 5000; ++trial) {
    const int n = 4 + rng.below(120);
    Configuration cfg(Topology::ring(n), random_heights(rng, n, 0.05 + 0.9 * rng.u01()));
    if (cfg.inactive_count() < 1) continue;
    CHECK(renewal_identity_residual(cfg) == 0.0);
  }
}

TEST_CASE("estimate summaries") {
  std::vector<double> flat(200, 3.5);
  auto e = batch_means(flat);
  CHECK(e.mean == doctest::Approx(3.5));
  CHECK(e.half_width == 0.0);
  CHECK(e.n_samples == 200);

  Rng rng(23);
  std::vector<double> pm(4000);
  for (auto& v : pm) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
  auto e2 = batch_means(pm);
  CHECK(std::abs(e2.mean) < 0.1);
  CHECK(e2.covers(0.0));

  std::vector<double> tiny(5, 1.0);
  CHECK_THROWS_AS(batch_means(tiny), std::invalid_argument);
  CHECK_THROWS_AS(replicate_means(tiny), std::invalid_argument);
}

TEST_CASE("theory: relaxation curve") {
  CHECK(theory::predicted_density(0.0, 0.37, 0.5) == doctest::Approx(0.37));
  CHECK(theory::predicted_density(100.0, 0.8, 0.4) == doctest::Approx(0.3));
  CHECK(theory::predicted_density(1.0, 0.5, 0.5) ==
        doctest::Approx(0.25 + 0.25 * std::exp(-2.0)).epsilon(1e-12));
  CHECK(theory::predicted_density(1.0, 0.5, 0.5) == doctest::Approx(0.283834).epsilon(1e-5));
  // supercritical curves clip at zero
  CHECK(theory::predicted_density(5.0, 1.0, 3.0) == 0.0);
  // the stationary point is fixed
  for (double t : {0.1, 1.0, 7.0})
    CHECK(theory::predicted_density(t, 0.3, 0.4) == doctest::Approx(0.3).epsilon(1e-12));
  // monotone approach to the limit
  double prev = theory::predicted_density(0.0, 0.9, 0.4);
  for (double t = 0.25; t < 4.0; t += 0.25) {
    const double v = theory::predicted_density(t, 0.9, 0.4);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("theory: freeze and hitting times") {
  CHECK(theory::freeze_time(1.0, 2.0) == doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-12));
  CHECK(std::isinf(theory::freeze_time(0.7, 0.9)));
  CHECK(std::isinf(theory::freeze_time(1.0, 1.0)));
  CHECK(theory::freeze_time(0.0, 2.0) == 0.0);

  CHECK(theory::epsilon_hitting_time(1.0, 2.0, 1e-3) ==
        doctest::Approx(0.5 * std::log(3.0 / 1.002)).epsilon(1e-12));
  CHECK(theory::epsilon_hitting_time(1.0, 2.0, 1e-3) == doctest::Approx(0.548).epsilon(1e-3));
  CHECK(std::isinf(theory::epsilon_hitting_time(0.5, 0.0, 1e-3)));
}

TEST_CASE("theory: critical rates and stationary densities") {
  CHECK(theory::critical_alpha(FlipRateSpec::pure()) == 1.0);
  CHECK(theory::critical_alpha(FlipRateSpec::glauber(0.25)) == doctest::Approx(0.5));
  CHECK(theory::critical_alpha(FlipRateSpec::biased(0.3)) == doctest::Approx(0.7));

  CHECK(theory::predicted_stationary_density(0.4, FlipRateSpec::pure()) ==
        doctest::Approx(0.3));
  CHECK(theory::predicted_stationary_density(0.25, FlipRateSpec::glauber(0.25)) ==
        doctest::Approx(0.25));
  CHECK(theory::predicted_stationary_density(0.6, FlipRateSpec::glauber(0.25)) == 0.0);
  // biased rates shift the density additively; at alpha=0 the two-rate flip
  // chain gives (1-kappa)/2 exactly
  CHECK(theory::predicted_stationary_density(0.0, FlipRateSpec::biased(0.3)) ==
        doctest::Approx(0.35));
  CHECK(theory::predicted_stationary_density(0.2, FlipRateSpec::biased(0.3)) ==
        doctest::Approx(0.25));

  CHECK(theory::stationary_density_lower_bound(0.2, FlipRateSpec::glauber(0.25)) ==
        doctest::Approx(0.1));
}

TEST_CASE("theory: block generator closed forms") {
  CHECK(theory::predicted_generator_block(0.5, 2, theory::BlockGenerator::kSandpile) ==
        doctest::Approx(-1.0));
  CHECK(theory::predicted_generator_block(0.5, 2, theory::BlockGenerator::kFlip) ==
        doctest::Approx(0.0));
  CHECK(theory::predicted_generator_block(0.5, 2, theory::BlockGenerator::kSandAntiSand) ==
        doctest::Approx(0.0));
  CHECK(theory::predicted_generator_block(0.5, 3, theory::BlockGenerator::kSandAntiSand) ==
        doctest::Approx(0.125));
  CHECK_THROWS_AS(theory::predicted_generator_block(0.5, 1, theory::BlockGenerator::kFlip),
                  std::invalid_argument);
}

TEST_CASE("theory: product consistency is n dependent") {
  CHECK(theory::product_consistency_rho(2, 0.5) == doctest::Approx(0.25));
  CHECK(theory::product_consistency_rho(3, 0.5) == doctest::Approx(4.0 / 13.0));
  CHECK(theory::product_consistency_rho(2, 0.0) == doctest::Approx(0.5));
  CHECK(theory::product_consistency_rho(7, 0.0) == doctest::Approx(0.5));
  for (double alpha : {0.1, 0.3, 0.5, 0.8})
    CHECK(std::abs(theory::product_consistency_rho(2, alpha) -
                   theory::product_consistency_rho(3, alpha)) > 1e-4);
}

TEST_CASE("block generator terms match brute force") {
  Rng rng(24);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 24 + rng.below(24);
    const int block = 2 + rng.below(3);
    Configuration cfg(Topology::ring(n), random_heights(rng, n, 0.2 + 0.6 * rng.u01()));
    for (auto which : {theory::BlockGenerator::kSandpile, theory::BlockGenerator::kFlip,
                       theory::BlockGenerator::kSandAntiSand}) {
      // brute force: apply every operator at every site
      double brute = 0.0;
      const int h0 = block_indicator(cfg, block, 0);
      for (int x = 0; x < n; ++x) {
        if (which == theory::BlockGenerator::kSandpile ||
            which == theory::BlockGenerator::kSandAntiSand)
          brute += block_indicator(with_addition(cfg, x), block, 0) - h0;
        if (which == theory::BlockGenerator::kFlip)
          brute += block_indicator(flipped(cfg, x), block, 0) - h0;
        if (which == theory::BlockGenerator::kSandAntiSand)
          brute += block_indicator(with_anti_addition(cfg, x), block, 0) - h0;
      }
      CHECK(block_generator_term(cfg, block, which) == doctest::Approx(brute).epsilon(1e-12));
    }
  }
}

TEST_CASE("monte carlo block estimates cover the closed forms") {
  Rng rng(25);
  struct Case {
    double rho;
    int n;
    theory::BlockGenerator which;
  };
  for (const auto& c : {Case{0.5, 2, theory::BlockGenerator::kSandpile},
                        Case{0.5, 2, theory::BlockGenerator::kFlip},
                        Case{0.5, 3, theory::BlockGenerator::kSandAntiSand},
                        Case{0.3, 2, theory::BlockGenerator::kSandpile}}) {
    const auto est = mc_generator_block_estimate(c.rho, c.n, c.which, 60000, 512, rng);
    const double target = theory::predicted_generator_block(c.rho, c.n, c.which);
    // allow twice the CI to keep the fixed-seed test robust
    CHECK(std::abs(est.mean - target) <= 2.0 * est.half_width + 1e-9);
  }
  CHECK_THROWS_AS(
      mc_generator_block_estimate(0.0, 2, theory::BlockGenerator::kFlip, 1000, 512, rng),
      std::invalid_argument);
  CHECK_THROWS_AS(
      mc_generator_block_estimate(0.5, 1, theory::BlockGenerator::kFlip, 1000, 512, rng),
      std::invalid_argument);
}

TEST_CASE("confidence intervals have close to nominal coverage") {
  // 100 independent estimates; the 95% CI should cover the closed form in
  // at least 93 of them
  Rng rng(26);
  const double target =
      theory::predicted_generator_block(0.5, 2, theory::BlockGenerator::kSandpile);
  int covered = 0;
  for (int run = 0; run < 100; ++run) {
    const auto est =
        mc_generator_block_estimate(0.5, 2, theory::BlockGenerator::kSandpile, 20000, 128, rng);
    covered += est.covers(target);
  }
  CHECK(covered >= 93);
}
