#pragma once

#include <cmath>
#include <stdexcept>

namespace sandlab {

enum class FlipFamily { kPure, kGlauber, kBiased };

// Spin-flip rate family c(x, eta). With f_x = +1 on active and -1 on inactive
// sites:
//   pure     c = 1
//   glauber  c = 1 - gamma * f_x * (f_{x-1} + f_{x+1})
//   biased   c = 1 - kappa * f_x
// The glauber coupling corresponds to gamma = tanh(2*beta)/2 for an inverse
// temperature beta; gamma is exposed directly.
struct FlipRateSpec {
  FlipFamily family = FlipFamily::kPure;
  double gamma = 0.0;
  double kappa = 0.0;

  static FlipRateSpec pure() { return {}; }
  static FlipRateSpec glauber(double g) {
    FlipRateSpec s;
    s.family = FlipFamily::kGlauber;
    s.gamma = g;
    s.validate();
    return s;
  }
  static FlipRateSpec biased(double k) {
    FlipRateSpec s;
    s.family = FlipFamily::kBiased;
    s.kappa = k;
    s.validate();
    return s;
  }

  // rate bounds 0 < m <= c(x,eta) <= M
  double min_rate() const {
    switch (family) {
      case FlipFamily::kPure: return 1.0;
      case FlipFamily::kGlauber: return 1.0 - 2.0 * std::abs(gamma);
      case FlipFamily::kBiased: return 1.0 - std::abs(kappa);
    }
    return 1.0;
  }
  double max_rate() const {
    switch (family) {
      case FlipFamily::kPure: return 1.0;
      case FlipFamily::kGlauber: return 1.0 + 2.0 * std::abs(gamma);
      case FlipFamily::kBiased: return 1.0 + std::abs(kappa);
    }
    return 1.0;
  }

  void validate() const {
    if (family == FlipFamily::kGlauber &&
        !(std::abs(gamma) <= 0.5 && std::isfinite(gamma)))
      throw std::invalid_argument("flip rates: gamma must lie in [-1/2, 1/2]");
    if (family == FlipFamily::kBiased &&
        !(std::abs(kappa) < 1.0 && std::isfinite(kappa)))
      throw std::invalid_argument("flip rates: kappa must lie in (-1, 1)");
  }

  friend bool operator==(const FlipRateSpec& a, const FlipRateSpec& b) {
    return a.family == b.family && a.gamma == b.gamma && a.kappa == b.kappa;
  }
};

enum class ModelKind {
  kSandFlip,      // additions at rate alpha + spin flips
  kSandAntiSand,  // additions at rate alpha + anti-additions at rate beta
};

struct ModelSpec {
  ModelKind kind = ModelKind::kSandFlip;
  double alpha = 0.0;
  FlipRateSpec flip;  // sand-flip only
  double beta = 0.0;  // sand/anti-sand only

  static ModelSpec sand_flip(double alpha, FlipRateSpec flip = FlipRateSpec::pure()) {
    ModelSpec s;
    s.kind = ModelKind::kSandFlip;
    s.alpha = alpha;
    s.flip = flip;
    s.validate();
    return s;
  }
  static ModelSpec sand_anti_sand(double alpha, double beta) {
    ModelSpec s;
    s.kind = ModelKind::kSandAntiSand;
    s.alpha = alpha;
    s.beta = beta;
    s.validate();
    return s;
  }

  // total event rate per site (proposal rate for thinned flip families)
  double per_site_rate() const {
    return kind == ModelKind::kSandFlip ? alpha + flip.max_rate() : alpha + beta;
  }

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw std::invalid_argument("model: alpha must be finite and nonnegative");
    if (kind == ModelKind::kSandAntiSand &&
        (!(beta >= 0.0) || !std::isfinite(beta)))
      throw std::invalid_argument("model: beta must be finite and nonnegative");
    if (kind == ModelKind::kSandFlip) flip.validate();
  }

  friend bool operator==(const ModelSpec& a, const ModelSpec& b) {
    return a.kind == b.kind && a.alpha == b.alpha && a.flip == b.flip &&
           a.beta == b.beta;
  }
};

struct InitialDistribution {
  enum class Kind { kProduct, kAllOnes, kAllTwos, kSingleOne };

  Kind kind = Kind::kAllTwos;
  double rho = 0.0;  // product density of ones
  int site = 0;      // single-one position

  static InitialDistribution product(double rho) {
    InitialDistribution d;
    d.kind = Kind::kProduct;
    d.rho = rho;
    d.validate();
    return d;
  }
  static InitialDistribution all_ones() { return {Kind::kAllOnes, 0.0, 0}; }
  static InitialDistribution all_twos() { return {Kind::kAllTwos, 0.0, 0}; }
  static InitialDistribution single_one(int site) {
    return {Kind::kSingleOne, 0.0, site};
  }

  void validate() const {
    if (kind == Kind::kProduct && !(rho >= 0.0 && rho <= 1.0))
      throw std::invalid_argument("initial: rho must lie in [0, 1]");
  }

  friend bool operator==(const InitialDistribution& a, const InitialDistribution& b) {
    return a.kind == b.kind && a.rho == b.rho && a.site == b.site;
  }
};

}  // namespace sandlab
