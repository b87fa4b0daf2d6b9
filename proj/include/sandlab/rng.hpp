#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sandlab {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stream seed for a replica, a pure function of (master seed, replica id) so
// that adding replicas never perturbs existing streams.
inline uint64_t replica_seed(uint64_t master, uint64_t replica) {
  uint64_t s = master ^ (0xa0761d6478bd642full * (replica + 1));
  splitmix64(s);
  return splitmix64(s);
}

// Deterministic draw paths on top of mt19937_64; trajectories are therefore
// reproducible bit-for-bit for a fixed seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t u64() { return eng_(); }

  // uniform in [0, 1)
  double u01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-u01()) / rate; }

  // uniform in [0, n) via 128-bit multiply-shift
  int below(int n) {
    return static_cast<int>(
        (static_cast<unsigned __int128>(u64()) * static_cast<uint64_t>(n)) >> 64);
  }

  bool bernoulli(double p) { return u01() < p; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace sandlab
