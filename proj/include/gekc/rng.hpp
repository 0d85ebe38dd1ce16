#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gekc/error.hpp"

namespace gekc {

// Counter-based PRNG built on the SplitMix64 finalizer (Steele, Lea &
// Flood 2014). Each (seed, stream) pair is an independent stream addressed
// purely by its counter, so parallel consumers get reproducible values
// regardless of scheduling: value(k) = mix(key ^ golden*k).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL))) {}

  // Independent stream derived from this generator's seed.
  CounterRng stream(std::uint64_t idx) const {
    CounterRng r(0);
    r.key_ = mix(key_ ^ mix(idx + 0x9e3779b97f4a7c15ULL));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  // Uniform in [0, 1): top 53 bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("next_below: n must be positive");
    // rejection to avoid modulo bias
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (no cached spare, keeps streams stateless
  // with respect to consumption pattern).
  double next_gaussian() {
    double u1 = next_double(), u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Gamma(alpha, 1) by Marsaglia-Tsang squeeze; alpha >= 1 fast path, boost
  // trick for alpha < 1.
  double next_gamma(double alpha) {
    if (alpha <= 0.0) throw ArgumentError("next_gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = next_double();
      while (u <= 0.0) u = next_double();
      return next_gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Dirichlet with symmetric concentration alpha; returns a probability vector.
  std::vector<double> next_dirichlet(std::size_t n, double alpha) {
    std::vector<double> g(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = next_gamma(alpha);
      total += g[i];
    }
    for (double& x : g) x /= total;
    return g;
  }

  double next_lognormal(double mu, double sigma) {
    return std::exp(mu + sigma * next_gaussian());
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace gekc
