#pragma once

// Deterministic random-number plumbing.
//
// Every stochastic routine in the library draws from an Rng obtained through
// Rng::substream(seed, path...). The substream derivation is a pure hash of
// the seed and the path indices, so results never depend on call order,
// thread scheduling, or platform. Distribution sampling is hand-rolled on top
// of the raw engine output because the std <random> distributions are
// implementation-defined.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace semdid {

// SplitMix64 finalizer; used both as a mixer for substream derivation and to
// expand a single seed into engine state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  // Derive an independent stream from (seed, path). Identical arguments give
  // identical streams; any change to seed or path decorrelates them.
  static Rng substream(std::uint64_t seed,
                       std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(seed);
    for (std::uint64_t p : path) s = splitmix64(s ^ (p + 0x632BE59BD9B4E019ull));
    return Rng(s);
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double u01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller on u01 pairs.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = u01();
    double u2 = u01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Index in [0, n) — rejection sampling, unbiased.
  std::size_t index(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = ~0ull - (~0ull % n);
    std::uint64_t v = eng_();
    while (v >= bound) v = eng_();
    return static_cast<std::size_t>(v % n);
  }

private:
  std::mt19937_64 eng_;  // output sequence is fully specified by the standard
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Unit-norm vector of independent Gaussian components.
inline std::vector<double> random_unit_vector(int dim, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (;;) {
    double norm_sq = 0.0;
    for (auto& c : v) {
      c = rng.gaussian();
      norm_sq += c * c;
    }
    if (norm_sq > 1e-24) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (auto& c : v) c *= inv;
      return v;
    }
  }
}

}  // namespace semdid
