#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "cbal/normal.hpp"

namespace cbal {

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream derivation: independent child seeds from a master
// seed, identical regardless of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(master ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
}

// mt19937_64 with hand-rolled draws. The engine is fully specified by the
// standard; std::*_distribution is not, so uniform/normal are generated
// explicitly to keep outputs bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via the inverse CDF of a uniform strictly inside (0, 1).
  double normal() {
    const double u = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    return normal_quantile(u);
  }

  // Uniform integer on [0, n), rejection sampled.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t overflow = (max % n + 1) % n;  // 2^64 mod n
    if (overflow == 0) return engine_() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x > max - overflow);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

// Fisher-Yates shuffle driven by Rng::below (std::shuffle is
// implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

}  // namespace cbal
