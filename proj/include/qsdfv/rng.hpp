#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qsdfv {

using Seed = std::uint64_t;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Substream key for (seed, index). Replicas, window segments and the
// red/green event families all draw their seeds through this.
constexpr Seed derive_seed(Seed seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(index ^ 0x632be59bd9b4e019ULL));
}

// Top 53 bits mapped onto [0,1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based uniform on [0,1): a pure function of (key, counter).
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  return to_unit(splitmix64(key ^ splitmix64(counter + 0x2545f4914f6cdd1dULL)));
}

// mt19937_64 with distribution code written out here, so that streams are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return to_unit(engine_()); }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Uniform integer in [0, n), Lemire's multiply-and-reject.
  std::uint64_t below(std::uint64_t n) {
    auto m = static_cast<unsigned __int128>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(engine_()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform index in {0..n-1} \ {skip}; n >= 2.
  std::uint64_t other_than(std::uint64_t skip, std::uint64_t n) {
    const auto r = below(n - 1);
    return r + (r >= skip ? 1 : 0);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qsdfv
