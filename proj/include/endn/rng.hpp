#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace endn {

// Deterministic RNG built on mt19937_64 with fixed sampling formulas.
// std::normal_distribution / std::uniform_* are implementation-defined, which
// would make checkpoints and logged metrics differ across standard libraries;
// everything here is fully specified so runs reproduce across machines.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_f64() {
    return double(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); n >= 1.
  std::uint64_t next_below(std::uint64_t n) {
    return std::uint64_t(next_f64() * double(n)) % n;
  }

  // Standard normal via Box-Muller; second sample of each pair is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = double((gen_() >> 11) + 1) * 0x1.0p-53;  // (0, 1], log-safe
    double u2 = double(gen_() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stateless per-step stream: resume from a checkpoint replays identically.
inline Rng rng_for_step(std::uint64_t seed, std::uint64_t step) {
  return Rng(mix_seed(seed, step));
}

// FNV-1a, used for per-image deterministic noise seeds.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace endn
