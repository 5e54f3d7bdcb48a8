#pragma once

// Deterministic, stream-splittable randomness. Every randomized routine in
// the toolkit draws from a Stream derived from (seed, purpose, indices...),
// so results are independent of evaluation order and parallelism degree.

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>
#include <vector>

namespace mia::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + b + (a << 6) + (a >> 2)));
}

inline std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// One independent random stream. mt19937_64 output is pinned by the
// standard, and the float transforms below are explicit, so sequences are
// reproducible across platforms.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // standard normal via Box-Muller (cached pair)
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Laplace(0, b) by inverse CDF
  double laplace(double b) {
    const double u = uniform() - 0.5;
    return -b * std::copysign(std::log(1.0 - 2.0 * std::fabs(u)), u);
  }

  // index into a discrete distribution given by (not necessarily
  // normalized) nonnegative weights
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Derive a stream for a named purpose plus integer coordinates, e.g.
// derive(seed, "rollout", epoch, prompt_id).
template <typename... Ints>
Stream derive(std::uint64_t seed, std::string_view purpose, Ints... idx) {
  std::uint64_t h = mix(seed, hash_str(purpose));
  ((h = mix(h, static_cast<std::uint64_t>(idx))), ...);
  return Stream(h);
}

}  // namespace mia::rng
