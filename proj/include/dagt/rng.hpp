#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dagt {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace detail

// Derives a decorrelated seed for one (master, node, purpose) triple.
// Separate purposes keep independent streams stable: drawing more gradient
// noise never perturbs instance generation or initial points.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t node,
                                 std::string_view purpose) {
  std::uint64_t state = master;
  std::uint64_t seed = detail::splitmix64(state);
  state = seed ^ (node * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
  seed = detail::splitmix64(state);
  state = seed ^ detail::fnv1a64(purpose);
  return detail::splitmix64(state);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) {
  return derive_seed(master, 0, purpose);
}

// Deterministic random stream. The engine is std::mt19937_64; the variate
// transforms are implemented here because the std distributions are not
// bit-reproducible across standard libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on {0, ..., n-1} by masked rejection (no modulo bias).
  int uniform_int(int n) {
    std::uint64_t bound = static_cast<std::uint64_t>(n);
    std::uint64_t mask = bound - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
      std::uint64_t r = next_u64() & mask;
      if (r < bound) return static_cast<int>(r);
    }
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the logarithm finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Stream make_stream(std::uint64_t master, std::uint64_t node,
                          std::string_view purpose) {
  return Stream(derive_seed(master, node, purpose));
}

}  // namespace dagt
