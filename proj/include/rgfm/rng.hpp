#pragma once

// Deterministic randomness. Every random draw in the library comes from an
// engine seeded by derive_seed(seed, keys...), so results depend only on the
// user seed and the logical position of the draw (epoch, anchor, sample...),
// never on evaluation order or thread count.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace rgfm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

using Engine = std::mt19937_64;

/// Uniform integer in [0, n). Rejection sampling so the stream is identical
/// across standard library implementations.
inline std::uint64_t uniform_below(Engine& rng, std::uint64_t n) {
  const std::uint64_t limit = Engine::max() - Engine::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// 64 stateless random bits keyed by (seed, a, b); used for dropout masks.
inline std::uint64_t hash_bits(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(seed ^ splitmix64(a * 0x9e3779b97f4a7c15ULL + b));
}

/// Standard normal via Box-Muller (portable, unlike std::normal_distribution).
inline double standard_normal(Engine& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffle(std::span<T> items, Engine& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_below(rng, i)]);
  }
}

}  // namespace rgfm
