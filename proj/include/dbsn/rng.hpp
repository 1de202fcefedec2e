#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dbsn {

// standard Gumbel transform of a uniform draw
inline double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

// Deterministic RNG with explicit substreams.
//
// Every stochastic draw in the library is keyed by (root seed, purpose tag,
// counters...) so that runs are bitwise reproducible and resumable from a
// checkpoint without serializing engine state. std::mt19937_64 is fully
// specified by the standard; the uniform/normal/gumbel transforms below are
// hand-rolled because the <random> distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // uniform clamped into [tiny, 1 - tiny]; safe under log(-log(u))
  double uniform_open() {
    constexpr double tiny = 1e-12;
    double u = uniform();
    if (u < tiny) u = tiny;
    if (u > 1.0 - tiny) u = 1.0 - tiny;
    return u;
  }

  // standard normal via Box-Muller (no cached spare, keeps draw count explicit)
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // standard Gumbel: -log(-log(u))
  double gumbel() { return gumbel_from_uniform(uniform_open()); }

  std::uint64_t next_u64() { return engine_(); }

  // uniform integer in [0, n), rejection-free enough for shuffling
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

namespace stream {
// Purpose tags for substream derivation. Values are part of the
// checkpoint-resume contract: changing them changes all sampled trajectories.
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kGumbel = 3;
inline constexpr std::uint64_t kDropout = 4;
inline constexpr std::uint64_t kWeightNoise = 5;
inline constexpr std::uint64_t kEval = 6;
inline constexpr std::uint64_t kData = 7;
inline constexpr std::uint64_t kAttack = 8;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mixes a root seed with a path of counters into a derived seed.
inline std::uint64_t subseed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(root);
  for (std::uint64_t id : path) s = splitmix64(s ^ (id + 0x632be59bd9b4e019ULL));
  return s;
}

// Derives an independent substream from a root seed and a path of counters,
// e.g. substream(seed, {stream::kGumbel, step, sample, edge}).
inline Rng substream(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return Rng(subseed(root, path));
}

}  // namespace dbsn
