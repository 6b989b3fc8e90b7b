#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

namespace memlab {

// SplitMix64 finalizer. Also the mixing primitive for sub-seed derivation.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// SplitMix64 generator:
//   state += 0x9E3779B97F4A7C15; return mix64(state)
// Chosen over std::mt19937 so the recurrence is fully specified and
// reproducible from any language.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // next() mod n. Bias is at most n / 2^64 and exactly zero when n is a
  // power of two; acceptable for token-scale n.
  uint64_t below(uint64_t n) { return next() % n; }

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (one value per two draws; the second
  // value is discarded so the stream layout stays simple).
  double gaussian() {
    double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

// Deterministic sub-seed chain: h = mix64(base), then for each part
// h = mix64(h ^ (part + 0x9E3779B97F4A7C15)). Used to derive per-run and
// per-stream seeds from a single global seed.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> parts) {
  uint64_t h = mix64(base);
  for (uint64_t p : parts) h = mix64(h ^ (p + 0x9E3779B97F4A7C15ULL));
  return h;
}

// Stream tags keep independent consumers of the same user seed apart.
namespace seed_tag {
inline constexpr uint64_t coherent = 0x636F6865ULL;     // "cohe"
inline constexpr uint64_t uniform = 0x756E6966ULL;      // "unif"
inline constexpr uint64_t positions = 0x706F7373ULL;    // "poss"
inline constexpr uint64_t values = 0x76616C73ULL;       // "vals"
inline constexpr uint64_t phonebook = 0x70626F6BULL;    // "pbok"
inline constexpr uint64_t linear_rule = 0x6C72756CULL;  // "lrul"
inline constexpr uint64_t model_init = 0x6D696E69ULL;   // "mini"
inline constexpr uint64_t adapter = 0x61646170ULL;      // "adap"
}  // namespace seed_tag

// First k entries of a seeded Fisher-Yates shuffle of 0..n-1, returned in
// ascending order. Draws exactly k values from rng.
inline std::vector<int> sample_index_prefix(SplitMix64& rng, int n, int k) {
  std::vector<int> arr(static_cast<size_t>(n));
  std::iota(arr.begin(), arr.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n - i)));
    std::swap(arr[static_cast<size_t>(i)], arr[static_cast<size_t>(j)]);
  }
  arr.resize(static_cast<size_t>(k));
  std::sort(arr.begin(), arr.end());
  return arr;
}

}  // namespace memlab
