#pragma once

#include <cstdint>
#include <vector>

namespace memlab {

// Integer token vocabulary. Ordinary ids live in [0, size); BOS and SEP sit
// just above the ordinary range so they can never collide with content.
struct Vocabulary {
  int size = 256;

  int bos_id() const { return size; }
  int sep_id() const { return size + 1; }
  int total() const { return size + 2; }

  void validate() const;
};

// Synthetic stand-in for natural text: an order-1 Markov chain whose draw
// distribution is Zipf(zipf_s) over a seed-permuted vocabulary. order = 0
// degenerates to i.i.d. Zipf draws.
struct CoherentSource {
  uint64_t seed = 0;
  int order = 1;
  double zipf_s = 1.2;

  void validate() const;
};

// n ordinary token ids from the coherent source. Deterministic in
// (seed, order, zipf_s, n); n must be >= 1.
std::vector<int> sample_coherent(const CoherentSource& source, int n, const Vocabulary& vocab);

// n i.i.d. uniform ordinary token ids. Deterministic in seed; n may be 0.
std::vector<int> sample_uniform(uint64_t seed, int n, const Vocabulary& vocab);

}  // namespace memlab
