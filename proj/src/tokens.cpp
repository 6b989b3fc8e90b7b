#include "tokens.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "prng.hpp"

namespace memlab {

void Vocabulary::validate() const {
  if (size < 2) throw validation_error("vocabulary size must be >= 2");
}

void CoherentSource::validate() const {
  if (order < 0 || order > 1) throw validation_error("coherent source order must be 0 or 1");
  if (!(zipf_s > 0.0)) throw validation_error("zipf exponent must be > 0");
}

namespace {

// Cumulative Zipf weights over ranks 0..size-1: w_k = (k + 1)^{-s}.
std::vector<double> zipf_cdf(int size, double s) {
  std::vector<double> cdf(static_cast<size_t>(size));
  double acc = 0.0;
  for (int k = 0; k < size; ++k) {
    acc += std::pow(static_cast<double>(k + 1), -s);
    cdf[static_cast<size_t>(k)] = acc;
  }
  return cdf;
}

int draw_from_cdf(SplitMix64& rng, const std::vector<double>& cdf) {
  double u = rng.unit() * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<int>(it - cdf.begin());
}

std::vector<int> seeded_permutation(SplitMix64& rng, int n) {
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

}  // namespace

std::vector<int> sample_coherent(const CoherentSource& source, int n, const Vocabulary& vocab) {
  vocab.validate();
  source.validate();
  if (n < 1) throw validation_error("sample_coherent requires n >= 1");

  SplitMix64 rng(derive_seed(source.seed, {seed_tag::coherent}));
  const int size = vocab.size;
  // rank_to_id: which token holds each Zipf rank. successor: the chained
  // next token used for Markov smoothing.
  std::vector<int> rank_to_id = seeded_permutation(rng, size);
  std::vector<int> successor = seeded_permutation(rng, size);
  std::vector<double> cdf = zipf_cdf(size, source.zipf_s);

  std::vector<int> out;
  out.reserve(static_cast<size_t>(n));
  int prev = rank_to_id[static_cast<size_t>(draw_from_cdf(rng, cdf))];
  out.push_back(prev);
  for (int i = 1; i < n; ++i) {
    int tok;
    if (source.order >= 1 && rng.unit() < 0.5) {
      tok = successor[static_cast<size_t>(prev)];
    } else {
      tok = rank_to_id[static_cast<size_t>(draw_from_cdf(rng, cdf))];
    }
    out.push_back(tok);
    prev = tok;
  }
  return out;
}

std::vector<int> sample_uniform(uint64_t seed, int n, const Vocabulary& vocab) {
  vocab.validate();
  if (n < 0) throw validation_error("sample_uniform requires n >= 0");
  SplitMix64 rng(derive_seed(seed, {seed_tag::uniform}));
  std::vector<int> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(vocab.size))));
  }
  return out;
}

}  // namespace memlab
