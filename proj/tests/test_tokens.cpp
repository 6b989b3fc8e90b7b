#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "errors.hpp"
#include "tokens.hpp"

using namespace memlab;

TEST_CASE("vocabulary layout and validation") {
  Vocabulary v;
  CHECK(v.size == 256);
  CHECK(v.bos_id() == 256);
  CHECK(v.sep_id() == 257);
  CHECK(v.total() == 258);
  CHECK_THROWS_AS(Vocabulary{1}.validate(), validation_error);
  CHECK_NOTHROW(Vocabulary{2}.validate());
}

TEST_CASE("coherent sampling is deterministic and in range") {
  Vocabulary vocab;
  CoherentSource src{7, 1, 1.2};
  const auto a = sample_coherent(src, 5, vocab);
  const auto b = sample_coherent(src, 5, vocab);
  CHECK(a == b);
  CHECK(a.size() == 5);

  const auto one = sample_coherent(src, 1, vocab);
  CHECK(one.size() == 1);
  CHECK(one[0] >= 0);
  CHECK(one[0] < vocab.size);

  const auto longer = sample_coherent(src, 5000, vocab);
  for (int tok : longer) {
    CHECK(tok >= 0);
    CHECK(tok < vocab.size);
  }
  // a prefix of the same stream stays identical
  CHECK(std::equal(a.begin(), a.end(), longer.begin()));
}

TEST_CASE("coherent sampling rejects bad arguments") {
  Vocabulary vocab;
  CHECK_THROWS_AS(sample_coherent({7, 1, 1.2}, 0, vocab), validation_error);
  CHECK_THROWS_AS(sample_coherent({7, 5, 1.2}, 4, vocab), validation_error);
  CHECK_THROWS_AS(sample_coherent({7, 1, 0.0}, 4, vocab), validation_error);
}

TEST_CASE("coherent unigrams are heavily non-uniform") {
  Vocabulary vocab;
  const auto seq = sample_coherent({7, 1, 1.2}, 10000, vocab);
  std::map<int, int> counts;
  for (int tok : seq) counts[tok]++;
  int top = 0;
  for (const auto& [tok, c] : counts) top = std::max(top, c);
  const double top_freq = static_cast<double>(top) / 10000.0;
  CHECK(top_freq >= 2.0 / vocab.size);
}

TEST_CASE("uniform sampling determinism, range, empty case") {
  Vocabulary vocab;
  CHECK(sample_uniform(1, 0, vocab).empty());
  const auto a = sample_uniform(1, 3, vocab);
  CHECK(a == sample_uniform(1, 3, vocab));
  CHECK(a.size() == 3);
  CHECK(sample_uniform(2, 3, vocab) != a);
}

TEST_CASE("uniform frequencies stay near 1/size") {
  Vocabulary vocab;
  const int n = 100000;
  const auto seq = sample_uniform(1, n, vocab);
  std::vector<int> counts(static_cast<size_t>(vocab.size), 0);
  for (int tok : seq) counts[static_cast<size_t>(tok)]++;
  const double uniform = 1.0 / vocab.size;
  for (int id = 0; id < vocab.size; ++id) {
    const double freq = static_cast<double>(counts[static_cast<size_t>(id)]) / n;
    CHECK(freq >= uniform - 0.01);
    CHECK(freq <= uniform + 0.01);
  }
}

TEST_CASE("samplers never emit special ids") {
  Vocabulary vocab{16};
  for (int tok : sample_coherent({3, 1, 1.1}, 2000, vocab)) CHECK(tok < vocab.size);
  for (int tok : sample_uniform(3, 2000, vocab)) CHECK(tok < vocab.size);
}
