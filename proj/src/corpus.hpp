#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tokens.hpp"

namespace memlab {

// One key -> answer pair. The key is conditioning context only; every
// measured quantity (length, loss, accuracy) is computed over answer tokens.
struct MemoryItem {
  std::string item_id;
  std::vector<int> key;
  std::vector<int> answer;
};

enum class CorpusKind { stress_test, phonebook, linear_rule };

const char* corpus_kind_name(CorpusKind kind);
CorpusKind corpus_kind_from_name(const std::string& name);

struct CorpusSpec {
  CorpusKind kind = CorpusKind::stress_test;
  int total_answer_tokens = 0;     // bucket size L
  double replacement_ratio = 0.0;  // rho, stress test only
  uint64_t seed = 0;
  int value_width = 8;  // phonebook answer width w, in digit tokens
  // Canonical sweeps use rho in {0, .2, .4, .6, .8, 1}; anything else must be
  // opted into explicitly.
  bool allow_noncanonical_ratio = false;
};

struct Corpus {
  std::vector<MemoryItem> items;
  CorpusSpec spec;
  CoherentSource source;  // base-text source (meaningful for the stress test)
  std::string split;      // linear-rule split name, empty otherwise
  int vocab_size = 0;

  int answer_token_total() const;
};

// The stress test conditions every instance on one fixed key. At this scale
// the key is an 8-token id pattern (taken mod vocabulary size); it stands for
// the retrieval prompt "Please output the content of the vector memory
// injected into the activations." documented in the corpus format.
inline constexpr std::array<int, 8> kStressKeyPattern = {11, 4, 7, 2, 9, 14, 3, 8};

std::vector<int> stress_test_key(const Vocabulary& vocab);

// The floor(rho * L) answer positions rewritten by the stress-test builder:
// a seeded Fisher-Yates prefix over [0, length), ascending. Exposed so the
// index set can be re-derived independently of the builder.
std::vector<int> replacement_positions(uint64_t seed, int length, int count);

// Single-item corpus: a coherent base sequence of exactly L tokens with
// floor(rho * L) positions overwritten by uniform draws.
Corpus build_stress_test(const CorpusSpec& spec, const CoherentSource& source, const Vocabulary& vocab);

// Unique coherent-token keys, each mapped to a fixed-width value over the
// digit id range [0, 10). Fails unless value_width divides L exactly.
Corpus build_phonebook(const CorpusSpec& spec, const Vocabulary& vocab);

struct LinearRuleSplits {
  Corpus train;       // 500 items
  Corpus exact_eval;  // 100 items drawn from train
  Corpus gen_eval;    // 100 items disjoint from train
};

// f(x, y) = 3x + 5y + 7 over the grid x, y in [1, 30], keys and answers in
// base-10 digit tokens.
LinearRuleSplits build_linear_rule(uint64_t seed, const Vocabulary& vocab);

// The item for one (x, y) pair: key = digits(x) ++ [sep] ++ digits(y),
// answer = digits(3x + 5y + 7).
MemoryItem linear_rule_item(int x, int y);

// Digit-token helpers for the linear-rule encoding (most-significant first,
// no padding). The key separator between x and y is token id 10.
std::vector<int> encode_number(int value);
inline constexpr int kLinearRulePairSep = 10;

enum class BucketProfile { stress, phonebook };

struct BucketLengths {
  std::vector<int> lengths;
  int n_dropped = 0;  // buckets that scaled below 1 token
};

// The reference length buckets divided by `scale` and rounded to multiples
// of `granularity` (>= granularity).
BucketLengths bucket_lengths(BucketProfile profile, double scale, int granularity = 1);

// JSON Lines: a header object followed by one {"item_id", "key", "answer"}
// object per item. Byte-identical for identical corpora.
void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus_jsonl(const std::filesystem::path& path);

}  // namespace memlab
