#include "corpus.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"
#include "prng.hpp"

namespace memlab {

using nlohmann::json;

const char* corpus_kind_name(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::stress_test: return "stress_test";
    case CorpusKind::phonebook: return "phonebook";
    case CorpusKind::linear_rule: return "linear_rule";
  }
  return "unknown";
}

CorpusKind corpus_kind_from_name(const std::string& name) {
  if (name == "stress_test") return CorpusKind::stress_test;
  if (name == "phonebook") return CorpusKind::phonebook;
  if (name == "linear_rule") return CorpusKind::linear_rule;
  throw validation_error("unknown corpus kind: " + name);
}

int Corpus::answer_token_total() const {
  int total = 0;
  for (const auto& item : items) total += static_cast<int>(item.answer.size());
  return total;
}

std::vector<int> stress_test_key(const Vocabulary& vocab) {
  std::vector<int> key;
  key.reserve(kStressKeyPattern.size());
  for (int id : kStressKeyPattern) key.push_back(id % vocab.size);
  return key;
}

std::vector<int> replacement_positions(uint64_t seed, int length, int count) {
  SplitMix64 rng(derive_seed(seed, {seed_tag::positions}));
  return sample_index_prefix(rng, length, count);
}

namespace {

bool is_canonical_ratio(double rho) {
  for (double c : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    if (std::abs(rho - c) < 1e-12) return true;
  }
  return false;
}

}  // namespace

Corpus build_stress_test(const CorpusSpec& spec, const CoherentSource& source, const Vocabulary& vocab) {
  vocab.validate();
  if (spec.kind != CorpusKind::stress_test) throw validation_error("spec kind must be stress_test");
  if (spec.total_answer_tokens < 1) throw validation_error("stress test requires L >= 1");
  if (spec.replacement_ratio < 0.0 || spec.replacement_ratio > 1.0)
    throw validation_error("replacement ratio must lie in [0, 1]");
  if (!spec.allow_noncanonical_ratio && !is_canonical_ratio(spec.replacement_ratio))
    throw validation_error("non-canonical replacement ratio (set allow_noncanonical_ratio to use it)");

  const int length = spec.total_answer_tokens;
  std::vector<int> answer = sample_coherent(source, length, vocab);

  const int n_replace = static_cast<int>(std::floor(spec.replacement_ratio * length));
  std::vector<int> positions = replacement_positions(spec.seed, length, n_replace);
  std::vector<int> fill = sample_uniform(derive_seed(spec.seed, {seed_tag::values}), n_replace, vocab);
  for (int i = 0; i < n_replace; ++i) {
    answer[static_cast<size_t>(positions[static_cast<size_t>(i)])] = fill[static_cast<size_t>(i)];
  }

  Corpus corpus;
  corpus.spec = spec;
  corpus.source = source;
  corpus.vocab_size = vocab.size;
  corpus.items.push_back({"stress_0", stress_test_key(vocab), std::move(answer)});
  return corpus;
}

Corpus build_phonebook(const CorpusSpec& spec, const Vocabulary& vocab) {
  vocab.validate();
  if (spec.kind != CorpusKind::phonebook) throw validation_error("spec kind must be phonebook");
  if (spec.total_answer_tokens < 1) throw validation_error("phonebook requires L >= 1");
  if (spec.value_width < 1) throw validation_error("phonebook value width must be >= 1");
  if (vocab.size < 10) throw validation_error("phonebook requires vocabulary size >= 10 for digit tokens");
  const int w = spec.value_width;
  const int length = spec.total_answer_tokens;
  if (length % w != 0) {
    std::ostringstream msg;
    msg << "exact fill impossible: value width " << w << " does not divide bucket size " << length;
    throw validation_error(msg.str());
  }

  const int n_items = length / w;
  const int key_len = 6;
  SplitMix64 key_rng(derive_seed(spec.seed, {seed_tag::phonebook, 0}));
  SplitMix64 value_rng(derive_seed(spec.seed, {seed_tag::phonebook, 1}));

  // Key tokens come from a coherent-source style Zipf draw so names look
  // non-uniform; duplicates are redrawn until globally unique.
  CoherentSource name_source{derive_seed(spec.seed, {seed_tag::phonebook, 2}), 1, 1.2};
  std::vector<int> name_stream = sample_coherent(name_source, n_items * key_len * 4 + key_len, vocab);
  size_t cursor = 0;
  auto next_key = [&]() {
    std::vector<int> key;
    key.reserve(static_cast<size_t>(key_len));
    for (int i = 0; i < key_len; ++i) {
      if (cursor >= name_stream.size()) {
        // Stream exhausted by collisions; extend with uniform draws.
        key.push_back(static_cast<int>(key_rng.below(static_cast<uint64_t>(vocab.size))));
      } else {
        key.push_back(name_stream[cursor++]);
      }
    }
    return key;
  };

  Corpus corpus;
  corpus.spec = spec;
  corpus.vocab_size = vocab.size;
  std::set<std::vector<int>> seen;
  for (int i = 0; i < n_items; ++i) {
    std::vector<int> key = next_key();
    while (!seen.insert(key).second) key = next_key();
    std::vector<int> value(static_cast<size_t>(w));
    for (int d = 0; d < w; ++d) value[static_cast<size_t>(d)] = static_cast<int>(value_rng.below(10));
    corpus.items.push_back({"pb_" + std::to_string(i), std::move(key), std::move(value)});
  }
  return corpus;
}

std::vector<int> encode_number(int value) {
  if (value == 0) return {0};
  std::vector<int> digits;
  for (int v = value; v > 0; v /= 10) digits.push_back(v % 10);
  return {digits.rbegin(), digits.rend()};
}

MemoryItem linear_rule_item(int x, int y) {
  MemoryItem item;
  item.item_id = "lr_" + std::to_string(x) + "_" + std::to_string(y);
  item.key = encode_number(x);
  item.key.push_back(kLinearRulePairSep);
  for (int d : encode_number(y)) item.key.push_back(d);
  item.answer = encode_number(3 * x + 5 * y + 7);
  return item;
}

LinearRuleSplits build_linear_rule(uint64_t seed, const Vocabulary& vocab) {
  vocab.validate();
  if (vocab.size < 11) throw validation_error("linear rule requires vocabulary size >= 11");

  auto make_item = [](int x, int y) { return linear_rule_item(x, y); };

  std::vector<std::pair<int, int>> grid;
  grid.reserve(900);
  for (int x = 1; x <= 30; ++x)
    for (int y = 1; y <= 30; ++y) grid.emplace_back(x, y);

  SplitMix64 rng(derive_seed(seed, {seed_tag::linear_rule}));
  for (size_t i = grid.size() - 1; i > 0; --i) {
    size_t j = rng.below(i + 1);
    std::swap(grid[i], grid[j]);
  }

  auto fill = [&](Corpus& c, const char* split, size_t begin, size_t count) {
    for (size_t i = begin; i < begin + count; ++i)
      c.items.push_back(make_item(grid[i].first, grid[i].second));
    c.spec.kind = CorpusKind::linear_rule;
    c.spec.seed = seed;
    c.spec.total_answer_tokens = c.answer_token_total();
    c.split = split;
    c.vocab_size = vocab.size;
  };

  LinearRuleSplits splits;
  fill(splits.train, "train", 0, 500);
  fill(splits.gen_eval, "gen_eval", 500, 100);

  std::vector<int> picks = sample_index_prefix(rng, 500, 100);
  for (int idx : picks) splits.exact_eval.items.push_back(splits.train.items[static_cast<size_t>(idx)]);
  splits.exact_eval.spec.kind = CorpusKind::linear_rule;
  splits.exact_eval.spec.seed = seed;
  splits.exact_eval.spec.total_answer_tokens = splits.exact_eval.answer_token_total();
  splits.exact_eval.split = "exact_eval";
  splits.exact_eval.vocab_size = vocab.size;
  return splits;
}

BucketLengths bucket_lengths(BucketProfile profile, double scale, int granularity) {
  if (!(scale > 0.0)) throw validation_error("bucket scale must be > 0");
  if (granularity < 1) throw validation_error("bucket granularity must be >= 1");
  static const std::vector<int> stress = {50,   100,  200,  500,  1000, 2000, 3000,
                                          4000, 5000, 6000, 7000, 8000, 10000};
  static const std::vector<int> phonebook = {1000, 2000, 4000, 8000, 12000, 16000, 24000, 32000};
  const std::vector<int>& base = (profile == BucketProfile::stress) ? stress : phonebook;

  BucketLengths out;
  for (int b : base) {
    double scaled = static_cast<double>(b) / scale;
    int rounded = static_cast<int>(std::llround(scaled / granularity)) * granularity;
    if (rounded < 1) {
      ++out.n_dropped;
      continue;
    }
    out.lengths.push_back(rounded);
  }
  return out;
}

namespace {

json corpus_header(const Corpus& corpus) {
  json h{{"type", "memlab_corpus"},
         {"schema_version", 1},
         {"kind", corpus_kind_name(corpus.spec.kind)},
         {"total_answer_tokens", corpus.spec.total_answer_tokens},
         {"replacement_ratio", corpus.spec.replacement_ratio},
         {"seed", corpus.spec.seed},
         {"value_width", corpus.spec.value_width},
         {"split", corpus.split},
         {"source", {{"seed", corpus.source.seed}, {"order", corpus.source.order}, {"zipf_s", corpus.source.zipf_s}}},
         {"vocab_size", corpus.vocab_size}};
  if (corpus.spec.kind == CorpusKind::stress_test) {
    h["key_note"] =
        "fixed key; stands for the prompt \"Please output the content of the vector memory "
        "injected into the activations.\"";
  }
  return h;
}

}  // namespace

void save_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw train_error("cannot open corpus file for writing: " + path.string());
  out << corpus_header(corpus).dump() << "\n";
  for (const auto& item : corpus.items) {
    json line{{"item_id", item.item_id}, {"key", item.key}, {"answer", item.answer}};
    out << line.dump() << "\n";
  }
  if (!out) throw train_error("failed writing corpus file: " + path.string());
}

Corpus load_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw train_error("cannot open corpus file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw validation_error("corpus file is empty: " + path.string());
  json header = json::parse(line);
  if (header.value("type", "") != "memlab_corpus")
    throw validation_error("not a memlab corpus file: " + path.string());

  Corpus corpus;
  corpus.spec.kind = corpus_kind_from_name(header.at("kind").get<std::string>());
  corpus.spec.total_answer_tokens = header.at("total_answer_tokens").get<int>();
  corpus.spec.replacement_ratio = header.at("replacement_ratio").get<double>();
  corpus.spec.seed = header.at("seed").get<uint64_t>();
  corpus.spec.value_width = header.at("value_width").get<int>();
  corpus.split = header.value("split", "");
  if (header.contains("source")) {
    const auto& s = header.at("source");
    corpus.source.seed = s.at("seed").get<uint64_t>();
    corpus.source.order = s.at("order").get<int>();
    corpus.source.zipf_s = s.at("zipf_s").get<double>();
  }
  corpus.vocab_size = header.at("vocab_size").get<int>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    MemoryItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.key = j.at("key").get<std::vector<int>>();
    item.answer = j.at("answer").get<std::vector<int>>();
    if (item.answer.empty()) throw validation_error("corpus item has empty answer: " + item.item_id);
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

}  // namespace memlab
