#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "errors.hpp"
#include "model.hpp"
#include "objectives.hpp"
#include "prng.hpp"
#include "tokens.hpp"

using namespace memlab;

namespace {

BaseModelConfig tiny_config() {
  BaseModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.max_seq = 64;
  cfg.vocab.size = 24;
  cfg.init_seed = 5;
  return cfg;
}

MemoryItem random_item(uint64_t seed, int key_len, int answer_len, const Vocabulary& vocab) {
  MemoryItem item;
  item.item_id = "t" + std::to_string(seed);
  item.key = sample_uniform(derive_seed(seed, {1}), key_len, vocab);
  item.answer = sample_uniform(derive_seed(seed, {2}), answer_len, vocab);
  return item;
}

double weighted_objective(const BaseModel& base, const AdapterState& adapter, const MemoryItem& item,
                          const std::vector<double>& w, double eps) {
  return combine_objective(forward_teacher(base, adapter, item), w, eps);
}

// max relative error between analytic adapter gradients and central finite
// differences over the selected coordinates (empty = all).
double grad_check(const BaseModel& base, AdapterState adapter, const MemoryItem& item,
                  const std::vector<double>& w, const std::vector<size_t>& a_idx,
                  const std::vector<size_t>& b_idx) {
  const double eps = 1e-8;
  const double h = 1e-5;
  const AdapterGrad grad = backward_adapter(base, adapter, item, w, eps);

  double worst = 0.0;
  auto probe = [&](std::vector<double>& param, const std::vector<double>& analytic, size_t i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double plus = weighted_objective(base, adapter, item, w, eps);
    param[i] = saved - h;
    const double minus = weighted_objective(base, adapter, item, w, eps);
    param[i] = saved;
    const double fd = (plus - minus) / (2.0 * h);
    const double an = analytic[i];
    const double scale = std::max({std::abs(fd), std::abs(an), 1e-12});
    if (std::abs(fd) < 1e-12 && std::abs(an) < 1e-12) return;
    worst = std::max(worst, std::abs(fd - an) / scale);
  };

  if (a_idx.empty() && b_idx.empty()) {
    for (size_t i = 0; i < adapter.a.size(); ++i) probe(adapter.a, grad.a, i);
    for (size_t i = 0; i < adapter.b.size(); ++i) probe(adapter.b, grad.b, i);
  } else {
    for (size_t i : a_idx) probe(adapter.a, grad.a, i);
    for (size_t i : b_idx) probe(adapter.b, grad.b, i);
  }
  return worst;
}

AdapterState randomized_adapter(const AdapterConfig& cfg, const BaseModelConfig& base, uint64_t seed) {
  AdapterState st = AdapterState::init(cfg, base);
  SplitMix64 rng(seed);
  for (auto& v : st.b) v = 0.1 * rng.gaussian();  // leave the zero-init point
  return st;
}

}  // namespace

TEST_CASE("zero-init adapter is functionally the base model") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const MemoryItem item = random_item(3, 4, 6, cfg.vocab);

  const AdapterState a1 = AdapterState::init({1, 0, 11}, cfg);
  const AdapterState a2 = AdapterState::init({8, 1, 99}, cfg);
  const TokenTrace t1 = forward_teacher(base, a1, item);
  const TokenTrace t2 = forward_teacher(base, a2, item);
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].p_target == t2[i].p_target);
    CHECK(t1[i].loss == t2[i].loss);
    CHECK(t1[i].greedy_id == t2[i].greedy_id);
  }
  CHECK(decode_greedy(base, a1, item.key, 6) == decode_greedy(base, a2, item.key, 6));
}

TEST_CASE("trace is bit-identical across invocations") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const MemoryItem item = random_item(4, 3, 8, cfg.vocab);
  const AdapterState adapter = randomized_adapter({4, 1, 7}, cfg, 123);

  const TokenTrace t1 = forward_teacher(base, adapter, item);
  const TokenTrace t2 = forward_teacher(base, adapter, item);
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].p_target == t2[i].p_target);
    CHECK(t1[i].loss == t2[i].loss);
  }
}

TEST_CASE("trace invariants: loss definition, normalization, argmax dominance") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const MemoryItem item = random_item(9, 4, 10, cfg.vocab);
  const AdapterState adapter = randomized_adapter({4, 1, 7}, cfg, 11);

  TeacherForward fwd(base, adapter, item);
  const TokenTrace& trace = fwd.trace();
  double mean = 0.0;
  for (size_t i = 0; i < trace.size(); ++i) {
    CHECK(trace[i].loss == doctest::Approx(-std::log(trace[i].p_target)).epsilon(1e-12));
    const std::vector<double> dist = fwd.distribution(static_cast<int>(i));
    double sum = 0.0;
    for (double p : dist) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-6);
    if (trace[i].p_target > 0.5) CHECK(trace[i].greedy_id == trace[i].target_id);
    mean += trace[i].loss;
  }
  mean /= static_cast<double>(trace.size());
  // the sequence-averaged loss is just the mean of the per-token records
  CHECK(combine_objective(trace, weights_sft(trace), 0.0) == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("a boosted target logit makes the position dominant") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const MemoryItem item = random_item(12, 4, 6, cfg.vocab);
  const AdapterState adapter = AdapterState::init({2, 1, 3}, cfg);

  std::vector<LogitNudge> nudges{{2, item.answer[2], 25.0}};
  TeacherForward fwd(base, adapter, item, nudges);
  CHECK(fwd.trace()[2].p_target > 0.5);
  CHECK(fwd.trace()[2].greedy_id == item.answer[2]);
}

TEST_CASE("full-coordinate gradient check on a tiny model") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const MemoryItem item = random_item(21, 3, 5, cfg.vocab);
  const AdapterState adapter = randomized_adapter({2, 1, 13}, cfg, 77);

  std::vector<double> w(item.answer.size());
  for (size_t t = 0; t < w.size(); ++t) w[t] = static_cast<double>(t % 3);
  CHECK(grad_check(base, adapter, item, w, {}, {}) < 1e-4);
}

TEST_CASE("gradient check with the adapter on layer 0") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const MemoryItem item = random_item(22, 2, 6, cfg.vocab);
  const AdapterState adapter = randomized_adapter({3, 0, 17}, cfg, 78);
  CHECK(grad_check(base, adapter, item, weights_sft(forward_teacher(base, adapter, item)), {}, {}) <
        1e-4);
}

TEST_CASE("sampled gradient check on the default architecture") {
  BaseModelConfig cfg;  // default 2 layers, d_model 64, 4 heads, d_ff 256
  cfg.init_seed = 31;
  const BaseModel base(cfg);
  int instance = 0;
  for (int rank : {1, 4}) {
    const MemoryItem item = random_item(40 + static_cast<uint64_t>(rank), 6, 12, cfg.vocab);
    const AdapterState adapter =
        randomized_adapter({rank, 1, static_cast<uint64_t>(50 + rank)}, cfg, 90 + instance);
    SplitMix64 pick(7 + static_cast<uint64_t>(instance));
    std::vector<size_t> a_idx, b_idx;
    for (int i = 0; i < 12; ++i) a_idx.push_back(pick.below(adapter.a.size()));
    for (int i = 0; i < 12; ++i) b_idx.push_back(pick.below(adapter.b.size()));
    std::vector<double> w(item.answer.size(), 1.0);
    CHECK(grad_check(base, adapter, item, w, a_idx, b_idx) < 1e-4);
    ++instance;
  }
}

TEST_CASE("weight handling in backward") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const MemoryItem item = random_item(33, 3, 5, cfg.vocab);
  const AdapterState adapter = randomized_adapter({2, 1, 3}, cfg, 55);

  SUBCASE("all-zero weights give a zero gradient") {
    const AdapterGrad g = backward_adapter(base, adapter, item, std::vector<double>(5, 0.0), 1e-8);
    for (double v : g.a) CHECK(v == 0.0);
    for (double v : g.b) CHECK(v == 0.0);
  }
  SUBCASE("uniform weights match the plain mean-loss gradient") {
    const AdapterGrad weighted = backward_adapter(base, adapter, item, std::vector<double>(5, 1.0), 1e-8);
    const AdapterGrad plain = backward_adapter(base, adapter, item, std::vector<double>(5, 1.0), 0.0);
    for (size_t i = 0; i < weighted.a.size(); ++i)
      CHECK(weighted.a[i] == doctest::Approx(plain.a[i]).epsilon(1e-8));
    for (size_t i = 0; i < weighted.b.size(); ++i)
      CHECK(weighted.b[i] == doctest::Approx(plain.b[i]).epsilon(1e-8));
  }
  SUBCASE("invalid weights are rejected") {
    CHECK_THROWS_AS(backward_adapter(base, adapter, item, std::vector<double>(4, 1.0), 1e-8),
                    validation_error);
    CHECK_THROWS_AS(backward_adapter(base, adapter, item, {1.0, -0.5, 1.0, 1.0, 1.0}, 1e-8),
                    validation_error);
    std::vector<double> nan_w(5, 1.0);
    nan_w[2] = std::nan("");
    CHECK_THROWS_AS(backward_adapter(base, adapter, item, nan_w, 1e-8), validation_error);
  }
}

TEST_CASE("capacity and input validation") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const AdapterState adapter = AdapterState::init({2, 1, 3}, cfg);
  const MemoryItem too_long = random_item(1, 30, 40, cfg.vocab);
  CHECK_THROWS_AS(forward_teacher(base, adapter, too_long), validation_error);

  MemoryItem bad_tok = random_item(2, 3, 4, cfg.vocab);
  bad_tok.answer[0] = cfg.vocab.total();
  CHECK_THROWS_AS(forward_teacher(base, adapter, bad_tok), validation_error);

  CHECK_THROWS_AS(AdapterState::init({0, 0, 1}, cfg), validation_error);
  CHECK_THROWS_AS(AdapterState::init({32, 0, 1}, cfg), validation_error);  // > min(d_ff, d_model)
  CHECK_THROWS_AS(AdapterState::init({2, 5, 1}, cfg), validation_error);
}

TEST_CASE("adapter parameter count and init") {
  const BaseModelConfig cfg = tiny_config();
  const AdapterState st = AdapterState::init({4, 1, 9}, cfg);
  CHECK(st.param_count() == static_cast<size_t>(4 * (cfg.d_ff + cfg.d_model)));
  for (double v : st.b) CHECK(v == 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
  for (double v : st.a) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
}

TEST_CASE("greedy decode basics") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel base(cfg);
  const AdapterState adapter = AdapterState::init({2, 1, 3}, cfg);
  const std::vector<int> key = sample_uniform(8, 4, cfg.vocab);

  const auto once = decode_greedy(base, adapter, key, 1);
  CHECK(once.size() == 1);
  const auto a = decode_greedy(base, adapter, key, 12);
  const auto b = decode_greedy(base, adapter, key, 12);
  CHECK(a == b);
  CHECK(a.size() <= 12);
  for (int tok : a) CHECK(tok < cfg.vocab.total());
  CHECK_THROWS_AS(decode_greedy(base, adapter, key, 0), validation_error);
}

TEST_CASE("base model weights are a pure function of the seed") {
  const BaseModelConfig cfg = tiny_config();
  const BaseModel m1(cfg);
  const BaseModel m2(cfg);
  CHECK(m1.weight_checksum() == m2.weight_checksum());
  BaseModelConfig other = cfg;
  other.init_seed = 6;
  CHECK(BaseModel(other).weight_checksum() != m1.weight_checksum());
}

TEST_CASE("adapter checkpoint round trip") {
  const BaseModelConfig cfg = tiny_config();
  AdapterState st = AdapterState::init({4, 1, 9}, cfg);
  SplitMix64 rng(3);
  for (auto& v : st.b) v = rng.gaussian();

  const auto path = std::filesystem::temp_directory_path() / "memlab_adapter_test.memad";
  save_adapter(st, path);
  const AdapterState loaded = load_adapter(path);
  CHECK(loaded.cfg.rank == 4);
  CHECK(loaded.cfg.layer == 1);
  REQUIRE(loaded.a.size() == st.a.size());
  REQUIRE(loaded.b.size() == st.b.size());
  for (size_t i = 0; i < st.a.size(); ++i)
    CHECK(loaded.a[i] == static_cast<double>(static_cast<float>(st.a[i])));
  for (size_t i = 0; i < st.b.size(); ++i)
    CHECK(loaded.b[i] == static_cast<double>(static_cast<float>(st.b[i])));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_adapter(std::filesystem::temp_directory_path() / "missing.memad"), train_error);
}
