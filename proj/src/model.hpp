#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "corpus.hpp"
#include "tokens.hpp"

namespace memlab {

struct BaseModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int max_seq = 1024;
  Vocabulary vocab;
  uint64_t init_seed = 1;

  void validate() const;
};

// Low-rank residual on one layer's MLP down-projection:
//   h = W0 x + B (A x),  A: [rank x d_ff],  B: [d_model x rank].
struct AdapterConfig {
  int rank = 8;
  int layer = 1;
  uint64_t init_seed = 2;

  void validate(const BaseModelConfig& base) const;
};

// Frozen pre-norm causal transformer (GELU MLP, learned positions, untied
// output head). All weights are a pure function of init_seed and are never
// updated after construction.
class BaseModel {
 public:
  explicit BaseModel(const BaseModelConfig& cfg);

  const BaseModelConfig& config() const { return cfg_; }

  // FNV-1a over every weight byte; the frozen-base invariant compares this
  // before and after training.
  uint64_t weight_checksum() const;

  struct LayerWeights {
    std::vector<double> ln1_g, ln1_b, ln2_g, ln2_b;
    std::vector<double> wq, wk, wv, wo;  // [d x d] row-major (out, in)
    std::vector<double> bq, bk, bv, bo;
    std::vector<double> w1, b1;  // [d_ff x d], [d_ff]
    std::vector<double> w2, b2;  // [d x d_ff], [d]
  };

  std::vector<double> wte;    // [V x d]
  std::vector<double> wpe;    // [max_seq x d]
  std::vector<double> lnf_g, lnf_b;
  std::vector<double> w_head;  // [V x d]
  std::vector<LayerWeights> layers;

 private:
  BaseModelConfig cfg_;
};

struct AdapterState {
  AdapterConfig cfg;
  std::vector<double> a;  // [rank x d_ff] row-major
  std::vector<double> b;  // [d_model x rank] row-major

  // A ~ uniform(-1/sqrt(d_ff), +1/sqrt(d_ff)), B = 0, so a fresh adapter is
  // functionally the identity.
  static AdapterState init(const AdapterConfig& cfg, const BaseModelConfig& base);

  size_t param_count() const { return a.size() + b.size(); }
};

struct AdapterGrad {
  std::vector<double> a, b;
};

// Per answer position record from a teacher-forced pass.
struct TokenTraceEntry {
  int target_id = 0;
  double p_target = 0.0;
  double loss = 0.0;
  int greedy_id = 0;
};
using TokenTrace = std::vector<TokenTraceEntry>;

// Additive perturbation of one logit at one answer position, applied before
// the softmax. Lets tests probe that masked positions contribute no
// gradient.
struct LogitNudge {
  int answer_pos = 0;
  int token_id = 0;
  double delta = 0.0;
};

// One teacher-forced forward pass over [BOS, key, SEP, answer]. Keeps its
// activations so weighted adapter gradients can be taken afterwards without
// re-running the forward.
class TeacherForward {
 public:
  TeacherForward(const BaseModel& base, const AdapterState& adapter, const MemoryItem& item,
                 std::vector<LogitNudge> nudges = {});
  ~TeacherForward();
  TeacherForward(TeacherForward&&) noexcept;
  TeacherForward& operator=(TeacherForward&&) noexcept;

  const TokenTrace& trace() const;

  // Softmax distribution over the vocabulary at one answer position.
  std::vector<double> distribution(int answer_pos) const;

  // Gradient of sum_t w_t L_t / (sum_t w_t + eps) with respect to (A, B).
  // Weights must match the answer length, be finite and non-negative.
  AdapterGrad backward(const std::vector<double>& weights, double eps) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

TokenTrace forward_teacher(const BaseModel& base, const AdapterState& adapter, const MemoryItem& item);

AdapterGrad backward_adapter(const BaseModel& base, const AdapterState& adapter, const MemoryItem& item,
                             const std::vector<double>& weights, double eps);

// Free-run greedy decoding from [BOS, key, SEP]; feeds back its own argmax,
// ties broken toward the lowest token id, stops on a special token, max_len
// tokens, or context capacity.
std::vector<int> decode_greedy(const BaseModel& base, const AdapterState& adapter,
                               const std::vector<int>& key, int max_len);

// Binary adapter checkpoint: magic "MEMAD1", little-endian u32 rank, d_ff,
// d_model, layer, then A then B as row-major f32.
void save_adapter(const AdapterState& adapter, const std::filesystem::path& path);
AdapterState load_adapter(const std::filesystem::path& path);

}  // namespace memlab
