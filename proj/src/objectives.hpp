#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "model.hpp"

namespace memlab {

inline constexpr double kCriticalLoss = 0.6931471805599453;  // ln 2

enum class PolicyKind { sft, memft_ot, memft_sw };

const char* policy_kind_name(PolicyKind kind);
PolicyKind policy_kind_from_name(const std::string& name);

struct WeightingPolicy {
  PolicyKind kind = PolicyKind::sft;
  double l_crit = kCriticalLoss;
  double eps = 1e-8;        // objective normalization constant
  double kappa = 10.0;      // sigmoid sharpness around l_crit
  double tau = 8.0;         // decay constant past the anchor, in tokens
  int l0 = 16;              // initial sliding-window length
  double eps_floor = 0.01;  // weight for tokens beyond the window
  int growth = 16;          // window growth per stagnant step
  bool sw_spatial = true;   // disable to drop the window and keep soft thresholding only

  void validate() const;
};

// Per-sample sliding-window bookkeeping for memft_sw.
struct SlidingState {
  std::optional<int> anchor;
  int l_win = 16;
  int stagnation = 0;

  static SlidingState fresh(const WeightingPolicy& policy) { return {std::nullopt, policy.l0, 0}; }
};

// Uniform weights: plain token-averaged cross entropy.
std::vector<double> weights_sft(const TokenTrace& trace);

// Hard mask: w_t = 1 iff L_t > l_crit (strict).
std::vector<double> weights_memft_ot(const TokenTrace& trace, const WeightingPolicy& policy);

// First teacher-forced greedy mismatch, or none when the whole trace matches.
std::optional<int> detect_anchor(const TokenTrace& trace);

// Soft threshold sigma(kappa (L_t - l_crit)) shaped by the anchor window:
// the base weight is multiplied by phi (1 up to the anchor, exponential
// decay after it) inside the window and by eps_floor beyond it. The state is
// advanced first (reset on anchor movement, grow on stagnation) and the
// returned weights use the updated window.
std::pair<std::vector<double>, SlidingState> weights_memft_sw(const TokenTrace& trace,
                                                              const WeightingPolicy& policy,
                                                              SlidingState state);

// sum_t w_t L_t / (sum_t w_t + eps).
double combine_objective(const TokenTrace& trace, const std::vector<double>& weights, double eps);

// Dispatch on policy kind; SW state is updated in place.
std::vector<double> policy_weights(const TokenTrace& trace, const WeightingPolicy& policy,
                                   SlidingState* sw_state);

}  // namespace memlab
