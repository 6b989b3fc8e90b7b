#include "objectives.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace memlab {

const char* policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::sft: return "sft";
    case PolicyKind::memft_ot: return "memft_ot";
    case PolicyKind::memft_sw: return "memft_sw";
  }
  return "unknown";
}

PolicyKind policy_kind_from_name(const std::string& name) {
  if (name == "sft") return PolicyKind::sft;
  if (name == "memft_ot") return PolicyKind::memft_ot;
  if (name == "memft_sw") return PolicyKind::memft_sw;
  throw validation_error("unknown weighting policy: " + name);
}

void WeightingPolicy::validate() const {
  if (!(l_crit > 0.0)) throw validation_error("l_crit must be > 0");
  if (!(eps > 0.0)) throw validation_error("objective eps must be > 0");
  if (!(kappa > 0.0)) throw validation_error("kappa must be > 0");
  if (!(tau > 0.0)) throw validation_error("tau must be > 0");
  if (l0 < 1) throw validation_error("base window length must be >= 1");
  if (eps_floor < 0.0 || eps_floor > 1.0) throw validation_error("eps_floor must lie in [0, 1]");
  if (growth < 0) throw validation_error("window growth must be >= 0");
}

std::vector<double> weights_sft(const TokenTrace& trace) {
  return std::vector<double>(trace.size(), 1.0);
}

std::vector<double> weights_memft_ot(const TokenTrace& trace, const WeightingPolicy& policy) {
  std::vector<double> w(trace.size());
  for (size_t t = 0; t < trace.size(); ++t) w[t] = trace[t].loss > policy.l_crit ? 1.0 : 0.0;
  return w;
}

std::optional<int> detect_anchor(const TokenTrace& trace) {
  for (size_t t = 0; t < trace.size(); ++t) {
    if (trace[t].greedy_id != trace[t].target_id) return static_cast<int>(t);
  }
  return std::nullopt;
}

std::pair<std::vector<double>, SlidingState> weights_memft_sw(const TokenTrace& trace,
                                                              const WeightingPolicy& policy,
                                                              SlidingState state) {
  const std::optional<int> anchor = detect_anchor(trace);

  // Advance the state before weighting: any anchor movement resets the
  // window, a repeated anchor grows it.
  if (anchor.has_value() && state.anchor == anchor) {
    state.stagnation += 1;
    state.l_win += policy.growth;
    if (state.l_win > static_cast<int>(trace.size())) state.l_win = static_cast<int>(trace.size());
    if (state.l_win < policy.l0) state.l_win = policy.l0;
  } else {
    state.anchor = anchor;
    state.l_win = policy.l0;
    state.stagnation = 0;
  }

  std::vector<double> w(trace.size());
  for (size_t t = 0; t < trace.size(); ++t) {
    const double base = 1.0 / (1.0 + std::exp(-policy.kappa * (trace[t].loss - policy.l_crit)));
    if (!policy.sw_spatial || !anchor.has_value()) {
      w[t] = base;
      continue;
    }
    const int a = *anchor;
    const int ti = static_cast<int>(t);
    // the base weight is modulated in both regions: phi inside the window,
    // the floor constant beyond it
    if (ti >= a + state.l_win) {
      w[t] = base * policy.eps_floor;
    } else {
      const double phi = std::exp(-std::max(ti - a, 0) / policy.tau);
      w[t] = base * phi;
    }
  }
  return {std::move(w), state};
}

double combine_objective(const TokenTrace& trace, const std::vector<double>& weights, double eps) {
  if (weights.size() != trace.size())
    throw validation_error("weight vector length must equal the trace length");
  if (!(eps >= 0.0)) throw validation_error("normalization eps must be >= 0");
  double num = 0.0, den = eps;
  for (size_t t = 0; t < trace.size(); ++t) {
    const double w = weights[t];
    if (!std::isfinite(w) || w < 0.0) throw validation_error("weights must be finite and >= 0");
    num += w * trace[t].loss;
    den += w;
  }
  if (den <= 0.0) return 0.0;
  return num / den;
}

std::vector<double> policy_weights(const TokenTrace& trace, const WeightingPolicy& policy,
                                   SlidingState* sw_state) {
  switch (policy.kind) {
    case PolicyKind::sft: return weights_sft(trace);
    case PolicyKind::memft_ot: return weights_memft_ot(trace, policy);
    case PolicyKind::memft_sw: {
      SlidingState st = sw_state ? *sw_state : SlidingState::fresh(policy);
      auto [w, next] = weights_memft_sw(trace, policy, st);
      if (sw_state) *sw_state = next;
      return w;
    }
  }
  throw validation_error("unknown weighting policy kind");
}

}  // namespace memlab
