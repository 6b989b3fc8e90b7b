#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"

namespace memlab {

ItemMetrics metrics(const TokenTrace& trace, const std::vector<int>& free_run,
                    const std::vector<int>& target) {
  if (trace.size() != target.size())
    throw validation_error("trace length must equal the target length");
  if (target.empty()) throw validation_error("metrics need a non-empty target");

  ItemMetrics out;
  double loss_sum = 0.0;
  for (const auto& e : trace) loss_sum += e.loss;
  out.loss = loss_sum / static_cast<double>(trace.size());

  const size_t common = std::min(free_run.size(), target.size());
  int correct = 0;
  for (size_t t = 0; t < common; ++t) {
    if (free_run[t] == target[t]) ++correct;
  }
  out.acc_tok = static_cast<double>(correct) / static_cast<double>(target.size());
  out.acc_em = (free_run == target) ? 1.0 : 0.0;
  return out;
}

std::vector<int> stubborn_positions(const TokenTrace& trace, double threshold) {
  std::vector<int> out;
  for (size_t t = 0; t < trace.size(); ++t) {
    if (trace[t].p_target < threshold) out.push_back(static_cast<int>(t));
  }
  return out;
}

std::optional<int> first_failure(const std::vector<int>& free_run, const std::vector<int>& target) {
  const size_t common = std::min(free_run.size(), target.size());
  for (size_t t = 0; t < common; ++t) {
    if (free_run[t] != target[t]) return static_cast<int>(t);
  }
  if (free_run.size() != target.size()) return static_cast<int>(common);
  return std::nullopt;
}

namespace {

// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<std::pair<double, double>>& pairs) {
  const size_t n = pairs.size();
  if (n < 2) throw validation_error("spearman correlation needs at least two pairs");
  std::vector<double> xs(n), ys(n);
  for (size_t i = 0; i < n; ++i) {
    xs[i] = pairs[i].first;
    ys[i] = pairs[i].second;
  }
  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);

  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw validation_error("spearman correlation undefined: zero rank variance");
  return sxy / std::sqrt(sxx * syy);
}

Phase phase_label(double loss_t) {
  if (loss_t < 0.0) throw validation_error("token loss must be >= 0");
  return loss_t < kCriticalLoss ? Phase::ordered : Phase::disordered;
}

const char* phase_name(Phase phase) { return phase == Phase::ordered ? "ordered" : "disordered"; }

int ordered_prefix_length(const TokenTrace& trace) {
  int n = 0;
  for (const auto& e : trace) {
    if (phase_label(e.loss) != Phase::ordered) break;
    ++n;
  }
  return n;
}

EvalReport evaluate_item(const std::string& item_id, const TokenTrace& trace,
                         const std::vector<int>& free_run, const std::vector<int>& target) {
  EvalReport report;
  report.item_id = item_id;
  report.m = metrics(trace, free_run, target);
  report.stubborn = stubborn_positions(trace);
  report.failure = first_failure(free_run, target);
  report.phases.reserve(trace.size());
  for (const auto& e : trace) report.phases.push_back(phase_label(e.loss));
  return report;
}

}  // namespace memlab
