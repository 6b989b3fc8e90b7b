#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"
#include "objectives.hpp"

namespace memlab {

struct ItemMetrics {
  double loss = 0.0;     // mean answer-token cross entropy
  double acc_tok = 0.0;  // free-run tokens matching the target, over target length
  double acc_em = 0.0;   // 1 iff the free run reproduces the target verbatim
};

// Free-run accuracy against the target; missing positions count as wrong and
// exact match requires equal length.
ItemMetrics metrics(const TokenTrace& trace, const std::vector<int>& free_run,
                    const std::vector<int>& target);

// Positions with p_target strictly below the threshold.
std::vector<int> stubborn_positions(const TokenTrace& trace, double threshold = 0.5);

// Earliest index where the free run deviates from the target, counting
// premature termination or overrun; none on an exact match.
std::optional<int> first_failure(const std::vector<int>& free_run, const std::vector<int>& target);

// Spearman rank correlation with average ranks for ties. Throws
// validation_error when fewer than two pairs or a rank variance is zero.
double spearman(const std::vector<std::pair<double, double>>& pairs);

enum class Phase { ordered, disordered };

// ordered iff L_t < ln 2; the boundary itself is disordered because p = 0.5
// does not guarantee argmax dominance.
Phase phase_label(double loss_t);

const char* phase_name(Phase phase);

// Length of the longest prefix in which every position is ordered. The free
// run is guaranteed correct at least this far.
int ordered_prefix_length(const TokenTrace& trace);

struct EvalReport {
  std::string item_id;
  ItemMetrics m;
  std::vector<int> stubborn;
  std::optional<int> failure;
  std::vector<Phase> phases;
};

EvalReport evaluate_item(const std::string& item_id, const TokenTrace& trace,
                         const std::vector<int>& free_run, const std::vector<int>& target);

}  // namespace memlab
