#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "model.hpp"
#include "objectives.hpp"

namespace memlab {

// Exposure schedule for the inter-batch temporal curriculum. Interval i
// covers epochs (boundaries[i-1], boundaries[i]], so a boundary epoch still
// uses its own interval's ratio.
struct CurriculumSchedule {
  std::vector<double> exposure_ratios;  // ascending in (0, 1], last = 1.0
  std::vector<int> boundaries;          // ascending, last = total epochs

  void validate(int total_epochs) const;
};

// Exposure ratio for a 1-based epoch: ratios[i] for the smallest i with
// epoch <= boundaries[i].
double curriculum_ratio(const CurriculumSchedule& schedule, int epoch);

// ceil(gamma * n_batches), the size of the batch prefix visible this epoch.
size_t select_batch_count(size_t n_batches, double gamma);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 1;
  int grad_accum = 1;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  WeightingPolicy policy;
  std::optional<CurriculumSchedule> curriculum;
  int checkpoint_every = 100;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;  // token-weighted over the full corpus
  std::optional<double> acc_tok;  // free-run, checkpoint epochs only
  std::optional<double> acc_em;
  double active_fraction = 0.0;  // trained tokens with weight > eps_floor
};

struct RunRecord {
  std::string run_id;
  double loss_init = 0.0;
  double loss_final = 0.0;
  double delta_l = 0.0;
  double final_acc_tok = 0.0;
  double final_acc_em = 0.0;
  bool diverged = false;
  std::string divergence_note;
  int epochs_run = 0;
  // soft convergence diagnostic, logged not asserted: whether the
  // exponentially smoothed training loss is non-increasing over the final
  // fifth of the epochs
  bool smoothed_tail_nonincreasing = true;
  std::vector<EpochMetrics> epochs;
};

// Adapter-only optimization with Adam over the weighted objective. Fully
// deterministic in (configs, seed). When run_dir is set, writes the run
// directory layout: config.json, metrics.jsonl, trace_epoch_<n>.jsonl,
// adapter_final.memad, record.json. record.json is written last and marks
// the run complete.
RunRecord train(const BaseModel& base, AdapterState& adapter, const Corpus& corpus,
                const TrainConfig& cfg, const std::string& run_id,
                const std::optional<std::filesystem::path>& run_dir);

// Token-weighted mean teacher-forced loss over all answer tokens.
double corpus_mean_loss(const BaseModel& base, const AdapterState& adapter, const Corpus& corpus);

struct CorpusAccuracy {
  double acc_tok = 0.0;  // correct free-run tokens / total answer tokens
  double acc_em = 0.0;   // items reproduced verbatim / items
};

// Free-run greedy accuracy over the corpus, decoding each item to its
// answer length.
CorpusAccuracy corpus_accuracy(const BaseModel& base, const AdapterState& adapter, const Corpus& corpus);

RunRecord load_run_record(const std::filesystem::path& record_path);
void save_run_record(const RunRecord& record, const std::filesystem::path& record_path);

}  // namespace memlab
