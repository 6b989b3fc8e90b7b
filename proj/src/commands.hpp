#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "model.hpp"
#include "scaling.hpp"
#include "trainer.hpp"

namespace memlab {

struct CorpusRecipe {
  CorpusSpec spec;
  CoherentSource source;
};

// One experiment config file drives every CLI verb. Grid runs expand
// ranks x lengths x arms, each with a sub-seed derived from the global seed.
struct ExperimentConfig {
  uint64_t seed = 0;
  std::string out_dir;
  BaseModelConfig model;
  AdapterConfig adapter;
  std::vector<CorpusRecipe> corpora;
  std::vector<int> ranks;
  std::vector<int> lengths;
  std::vector<PolicyKind> arms;
  TrainConfig train;
  // Optional (max_len, lr) steps, ascending by max_len; the first entry with
  // length <= max_len supplies the learning rate for that run.
  std::vector<std::pair<int, double>> lr_by_length;

  double lr_for_length(int length) const;
};

struct RunOptions {
  std::optional<uint64_t> seed;  // overrides config seed
  std::optional<double> scale;   // divides the sweep lengths
  int workers = 1;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const RunOptions& opts);

// Output root precedence: explicit argument, then MEMLAB_OUT, then the
// config's out_dir.
std::filesystem::path resolve_out_dir(const std::string& explicit_dir, const ExperimentConfig& cfg);

// Seed derivation for grid runs (documented in the README):
//   run seed     = derive_seed(global, {rank, length, arm_index})
//   corpus seed  = derive_seed(global, {71, length})
//   source seed  = derive_seed(global, {72, length})
uint64_t run_sub_seed(uint64_t global_seed, int rank, int length, int arm_index);

Corpus build_corpus(const CorpusRecipe& recipe, const Vocabulary& vocab);

// Rebuild the corpus a run was trained on from its config.json blob.
Corpus corpus_from_run_config(const nlohmann::json& run_config);

void cmd_gen_corpus(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int workers);
void cmd_fit(const std::filesystem::path& sweep_csv, const std::filesystem::path& out_dir);
void cmd_analyze(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);
void cmd_generalization(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int workers);
void cmd_report(const std::filesystem::path& out_dir);

}  // namespace memlab
