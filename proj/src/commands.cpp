#include "commands.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "config_json.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "prng.hpp"

namespace memlab {

using nlohmann::json;

double ExperimentConfig::lr_for_length(int length) const {
  for (const auto& [max_len, lr] : lr_by_length) {
    if (length <= max_len) return lr;
  }
  return train.lr;
}

uint64_t run_sub_seed(uint64_t global_seed, int rank, int length, int arm_index) {
  return derive_seed(global_seed, {static_cast<uint64_t>(rank), static_cast<uint64_t>(length),
                                   static_cast<uint64_t>(arm_index)});
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const RunOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw validation_error("config parse error in " + path.string() + ": " + e.what());
  }
  if (j.value("schema_version", 0) != 1)
    throw validation_error("config schema_version must be 1");

  ExperimentConfig cfg;
  cfg.seed = opts.seed ? *opts.seed : j.value("seed", uint64_t{0});
  cfg.out_dir = j.value("out_dir", "");
  if (j.contains("model")) cfg.model = base_model_config_from_json(j.at("model"));
  if (j.contains("adapter")) cfg.adapter = adapter_config_from_json(j.at("adapter"));
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));

  if (j.contains("corpora")) {
    for (const auto& cj : j.at("corpora")) {
      CorpusRecipe recipe;
      recipe.spec = corpus_spec_from_json(cj);
      if (cj.contains("source")) recipe.source = coherent_source_from_json(cj.at("source"));
      cfg.corpora.push_back(recipe);
    }
  }

  cfg.ranks = j.value("ranks", std::vector<int>{});
  for (int r : cfg.ranks)
    if (r < 1) throw validation_error("ranks must be >= 1");

  const double scale_override = opts.scale.value_or(0.0);
  if (j.contains("lengths")) {
    const auto& lj = j.at("lengths");
    if (lj.is_array()) {
      cfg.lengths = lj.get<std::vector<int>>();
      if (scale_override > 0.0) {
        std::vector<int> scaled;
        for (int l : cfg.lengths) {
          const int s = static_cast<int>(std::llround(l / scale_override));
          if (s >= 1) scaled.push_back(s);
        }
        cfg.lengths = scaled;
      }
    } else if (lj.is_object()) {
      const std::string profile = lj.value("profile", "stress");
      double scale = lj.value("scale", 1.0);
      if (scale_override > 0.0) scale = scale_override;
      const BucketProfile bp = profile == "phonebook" ? BucketProfile::phonebook : BucketProfile::stress;
      const int granularity = bp == BucketProfile::phonebook
                                  ? (cfg.corpora.empty() ? 8 : cfg.corpora.front().spec.value_width)
                                  : 1;
      const BucketLengths buckets = bucket_lengths(bp, scale, granularity);
      if (buckets.n_dropped > 0) {
        std::fprintf(stderr, "warning: %d length bucket(s) scaled below one token and were dropped\n",
                     buckets.n_dropped);
      }
      cfg.lengths = buckets.lengths;
    } else {
      throw validation_error("lengths must be an array or a {profile, scale} object");
    }
  }
  for (int l : cfg.lengths)
    if (l < 1) throw validation_error("lengths must be >= 1");

  for (const auto& arm : j.value("arms", std::vector<std::string>{}))
    cfg.arms.push_back(policy_kind_from_name(arm));

  if (j.contains("lr_by_length")) {
    for (const auto& e : j.at("lr_by_length")) {
      cfg.lr_by_length.emplace_back(e.at("max_len").get<int>(), e.at("lr").get<double>());
    }
    std::sort(cfg.lr_by_length.begin(), cfg.lr_by_length.end());
  }
  return cfg;
}

std::filesystem::path resolve_out_dir(const std::string& explicit_dir, const ExperimentConfig& cfg) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("MEMLAB_OUT"); env && *env) return env;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  throw validation_error("no output directory: pass --out, set MEMLAB_OUT, or set out_dir in the config");
}

Corpus build_corpus(const CorpusRecipe& recipe, const Vocabulary& vocab) {
  switch (recipe.spec.kind) {
    case CorpusKind::stress_test: return build_stress_test(recipe.spec, recipe.source, vocab);
    case CorpusKind::phonebook: return build_phonebook(recipe.spec, vocab);
    case CorpusKind::linear_rule: return build_linear_rule(recipe.spec.seed, vocab).train;
  }
  throw validation_error("unknown corpus kind");
}

Corpus corpus_from_run_config(const json& run_config) {
  const BaseModelConfig model = base_model_config_from_json(run_config.at("model"));
  const json& cj = run_config.at("corpus");
  CorpusRecipe recipe;
  recipe.spec = corpus_spec_from_json(cj);
  if (cj.contains("source")) recipe.source = coherent_source_from_json(cj.at("source"));
  if (recipe.spec.kind == CorpusKind::linear_rule) {
    const std::string split = cj.value("split", "train");
    LinearRuleSplits splits = build_linear_rule(recipe.spec.seed, model.vocab);
    if (split == "train" || split.empty()) return splits.train;
    if (split == "exact_eval") return splits.exact_eval;
    if (split == "gen_eval") return splits.gen_eval;
    throw validation_error("unknown linear-rule split: " + split);
  }
  return build_corpus(recipe, model.vocab);
}

namespace {

std::string corpus_file_name(const CorpusSpec& spec) {
  std::ostringstream name;
  name << corpus_kind_name(spec.kind) << "_L" << spec.total_answer_tokens;
  if (spec.kind == CorpusKind::stress_test) {
    std::ostringstream rho;
    rho << spec.replacement_ratio;
    std::string r = rho.str();
    for (auto& ch : r)
      if (ch == '.') ch = 'p';
    name << "_rho" << r;
  }
  return name.str();
}

struct GridRun {
  int rank = 0;
  int length = 0;
  int arm_index = 0;
  PolicyKind arm = PolicyKind::sft;
  std::string run_id;
};

std::vector<GridRun> expand_grid(const ExperimentConfig& cfg) {
  if (cfg.ranks.empty()) throw validation_error("sweep needs a non-empty rank list");
  if (cfg.lengths.empty()) throw validation_error("sweep needs a non-empty length list");
  if (cfg.arms.empty()) throw validation_error("sweep needs a non-empty arm list");
  std::vector<GridRun> runs;
  for (int ai = 0; ai < static_cast<int>(cfg.arms.size()); ++ai) {
    for (int r : cfg.ranks) {
      for (int l : cfg.lengths) {
        GridRun g;
        g.rank = r;
        g.length = l;
        g.arm_index = ai;
        g.arm = cfg.arms[static_cast<size_t>(ai)];
        g.run_id = std::string(policy_kind_name(g.arm)) + "_r" + std::to_string(r) + "_l" +
                   std::to_string(l);
        runs.push_back(std::move(g));
      }
    }
  }
  return runs;
}

CorpusRecipe sweep_recipe(const ExperimentConfig& cfg, int length) {
  if (cfg.corpora.empty()) throw validation_error("config needs at least one corpus entry");
  CorpusRecipe recipe = cfg.corpora.front();
  recipe.spec.total_answer_tokens = length;
  recipe.spec.seed = derive_seed(cfg.seed, {71, static_cast<uint64_t>(length)});
  recipe.source.seed = derive_seed(cfg.seed, {72, static_cast<uint64_t>(length)});
  return recipe;
}

// Train one grid run into its directory, or load the existing record when
// resuming (presence of record.json marks completion).
RunRecord execute_grid_run(const ExperimentConfig& cfg, const BaseModel& base, const GridRun& g,
                           const std::filesystem::path& dir) {
  const auto record_path = dir / "record.json";
  if (std::filesystem::exists(record_path)) return load_run_record(record_path);

  const uint64_t sub = run_sub_seed(cfg.seed, g.rank, g.length, g.arm_index);
  Corpus corpus = build_corpus(sweep_recipe(cfg, g.length), cfg.model.vocab);

  AdapterConfig acfg = cfg.adapter;
  acfg.rank = g.rank;
  acfg.init_seed = derive_seed(sub, {3});
  AdapterState adapter = AdapterState::init(acfg, cfg.model);

  TrainConfig tcfg = cfg.train;
  tcfg.policy.kind = g.arm;
  tcfg.seed = sub;
  tcfg.lr = cfg.lr_for_length(g.length);

  return train(base, adapter, corpus, tcfg, g.run_id, dir);
}

struct SweepRow {
  GridRun run;
  RunRecord record;
  bool failed = false;
  std::string reason;
};

void write_sweep_outputs(const ExperimentConfig& cfg, const std::vector<SweepRow>& rows,
                         const std::filesystem::path& out_dir) {
  std::vector<SweepRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.run.arm_index, a.run.rank, a.run.length) <
           std::tie(b.run.arm_index, b.run.rank, b.run.length);
  });

  {
    std::ofstream out(out_dir / "sweep.csv", std::ios::binary);
    out << "run_id,arm,r,l,delta_l,loss_final,acc_tok,acc_em\n";
    for (const auto& row : sorted) {
      if (row.failed) continue;
      out << row.run.run_id << "," << policy_kind_name(row.run.arm) << "," << row.run.rank << ","
          << row.run.length << "," << format_double(row.record.delta_l) << ","
          << format_double(row.record.loss_final) << "," << format_double(row.record.final_acc_tok)
          << "," << format_double(row.record.final_acc_em) << "\n";
    }
  }
  {
    std::ofstream out(out_dir / "sweep_failures.csv", std::ios::binary);
    out << "run_id,reason\n";
    for (const auto& row : sorted) {
      if (row.failed) out << row.run.run_id << "," << row.reason << "\n";
    }
  }

  for (int ai = 0; ai < static_cast<int>(cfg.arms.size()); ++ai) {
    const char* arm = policy_kind_name(cfg.arms[static_cast<size_t>(ai)]);
    std::vector<SweepPoint> points;
    // rank -> (sum acc_tok, sum acc_em, count) following the bucket
    // aggregation protocol: one mean per rank across its length buckets.
    std::map<int, std::array<double, 3>> by_rank;
    for (const auto& row : sorted) {
      if (row.failed || row.run.arm_index != ai) continue;
      points.push_back({row.run.run_id, row.run.rank, row.run.length, row.record.delta_l,
                        row.record.loss_final});
      auto& agg = by_rank[row.run.rank];
      agg[0] += row.record.final_acc_tok;
      agg[1] += row.record.final_acc_em;
      agg[2] += 1.0;
    }
    save_sweep_csv(points, out_dir / (std::string("sweep_points_") + arm + ".csv"));
    std::ofstream out(out_dir / (std::string("rank_summary_") + arm + ".csv"), std::ios::binary);
    out << "rank,mean_acc_tok,mean_acc_em,n_lengths\n";
    for (const auto& [rank, agg] : by_rank) {
      out << rank << "," << format_double(agg[0] / agg[2]) << "," << format_double(agg[1] / agg[2])
          << "," << static_cast<int>(agg[2]) << "\n";
    }
  }
}

}  // namespace

void cmd_gen_corpus(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.corpora.empty()) throw validation_error("config has no corpus entries");
  std::filesystem::create_directories(out_dir / "corpora");
  for (const auto& recipe : cfg.corpora) {
    if (recipe.spec.kind == CorpusKind::linear_rule) {
      LinearRuleSplits splits = build_linear_rule(recipe.spec.seed, cfg.model.vocab);
      for (const Corpus* c : {&splits.train, &splits.exact_eval, &splits.gen_eval}) {
        save_corpus_jsonl(*c, out_dir / "corpora" / ("linear_rule_" + c->split + ".jsonl"));
      }
      continue;
    }
    Corpus corpus = build_corpus(recipe, cfg.model.vocab);
    save_corpus_jsonl(corpus, out_dir / "corpora" / (corpus_file_name(recipe.spec) + ".jsonl"));
  }
}

void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.corpora.empty()) throw validation_error("config has no corpus entries");
  const BaseModel base(cfg.model);
  Corpus corpus = build_corpus(cfg.corpora.front(), cfg.model.vocab);

  AdapterConfig acfg = cfg.adapter;
  acfg.init_seed = derive_seed(cfg.seed, {3});
  AdapterState adapter = AdapterState::init(acfg, cfg.model);

  TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;

  const std::string run_id = std::string(policy_kind_name(tcfg.policy.kind)) + "_r" +
                             std::to_string(acfg.rank) + "_l" +
                             std::to_string(corpus.answer_token_total());
  const RunRecord record = train(base, adapter, corpus, tcfg, run_id, out_dir / "runs" / run_id);
  if (record.diverged) throw train_error("training diverged: " + record.divergence_note);
}

void cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int workers) {
  const std::vector<GridRun> grid = expand_grid(cfg);
  std::filesystem::create_directories(out_dir / "runs");
  const BaseModel base(cfg.model);

  std::vector<SweepRow> rows(grid.size());
  std::atomic<size_t> next{0};
  const int n_workers = std::max(1, workers);
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      SweepRow& row = rows[i];
      row.run = grid[i];
      try {
        row.record = execute_grid_run(cfg, base, grid[i], out_dir / "runs" / grid[i].run_id);
        if (row.record.diverged) {
          row.failed = true;
          row.reason = row.record.divergence_note;
        }
      } catch (const std::exception& e) {
        row.failed = true;
        row.reason = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  write_sweep_outputs(cfg, rows, out_dir);
}

void cmd_fit(const std::filesystem::path& sweep_csv, const std::filesystem::path& out_dir) {
  const std::vector<SweepPoint> points = load_sweep_csv(sweep_csv);
  auto [kept, excluded] = saturation_filter(points);
  const FitResult fit = fit_law(kept);
  std::filesystem::create_directories(out_dir);
  save_fit_json(fit, static_cast<int>(excluded.size()), out_dir / "fit.json");
  const LogLogTable table = loglog_table(kept, fit);
  save_loglog_csv(table, out_dir / "loglog.csv");
  save_fit_svg(table, out_dir / "fit_scatter.svg");
}

namespace {

struct AnalysisAccumulator {
  std::vector<std::pair<double, double>> pairs;  // (earliest stubborn, first failure)
  std::map<int, int> failure_histogram;
};

void analyze_single_run(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir,
                        AnalysisAccumulator& acc) {
  std::ifstream cfg_in(run_dir / "config.json", std::ios::binary);
  if (!cfg_in) throw validation_error("run directory has no config.json: " + run_dir.string());
  const json run_config = json::parse(cfg_in);
  const auto checkpoint = run_dir / "adapter_final.memad";
  if (!std::filesystem::exists(checkpoint))
    throw validation_error("run directory has no adapter checkpoint: " + run_dir.string());

  const BaseModelConfig model_cfg = base_model_config_from_json(run_config.at("model"));
  const BaseModel base(model_cfg);
  const AdapterState adapter = load_adapter(checkpoint);
  const Corpus corpus = corpus_from_run_config(run_config);

  std::filesystem::create_directories(out_dir);
  json reports = json::array();
  for (const auto& item : corpus.items) {
    const TokenTrace trace = forward_teacher(base, adapter, item);
    const std::vector<int> free_run =
        decode_greedy(base, adapter, item.key, static_cast<int>(item.answer.size()));
    const EvalReport rep = evaluate_item(item.item_id, trace, free_run, item.answer);

    json jr{{"item_id", rep.item_id},
            {"loss", rep.m.loss},
            {"acc_tok", rep.m.acc_tok},
            {"acc_em", rep.m.acc_em},
            {"stubborn", rep.stubborn}};
    jr["first_failure"] = rep.failure ? json(*rep.failure) : json(nullptr);
    json phases = json::array();
    for (Phase ph : rep.phases) phases.push_back(phase_name(ph));
    jr["phases"] = std::move(phases);
    reports.push_back(std::move(jr));

    if (rep.failure) acc.failure_histogram[*rep.failure] += 1;
    if (rep.failure && !rep.stubborn.empty()) {
      acc.pairs.emplace_back(static_cast<double>(rep.stubborn.front()),
                             static_cast<double>(*rep.failure));
    }
  }
  std::ofstream out(out_dir / "eval_report.json", std::ios::binary);
  out << reports.dump(2) << "\n";
}

void write_analysis_outputs(const AnalysisAccumulator& acc, const std::filesystem::path& out_dir) {
  {
    std::ofstream out(out_dir / "spearman_pairs.csv", std::ios::binary);
    out << "earliest_stubborn,first_failure\n";
    for (const auto& [s, f] : acc.pairs)
      out << static_cast<int>(s) << "," << static_cast<int>(f) << "\n";
  }
  {
    std::ofstream out(out_dir / "failure_histogram.csv", std::ios::binary);
    out << "position,count\n";
    for (const auto& [pos, count] : acc.failure_histogram) out << pos << "," << count << "\n";
  }
  json summary{{"n_pairs", acc.pairs.size()}};
  try {
    summary["spearman"] = spearman(acc.pairs);
  } catch (const validation_error& e) {
    summary["spearman"] = nullptr;  // undefined: fewer than 2 pairs or zero variance
    std::fprintf(stderr, "warning: spearman correlation undefined (%s)\n", e.what());
  }
  std::ofstream out(out_dir / "analysis_summary.json", std::ios::binary);
  out << summary.dump(2) << "\n";
}

}  // namespace

void cmd_analyze(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  AnalysisAccumulator acc;
  if (std::filesystem::exists(run_dir / "config.json")) {
    analyze_single_run(run_dir, out_dir, acc);
  } else if (std::filesystem::exists(run_dir / "runs")) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(run_dir / "runs")) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "config.json"))
        dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw validation_error("no analyzable runs under " + run_dir.string());
    for (const auto& dir : dirs) analyze_single_run(dir, out_dir / dir.filename(), acc);
  } else {
    throw validation_error("not a run directory (no config.json or runs/): " + run_dir.string());
  }
  std::filesystem::create_directories(out_dir);
  write_analysis_outputs(acc, out_dir);
}

void cmd_generalization(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int workers) {
  const LinearRuleSplits splits = build_linear_rule(derive_seed(cfg.seed, {seed_tag::linear_rule}),
                                                    cfg.model.vocab);
  const std::vector<int> ranks = cfg.ranks.empty() ? std::vector<int>{1, 2, 4, 8, 16} : cfg.ranks;
  const std::vector<PolicyKind> arms =
      cfg.arms.empty() ? std::vector<PolicyKind>{PolicyKind::sft, PolicyKind::memft_ot} : cfg.arms;

  struct GenTask {
    int rank;
    int arm_index;
    PolicyKind arm;
    std::string run_id;
  };
  std::vector<GenTask> tasks;
  for (int ai = 0; ai < static_cast<int>(arms.size()); ++ai)
    for (int r : ranks)
      tasks.push_back({r, ai, arms[static_cast<size_t>(ai)],
                       std::string(policy_kind_name(arms[static_cast<size_t>(ai)])) + "_r" +
                           std::to_string(r)});

  const BaseModel base(cfg.model);
  struct GenRow {
    int rank;
    std::string method;
    double memory_pct;
    double generalization_pct;
  };
  std::vector<GenRow> rows(tasks.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const GenTask& task = tasks[i];
      const auto dir = out_dir / "gen_runs" / task.run_id;

      AdapterConfig acfg = cfg.adapter;
      acfg.rank = task.rank;
      const uint64_t sub = run_sub_seed(cfg.seed, task.rank, 0, task.arm_index);
      acfg.init_seed = derive_seed(sub, {3});
      AdapterState adapter = AdapterState::init(acfg, cfg.model);

      TrainConfig tcfg = cfg.train;
      tcfg.policy.kind = task.arm;
      tcfg.seed = sub;

      const auto record_path = dir / "record.json";
      if (std::filesystem::exists(record_path) && std::filesystem::exists(dir / "adapter_final.memad")) {
        adapter = load_adapter(dir / "adapter_final.memad");
      } else {
        train(base, adapter, splits.train, tcfg, task.run_id, dir);
      }

      const CorpusAccuracy mem = corpus_accuracy(base, adapter, splits.exact_eval);
      const CorpusAccuracy gen = corpus_accuracy(base, adapter, splits.gen_eval);
      rows[i] = {task.rank, policy_kind_name(task.arm), 100.0 * mem.acc_em, 100.0 * gen.acc_em};
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < std::max(1, workers); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::sort(rows.begin(), rows.end(), [](const GenRow& a, const GenRow& b) {
    return std::tie(a.rank, a.method) < std::tie(b.rank, b.method);
  });
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "generalization.csv", std::ios::binary);
  out << "rank,method,memory_pct,generalization_pct\n";
  for (const auto& row : rows) {
    out << row.rank << "," << row.method << "," << format_double(row.memory_pct) << ","
        << format_double(row.generalization_pct) << "\n";
  }
}

void cmd_report(const std::filesystem::path& out_dir) {
  const auto runs_dir = out_dir / "runs";
  if (!std::filesystem::exists(runs_dir))
    throw validation_error("no runs/ directory under " + out_dir.string());

  std::map<std::string, int> arm_index;
  std::vector<SweepRow> rows;
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<PolicyKind> arms;
  for (const auto& dir : dirs) {
    if (!std::filesystem::exists(dir / "record.json") || !std::filesystem::exists(dir / "config.json"))
      continue;
    std::ifstream cfg_in(dir / "config.json", std::ios::binary);
    const json rc = json::parse(cfg_in);

    SweepRow row;
    row.record = load_run_record(dir / "record.json");
    const std::string arm = rc.at("train").at("policy").at("kind").get<std::string>();
    if (!arm_index.count(arm)) {
      arm_index[arm] = static_cast<int>(arms.size());
      arms.push_back(policy_kind_from_name(arm));
    }
    row.run.arm = policy_kind_from_name(arm);
    row.run.arm_index = arm_index[arm];
    row.run.rank = rc.at("adapter").at("rank").get<int>();
    row.run.length = rc.at("corpus").at("total_answer_tokens").get<int>();
    row.run.run_id = row.record.run_id;
    row.failed = row.record.diverged;
    row.reason = row.record.divergence_note;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw validation_error("no completed runs under " + runs_dir.string());

  ExperimentConfig pseudo;
  pseudo.arms = arms;
  write_sweep_outputs(pseudo, rows, out_dir);
}

}  // namespace memlab
