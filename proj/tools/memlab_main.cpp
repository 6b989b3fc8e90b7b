// memlab command line. Thin shell over the C API in memlab/memlab.h: parse
// arguments, dispatch, map memlab_status to the exit code.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "memlab/memlab.h"

namespace {

int finish(memlab_status status, char* err) {
  if (status != MEMLAB_OK) {
    std::fprintf(stderr, "error: %s\n", err ? err : "unknown failure");
    memlab_free_string(err);
  }
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memlab: exact parametric memory laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, sweep_csv, run_dir;
  long long seed = -1;
  double scale = 0.0;
  int workers = 1;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory (falls back to MEMLAB_OUT, then the config)");
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--workers", workers, "parallel runs for sweep/generalization");
    cmd->add_option("--scale", scale, "divide sweep lengths by this factor");
  };

  CLI::App* gen = app.add_subcommand("gen-corpus", "write the configured corpora as JSONL");
  add_common(gen, true);
  CLI::App* train = app.add_subcommand("train", "run a single training run");
  add_common(train, true);
  CLI::App* sweep = app.add_subcommand("sweep", "run the rank x length x arm grid");
  add_common(sweep, true);
  CLI::App* gener = app.add_subcommand("generalization", "linear-rule memory/generalization table");
  add_common(gener, true);
  CLI::App* fit = app.add_subcommand("fit", "fit the memory law to a sweep points CSV");
  fit->add_option("--csv", sweep_csv, "sweep points CSV (run_id,r,l,delta_l,loss_final)")->required();
  fit->add_option("--out", out_dir, "output directory")->required();
  CLI::App* analyze = app.add_subcommand("analyze", "token-level analysis of a run directory");
  analyze->add_option("--run", run_dir, "run directory (or a sweep root with runs/)")->required();
  analyze->add_option("--out", out_dir, "output directory")->required();
  CLI::App* report = app.add_subcommand("report", "re-aggregate sweep tables from completed runs");
  report->add_option("--out", out_dir, "sweep output directory")->required();

  CLI11_PARSE(app, argc, argv);

  memlab_run_options opts{};
  opts.seed = seed;
  opts.scale = scale;
  opts.workers = workers;
  const char* out = out_dir.empty() ? nullptr : out_dir.c_str();
  char* err = nullptr;
  memlab_status status = MEMLAB_ERR_VALIDATION;

  if (gen->parsed()) status = memlab_gen_corpus(config_path.c_str(), out, &opts, &err);
  if (train->parsed()) status = memlab_train(config_path.c_str(), out, &opts, &err);
  if (sweep->parsed()) status = memlab_sweep(config_path.c_str(), out, &opts, &err);
  if (gener->parsed()) status = memlab_generalization(config_path.c_str(), out, &opts, &err);
  if (fit->parsed()) status = memlab_fit(sweep_csv.c_str(), out_dir.c_str(), &err);
  if (analyze->parsed()) status = memlab_analyze(run_dir.c_str(), out_dir.c_str(), &err);
  if (report->parsed()) status = memlab_report(out_dir.c_str(), &err);
  return finish(status, err);
}
