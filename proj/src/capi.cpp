#include "memlab/memlab.h"

#include <cstring>
#include <string>

#include "commands.hpp"
#include "corpus.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "trainer.hpp"

struct memlab_corpus_t {
  memlab::Corpus corpus;
};

struct memlab_session_t {
  memlab::ExperimentConfig cfg;
  std::unique_ptr<memlab::BaseModel> base;
  memlab::AdapterState adapter;
};

namespace {

void set_error(char** errptr, const std::string& msg) {
  if (!errptr) return;
  char* copy = new char[msg.size() + 1];
  std::memcpy(copy, msg.c_str(), msg.size() + 1);
  *errptr = copy;
}

template <typename Fn>
memlab_status guarded(char** errptr, Fn&& fn) {
  try {
    fn();
    return MEMLAB_OK;
  } catch (const memlab::validation_error& e) {
    set_error(errptr, e.what());
    return MEMLAB_ERR_VALIDATION;
  } catch (const memlab::fit_error& e) {
    set_error(errptr, e.what());
    return MEMLAB_ERR_FIT;
  } catch (const std::exception& e) {
    set_error(errptr, e.what());
    return MEMLAB_ERR_RUNTIME;
  }
}

memlab::RunOptions to_run_options(const memlab_run_options* opts) {
  memlab::RunOptions out;
  if (opts) {
    if (opts->seed >= 0) out.seed = static_cast<uint64_t>(opts->seed);
    if (opts->scale > 0.0) out.scale = opts->scale;
    if (opts->workers > 0) out.workers = opts->workers;
  }
  return out;
}

std::string require(const char* value, const char* what) {
  if (!value) throw memlab::validation_error(std::string(what) + " must not be NULL");
  return value;
}

}  // namespace

extern "C" {

memlab_status memlab_gen_corpus(const char* config_path, const char* out_dir,
                                const memlab_run_options* opts, char** errptr) {
  return guarded(errptr, [&] {
    const memlab::RunOptions ro = to_run_options(opts);
    const auto cfg = memlab::load_experiment_config(require(config_path, "config_path"), ro);
    memlab::cmd_gen_corpus(cfg, memlab::resolve_out_dir(out_dir ? out_dir : "", cfg));
  });
}

memlab_status memlab_train(const char* config_path, const char* out_dir,
                           const memlab_run_options* opts, char** errptr) {
  return guarded(errptr, [&] {
    const memlab::RunOptions ro = to_run_options(opts);
    const auto cfg = memlab::load_experiment_config(require(config_path, "config_path"), ro);
    memlab::cmd_train(cfg, memlab::resolve_out_dir(out_dir ? out_dir : "", cfg));
  });
}

memlab_status memlab_sweep(const char* config_path, const char* out_dir,
                           const memlab_run_options* opts, char** errptr) {
  return guarded(errptr, [&] {
    const memlab::RunOptions ro = to_run_options(opts);
    const auto cfg = memlab::load_experiment_config(require(config_path, "config_path"), ro);
    memlab::cmd_sweep(cfg, memlab::resolve_out_dir(out_dir ? out_dir : "", cfg), ro.workers);
  });
}

memlab_status memlab_generalization(const char* config_path, const char* out_dir,
                                    const memlab_run_options* opts, char** errptr) {
  return guarded(errptr, [&] {
    const memlab::RunOptions ro = to_run_options(opts);
    const auto cfg = memlab::load_experiment_config(require(config_path, "config_path"), ro);
    memlab::cmd_generalization(cfg, memlab::resolve_out_dir(out_dir ? out_dir : "", cfg), ro.workers);
  });
}

memlab_status memlab_fit(const char* sweep_csv_path, const char* out_dir, char** errptr) {
  return guarded(errptr, [&] {
    memlab::cmd_fit(require(sweep_csv_path, "sweep_csv_path"), require(out_dir, "out_dir"));
  });
}

memlab_status memlab_analyze(const char* run_dir, const char* out_dir, char** errptr) {
  return guarded(errptr, [&] {
    memlab::cmd_analyze(require(run_dir, "run_dir"), require(out_dir, "out_dir"));
  });
}

memlab_status memlab_report(const char* out_dir, char** errptr) {
  return guarded(errptr, [&] { memlab::cmd_report(require(out_dir, "out_dir")); });
}

memlab_status memlab_corpus_open(const char* jsonl_path, memlab_corpus_t** out, char** errptr) {
  return guarded(errptr, [&] {
    if (!out) throw memlab::validation_error("out handle must not be NULL");
    auto handle = std::make_unique<memlab_corpus_t>();
    handle->corpus = memlab::load_corpus_jsonl(require(jsonl_path, "jsonl_path"));
    *out = handle.release();
  });
}

void memlab_corpus_close(memlab_corpus_t* corpus) { delete corpus; }

size_t memlab_corpus_item_count(const memlab_corpus_t* corpus) {
  return corpus ? corpus->corpus.items.size() : 0;
}

int64_t memlab_corpus_answer_tokens(const memlab_corpus_t* corpus) {
  return corpus ? corpus->corpus.answer_token_total() : 0;
}

namespace {

int64_t copy_tokens(const std::vector<int>& tokens, int32_t* buf, size_t cap) {
  if (buf) {
    const size_t n = std::min(cap, tokens.size());
    for (size_t i = 0; i < n; ++i) buf[i] = static_cast<int32_t>(tokens[i]);
  }
  return static_cast<int64_t>(tokens.size());
}

}  // namespace

int64_t memlab_corpus_key(const memlab_corpus_t* corpus, size_t item, int32_t* buf, size_t cap) {
  if (!corpus || item >= corpus->corpus.items.size()) return -1;
  return copy_tokens(corpus->corpus.items[item].key, buf, cap);
}

int64_t memlab_corpus_answer(const memlab_corpus_t* corpus, size_t item, int32_t* buf, size_t cap) {
  if (!corpus || item >= corpus->corpus.items.size()) return -1;
  return copy_tokens(corpus->corpus.items[item].answer, buf, cap);
}

memlab_status memlab_session_open(const char* config_path, int rank, memlab_session_t** out,
                                  char** errptr) {
  return guarded(errptr, [&] {
    if (!out) throw memlab::validation_error("out handle must not be NULL");
    auto session = std::make_unique<memlab_session_t>();
    session->cfg = memlab::load_experiment_config(require(config_path, "config_path"), {});
    session->base = std::make_unique<memlab::BaseModel>(session->cfg.model);
    memlab::AdapterConfig acfg = session->cfg.adapter;
    if (rank > 0) acfg.rank = rank;
    session->adapter = memlab::AdapterState::init(acfg, session->cfg.model);
    *out = session.release();
  });
}

void memlab_session_close(memlab_session_t* session) { delete session; }

memlab_status memlab_session_load_adapter(memlab_session_t* session, const char* memad_path,
                                          char** errptr) {
  return guarded(errptr, [&] {
    if (!session) throw memlab::validation_error("session must not be NULL");
    memlab::AdapterState loaded = memlab::load_adapter(require(memad_path, "memad_path"));
    loaded.cfg.validate(session->base->config());
    session->adapter = std::move(loaded);
  });
}

memlab_status memlab_session_decode(memlab_session_t* session, const int32_t* key, size_t key_len,
                                    int32_t* out, size_t max_len, size_t* out_len, char** errptr) {
  return guarded(errptr, [&] {
    if (!session) throw memlab::validation_error("session must not be NULL");
    if (!out || !out_len) throw memlab::validation_error("output buffers must not be NULL");
    std::vector<int> key_vec;
    key_vec.reserve(key_len);
    for (size_t i = 0; i < key_len; ++i) key_vec.push_back(key[i]);
    const std::vector<int> tokens = memlab::decode_greedy(*session->base, session->adapter, key_vec,
                                                          static_cast<int>(max_len));
    *out_len = tokens.size();
    for (size_t i = 0; i < tokens.size(); ++i) out[i] = static_cast<int32_t>(tokens[i]);
  });
}

memlab_status memlab_session_item_loss(memlab_session_t* session, const memlab_corpus_t* corpus,
                                       size_t item, double* loss, char** errptr) {
  return guarded(errptr, [&] {
    if (!session || !corpus || !loss)
      throw memlab::validation_error("session, corpus and loss must not be NULL");
    if (item >= corpus->corpus.items.size()) throw memlab::validation_error("item index out of range");
    const memlab::TokenTrace trace =
        memlab::forward_teacher(*session->base, session->adapter, corpus->corpus.items[item]);
    double sum = 0.0;
    for (const auto& e : trace) sum += e.loss;
    *loss = sum / static_cast<double>(trace.size());
  });
}

void memlab_free_string(char* ptr) { delete[] ptr; }

const char* memlab_version(void) { return "0.1.0"; }

}  // extern "C"
