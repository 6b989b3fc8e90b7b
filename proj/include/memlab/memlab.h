/* memlab C API: a shared-library surface over the memorization laboratory.
 *
 * Conventions, LevelDB style:
 *   - every fallible call returns a memlab_status and takes a char** errptr;
 *     on failure *errptr receives a heap string the caller must release with
 *     memlab_free_string (pass NULL to ignore messages);
 *   - objects are opaque handles with explicit _open/_close pairs;
 *   - all paths are UTF-8, all arrays are caller-owned.
 */

#ifndef MEMLAB_MEMLAB_H_
#define MEMLAB_MEMLAB_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum memlab_status {
  MEMLAB_OK = 0,
  MEMLAB_ERR_VALIDATION = 1, /* bad config, bad arguments, malformed files */
  MEMLAB_ERR_RUNTIME = 2,    /* I/O or training failures, divergence */
  MEMLAB_ERR_FIT = 3         /* law fitting failed */
} memlab_status;

typedef struct memlab_run_options {
  int64_t seed;  /* < 0: keep the config's seed */
  double scale;  /* <= 0: keep the config's length scale */
  int workers;   /* <= 0: single worker */
} memlab_run_options;

/* Pipeline commands. config_path names an experiment config (JSON, schema in
 * the README). out_dir may be NULL, in which case MEMLAB_OUT and then the
 * config's out_dir are consulted. opts may be NULL for defaults. */
memlab_status memlab_gen_corpus(const char* config_path, const char* out_dir,
                                const memlab_run_options* opts, char** errptr);
memlab_status memlab_train(const char* config_path, const char* out_dir,
                           const memlab_run_options* opts, char** errptr);
memlab_status memlab_sweep(const char* config_path, const char* out_dir,
                           const memlab_run_options* opts, char** errptr);
memlab_status memlab_generalization(const char* config_path, const char* out_dir,
                                    const memlab_run_options* opts, char** errptr);
/* Fits the parametric memory law to a sweep points CSV
 * (run_id,r,l,delta_l,loss_final), writing fit.json, loglog.csv and
 * fit_scatter.svg into out_dir. */
memlab_status memlab_fit(const char* sweep_csv_path, const char* out_dir, char** errptr);
/* Token-level analysis of one run directory (or a sweep root containing
 * runs/): eval reports, stubborn positions, failure histogram, Spearman
 * pairs. */
memlab_status memlab_analyze(const char* run_dir, const char* out_dir, char** errptr);
/* Re-aggregates sweep.csv and the per-arm tables from completed runs. */
memlab_status memlab_report(const char* out_dir, char** errptr);

/* ---- corpus handles ---- */

typedef struct memlab_corpus_t memlab_corpus_t;

memlab_status memlab_corpus_open(const char* jsonl_path, memlab_corpus_t** out, char** errptr);
void memlab_corpus_close(memlab_corpus_t* corpus);
size_t memlab_corpus_item_count(const memlab_corpus_t* corpus);
int64_t memlab_corpus_answer_tokens(const memlab_corpus_t* corpus);
/* Copies up to cap token ids of an item's key/answer; returns the full
 * length, or -1 on a bad index. */
int64_t memlab_corpus_key(const memlab_corpus_t* corpus, size_t item, int32_t* buf, size_t cap);
int64_t memlab_corpus_answer(const memlab_corpus_t* corpus, size_t item, int32_t* buf, size_t cap);

/* ---- model sessions (frozen base + one adapter) ---- */

typedef struct memlab_session_t memlab_session_t;

/* Builds the frozen base from the config's model block plus a fresh adapter
 * of the given rank (rank <= 0 keeps the config's rank). */
memlab_status memlab_session_open(const char* config_path, int rank, memlab_session_t** out,
                                  char** errptr);
void memlab_session_close(memlab_session_t* session);
/* Replaces the session adapter with a .memad checkpoint. */
memlab_status memlab_session_load_adapter(memlab_session_t* session, const char* memad_path,
                                          char** errptr);
/* Greedy free-run decode from a key; writes up to max_len tokens into out
 * and the produced count into out_len. */
memlab_status memlab_session_decode(memlab_session_t* session, const int32_t* key, size_t key_len,
                                    int32_t* out, size_t max_len, size_t* out_len, char** errptr);
/* Mean teacher-forced answer loss of one corpus item under the session
 * adapter. */
memlab_status memlab_session_item_loss(memlab_session_t* session, const memlab_corpus_t* corpus,
                                       size_t item, double* loss, char** errptr);

void memlab_free_string(char* ptr);
const char* memlab_version(void);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MEMLAB_MEMLAB_H_ */
