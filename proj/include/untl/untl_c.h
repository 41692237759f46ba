/*
 * C interface to the non-transferable text classification library.
 *
 * Every entry point returns a status code; on failure untl_last_error()
 * holds a thread-local message describing what went wrong. Handles are
 * opaque and must be released with their matching *_close function.
 */
#ifndef UNTL_C_H
#define UNTL_C_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define UNTL_API __declspec(dllexport)
#else
#define UNTL_API __attribute__((visibility("default")))
#endif

typedef enum untl_status {
  UNTL_OK = 0,
  UNTL_ERR_VALIDATION = 1, /* bad input: config, corpus, checkpoint, arguments */
  UNTL_ERR_RUNTIME = 2     /* aborted run or internal failure */
} untl_status;

/* Message for the most recent failure on this thread; never NULL. */
UNTL_API const char* untl_last_error(void);

/* ---- coarse commands (one call per CLI subcommand) ------------------- */

/* Generates the synthetic two-domain corpus into out_dir (six corpus files
 * plus vocab.txt). spec_path may be NULL for the built-in defaults. The
 * summary buffer, when given, receives a JSON object with per-file counts. */
UNTL_API untl_status untl_gen_data(const char* spec_path, const char* out_dir,
                                   char* summary_json, size_t summary_cap);

/* Trains per the config file over corpora in data_dir, writing the best
 * checkpoint to checkpoint_path and the evaluation history next to it
 * (checkpoint_path + ".history.jsonl"). seed_override < 0 keeps the config
 * seed; ablate_* force the corresponding term off. The report buffer
 * receives the final evaluation as JSON. */
UNTL_API untl_status untl_train(const char* config_path, const char* data_dir,
                                const char* checkpoint_path, long seed_override,
                                int ablate_mmd, int ablate_dc, char* report_json,
                                size_t report_cap);

/* Finite-difference check of every training objective. Writes a JSON report
 * {objectives: [{objective, max_rel_error}...], threshold, pass}. Returns
 * UNTL_ERR_RUNTIME when any objective exceeds the threshold. */
UNTL_API untl_status untl_grad_check(long seed, char* report_json, size_t report_cap);

/* Default config for a mode ("plain"|"untl"|"prompt"|"adapter") or, with
 * mode NULL, an object keyed by mode that also carries the data generator
 * defaults under "gen-data". */
UNTL_API untl_status untl_default_config(const char* mode, char* json_out, size_t json_cap);

/* ---- opaque handles --------------------------------------------------- */

typedef struct untl_model untl_model;
typedef struct untl_corpus untl_corpus;

/* NULL on failure; untl_last_error() explains. */
UNTL_API untl_model* untl_model_open(const char* checkpoint_path);
UNTL_API void untl_model_close(untl_model* model);
UNTL_API const char* untl_model_mode(const untl_model* model);
UNTL_API double untl_model_best_score(const untl_model* model);

UNTL_API untl_corpus* untl_corpus_open(const char* corpus_path);
UNTL_API void untl_corpus_close(untl_corpus* corpus);
UNTL_API size_t untl_corpus_size(const untl_corpus* corpus);

/* Accuracy of the model over a labeled corpus; with_key applies the model's
 * secret key (prompt prefix or input adapter) and is only valid for key-mode
 * checkpoints. The report buffer receives a JSON record. */
UNTL_API untl_status untl_evaluate(const untl_model* model, const untl_corpus* corpus,
                                   int with_key, char* report_json, size_t report_cap);

/* Writes one line per example: domain, label (-1 when absent), then the
 * feature vector. */
UNTL_API untl_status untl_export_embeddings(const untl_model* model, const untl_corpus* corpus,
                                            const char* out_path);

#ifdef __cplusplus
}
#endif

#endif /* UNTL_C_H */
