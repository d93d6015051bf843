#ifndef AGCUNET_H
#define AGCUNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes shared by every entry point. On any nonzero return,
 * agcu_last_error() describes what went wrong. */
typedef enum {
    AGCU_OK = 0,
    AGCU_INVALID_ARGUMENT = 1,
    AGCU_RUNTIME_ERROR = 2,
    AGCU_VERIFICATION_FAILURE = 3
} agcu_status;

/* Opaque run configuration: the flat key = value set controlling model,
 * optimization, data, and output. */
typedef struct agcu_config agcu_config;

agcu_config* agcu_config_create(void);
void agcu_config_destroy(agcu_config* cfg);

/* Merges a config file into `cfg`. Unknown keys are errors. */
agcu_status agcu_config_load_file(agcu_config* cfg, const char* path);

/* Sets one key. Unknown keys and malformed values are errors. */
agcu_status agcu_config_set(agcu_config* cfg, const char* key, const char* value);

/* Merges config text (`key = value` lines) into `cfg`. */
agcu_status agcu_config_apply_text(agcu_config* cfg, const char* text);

/* Serializes the full key set. Writes up to `cap` bytes including the NUL
 * terminator; *written receives the full length (excluding the NUL), so a
 * short buffer can be detected and resized. */
agcu_status agcu_config_text(const agcu_config* cfg, char* buf, size_t cap, size_t* written);

/* Message for the most recent failure on this thread. Never NULL. */
const char* agcu_last_error(void);

/* Receives run-log lines (JSON, no trailing newline) as training emits
 * them. Pass fn = NULL to clear. */
typedef void (*agcu_log_fn)(const char* line, void* user);
void agcu_set_log_callback(agcu_log_fn fn, void* user);

/* Trains per the config's scenario and writes into cfg's output_dir:
 * config.txt, runlog.jsonl, phase1_best.ckpt, best.ckpt, and per-test-source
 * metric reports and curves. */
agcu_status agcu_train(const agcu_config* cfg);

/* Copies the config text embedded in a checkpoint into buf, with the same
 * buffer contract as agcu_config_text. */
agcu_status agcu_checkpoint_config(const char* checkpoint_path, char* buf, size_t cap,
                                   size_t* written);

/* Evaluates a checkpoint on the dataset directory (images/ + masks/).
 * With cfg NULL the checkpoint's embedded config drives the model; a non-NULL
 * cfg must describe the same parameter shapes or the error lists the
 * differing names. `oracle` nonzero scores the ground truth against itself.
 * Writes report.json, report.csv, and curves into out_dir. */
agcu_status agcu_evaluate(const agcu_config* cfg, const char* checkpoint_path,
                          const char* data_dir, const char* out_dir, int oracle);

/* Runs one image through a checkpoint and writes the binarized mask as a
 * PGM of {0,255}. A non-NULL attention_path also writes the final gate
 * coefficient map as 8-bit grayscale. A `threshold` in (0,1) overrides the
 * checkpoint config's binarization threshold; any other value keeps the
 * embedded one. */
agcu_status agcu_infer(const char* checkpoint_path, const char* image_path,
                       const char* mask_out_path, const char* attention_path,
                       double threshold);

/* Finite-difference verification at scale "ops", "blocks", or "full".
 * *max_err (optional) receives the worst relative error; a worst error at or
 * above 1e-4 returns AGCU_VERIFICATION_FAILURE. */
agcu_status agcu_gradcheck(const char* scale, double* max_err);

/* Generates a synthetic dataset (images/ + masks/) under out_dir. */
agcu_status agcu_synth(const char* out_dir, int64_t count, int64_t side, uint64_t seed);

/* Splits a dataset directory into fold files fold_0..fold_{k-1} under
 * out_dir, one id per line. */
agcu_status agcu_folds(const char* data_dir, int fold_count, uint64_t seed, const char* out_dir);

/* Writes pooled ROC/PR curve CSVs and a summary JSON for a checkpoint over
 * a dataset directory. */
agcu_status agcu_curves(const char* checkpoint_path, const char* data_dir, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* AGCUNET_H */
