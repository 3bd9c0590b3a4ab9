#ifndef PINN_BATTERY_H
#define PINN_BATTERY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_UTF8 = 2,
  PB_STATUS_INVALID_ARGUMENT = 3,
  PB_STATUS_IO = 4,
  PB_STATUS_PARSE = 5,
  PB_STATUS_DATA = 6,
  PB_STATUS_TRAINING = 7,
  PB_STATUS_PANIC = 8,
} PbStatus;

/**
 * Task a model was trained for.
 */
typedef enum PbTask {
  PB_TASK_SOH = 0,
  PB_TASK_RUL = 1,
} PbTask;

/**
 * Trained model handle.
 */
typedef struct PbModel PbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *pb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pb_version(void);

/**
 * Loads a `checkpoint.json` written by a training run.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum PbStatus pb_model_load(const char *path, struct PbModel **out);

/**
 * Parses a checkpoint from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum PbStatus pb_model_from_json(const char *json, struct PbModel **out);

/**
 * Trains from a TOML run config (as for `pinn-battery train`), writes the
 * run directory and returns the trained model.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum PbStatus pb_train_from_config(const char *config_path, struct PbModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void pb_model_free(struct PbModel *model);

/**
 * Number of health features the model expects.
 *
 * # Safety
 * `model` must be a live handle; `out` must be valid for a write.
 */
enum PbStatus pb_model_features(const struct PbModel *model, size_t *out);

/**
 * # Safety
 * `model` must be a live handle; `out` must be valid for a write.
 */
enum PbStatus pb_model_task(const struct PbModel *model, enum PbTask *out);

/**
 * Prediction in label units (PCL for SoH models, cycles for RUL models)
 * from raw features and the cycle number.
 *
 * # Safety
 * `x` must point to `n_features` doubles; `out` must be valid for a write.
 */
enum PbStatus pb_model_predict(const struct PbModel *model,
                               const double *x,
                               size_t n_features,
                               double cycle,
                               double *out);

/**
 * Predictions for `n_rows` rows of a row-major `n_rows x n_features` matrix.
 *
 * # Safety
 * `x` must hold `n_rows * n_features` doubles, `cycles` and `out` `n_rows` each.
 */
enum PbStatus pb_model_predict_batch(const struct PbModel *model,
                                     const double *x,
                                     const double *cycles,
                                     size_t n_rows,
                                     size_t n_features,
                                     double *out);

/**
 * # Safety
 * `predictions` and `labels` must hold `n` doubles; `out` must be valid for a write.
 */
enum PbStatus pb_rmse(const double *predictions, const double *labels, size_t n, double *out);

/**
 * RMSPE in percent; fails with `InvalidArgument` on a zero label.
 *
 * # Safety
 * `predictions` and `labels` must hold `n` doubles; `out` must be valid for a write.
 */
enum PbStatus pb_rmspe(const double *predictions, const double *labels, size_t n, double *out);

/**
 * Closed-form logistic capacity loss with offset `c`; requires `c < u0 < k`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum PbStatus pb_logistic(double t, double r, double k, double c, double u0, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PINN_BATTERY_H */
