#ifndef GASFLOW_H
#define GASFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GfStatus {
  GF_STATUS_OK = 0,
  GF_STATUS_NULL_POINTER = 1,
  GF_STATUS_INVALID_UTF8 = 2,
  GF_STATUS_PARSE = 3,
  GF_STATUS_IO = 4,
  GF_STATUS_INVALID_ARGUMENT = 5,
  GF_STATUS_PANIC = 6,
} GfStatus;

/**
 * Result of a purchasing simulation.
 */
typedef struct GfLedger GfLedger;

/**
 * Trained model with its price scaler.
 */
typedef struct GfModel GfModel;

/**
 * WordNet sense index.
 */
typedef struct GfSenseIndex GfSenseIndex;

/**
 * Purchase decision for day `day`; write `true` to `fire` to buy. A
 * non-zero return aborts the simulation.
 */
typedef int32_t (*GfDecisionFn)(void *user_data, size_t day, bool *fire);

typedef struct GfPurchase {
  /**
   * Day index within the simulation.
   */
  size_t day;
  /**
   * Quota units bought, one per accrued day.
   */
  uint64_t units;
  double volume;
  double price;
} GfPurchase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *gf_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void gf_string_free(char *s);

/**
 * Loads `index.sense` and `lexnames` from `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GfStatus gf_sense_index_load(const char *dir, struct GfSenseIndex **out);

/**
 * # Safety
 * `index` must be null or a handle from [`gf_sense_index_load`].
 */
void gf_sense_index_free(struct GfSenseIndex *index);

/**
 * Extracts events from CoNLL-U text. `mode` is 0 for the full pipeline and
 * 1 for verbs only. Writes one JSON record per line to `out_json`.
 *
 * # Safety
 * Pointers must be valid; `conllu` NUL-terminated.
 */
enum GfStatus gf_extract_events(const struct GfSenseIndex *index,
                                const char *conllu,
                                int32_t mode,
                                char **out_json);

/**
 * Counts headlines and headlines with at least one event.
 *
 * # Safety
 * Pointers must be valid; `conllu` NUL-terminated.
 */
enum GfStatus gf_coverage(const struct GfSenseIndex *index,
                          const char *conllu,
                          int32_t mode,
                          size_t *out_total,
                          size_t *out_with_events);

/**
 * Loads a checkpoint written by `gasflow train`.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum GfStatus gf_model_load(const char *path, struct GfModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`gf_model_load`].
 */
void gf_model_free(struct GfModel *model);

/**
 * Values in one input tensor, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a valid handle.
 */
size_t gf_model_input_len(const struct GfModel *model);

/**
 * Forecast horizon, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a valid handle.
 */
size_t gf_model_horizon(const struct GfModel *model);

/**
 * Forecasts `gf_model_horizon` prices from a prepared input tensor.
 *
 * # Safety
 * `input` must hold `input_len` values and `out` `out_len` values.
 */
enum GfStatus gf_model_predict(const struct GfModel *model,
                               const double *input,
                               size_t input_len,
                               double *out,
                               size_t out_len);

/**
 * Price in model units, using the training scaler.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GfStatus gf_model_scale_price(const struct GfModel *model, double price, double *out);

/**
 * Inverse of [`gf_model_scale_price`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum GfStatus gf_model_unscale_price(const struct GfModel *model, double value, double *out);

/**
 * Simulates purchasing over `days` trading days. `dates` holds days since
 * 1970-01-01 and `prices` the matching prices, both of length `n >= days`.
 * `decide` is asked once per day.
 *
 * # Safety
 * Arrays must hold `n` values; `out` must be valid.
 */
enum GfStatus gf_backtest_simulate(const int32_t *dates,
                                   const double *prices,
                                   size_t n,
                                   double total_volume,
                                   size_t days,
                                   bool force_final,
                                   GfDecisionFn decide,
                                   void *user_data,
                                   struct GfLedger **out);

/**
 * # Safety
 * `ledger` must be null or a handle from [`gf_backtest_simulate`].
 */
void gf_ledger_free(struct GfLedger *ledger);

/**
 * # Safety
 * `ledger` must be null or a valid handle.
 */
size_t gf_ledger_purchase_count(const struct GfLedger *ledger);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GfStatus gf_ledger_purchase(const struct GfLedger *ledger, size_t i, struct GfPurchase *out);

/**
 * Volume still owed at the end of the simulation, m³.
 *
 * # Safety
 * `ledger` must be null or a valid handle.
 */
double gf_ledger_outstanding(const struct GfLedger *ledger);

/**
 * Volume-weighted purchase price, 0 without purchases and NaN for a null
 * handle.
 *
 * # Safety
 * `ledger` must be null or a valid handle.
 */
double gf_ledger_weighted_price(const struct GfLedger *ledger);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GASFLOW_H */
