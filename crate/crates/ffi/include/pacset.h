#ifndef PACSET_H
#define PACSET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PacsetStatus {
  PACSET_STATUS_OK = 0,
  PACSET_STATUS_NULL_ARGUMENT = 1,
  PACSET_STATUS_DOMAIN = 2,
  PACSET_STATUS_PARSE = 3,
  PACSET_STATUS_INTEGRITY = 4,
  PACSET_STATUS_UNSUPPORTED_VERSION = 5,
  PACSET_STATUS_IO = 6,
  PACSET_STATUS_INFEASIBLE_BUDGET = 7,
  PACSET_STATUS_PANIC = 8,
} PacsetStatus;

/*
 A parsed dump.
 */
typedef struct PacsetDataset PacsetDataset;

/*
 Calibrated detector thresholds.
 */
typedef struct PacsetDetector PacsetDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next call into the library on this thread.
 */
const char *pacset_last_error_message(void);

/*
 `P[Binomial(n, p) <= k]`.

 # Safety
 `out_value` must be a valid pointer.
 */
enum PacsetStatus pacset_binom_cdf(uint64_t k, uint64_t n, double p, double *out_value);

/*
 Largest `k` with `F(k; n, epsilon) <= delta`. `*out_found` is 0 when no
 such `k` exists, in which case `*out_k` is left untouched.

 # Safety
 Out pointers must be valid.
 */
enum PacsetStatus pacset_k_star(uint64_t n,
                                double epsilon,
                                double delta,
                                uint64_t *out_k,
                                bool *out_found);

/*
 Calibrate a threshold on `len` true-label scores. `*out_feasible` is 0
 when the budget is infeasible and `*out_tau` is 0.

 # Safety
 `scores` must point to `len` doubles; out pointers must be valid.
 */
enum PacsetStatus pacset_calibrate_threshold(const double *scores,
                                             uintptr_t len,
                                             double epsilon,
                                             double delta,
                                             double *out_tau,
                                             bool *out_feasible);

/*
 IoU of two `[x_min, y_min, x_max, y_max]` boxes.

 # Safety
 `a` and `b` must point to four doubles each.
 */
enum PacsetStatus pacset_iou(const double *a, const double *b, double *out_value);

/*
 Parse a dump file. Release the handle with [`pacset_dataset_free`].

 # Safety
 `path` must be a nul-terminated string; `out_dataset` must be valid.
 */
enum PacsetStatus pacset_dataset_parse_file(const char *path,
                                            bool lenient,
                                            struct PacsetDataset **out_dataset);

/*
 # Safety
 `dataset` must come from [`pacset_dataset_parse_file`] or be NULL.
 */
void pacset_dataset_free(struct PacsetDataset *dataset);

/*
 # Safety
 `dataset` must be a live handle.
 */
enum PacsetStatus pacset_dataset_num_images(const struct PacsetDataset *dataset,
                                            uintptr_t *out_count);

/*
 Calibrate detector thresholds on every ground-truth detection of the
 dataset. Release the handle with [`pacset_detector_free`].

 # Safety
 `dataset` must be a live handle; `out_detector` must be valid.
 */
enum PacsetStatus pacset_detector_calibrate(const struct PacsetDataset *dataset,
                                            double eps_prp,
                                            double delta_prp,
                                            double eps_prs,
                                            double delta_prs,
                                            double eps_loc,
                                            double delta_loc,
                                            struct PacsetDetector **out_detector);

/*
 Proposal, presence and location thresholds.

 # Safety
 `detector` must be a live handle; out pointers must be valid.
 */
enum PacsetStatus pacset_detector_thresholds(const struct PacsetDetector *detector,
                                             double *out_tau_prp,
                                             double *out_tau_prs,
                                             double *out_tau_loc);

/*
 # Safety
 `detector` must come from [`pacset_detector_calibrate`] or be NULL.
 */
void pacset_detector_free(struct PacsetDetector *detector);

/*
 Calibrate the edge threshold on the true transitions of the dataset.

 # Safety
 `dataset` must be a live handle; out pointers must be valid.
 */
enum PacsetStatus pacset_edges_calibrate(const struct PacsetDataset *dataset,
                                         double epsilon,
                                         double delta,
                                         double *out_tau,
                                         bool *out_feasible);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PACSET_H */
