/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef DCSEG_H
#define DCSEG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all functions.
typedef enum DcsegStatus {
  DCSEG_STATUS_OK = 0,
  DCSEG_STATUS_NULL_POINTER = 1,
  DCSEG_STATUS_INVALID_ARGUMENT = 2,
  DCSEG_STATUS_INFEASIBLE = 3,
  DCSEG_STATUS_NUMERICAL = 4,
  DCSEG_STATUS_DIMENSION = 5,
  DCSEG_STATUS_NOT_SUBMODULAR = 6,
  DCSEG_STATUS_IO = 7,
  DCSEG_STATUS_FORMAT = 8,
  DCSEG_STATUS_PANIC = 9,
} DcsegStatus;

// A binary energy with unary and Potts terms under construction.
typedef struct DcsegEnergy DcsegEnergy;

// Network parameters loaded from a checkpoint.
typedef struct DcsegNetwork DcsegNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dcseg_version(void);

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
size_t dcseg_last_error_message(char *buf, size_t len);

// Creates an energy over `nodes` binary variables with zero unaries.
struct DcsegEnergy *dcseg_energy_new(size_t nodes);

// # Safety
// `energy` must come from [`dcseg_energy_new`] and not be used afterwards.
void dcseg_energy_free(struct DcsegEnergy *energy);

// Sets the cost of assigning label 1 to `node`.
//
// # Safety
// `energy` must be a live handle.
enum DcsegStatus dcseg_energy_set_unary(struct DcsegEnergy *energy, size_t node, double cost);

// Adds a Potts term of weight `weight` between `p` and `q`. Negative
// weights are accepted here and rejected by [`dcseg_energy_minimize`].
//
// # Safety
// `energy` must be a live handle.
enum DcsegStatus dcseg_energy_add_pairwise(struct DcsegEnergy *energy,
                                           size_t p,
                                           size_t q,
                                           double weight);

// Computes a minimum-energy labeling into `labels` (`len` must equal the
// node count) and, if `energy_out` is non-null, its energy.
//
// # Safety
// `energy` must be a live handle; `labels` valid for `len` bytes.
enum DcsegStatus dcseg_energy_minimize(const struct DcsegEnergy *energy,
                                       uint8_t *labels,
                                       size_t len,
                                       double *energy_out);

// Selects the pixels maximizing `Σ u_p y_p` subject to
// `s_min <= Σ y_p <= s_max`, writing 0/1 into `selected`.
//
// # Safety
// `utilities` and `selected` must be valid for `n` elements.
enum DcsegStatus dcseg_size_knapsack(const double *utilities,
                                     size_t n,
                                     size_t s_min,
                                     size_t s_max,
                                     uint8_t *selected);

// Size bounds `[floor((1-ε)n), ceil((1+ε)n)]`.
//
// # Safety
// `s_min` and `s_max` must be valid for writes.
enum DcsegStatus dcseg_make_bounds(size_t true_size, double epsilon, size_t *s_min, size_t *s_max);

// Dice overlap of two binary masks of `n` pixels (nonzero = foreground).
//
// # Safety
// `pred` and `gt` must be valid for `n` bytes.
enum DcsegStatus dcseg_dice(const uint8_t *pred, const uint8_t *gt, size_t n, double *out);

// Loads a network checkpoint into `*network`.
//
// # Safety
// `path` must be a NUL-terminated string; `network` valid for writes.
enum DcsegStatus dcseg_network_load(const char *path, struct DcsegNetwork **network);

// # Safety
// `network` must come from [`dcseg_network_load`] and not be used afterwards.
void dcseg_network_free(struct DcsegNetwork *network);

// Number of parameters of a loaded network, 0 for a null handle.
//
// # Safety
// `network` must be a live handle or null.
size_t dcseg_network_param_count(const struct DcsegNetwork *network);

// Foreground probabilities for a row-major `height x width` image with
// intensities in [0, 1].
//
// # Safety
// `network` must be a live handle; `image` and `probs` valid for
// `height * width` elements.
enum DcsegStatus dcseg_network_forward(const struct DcsegNetwork *network,
                                       const double *image,
                                       size_t height,
                                       size_t width,
                                       double *probs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCSEG_H */
