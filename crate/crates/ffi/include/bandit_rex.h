#ifndef BANDIT_REX_H
#define BANDIT_REX_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BrxStatus {
  BRX_STATUS_OK = 0,
  BRX_STATUS_NULL_POINTER = 1,
  BRX_STATUS_LENGTH_MISMATCH = 2,
  BRX_STATUS_INVALID_VALUE = 3,
  BRX_STATUS_SOLVER_FAILURE = 4,
  BRX_STATUS_EMPTY_CANDIDATES = 5,
  BRX_STATUS_BUFFER_TOO_SMALL = 6,
  BRX_STATUS_PANIC = 7,
} BrxStatus;

/*
 Opaque diagonal Gaussian posterior over reward weights.
 */
typedef struct BrxPosterior BrxPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Static description of a status code.
 */
const char *brx_status_message(enum BrxStatus status);

/*
 Creates an isotropic posterior with zero mean.

 # Safety
 `out` must be valid for writing one pointer.
 */
enum BrxStatus brx_posterior_new(uintptr_t dim, double variance, struct BrxPosterior **out);

/*
 Creates a posterior from explicit mean and variance arrays of length
 `dim`.

 # Safety
 `mean` and `variance` must point to `dim` doubles; `out` must be valid
 for writing one pointer.
 */
enum BrxStatus brx_posterior_from_parts(const double *mean,
                                        const double *variance,
                                        uintptr_t dim,
                                        struct BrxPosterior **out);

/*
 Parses a posterior from its JSON document.

 # Safety
 `json` must be a NUL-terminated string; `out` must be valid for writing
 one pointer.
 */
enum BrxStatus brx_posterior_from_json(const char *json, struct BrxPosterior **out);

/*
 Releases a posterior. Null is ignored.

 # Safety
 `posterior` must come from one of the constructors and not be used
 afterwards.
 */
void brx_posterior_free(struct BrxPosterior *posterior);

/*
 Dimension of the posterior, 0 for null.

 # Safety
 `posterior` must be null or a live handle.
 */
uintptr_t brx_posterior_dim(const struct BrxPosterior *posterior);

/*
 Copies the mean and variance into `mean_out` and `variance_out`, each of
 length `len`. Either output may be null to skip it.

 # Safety
 Non-null outputs must be valid for `len` doubles.
 */
enum BrxStatus brx_posterior_params(const struct BrxPosterior *posterior,
                                    double *mean_out,
                                    double *variance_out,
                                    uintptr_t len);

/*
 Laplace update with `n` observations. `contexts` is row-major `n × dim`;
 `rewards[i]` is 0 or 1. The handle is replaced only on success.

 # Safety
 `contexts` must point to `n * dim` doubles and `rewards` to `n` bytes.
 */
enum BrxStatus brx_posterior_update(struct BrxPosterior *posterior,
                                    const double *contexts,
                                    const uint8_t *rewards,
                                    uintptr_t n);

/*
 One Thompson draw of the weights from a ChaCha8 stream seeded with
 `seed`.

 # Safety
 `out` must be valid for `len` doubles.
 */
enum BrxStatus brx_posterior_sample(const struct BrxPosterior *posterior,
                                    uint64_t seed,
                                    double *out,
                                    uintptr_t len);

/*
 `σ(mᵀv)` under the posterior mean.

 # Safety
 `context` must point to `len` doubles; `out` must be valid for one
 double.
 */
enum BrxStatus brx_posterior_expected_reward(const struct BrxPosterior *posterior,
                                             const double *context,
                                             uintptr_t len,
                                             double *out);

/*
 Writes the posterior's JSON document, NUL-terminated, into `buf`.
 `written` receives the length excluding the terminator; when `capacity`
 is too small it receives the required length and `BufferTooSmall` is
 returned.

 # Safety
 `buf` must be valid for `capacity` bytes; `written` for one `size_t`.
 */
enum BrxStatus brx_posterior_to_json(const struct BrxPosterior *posterior,
                                     char *buf,
                                     uintptr_t capacity,
                                     uintptr_t *written);

/*
 Exact diversity-constrained top-K. Candidate `i` has id `ids[i]`, score
 `scores[i]` and dimension bits `masks[i]` (1 weight loss, 2 diet,
 4 exercise). The chosen ids are written to `out_ids`, which must hold
 `k` entries, and their count to `out_len`.

 # Safety
 `ids`, `scores` and `masks` must point to `n` entries; `out_ids` to `k`
 entries; `out_len` to one `size_t`.
 */
enum BrxStatus brx_select_topk(const uint32_t *ids,
                               const double *scores,
                               const uint8_t *masks,
                               uintptr_t n,
                               uintptr_t k,
                               uint8_t required,
                               uint32_t *out_ids,
                               uintptr_t *out_len);

/*
 Base-2 Jensen-Shannon divergence between two distributions over the
 three dimensions.

 # Safety
 `p` and `q` must point to 3 doubles; `out` to one double.
 */
enum BrxStatus brx_jsd(const double *p, const double *q, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANDIT_REX_H */
