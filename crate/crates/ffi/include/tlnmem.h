#ifndef TLNMEM_H
#define TLNMEM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TlnmemStatus {
  TLNMEM_STATUS_OK = 0,
  TLNMEM_STATUS_NULL_POINTER = 1,
  TLNMEM_STATUS_INVALID_ARGUMENT = 2,
  TLNMEM_STATUS_DIMENSION_MISMATCH = 3,
  // Memory full or a latent transition failed.
  TLNMEM_STATUS_CAPACITY = 4,
  TLNMEM_STATUS_NO_CERTIFICATE = 5,
  TLNMEM_STATUS_NUMERICAL = 6,
  TLNMEM_STATUS_IO = 7,
  // Malformed or incompatible model file.
  TLNMEM_STATUS_FORMAT = 8,
  TLNMEM_STATUS_PANIC = 9,
} TlnmemStatus;

typedef struct TlnmemNetwork TlnmemNetwork;

typedef struct TlnmemSession TlnmemSession;

// Chain network parameters.
typedef struct TlnmemParams {
  uintptr_t n;
  double epsilon;
  double delta;
  double c;
} TlnmemParams;

typedef struct TlnmemSessionOptions {
  // Integrator step.
  double dt;
  // Use the algebraic Riccati gain instead of the online auxiliary flows.
  bool algebraic_gain;
} TlnmemSessionOptions;

// Outcome of one retrieval.
typedef struct TlnmemInference {
  // Stored pattern whose support was reached, or -1.
  int64_t pattern_id;
  // First unit of the settled pair, or -1 if the state did not settle on a pair.
  int64_t support_start;
  double similarity;
  bool converged;
} TlnmemInference;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *tlnmem_last_error_message(void);

// Library version, static storage.
const char *tlnmem_version(void);

// Seven units with ε = 0.9, δ = 2, c = 1.
struct TlnmemParams tlnmem_params_default(void);

struct TlnmemSessionOptions tlnmem_session_options_default(void);

// # Safety
// `out` must be a valid pointer; `*out` receives a handle to free with [`tlnmem_network_free`].
enum TlnmemStatus tlnmem_network_new(struct TlnmemParams params, struct TlnmemNetwork **out);

// # Safety
// `net` must come from [`tlnmem_network_new`] and not be used afterwards; null is ignored.
void tlnmem_network_free(struct TlnmemNetwork *net);

// Writes the attractor on units `{i, i+1}` into `out[0..n]`.
//
// # Safety
// `net` must be a live handle and `out` must hold `len` doubles.
enum TlnmemStatus tlnmem_network_attractor(const struct TlnmemNetwork *net,
                                           uintptr_t i,
                                           double *out,
                                           uintptr_t len);

// Empty memory for patterns of dimension `d`.
//
// # Safety
// `options` may be null for defaults; `out` must be a valid pointer.
enum TlnmemStatus tlnmem_session_new(struct TlnmemParams params,
                                     uintptr_t d,
                                     const struct TlnmemSessionOptions *options,
                                     struct TlnmemSession **out);

// Session around a saved model; the latent state starts on the last stored attractor.
//
// # Safety
// `file` must be a NUL-terminated UTF-8 path; `options` may be null; `out` must be valid.
enum TlnmemStatus tlnmem_session_load(const char *file,
                                      const struct TlnmemSessionOptions *options,
                                      struct TlnmemSession **out);

// # Safety
// `session` must come from this library and not be used afterwards; null is ignored.
void tlnmem_session_free(struct TlnmemSession *session);

// # Safety
// `session` must be a live handle and `file` a NUL-terminated UTF-8 path.
enum TlnmemStatus tlnmem_session_save(const struct TlnmemSession *session, const char *file);

// Number of stored patterns, or 0 for a null handle.
//
// # Safety
// `session` must be null or a live handle.
uintptr_t tlnmem_session_len(const struct TlnmemSession *session);

// Learn `pattern[0..d]` under `pattern_id`; `*support_start` receives the first unit of its pair.
//
// # Safety
// `session` must be live, `pattern` must hold `d` doubles; `support_start` may be null.
enum TlnmemStatus tlnmem_session_learn(struct TlnmemSession *session,
                                       uintptr_t pattern_id,
                                       const double *pattern,
                                       uintptr_t d,
                                       uint64_t seed,
                                       uintptr_t *support_start);

// Retrieve from `input[0..d]` and write the reconstruction into `out[0..d]`.
// With `cold_start` the latent state starts at zero; otherwise it continues
// from the previous call and is carried over.
//
// # Safety
// `session` must be live; `input` must hold `d` doubles and `out` `out_len` doubles;
// `result` may be null.
enum TlnmemStatus tlnmem_session_infer(struct TlnmemSession *session,
                                       const double *input,
                                       uintptr_t d,
                                       bool cold_start,
                                       double *out,
                                       uintptr_t out_len,
                                       struct TlnmemInference *result);

// Largest noise norm certified by the polyhedral method for a stored pattern.
//
// # Safety
// `session` must be live and `radius` valid.
enum TlnmemStatus tlnmem_certify_lp(const struct TlnmemSession *session,
                                    uintptr_t pattern_id,
                                    double *radius);

// Largest noise norm certified by the quadratic-constraint method for a stored pattern.
//
// # Safety
// `session` must be live and `radius` valid.
enum TlnmemStatus tlnmem_certify_sdp(const struct TlnmemSession *session,
                                     uintptr_t pattern_id,
                                     double *radius);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TLNMEM_H */
