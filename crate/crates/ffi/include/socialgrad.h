#ifndef SOCIALGRAD_H
#define SOCIALGRAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_ARGUMENT = 2,
  SG_STATUS_DIMENSION_MISMATCH = 3,
  SG_STATUS_CONFIG = 4,
  SG_STATUS_CONSTRUCTION = 5,
  SG_STATUS_NUMERICAL = 6,
  SG_STATUS_DOMAIN = 7,
  SG_STATUS_IO = 8,
  SG_STATUS_OUT_OF_RANGE = 9,
  SG_STATUS_PANIC = 10,
} SgStatus;

typedef enum SgRule {
  SG_RULE_NE = 0,
  SG_RULE_BR = 1,
  SG_RULE_PG = 2,
} SgRule;

// Recorded social-gradient flow.
typedef struct SgFlow SgFlow;

// Game, social objective and sublevel set.
typedef struct SgProblem SgProblem;

// Recorded two-timescale run.
typedef struct SgTtsa SgTtsa;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *sg_last_error(void);

// Library version as a static NUL-terminated string.
const char *sg_version(void);

// Builds a named preset (`"aggregative-5"` or `"oscillator-2"`) with its
// default social optimum and `c = c_fraction · c*`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum SgStatus sg_problem_new_preset(const char *name, double c_fraction, struct SgProblem **out);

// Builds the problem described by a TOML experiment configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SgStatus sg_problem_from_config(const char *path, struct SgProblem **out);

// # Safety
// `problem` must come from a constructor above and not be used afterwards.
void sg_problem_free(struct SgProblem *problem);

// Number of agents, or 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t sg_problem_dim(const struct SgProblem *problem);

// Writes `c*` and the active sublevel `c`.
//
// # Safety
// `problem` must be a live handle; `c_star` and `c` valid pointers.
enum SgStatus sg_problem_levels(const struct SgProblem *problem, double *c_star, double *c);

// Writes the optimal incentive `p† = −G0(x†)`.
//
// # Safety
// `problem` must be a live handle and `out` point to `len` doubles.
enum SgStatus sg_problem_p_dagger(const struct SgProblem *problem, double *out, size_t len);

// Solves for the equilibrium `x*(p)`; `interior` may be null.
//
// # Safety
// `p` and `x_out` must point to `len` doubles; `interior` null or valid.
enum SgStatus sg_solve_response(const struct SgProblem *problem,
                                const double *p,
                                double *x_out,
                                size_t len,
                                bool *interior);

// Membership of `p` in the sublevel set `P_c`.
//
// # Safety
// `p` must point to `len` doubles and `out` be valid.
enum SgStatus sg_in_sublevel_set(const struct SgProblem *problem,
                                 const double *p,
                                 size_t len,
                                 bool *out);

// Time derivative of `V(p) = Φ(x*(p)) − Φ(x†)` along the flow, with a
// finite-difference response Jacobian of step `h`.
//
// # Safety
// `p` must point to `len` doubles and `out` be valid.
enum SgStatus sg_lyapunov_derivative(const struct SgProblem *problem,
                                     const double *p,
                                     size_t len,
                                     double h,
                                     double *out);

// Integrates the social-gradient flow with RK4 from `p0` over `horizon`.
// A nonpositive `dt` selects the game's default step.
//
// # Safety
// `p0` must point to `len` doubles and `out` be valid.
enum SgStatus sg_flow_run(const struct SgProblem *problem,
                          const double *p0,
                          size_t len,
                          double dt,
                          double horizon,
                          size_t record_every,
                          struct SgFlow **out);

// Number of recorded flow samples, or 0 for a null handle.
//
// # Safety
// `flow` must be null or a live handle.
size_t sg_flow_len(const struct SgFlow *flow);

// Reads sample `index`: time, incentive and `V`. Any output may be null.
//
// # Safety
// `flow` must be a live handle; `p_out` null or pointing to `len` doubles.
enum SgStatus sg_flow_sample(const struct SgFlow *flow,
                             size_t index,
                             double *t,
                             double *p_out,
                             size_t len,
                             double *v);

// # Safety
// `flow` must come from [`sg_flow_run`] and not be used afterwards.
void sg_flow_free(struct SgFlow *flow);

// Runs the two-timescale iteration under the default schedules
// `a_k = (k+1)^-0.6`, `β_k = (k+1)^-0.9`. For [`SgRule::Pg`] a nonpositive
// `pg_eta` selects the default step.
//
// # Safety
// `x0` and `p0` must point to `len` doubles and `out` be valid.
enum SgStatus sg_ttsa_run(const struct SgProblem *problem,
                          enum SgRule rule,
                          double pg_eta,
                          const double *x0,
                          const double *p0,
                          size_t len,
                          uint64_t max_iter,
                          uint64_t record_every,
                          struct SgTtsa **out);

// Number of recorded TTSA samples, or 0 for a null handle.
//
// # Safety
// `run` must be null or a live handle.
size_t sg_ttsa_len(const struct SgTtsa *run);

// Reads sample `index`. Any output may be null; `x_out` and `p_out`, when
// given, must hold `len` doubles.
//
// # Safety
// `run` must be a live handle and every non-null pointer valid.
enum SgStatus sg_ttsa_sample(const struct SgTtsa *run,
                             size_t index,
                             uint64_t *k,
                             double *x_out,
                             double *p_out,
                             size_t len,
                             double *tracking_error,
                             double *incentive_error,
                             bool *accepted);

// Writes the run as CSV.
//
// # Safety
// `run` must be a live handle and `path` a NUL-terminated string.
enum SgStatus sg_ttsa_write_csv(const struct SgTtsa *run, const char *path);

// # Safety
// `run` must come from [`sg_ttsa_run`] and not be used afterwards.
void sg_ttsa_free(struct SgTtsa *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOCIALGRAD_H */
