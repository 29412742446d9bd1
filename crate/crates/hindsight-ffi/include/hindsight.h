#ifndef HINDSIGHT_H
#define HINDSIGHT_H

/* Generated by cbindgen from the hindsight-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Policy selector for simulation entry points.
typedef enum HsPolicy {
  HS_POLICY_ONLINE_STEADY = 0,
  HS_POLICY_ONLINE_TIME_VARYING = 1,
  HS_POLICY_OFFLINE_OPTIMAL = 2,
} HsPolicy;

// Status codes returned by every API call.
typedef enum HsStatus {
  HS_OK = 0,
  // A required pointer argument was NULL.
  HS_NULL_ARGUMENT = 1,
  // The input document failed to parse.
  HS_PARSE_ERROR = 2,
  // A structural assumption (PSD costs, stabilizability, dimensions)
  // failed.
  HS_VALIDATION_ERROR = 3,
  // A solver failed to converge or a numerical guard tripped.
  HS_NUMERICAL_ERROR = 4,
  // The implementation panicked; state is still consistent.
  HS_INTERNAL_ERROR = 5,
} HsStatus;

// Opaque problem instance: dynamics, costs, and noise model.
typedef struct HsSystem HsSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. Never NULL; empty
// before the first failure. The pointer is invalidated by the next
// failing call on the same thread.
const char *hs_last_error_message(void);

// Parse a JSON problem document (the same schema the CLI consumes) into a
// system handle. On success writes the handle through `out_system`; free
// it with `hs_system_free`.
//
// # Safety
// `json` must point to a NUL-terminated string; `out_system` must be a
// valid pointer to writable memory.
enum HsStatus hs_system_from_json(const char *json, struct HsSystem **out_system);

// Release a handle returned by `hs_system_from_json`. NULL is a no-op.
//
// # Safety
// `system` must be NULL or a pointer previously returned by
// `hs_system_from_json` that has not been freed.
void hs_system_free(struct HsSystem *system);

// State and control dimensions of a system.
//
// # Safety
// All pointers must be valid; `system` must be a live handle.
enum HsStatus hs_system_dims(const struct HsSystem *system, size_t *out_n, size_t *out_m);

// Validate the structural assumptions; on success writes
// `rho(A - B K_stab)` of the stabilizing witness.
//
// # Safety
// `system` must be a live handle; `out_radius` may be NULL to skip it.
enum HsStatus hs_system_validate(const struct HsSystem *system, double *out_radius);

// Solve the algebraic Riccati equation. `p_out` (n*n), `k_out` (m*n) and
// `s_out` (n*n) are optional row-major output buffers; `residual_out`
// receives the fixed-point residual.
//
// # Safety
// `system` must be a live handle; non-NULL buffers must have the stated
// capacities.
enum HsStatus hs_solve_dare(const struct HsSystem *system,
                            double *p_out,
                            double *k_out,
                            double *s_out,
                            double *residual_out);

// Closed-form infinite-horizon costs: `Tr(PW)`, the offline value, and the
// series correction separating them from `Tr(WS)`.
//
// # Safety
// `system` must be a live handle; non-NULL outputs must be writable.
enum HsStatus hs_closed_form_costs(const struct HsSystem *system,
                                   double *online_out,
                                   double *offline_out,
                                   double *correction_out);

// Asymptotic per-step policy regrets. `online_vs_linear_out` always
// receives exactly zero; it is part of the result contract.
//
// # Safety
// `system` must be a live handle; non-NULL outputs must be writable.
enum HsStatus hs_asymptotic_regret(const struct HsSystem *system,
                                   double *online_vs_offline_out,
                                   double *linear_vs_offline_out,
                                   double *online_vs_linear_out);

// Time-averaged cost of one seeded rollout under the selected policy.
//
// # Safety
// `system` must be a live handle; `cost_out` must be writable.
enum HsStatus hs_rollout_cost(const struct HsSystem *system,
                              enum HsPolicy policy,
                              size_t steps,
                              uint64_t seed,
                              double *cost_out);

// Seeded Monte Carlo of time-averaged cost; trial k uses seed
// `base_seed + k`. Writes the mean and the 95% CI half-width.
//
// # Safety
// `system` must be a live handle; non-NULL outputs must be writable.
enum HsStatus hs_monte_carlo(const struct HsSystem *system,
                             enum HsPolicy policy,
                             size_t steps,
                             size_t trials,
                             uint64_t base_seed,
                             double *mean_out,
                             double *ci95_out);

// Best constant gain in hindsight for one seeded noise realization.
// `k_out` (m*n, row-major) receives the gain; `cost_out` its
// time-averaged cost.
//
// # Safety
// `system` must be a live handle; non-NULL buffers must have the stated
// capacities.
enum HsStatus hs_optimal_linear_gain(const struct HsSystem *system,
                                     size_t steps,
                                     uint64_t seed,
                                     size_t starts,
                                     double *k_out,
                                     double *cost_out);

// Rollout cost of a caller-supplied constant gain (`gain` is m*n,
// row-major) on one seeded noise realization.
//
// # Safety
// `system` must be a live handle; `gain` must hold m*n readable values;
// `cost_out` must be writable.
enum HsStatus hs_constant_gain_cost(const struct HsSystem *system,
                                    const double *gain,
                                    size_t steps,
                                    uint64_t seed,
                                    double *cost_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HINDSIGHT_H */
