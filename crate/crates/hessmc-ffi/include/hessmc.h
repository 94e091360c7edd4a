/* C interface to the hessmc sampling library. */

#ifndef HESSMC_H
#define HESSMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum HmStatus {
  HM_STATUS_OK = 0,
  HM_STATUS_NULL_POINTER = 1,
  HM_STATUS_INVALID_ARGUMENT = 2,
  HM_STATUS_NOT_POSITIVE_DEFINITE = 3,
  HM_STATUS_OUT_OF_SUPPORT = 4,
  HM_STATUS_NUMERICAL_FAILURE = 5,
  HM_STATUS_CONFIG_ERROR = 6,
  HM_STATUS_IO_ERROR = 7,
  HM_STATUS_PANIC = 8,
} HmStatus;

/**
 * Sampling method selector for [`hm_sample`].
 */
typedef enum HmMethod {
  HM_METHOD_MH = 0,
  HM_METHOD_HMC = 1,
  HM_METHOD_H_HMC = 2,
  HM_METHOD_MALA = 3,
  HM_METHOD_SN_MAP = 4,
  HM_METHOD_SN_MCMC = 5,
  HM_METHOD_IS_MAP = 6,
} HmMethod;

/**
 * Opaque sample chain.
 */
typedef struct HmChain HmChain;

/**
 * Opaque SPD factor (preconditioner / mass matrix).
 */
typedef struct HmSpd HmSpd;

/**
 * Opaque negative-log-density target.
 */
typedef struct HmTarget HmTarget;

/**
 * BFGS outcome summary (the optimum itself is written to the caller's
 * buffer).
 */
typedef struct HmOptReport {
  double j_final;
  double grad_norm_final;
  uintptr_t iterations;
  bool converged;
  uintptr_t line_search_failures;
} HmOptReport;

/**
 * Sampler knobs; `gamma_max <= 0` disables the random learning rate and
 * `thinning = 0` is treated as 1.
 */
typedef struct HmSamplerConfig {
  enum HmMethod method;
  double dt;
  double tau;
  uintptr_t leapfrog_steps;
  double gamma_max;
  uintptr_t n_samples;
  uint64_t seed;
  uintptr_t thinning;
} HmSamplerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the most recent error message on this thread into `buf`
 * (NUL-terminated, truncated to `cap`). Returns the full message length.
 */
uintptr_t hm_last_error_message(char *buf, uintptr_t cap);

/**
 * Gaussian target `J = ½(ψ-m)ᵀ Σ⁻¹ (ψ-m)` from a dense covariance.
 *
 * # Safety
 * `mean` and `covariance_row_major` must point to `dim` and `dim*dim`
 * readable doubles; `out` must be a valid pointer.
 */
enum HmStatus hm_gaussian_target_new(uintptr_t dim,
                                     const double *mean,
                                     const double *covariance_row_major,
                                     struct HmTarget **out);

/**
 * Shifted log-normal target with support `ψ > shift`.
 *
 * # Safety
 * `mean_log` and `sigma_row_major` must point to `dim` and `dim*dim`
 * readable doubles; `out` must be a valid pointer.
 */
enum HmStatus hm_lognormal_target_new(uintptr_t dim,
                                      const double *mean_log,
                                      const double *sigma_row_major,
                                      double shift,
                                      struct HmTarget **out);

/**
 * Builds any configured target (including PDE posteriors) from an
 * experiment config file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be valid.
 */
enum HmStatus hm_target_from_config(const char *path, struct HmTarget **out);

/**
 * # Safety
 * `target` must be a handle from a `hm_*_target_*` constructor, not yet
 * freed; NULL is ignored.
 */
void hm_target_free(struct HmTarget *target);

/**
 * # Safety
 * `target` must be a live target handle.
 */
uintptr_t hm_target_dim(const struct HmTarget *target);

/**
 * `J(ψ)`; out-of-support points yield +inf with status Ok.
 *
 * # Safety
 * `psi` must point to `dim` doubles; `out_j` must be valid.
 */
enum HmStatus hm_target_j(const struct HmTarget *target, const double *psi, double *out_j);

/**
 * `J(ψ)` and `∇J(ψ)`. Fails with OutOfSupport outside the support.
 *
 * # Safety
 * `psi` and `out_grad` must point to `dim` doubles; `out_j` must be valid.
 */
enum HmStatus hm_target_j_grad(const struct HmTarget *target,
                               const double *psi,
                               double *out_j,
                               double *out_grad);

/**
 * Dense BFGS minimization of the target. `psi0 = NULL` starts from the
 * target's default start; `gtol <= 0` uses the relative default.
 *
 * # Safety
 * `out_psi` must point to `dim` writable doubles; `report` may be NULL.
 */
enum HmStatus hm_find_map(const struct HmTarget *target,
                          const double *psi0,
                          double gtol,
                          uintptr_t max_iter,
                          double *out_psi,
                          struct HmOptReport *report);

/**
 * Cholesky factor of a dense SPD matrix, for use as mass matrix or
 * preconditioner.
 *
 * # Safety
 * `matrix_row_major` must point to `n*n` doubles; `out` must be valid.
 */
enum HmStatus hm_spd_cholesky_new(uintptr_t n, const double *matrix_row_major, struct HmSpd **out);

/**
 * Target-appropriate SPD Hessian factor at `psi_map`: exact precision
 * (Gaussian), floored analytic Hessian (log-normal), or low-rank
 * Gauss-Newton against the prior (posterior).
 *
 * # Safety
 * `psi_map` must point to `dim` doubles; `out` must be valid.
 */
enum HmStatus hm_preconditioner_at(const struct HmTarget *target,
                                   const double *psi_map,
                                   struct HmSpd **out);

/**
 * # Safety
 * `spd` must be a live handle or NULL.
 */
void hm_spd_free(struct HmSpd *spd);

/**
 * `M v` and `M⁻¹ v` actions of an SPD factor.
 *
 * # Safety
 * `v` and `out` must point to `n` doubles matching the factor dimension.
 */
enum HmStatus hm_spd_apply(const struct HmSpd *spd, const double *v, double *out);

/**
 * # Safety
 * `v` and `out` must point to `n` doubles matching the factor dimension.
 */
enum HmStatus hm_spd_solve(const struct HmSpd *spd, const double *v, double *out);

/**
 * Runs the configured sampler. `h_map` is required by h_hmc/sn_map/is_map
 * and optional (identity) for hmc/mala; `psi_map` overrides the IS-MAP
 * center, defaulting to `psi0`.
 *
 * # Safety
 * `psi0` (and `psi_map` when non-NULL) must point to `dim` doubles;
 * handles must be live; `out` must be valid.
 */
enum HmStatus hm_sample(const struct HmTarget *target,
                        const struct HmSamplerConfig *cfg,
                        const double *psi0,
                        const struct HmSpd *h_map,
                        const double *psi_map,
                        struct HmChain **out);

/**
 * # Safety
 * `chain` must be a live handle or NULL.
 */
void hm_chain_free(struct HmChain *chain);

/**
 * Number of stored (post-thinning) samples.
 *
 * # Safety
 * `chain` must be a live handle.
 */
uintptr_t hm_chain_len(const struct HmChain *chain);

/**
 * # Safety
 * `chain` must be a live handle.
 */
uintptr_t hm_chain_dim(const struct HmChain *chain);

/**
 * # Safety
 * `chain` must be a live handle.
 */
double hm_chain_acceptance_rate(const struct HmChain *chain);

/**
 * Copies stored samples into `out`, row-major `len × dim`.
 *
 * # Safety
 * `out` must point to `len*dim` writable doubles.
 */
enum HmStatus hm_chain_samples(const struct HmChain *chain, double *out);

/**
 * Copies the stored `logJ` values into `out` (`len` doubles).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum HmStatus hm_chain_logj(const struct HmChain *chain, double *out);

/**
 * Sample autocorrelations ρ_1..ρ_max_lag of a scalar series.
 *
 * # Safety
 * `series` must point to `n` doubles, `out` to `max_lag` writable doubles.
 */
enum HmStatus hm_autocorrelation(const double *series, uintptr_t n, uintptr_t max_lag, double *out);

/**
 * IACT τ, effective sample size, and both standard-error conventions for
 * a scalar series; `sigma_tilde <= 0` uses the sample standard deviation.
 *
 * # Safety
 * `series` must point to `n` doubles; non-NULL outputs receive values.
 */
enum HmStatus hm_iact_ess_se(const double *series,
                             uintptr_t n,
                             double sigma_tilde,
                             double *out_tau,
                             double *out_n_eff,
                             double *out_se,
                             double *out_se_sqrt);

/**
 * Per-dimension empirical credible interval of row-major `n × dim`
 * samples at the given level.
 *
 * # Safety
 * `samples` must point to `n*dim` doubles; `out_lo`/`out_hi` to `dim`
 * writable doubles each.
 */
enum HmStatus hm_credible_interval(const double *samples,
                                   uintptr_t n,
                                   uintptr_t dim,
                                   double level,
                                   double *out_lo,
                                   double *out_hi);

/**
 * Closed-form KL divergence of a log-normal against a normal,
 * `D_KL(logN(m_q, Σ_q) ‖ N(m_p, Σ_p))`.
 *
 * # Safety
 * Vector arguments must point to `n` doubles and matrices to `n*n`
 * doubles; `out` must be valid.
 */
enum HmStatus hm_kld_lognormal_normal(uintptr_t n,
                                      const double *m_q,
                                      const double *sigma_q_row_major,
                                      const double *m_p,
                                      const double *sigma_p_row_major,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HESSMC_H */
