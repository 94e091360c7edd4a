//! C ABI over the hessmc library: opaque handles for targets, SPD factors,
//! and chains; status codes for every fallible call; a thread-local last
//! error message.
//!
//! Conventions:
//! - Every function returning [`HmStatus`] reports failure without
//!   panicking across the boundary; `hm_last_error_message` retrieves a
//!   human-readable description of the most recent failure on this thread.
//! - Vectors and row-major matrices are caller-allocated `double` buffers
//!   whose lengths derive from `hm_target_dim`/`hm_chain_len`.
//! - Handles are freed exactly once with the matching `_free` function;
//!   `_free(NULL)` is a no-op.

use hessmc::config::{ExperimentConfig, TargetInstance};
use hessmc::diagnostics;
use hessmc::map_solver;
use hessmc::samplers::{self, Method, SamplerConfig};
use hessmc::spd::{self, SpdFactor};
use hessmc::targets::{GaussianTarget, LogNormalTarget, TargetDensity};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPositiveDefinite = 3,
    OutOfSupport = 4,
    NumericalFailure = 5,
    ConfigError = 6,
    IoError = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: HmStatus, msg: impl Into<String>) -> HmStatus {
    set_error(msg);
    status
}

/// Copies the most recent error message on this thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full message length.
#[no_mangle]
pub extern "C" fn hm_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Opaque negative-log-density target.
pub struct HmTarget {
    inner: TargetInstance,
}

/// Opaque SPD factor (preconditioner / mass matrix).
pub struct HmSpd {
    inner: SpdFactor,
}

/// Opaque sample chain.
pub struct HmChain {
    inner: samplers::Chain,
}

/// Sampling method selector for [`hm_sample`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmMethod {
    Mh = 0,
    Hmc = 1,
    HHmc = 2,
    Mala = 3,
    SnMap = 4,
    SnMcmc = 5,
    IsMap = 6,
}

impl From<HmMethod> for Method {
    fn from(m: HmMethod) -> Method {
        match m {
            HmMethod::Mh => Method::Mh,
            HmMethod::Hmc => Method::Hmc,
            HmMethod::HHmc => Method::HHmc,
            HmMethod::Mala => Method::Mala,
            HmMethod::SnMap => Method::SnMap,
            HmMethod::SnMcmc => Method::SnMcmc,
            HmMethod::IsMap => Method::IsMap,
        }
    }
}

/// Sampler knobs; `gamma_max <= 0` disables the random learning rate and
/// `thinning = 0` is treated as 1.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HmSamplerConfig {
    pub method: HmMethod,
    pub dt: f64,
    pub tau: f64,
    pub leapfrog_steps: usize,
    pub gamma_max: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub thinning: usize,
}

impl HmSamplerConfig {
    fn to_config(self) -> SamplerConfig {
        SamplerConfig {
            method: self.method.into(),
            dt: self.dt,
            tau: self.tau,
            leapfrog_steps: self.leapfrog_steps.max(1),
            gamma_max: (self.gamma_max > 0.0).then_some(self.gamma_max),
            n_samples: self.n_samples,
            seed: self.seed,
            thinning: self.thinning.max(1),
            record_proposals: false,
        }
    }
}

/// BFGS outcome summary (the optimum itself is written to the caller's
/// buffer).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HmOptReport {
    pub j_final: f64,
    pub grad_norm_final: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failures: usize,
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(ptr, len))
    }
}

fn guard<F: FnOnce() -> HmStatus>(f: F) -> HmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(HmStatus::Panic, "internal panic crossed the FFI boundary"),
    }
}

fn matrix_from_row_major(n: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_iterator(n, n, data.iter().copied())
}

/// Gaussian target `J = ½(ψ-m)ᵀ Σ⁻¹ (ψ-m)` from a dense covariance.
///
/// # Safety
/// `mean` and `covariance_row_major` must point to `dim` and `dim*dim`
/// readable doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_gaussian_target_new(
    dim: usize,
    mean: *const f64,
    covariance_row_major: *const f64,
    out: *mut *mut HmTarget,
) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return fail(HmStatus::NullPointer, "out is null");
        }
        let (Some(m), Some(c)) = (slice_arg(mean, dim), slice_arg(covariance_row_major, dim * dim))
        else {
            return fail(HmStatus::NullPointer, "mean or covariance is null");
        };
        match GaussianTarget::from_covariance(
            DVector::from_column_slice(m),
            matrix_from_row_major(dim, c),
        ) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(HmTarget { inner: TargetInstance::Gaussian(t) }));
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::NotPositiveDefinite, e.to_string()),
        }
    })
}

/// Shifted log-normal target with support `ψ > shift`.
///
/// # Safety
/// `mean_log` and `sigma_row_major` must point to `dim` and `dim*dim`
/// readable doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hm_lognormal_target_new(
    dim: usize,
    mean_log: *const f64,
    sigma_row_major: *const f64,
    shift: f64,
    out: *mut *mut HmTarget,
) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return fail(HmStatus::NullPointer, "out is null");
        }
        let (Some(m), Some(c)) = (slice_arg(mean_log, dim), slice_arg(sigma_row_major, dim * dim))
        else {
            return fail(HmStatus::NullPointer, "mean_log or sigma is null");
        };
        if shift < 0.0 {
            return fail(HmStatus::InvalidArgument, "shift must be >= 0");
        }
        match LogNormalTarget::new(
            DVector::from_column_slice(m),
            matrix_from_row_major(dim, c),
            shift,
        ) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(HmTarget { inner: TargetInstance::LogNormal(t) }));
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::NotPositiveDefinite, e.to_string()),
        }
    })
}

/// Builds any configured target (including PDE posteriors) from an
/// experiment config file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_target_from_config(
    path: *const c_char,
    out: *mut *mut HmTarget,
) -> HmStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(HmStatus::NullPointer, "path or out is null");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(HmStatus::InvalidArgument, "path is not valid UTF-8");
        };
        let path = Path::new(path);
        let cfg = match ExperimentConfig::from_path(path) {
            Ok(c) => c,
            Err(e) => return fail(HmStatus::ConfigError, e.to_string()),
        };
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        match cfg.build_target(dir) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(HmTarget { inner: t }));
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::NumericalFailure, e.to_string()),
        }
    })
}

/// # Safety
/// `target` must be a handle from a `hm_*_target_*` constructor, not yet
/// freed; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hm_target_free(target: *mut HmTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// # Safety
/// `target` must be a live target handle.
#[no_mangle]
pub unsafe extern "C" fn hm_target_dim(target: *const HmTarget) -> usize {
    if target.is_null() {
        return 0;
    }
    (*target).inner.dim()
}

/// `J(ψ)`; out-of-support points yield +inf with status Ok.
///
/// # Safety
/// `psi` must point to `dim` doubles; `out_j` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_target_j(
    target: *const HmTarget,
    psi: *const f64,
    out_j: *mut f64,
) -> HmStatus {
    guard(|| {
        if target.is_null() || out_j.is_null() {
            return fail(HmStatus::NullPointer, "target or out_j is null");
        }
        let t = &(*target).inner;
        let Some(p) = slice_arg(psi, t.dim()) else {
            return fail(HmStatus::NullPointer, "psi is null");
        };
        *out_j = t.j(&DVector::from_column_slice(p));
        HmStatus::Ok
    })
}

/// `J(ψ)` and `∇J(ψ)`. Fails with OutOfSupport outside the support.
///
/// # Safety
/// `psi` and `out_grad` must point to `dim` doubles; `out_j` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_target_j_grad(
    target: *const HmTarget,
    psi: *const f64,
    out_j: *mut f64,
    out_grad: *mut f64,
) -> HmStatus {
    guard(|| {
        if target.is_null() || out_j.is_null() || out_grad.is_null() {
            return fail(HmStatus::NullPointer, "target, out_j, or out_grad is null");
        }
        let t = &(*target).inner;
        let Some(p) = slice_arg(psi, t.dim()) else {
            return fail(HmStatus::NullPointer, "psi is null");
        };
        match t.j_grad(&DVector::from_column_slice(p)) {
            Some((j, g)) => {
                *out_j = j;
                ptr::copy_nonoverlapping(g.as_slice().as_ptr(), out_grad, t.dim());
                HmStatus::Ok
            }
            None => fail(HmStatus::OutOfSupport, "psi lies outside the target support"),
        }
    })
}

/// Dense BFGS minimization of the target. `psi0 = NULL` starts from the
/// target's default start; `gtol <= 0` uses the relative default.
///
/// # Safety
/// `out_psi` must point to `dim` writable doubles; `report` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn hm_find_map(
    target: *const HmTarget,
    psi0: *const f64,
    gtol: f64,
    max_iter: usize,
    out_psi: *mut f64,
    report: *mut HmOptReport,
) -> HmStatus {
    guard(|| {
        if target.is_null() || out_psi.is_null() {
            return fail(HmStatus::NullPointer, "target or out_psi is null");
        }
        let t = &(*target).inner;
        let start = match slice_arg(psi0, t.dim()) {
            Some(s) => DVector::from_column_slice(s),
            None => t.default_start(),
        };
        match map_solver::bfgs_minimize(t, &start, gtol, max_iter) {
            Ok(res) => {
                ptr::copy_nonoverlapping(res.psi_map.as_slice().as_ptr(), out_psi, t.dim());
                if !report.is_null() {
                    *report = HmOptReport {
                        j_final: res.j_final,
                        grad_norm_final: res.grad_norm_final,
                        iterations: res.iterations,
                        converged: res.converged,
                        line_search_failures: res.line_search_failures,
                    };
                }
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::OutOfSupport, e.to_string()),
        }
    })
}

/// Cholesky factor of a dense SPD matrix, for use as mass matrix or
/// preconditioner.
///
/// # Safety
/// `matrix_row_major` must point to `n*n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_spd_cholesky_new(
    n: usize,
    matrix_row_major: *const f64,
    out: *mut *mut HmSpd,
) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return fail(HmStatus::NullPointer, "out is null");
        }
        let Some(m) = slice_arg(matrix_row_major, n * n) else {
            return fail(HmStatus::NullPointer, "matrix is null");
        };
        match spd::cholesky(&matrix_from_row_major(n, m)) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(HmSpd { inner: f }));
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::NotPositiveDefinite, e.to_string()),
        }
    })
}

/// Target-appropriate SPD Hessian factor at `psi_map`: exact precision
/// (Gaussian), floored analytic Hessian (log-normal), or low-rank
/// Gauss-Newton against the prior (posterior).
///
/// # Safety
/// `psi_map` must point to `dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_preconditioner_at(
    target: *const HmTarget,
    psi_map: *const f64,
    out: *mut *mut HmSpd,
) -> HmStatus {
    guard(|| {
        if target.is_null() || out.is_null() {
            return fail(HmStatus::NullPointer, "target or out is null");
        }
        let t = &(*target).inner;
        let Some(p) = slice_arg(psi_map, t.dim()) else {
            return fail(HmStatus::NullPointer, "psi_map is null");
        };
        match t.preconditioner_at(&DVector::from_column_slice(p)) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(HmSpd { inner: f }));
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::NumericalFailure, e.to_string()),
        }
    })
}

/// # Safety
/// `spd` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hm_spd_free(spd: *mut HmSpd) {
    if !spd.is_null() {
        drop(Box::from_raw(spd));
    }
}

/// `M v` and `M⁻¹ v` actions of an SPD factor.
///
/// # Safety
/// `v` and `out` must point to `n` doubles matching the factor dimension.
#[no_mangle]
pub unsafe extern "C" fn hm_spd_apply(
    spd: *const HmSpd,
    v: *const f64,
    out: *mut f64,
) -> HmStatus {
    guard(|| {
        if spd.is_null() || out.is_null() {
            return fail(HmStatus::NullPointer, "spd or out is null");
        }
        let f = &(*spd).inner;
        let Some(x) = slice_arg(v, f.dim()) else {
            return fail(HmStatus::NullPointer, "v is null");
        };
        let y = f.apply(&DVector::from_column_slice(x));
        ptr::copy_nonoverlapping(y.as_slice().as_ptr(), out, f.dim());
        HmStatus::Ok
    })
}

/// # Safety
/// `v` and `out` must point to `n` doubles matching the factor dimension.
#[no_mangle]
pub unsafe extern "C" fn hm_spd_solve(
    spd: *const HmSpd,
    v: *const f64,
    out: *mut f64,
) -> HmStatus {
    guard(|| {
        if spd.is_null() || out.is_null() {
            return fail(HmStatus::NullPointer, "spd or out is null");
        }
        let f = &(*spd).inner;
        let Some(x) = slice_arg(v, f.dim()) else {
            return fail(HmStatus::NullPointer, "v is null");
        };
        let y = f.solve(&DVector::from_column_slice(x));
        ptr::copy_nonoverlapping(y.as_slice().as_ptr(), out, f.dim());
        HmStatus::Ok
    })
}

/// Runs the configured sampler. `h_map` is required by h_hmc/sn_map/is_map
/// and optional (identity) for hmc/mala; `psi_map` overrides the IS-MAP
/// center, defaulting to `psi0`.
///
/// # Safety
/// `psi0` (and `psi_map` when non-NULL) must point to `dim` doubles;
/// handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_sample(
    target: *const HmTarget,
    cfg: *const HmSamplerConfig,
    psi0: *const f64,
    h_map: *const HmSpd,
    psi_map: *const f64,
    out: *mut *mut HmChain,
) -> HmStatus {
    guard(|| {
        if target.is_null() || cfg.is_null() || out.is_null() {
            return fail(HmStatus::NullPointer, "target, cfg, or out is null");
        }
        let t = &(*target).inner;
        let Some(start) = slice_arg(psi0, t.dim()) else {
            return fail(HmStatus::NullPointer, "psi0 is null");
        };
        let start = DVector::from_column_slice(start);
        let config = (*cfg).to_config();
        let h = (!h_map.is_null()).then(|| &(*h_map).inner);
        let center = slice_arg(psi_map, t.dim()).map(DVector::from_column_slice);
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        match samplers::run_sampler(t, &start, &config, h, center.as_ref(), &mut rng) {
            Ok(chain) => {
                *out = Box::into_raw(Box::new(HmChain { inner: chain }));
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `chain` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hm_chain_free(chain: *mut HmChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of stored (post-thinning) samples.
///
/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hm_chain_len(chain: *const HmChain) -> usize {
    if chain.is_null() {
        return 0;
    }
    (*chain).inner.len()
}

/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hm_chain_dim(chain: *const HmChain) -> usize {
    if chain.is_null() {
        return 0;
    }
    (*chain).inner.dim
}

/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hm_chain_acceptance_rate(chain: *const HmChain) -> f64 {
    if chain.is_null() {
        return f64::NAN;
    }
    (*chain).inner.acceptance_rate
}

/// Copies stored samples into `out`, row-major `len × dim`.
///
/// # Safety
/// `out` must point to `len*dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hm_chain_samples(chain: *const HmChain, out: *mut f64) -> HmStatus {
    guard(|| {
        if chain.is_null() || out.is_null() {
            return fail(HmStatus::NullPointer, "chain or out is null");
        }
        let c = &(*chain).inner;
        for (i, s) in c.samples.iter().enumerate() {
            ptr::copy_nonoverlapping(s.as_slice().as_ptr(), out.add(i * c.dim), c.dim);
        }
        HmStatus::Ok
    })
}

/// Copies the stored `logJ` values into `out` (`len` doubles).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hm_chain_logj(chain: *const HmChain, out: *mut f64) -> HmStatus {
    guard(|| {
        if chain.is_null() || out.is_null() {
            return fail(HmStatus::NullPointer, "chain or out is null");
        }
        let c = &(*chain).inner;
        ptr::copy_nonoverlapping(c.logj.as_ptr(), out, c.logj.len());
        HmStatus::Ok
    })
}

/// Sample autocorrelations ρ_1..ρ_max_lag of a scalar series.
///
/// # Safety
/// `series` must point to `n` doubles, `out` to `max_lag` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hm_autocorrelation(
    series: *const f64,
    n: usize,
    max_lag: usize,
    out: *mut f64,
) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return fail(HmStatus::NullPointer, "out is null");
        }
        let Some(s) = slice_arg(series, n) else {
            return fail(HmStatus::NullPointer, "series is null");
        };
        match diagnostics::autocorrelation(s, max_lag) {
            Ok(rho) => {
                ptr::copy_nonoverlapping(rho.as_ptr(), out, rho.len());
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// IACT τ, effective sample size, and both standard-error conventions for
/// a scalar series; `sigma_tilde <= 0` uses the sample standard deviation.
///
/// # Safety
/// `series` must point to `n` doubles; non-NULL outputs receive values.
#[no_mangle]
pub unsafe extern "C" fn hm_iact_ess_se(
    series: *const f64,
    n: usize,
    sigma_tilde: f64,
    out_tau: *mut f64,
    out_n_eff: *mut f64,
    out_se: *mut f64,
    out_se_sqrt: *mut f64,
) -> HmStatus {
    guard(|| {
        let Some(s) = slice_arg(series, n) else {
            return fail(HmStatus::NullPointer, "series is null");
        };
        let result = if sigma_tilde > 0.0 {
            diagnostics::iact_ess_se(s, sigma_tilde)
        } else {
            diagnostics::scalar_chain_stats(s)
        };
        match result {
            Ok(stats) => {
                if !out_tau.is_null() {
                    *out_tau = stats.tau;
                }
                if !out_n_eff.is_null() {
                    *out_n_eff = stats.n_eff;
                }
                if !out_se.is_null() {
                    *out_se = stats.se;
                }
                if !out_se_sqrt.is_null() {
                    *out_se_sqrt = stats.se_sqrt;
                }
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Per-dimension empirical credible interval of row-major `n × dim`
/// samples at the given level.
///
/// # Safety
/// `samples` must point to `n*dim` doubles; `out_lo`/`out_hi` to `dim`
/// writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn hm_credible_interval(
    samples: *const f64,
    n: usize,
    dim: usize,
    level: f64,
    out_lo: *mut f64,
    out_hi: *mut f64,
) -> HmStatus {
    guard(|| {
        if out_lo.is_null() || out_hi.is_null() {
            return fail(HmStatus::NullPointer, "out_lo or out_hi is null");
        }
        let Some(s) = slice_arg(samples, n * dim) else {
            return fail(HmStatus::NullPointer, "samples is null");
        };
        let m = DMatrix::from_row_iterator(n, dim, s.iter().copied());
        match diagnostics::credible_interval(&m, level) {
            Ok(iv) => {
                for (j, (lo, hi)) in iv.iter().enumerate() {
                    *out_lo.add(j) = *lo;
                    *out_hi.add(j) = *hi;
                }
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Closed-form KL divergence of a log-normal against a normal,
/// `D_KL(logN(m_q, Σ_q) ‖ N(m_p, Σ_p))`.
///
/// # Safety
/// Vector arguments must point to `n` doubles and matrices to `n*n`
/// doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hm_kld_lognormal_normal(
    n: usize,
    m_q: *const f64,
    sigma_q_row_major: *const f64,
    m_p: *const f64,
    sigma_p_row_major: *const f64,
    out: *mut f64,
) -> HmStatus {
    guard(|| {
        if out.is_null() {
            return fail(HmStatus::NullPointer, "out is null");
        }
        let (Some(mq), Some(sq), Some(mp), Some(sp)) = (
            slice_arg(m_q, n),
            slice_arg(sigma_q_row_major, n * n),
            slice_arg(m_p, n),
            slice_arg(sigma_p_row_major, n * n),
        ) else {
            return fail(HmStatus::NullPointer, "vector or matrix argument is null");
        };
        match diagnostics::kld_lognormal_normal(
            &DVector::from_column_slice(mq),
            &matrix_from_row_major(n, sq),
            &DVector::from_column_slice(mp),
            &matrix_from_row_major(n, sp),
        ) {
            Ok(d) => {
                *out = d;
                HmStatus::Ok
            }
            Err(e) => fail(HmStatus::NotPositiveDefinite, e.to_string()),
        }
    })
}
