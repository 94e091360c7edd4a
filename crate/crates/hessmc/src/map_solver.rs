//! Dense BFGS minimization of a target's negative log-density.
//!
//! Wolfe line search (c1 = 1e-4, c2 = 0.9) with the inverse-Hessian
//! estimate initialized to `I / ‖∇J(ψ₀)‖`. Trial points outside the
//! target's support evaluate to `J = +∞` and are backtracked over, so
//! constrained-support targets (log-normal) need no special casing.

use crate::prior::FieldVector;
use crate::targets::TargetDensity;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("starting point is outside the target support")]
    OutOfSupportStart,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Outcome of a BFGS run; `converged` implies `grad_norm_final <= gtol`.
/// The field itself is reported through the field CSV, not the JSON record.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OptimizeResult {
    #[serde(skip)]
    pub psi_map: FieldVector,
    pub j_final: f64,
    pub grad_norm_final: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failures: usize,
}

/// Relative gradient tolerance used when the caller passes `gtol <= 0`.
pub fn default_gtol(j0: f64) -> f64 {
    1e-6 * j0.abs().max(1.0)
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LS_ITER: usize = 60;

struct LinePoint {
    alpha: f64,
    j: f64,
    /// directional derivative, `None` when the point was out of support
    slope: Option<f64>,
    grad: Option<FieldVector>,
}

/// Strong Wolfe line search (bracket + zoom); out-of-support trials read as
/// `J = +∞`. Returns the accepted point or `None` after `MAX_LS_ITER` trials.
fn wolfe_search<T: TargetDensity + ?Sized>(
    target: &T,
    psi: &FieldVector,
    dir: &FieldVector,
    j0: f64,
    slope0: f64,
) -> Option<(f64, f64, FieldVector)> {
    let eval = |alpha: f64| -> LinePoint {
        let p = psi + dir * alpha;
        match target.j_grad(&p) {
            Some((j, g)) => LinePoint {
                alpha,
                j,
                slope: Some(g.dot(dir)),
                grad: Some(g),
            },
            None => LinePoint { alpha, j: f64::INFINITY, slope: None, grad: None },
        }
    };

    let mut lo = LinePoint { alpha: 0.0, j: j0, slope: Some(slope0), grad: None };
    let mut alpha = 1.0;
    let mut prev = LinePoint { alpha: 0.0, j: j0, slope: Some(slope0), grad: None };
    let mut bracket_hi: Option<LinePoint> = None;

    // bracketing phase
    for _ in 0..MAX_LS_ITER {
        let cand = eval(alpha);
        if !cand.j.is_finite() || cand.j > j0 + C1 * alpha * slope0 || cand.j >= prev.j && prev.alpha > 0.0 {
            bracket_hi = Some(cand);
            lo = prev;
            break;
        }
        let slope = cand.slope.expect("finite J implies gradient");
        if slope.abs() <= -C2 * slope0 {
            let g = cand.grad.unwrap();
            return Some((cand.alpha, cand.j, g));
        }
        if slope >= 0.0 {
            bracket_hi = Some(prev);
            lo = cand;
            break;
        }
        prev = cand;
        alpha *= 2.0;
    }
    let mut hi = bracket_hi?;

    // zoom phase: bisection is robust against the +∞ plateau
    for _ in 0..MAX_LS_ITER {
        let mid = 0.5 * (lo.alpha + hi.alpha);
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * (1.0 + lo.alpha.abs()) {
            break;
        }
        let cand = eval(mid);
        if !cand.j.is_finite() || cand.j > j0 + C1 * mid * slope0 || cand.j >= lo.j {
            hi = cand;
            continue;
        }
        let slope = cand.slope.expect("finite J implies gradient");
        if slope.abs() <= -C2 * slope0 {
            let g = cand.grad.unwrap();
            return Some((cand.alpha, cand.j, g));
        }
        if slope * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = cand;
    }
    // fall back to the best sufficient-decrease point seen
    if lo.alpha > 0.0 && lo.j < j0 {
        let p = psi + dir * lo.alpha;
        let (j, g) = target.j_grad(&p)?;
        return Some((lo.alpha, j, g));
    }
    None
}

/// Dense BFGS minimization of `target.j`. Pass `gtol <= 0` to use
/// [`default_gtol`]; termination is `‖∇J‖_∞ <= gtol` or `max_iter`.
pub fn bfgs_minimize<T: TargetDensity + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    gtol: f64,
    max_iter: usize,
) -> Result<OptimizeResult, OptimizeError> {
    let n = target.dim();
    if psi0.len() != n {
        return Err(OptimizeError::DimensionMismatch { expected: n, got: psi0.len() });
    }
    let (mut j, mut grad) = target.j_grad(psi0).ok_or(OptimizeError::OutOfSupportStart)?;
    let gtol = if gtol > 0.0 { gtol } else { default_gtol(j) };
    let mut psi = psi0.clone();
    let mut h_inv = {
        let g0 = grad.norm();
        DMatrix::<f64>::identity(n, n) / g0.max(1e-12)
    };
    let mut ls_failures = 0usize;
    let mut iterations = 0usize;
    let mut first_update = true;

    while iterations < max_iter {
        if grad.amax() <= gtol {
            return Ok(OptimizeResult {
                psi_map: psi,
                j_final: j,
                grad_norm_final: grad.amax(),
                iterations,
                converged: true,
                line_search_failures: ls_failures,
            });
        }
        iterations += 1;

        let mut dir = -(&h_inv * &grad);
        let mut slope = grad.dot(&dir);
        if slope >= 0.0 {
            // curvature estimate lost descent: restart from scaled identity
            h_inv = DMatrix::identity(n, n) / grad.norm().max(1e-12);
            dir = -(&h_inv * &grad);
            slope = grad.dot(&dir);
        }

        match wolfe_search(target, &psi, &dir, j, slope) {
            Some((alpha, j_new, grad_new)) => {
                let step = &dir * alpha;
                let y = &grad_new - &grad;
                let sy = step.dot(&y);
                if sy > 1e-12 * step.norm() * y.norm() {
                    if first_update {
                        // Shanno scaling of the initial estimate
                        h_inv = DMatrix::identity(n, n) * (sy / y.norm_squared());
                        first_update = false;
                    }
                    // H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ, expanded to
                    // H - ρ[s(Hy)ᵀ + (Hy)sᵀ] + ρ(1 + ρ yᵀHy) s sᵀ
                    let rho = 1.0 / sy;
                    let hy = &h_inv * &y;
                    let yhy = y.dot(&hy);
                    let s_hyt = &step * hy.transpose() * rho;
                    h_inv -= &s_hyt;
                    h_inv -= s_hyt.transpose();
                    h_inv += (&step * step.transpose()) * (rho * (1.0 + rho * yhy));
                    h_inv = (&h_inv + h_inv.transpose()) * 0.5;
                }
                psi += &step;
                j = j_new;
                grad = grad_new;
            }
            None => {
                ls_failures += 1;
                break;
            }
        }
    }

    let converged = grad.amax() <= gtol;
    Ok(OptimizeResult {
        psi_map: psi,
        j_final: j,
        grad_norm_final: grad.amax(),
        iterations,
        converged,
        line_search_failures: ls_failures,
    })
}
