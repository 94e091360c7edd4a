//! Negative-log-density targets for sampling and optimization.
//!
//! Every target exposes `J(ψ)` (the objective, i.e. negative log-density up
//! to a constant) and its gradient through [`TargetDensity`]. Points outside
//! the support evaluate to `J = +∞`, which Metropolis steps reject
//! automatically. Analytic Hessians are available for the Gaussian and
//! log-normal targets; the PDE posterior offers finite-difference and
//! Gauss-Newton constructions through [`TargetDensity::hessian_at`].

use crate::forward::{self, DarcyProblem, ForwardError, ObservationPlan};
use crate::prior::{BilaplacianPrior, FieldVector};
use crate::spd::{self, SpdError, SpdFactor};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point outside the support (component {0})")]
    OutOfSupport(usize),
    #[error("Hessian mode {0:?} unsupported for this target")]
    ModeUnsupported(HessianMode),
    #[error("forward solve failed: {0}")]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Factorization(#[from] SpdError),
}

/// How [`TargetDensity::hessian_at`] builds the Hessian of `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// Closed form, where one exists.
    Analytic,
    /// Gauss-Newton: `JᵀΓ⁻¹J` from linearized observations plus the prior
    /// precision (PDE posterior only).
    GaussNewton,
    /// Central differences of the gradient, column by column.
    FdOfGrad,
}

/// Negative-log-density contract shared by all samplers and the optimizer.
pub trait TargetDensity {
    fn dim(&self) -> usize;

    /// `J(ψ)`; `+∞` outside the support.
    fn j(&self, psi: &FieldVector) -> f64;

    /// `(J, ∇J)`; `None` outside the support.
    fn j_grad(&self, psi: &FieldVector) -> Option<(f64, FieldVector)>;

    /// Analytic local Hessian, when the target has one.
    fn hess(&self, _psi: &FieldVector) -> Option<DMatrix<f64>> {
        None
    }

    /// Hessian of `J` at `ψ` in the requested mode. All targets support
    /// [`HessianMode::FdOfGrad`]; the result is symmetrized.
    fn hessian_at(&self, psi: &FieldVector, mode: HessianMode) -> Result<DMatrix<f64>, TargetError> {
        match mode {
            HessianMode::Analytic => self
                .hess(psi)
                .ok_or(TargetError::ModeUnsupported(HessianMode::Analytic)),
            HessianMode::GaussNewton => Err(TargetError::ModeUnsupported(HessianMode::GaussNewton)),
            HessianMode::FdOfGrad => fd_hessian_of_grad(self, psi),
        }
    }
}

/// Central-difference Hessian columns from the gradient, step `1e-5` scaled
/// per coefficient, symmetrized.
pub fn fd_hessian_of_grad<T: TargetDensity + ?Sized>(
    target: &T,
    psi: &FieldVector,
) -> Result<DMatrix<f64>, TargetError> {
    let n = target.dim();
    if psi.len() != n {
        return Err(TargetError::DimensionMismatch { expected: n, got: psi.len() });
    }
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut work = psi.clone();
    for j in 0..n {
        let step = 1e-5 * psi[j].abs().max(1.0);
        work[j] = psi[j] + step;
        let (_, gp) = target
            .j_grad(&work)
            .ok_or(TargetError::OutOfSupport(j))?;
        work[j] = psi[j] - step;
        let (_, gm) = target
            .j_grad(&work)
            .ok_or(TargetError::OutOfSupport(j))?;
        work[j] = psi[j];
        let col = (gp - gm) / (2.0 * step);
        h.set_column(j, &col);
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Analytic Gaussian target `J(ψ) = ½ (ψ-m)ᵀ P (ψ-m)`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: FieldVector,
    precision_matrix: DMatrix<f64>,
    precision: SpdFactor,
}

impl GaussianTarget {
    pub fn from_precision(mean: FieldVector, precision_matrix: DMatrix<f64>) -> Result<Self, TargetError> {
        if precision_matrix.nrows() != mean.len() {
            return Err(TargetError::DimensionMismatch {
                expected: mean.len(),
                got: precision_matrix.nrows(),
            });
        }
        let precision = spd::cholesky(&precision_matrix)?;
        Ok(GaussianTarget { mean, precision_matrix, precision })
    }

    pub fn from_covariance(mean: FieldVector, covariance: DMatrix<f64>) -> Result<Self, TargetError> {
        let n = covariance.nrows();
        let chol = spd::cholesky(&covariance)?;
        let mut prec = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            prec.set_column(j, &chol.solve(&e));
        }
        let prec = (&prec + prec.transpose()) * 0.5;
        Self::from_precision(mean, prec)
    }

    /// Isotropic 1-D/n-D Gaussian with mean `m` and variance `σ²` per axis.
    pub fn isotropic(dim: usize, m: f64, sigma2: f64) -> Result<Self, TargetError> {
        Self::from_precision(
            DVector::from_element(dim, m),
            DMatrix::identity(dim, dim) / sigma2,
        )
    }

    pub fn mean(&self) -> &FieldVector {
        &self.mean
    }

    pub fn precision(&self) -> &SpdFactor {
        &self.precision
    }

    pub fn precision_matrix(&self) -> &DMatrix<f64> {
        &self.precision_matrix
    }

    pub fn logdensity_grad(&self, psi: &FieldVector) -> Result<(f64, FieldVector), TargetError> {
        if psi.len() != self.mean.len() {
            return Err(TargetError::DimensionMismatch {
                expected: self.mean.len(),
                got: psi.len(),
            });
        }
        let d = psi - &self.mean;
        let pd = self.precision.apply(&d);
        Ok((0.5 * d.dot(&pd), pd))
    }
}

impl TargetDensity for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn j(&self, psi: &FieldVector) -> f64 {
        let d = psi - &self.mean;
        0.5 * self.precision.quad(&d)
    }

    fn j_grad(&self, psi: &FieldVector) -> Option<(f64, FieldVector)> {
        let (j, g) = self.logdensity_grad(psi).ok()?;
        Some((j, g))
    }

    fn hess(&self, _psi: &FieldVector) -> Option<DMatrix<f64>> {
        Some(self.precision_matrix.clone())
    }
}

/// Shifted log-normal target with support `ψ > c·1`:
/// `J(ψ) = ½‖Λ^{1/2}(log(ψ-c·1) - m_l)‖² + Σ log(ψᵢ-c)`,
/// the mode of the (shifted) log-normal density.
#[derive(Debug, Clone)]
pub struct LogNormalTarget {
    m_l: FieldVector,
    sigma_matrix: DMatrix<f64>,
    lambda_matrix: DMatrix<f64>,
    shift: f64,
}

impl LogNormalTarget {
    pub fn new(m_l: FieldVector, sigma_l: DMatrix<f64>, shift: f64) -> Result<Self, TargetError> {
        let n = m_l.len();
        if sigma_l.nrows() != n || sigma_l.ncols() != n {
            return Err(TargetError::DimensionMismatch { expected: n, got: sigma_l.nrows() });
        }
        let chol = spd::cholesky(&sigma_l)?;
        let mut lambda = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            lambda.set_column(j, &chol.solve(&e));
        }
        let lambda = (&lambda + lambda.transpose()) * 0.5;
        Ok(LogNormalTarget {
            m_l,
            sigma_matrix: sigma_l,
            lambda_matrix: lambda,
            shift,
        })
    }

    pub fn scalar(m_l: f64, sigma2: f64, shift: f64) -> Result<Self, TargetError> {
        Self::new(
            DVector::from_element(1, m_l),
            DMatrix::from_element(1, 1, sigma2),
            shift,
        )
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn log_mean(&self) -> &FieldVector {
        &self.m_l
    }

    pub fn sigma_matrix(&self) -> &DMatrix<f64> {
        &self.sigma_matrix
    }

    pub fn lambda_matrix(&self) -> &DMatrix<f64> {
        &self.lambda_matrix
    }

    /// Closed-form mode `ψ_MAP = exp(m_l - Σ_l 1) + c·1`.
    pub fn map_point(&self) -> FieldVector {
        let sig_row_sums = &self.sigma_matrix * DVector::from_element(self.m_l.len(), 1.0);
        DVector::from_fn(self.m_l.len(), |i, _| (self.m_l[i] - sig_row_sums[i]).exp() + self.shift)
    }

    fn support_violation(&self, psi: &FieldVector) -> Option<usize> {
        psi.iter().position(|&v| v - self.shift <= 0.0)
    }

    /// `(J, ∇J, ∇²J)` at an in-support point.
    pub fn j_grad_hess(
        &self,
        psi: &FieldVector,
    ) -> Result<(f64, FieldVector, DMatrix<f64>), TargetError> {
        let n = self.m_l.len();
        if psi.len() != n {
            return Err(TargetError::DimensionMismatch { expected: n, got: psi.len() });
        }
        if let Some(i) = self.support_violation(psi) {
            return Err(TargetError::OutOfSupport(i));
        }
        let w = DVector::from_fn(n, |i, _| psi[i] - self.shift);
        let logw = w.map(f64::ln);
        let d = &logw - &self.m_l;
        let ld = &self.lambda_matrix * &d;
        let j = 0.5 * d.dot(&ld) + logw.sum();
        let grad = DVector::from_fn(n, |i, _| (ld[i] + 1.0) / w[i]);
        let mut hess = DMatrix::zeros(n, n);
        for jj in 0..n {
            for ii in 0..n {
                if ii == jj {
                    hess[(jj, jj)] =
                        -(ld[jj] + 1.0 - self.lambda_matrix[(jj, jj)]) / (w[jj] * w[jj]);
                } else {
                    hess[(jj, ii)] = self.lambda_matrix[(jj, ii)] / (w[jj] * w[ii]);
                }
            }
        }
        Ok((j, grad, hess))
    }
}

impl TargetDensity for LogNormalTarget {
    fn dim(&self) -> usize {
        self.m_l.len()
    }

    fn j(&self, psi: &FieldVector) -> f64 {
        if psi.len() != self.m_l.len() || self.support_violation(psi).is_some() {
            return f64::INFINITY;
        }
        let n = self.m_l.len();
        let logw = DVector::from_fn(n, |i, _| (psi[i] - self.shift).ln());
        let d = &logw - &self.m_l;
        0.5 * d.dot(&(&self.lambda_matrix * &d)) + logw.sum()
    }

    fn j_grad(&self, psi: &FieldVector) -> Option<(f64, FieldVector)> {
        let (j, g, _) = self.j_grad_hess(psi).ok()?;
        Some((j, g))
    }

    fn hess(&self, psi: &FieldVector) -> Option<DMatrix<f64>> {
        let (_, _, h) = self.j_grad_hess(psi).ok()?;
        Some(h)
    }
}

/// PDE-constrained Bayesian posterior: Darcy misfit plus field-prior penalty.
///
/// `J(ψ) = 1/(2σ_ε²) ‖o(ψ) - y‖² + ½ (ψ-m)ᵀ R (ψ-m)`. Each evaluation
/// allocates its own forward/adjoint workspace, so concurrent calls on
/// clones (or shared references) never corrupt results.
#[derive(Debug, Clone)]
pub struct PosteriorTarget {
    pub prior: BilaplacianPrior,
    pub problem: DarcyProblem,
    pub plan: ObservationPlan,
    pub y: DVector<f64>,
    pub sigma_eps: f64,
}

impl PosteriorTarget {
    pub fn new(
        prior: BilaplacianPrior,
        problem: DarcyProblem,
        plan: ObservationPlan,
        y: DVector<f64>,
        sigma_eps: f64,
    ) -> Result<Self, TargetError> {
        if prior.dim() != problem.mesh.n_nodes() {
            return Err(TargetError::DimensionMismatch {
                expected: problem.mesh.n_nodes(),
                got: prior.dim(),
            });
        }
        if y.len() != plan.len() {
            return Err(TargetError::DimensionMismatch { expected: plan.len(), got: y.len() });
        }
        problem.validate()?;
        Ok(PosteriorTarget { prior, problem, plan, y, sigma_eps })
    }

    /// Misfit and prior contributions separately (diagnostic use).
    pub fn split_j(&self, psi: &FieldVector) -> Result<(f64, f64), TargetError> {
        let traj = forward::solve_forward(&self.problem, psi)?;
        let obs = forward::observe(&traj, &self.plan)?;
        let misfit = 0.5 / (self.sigma_eps * self.sigma_eps) * (&obs - &self.y).norm_squared();
        let d = psi - &self.prior.mean;
        let prior_term = 0.5 * self.prior.precision().quad(&d);
        Ok((misfit, prior_term))
    }

    pub fn posterior_j_grad(&self, psi: &FieldVector) -> Result<(f64, FieldVector), TargetError> {
        let (misfit, mut grad) =
            forward::misfit_and_gradient(&self.problem, psi, &self.plan, &self.y, self.sigma_eps)?;
        let d = psi - &self.prior.mean;
        let rd = self.prior.precision().apply(&d);
        let j = misfit + 0.5 * d.dot(&rd);
        grad += rd;
        Ok((j, grad))
    }

    /// Fixed SPD preconditioner at `ψ_MAP`: the Gauss-Newton misfit Hessian
    /// regularized against the prior precision through the low-rank route.
    pub fn preconditioner_at(
        &self,
        psi_map: &FieldVector,
        relative_cutoff: f64,
    ) -> Result<SpdFactor, TargetError> {
        let h_misfit =
            forward::misfit_hessian_gn(&self.problem, psi_map, &self.plan, self.sigma_eps)?;
        let lr = spd::low_rank_hessian_relative(&h_misfit, self.prior.precision(), relative_cutoff)?;
        Ok(SpdFactor::LowRank(lr))
    }
}

impl TargetDensity for PosteriorTarget {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn j(&self, psi: &FieldVector) -> f64 {
        match self.split_j(psi) {
            Ok((misfit, prior_term)) => misfit + prior_term,
            Err(_) => f64::INFINITY,
        }
    }

    fn j_grad(&self, psi: &FieldVector) -> Option<(f64, FieldVector)> {
        self.posterior_j_grad(psi).ok()
    }

    fn hessian_at(&self, psi: &FieldVector, mode: HessianMode) -> Result<DMatrix<f64>, TargetError> {
        match mode {
            HessianMode::Analytic => Err(TargetError::ModeUnsupported(HessianMode::Analytic)),
            HessianMode::GaussNewton => {
                let h = forward::misfit_hessian_gn(&self.problem, psi, &self.plan, self.sigma_eps)?;
                Ok(h + self.prior.precision_matrix())
            }
            HessianMode::FdOfGrad => fd_hessian_of_grad(self, psi),
        }
    }
}
