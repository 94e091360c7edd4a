//! MCMC chain constructors: Metropolis-Hastings, HMC (with any mass
//! matrix), Hessian-preconditioned HMC, preconditioned MALA, stochastic
//! Newton with fixed MAP Hessian (SN-MAP), stochastic Newton with local
//! Hessians (SN-MCMC), and the MAP-centered independence sampler (IS-MAP).
//!
//! All methods share the acceptance rule `accept ⇔ log u < α` with
//! `α = J(ψ_k) - J(z) + Δq`, draw exactly `dim` normals followed by one
//! uniform per step (so distinct methods can share a noise stream for
//! equivalence checks), and reject out-of-support proposals by treating
//! them as `J = +∞`. Chains are bit-reproducible functions of
//! `(seed, config, target)`.

use crate::prior::FieldVector;
use crate::spd::{self, SpdFactor};
use crate::targets::TargetDensity;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("starting point is outside the target support")]
    OutOfSupportStart,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("target does not provide an analytic local Hessian")]
    HessianUnavailable,
}

/// Chain construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mh,
    Hmc,
    HHmc,
    Mala,
    SnMap,
    SnMcmc,
    IsMap,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mh => "mh",
            Method::Hmc => "hmc",
            Method::HHmc => "h_hmc",
            Method::Mala => "mala",
            Method::SnMap => "sn_map",
            Method::SnMcmc => "sn_mcmc",
            Method::IsMap => "is_map",
        }
    }

    /// Methods whose proposals need a MAP-point Hessian factor.
    pub fn needs_preconditioner(&self) -> bool {
        matches!(self, Method::HHmc | Method::Mala | Method::SnMap | Method::IsMap)
    }
}

/// Step-size and bookkeeping knobs shared by all samplers. Fields that a
/// given method does not use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub method: Method,
    /// Step size Δt (MH move scale, leapfrog step).
    pub dt: f64,
    /// MALA time step τ ∈ (0, 1].
    pub tau: f64,
    /// Leapfrog steps per proposal; 1 reproduces the single-step algebra
    /// shared with MALA and SN-MAP.
    pub leapfrog_steps: usize,
    /// Learning-rate cap for the SN family: when set, γ ~ U(0, γ_max] is
    /// drawn per step and enters both proposal densities of that step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub thinning: usize,
    /// Record every proposal point (memory-heavy; test use).
    pub record_proposals: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: Method::Mh,
            dt: 1.0,
            tau: 0.5,
            leapfrog_steps: 1,
            gamma_max: None,
            n_samples: 1000,
            seed: 0,
            thinning: 1,
            record_proposals: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.dt > 0.0) {
            return Err(SamplerError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SamplerError::InvalidConfig(format!(
                "tau must satisfy 0 < tau <= 1, got {}",
                self.tau
            )));
        }
        if self.leapfrog_steps < 1 {
            return Err(SamplerError::InvalidConfig("leapfrog_steps must be >= 1".into()));
        }
        if let Some(g) = self.gamma_max {
            if !(g > 0.0 && g <= 1.0) {
                return Err(SamplerError::InvalidConfig(format!(
                    "gamma_max must lie in (0, 1], got {g}"
                )));
            }
        }
        if self.n_samples == 0 {
            return Err(SamplerError::InvalidConfig("n_samples must be >= 1".into()));
        }
        if self.thinning == 0 {
            return Err(SamplerError::InvalidConfig("thinning must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ordered sample record with per-step acceptance bookkeeping.
///
/// `samples`/`logj` hold every `thinning`-th state (the post-move state of
/// raw step `steps[i]`); `accepted` and `alphas` cover every raw step.
#[derive(Debug, Clone)]
pub struct Chain {
    pub method: Method,
    pub dim: usize,
    pub seed: u64,
    pub thinning: usize,
    pub steps: Vec<usize>,
    pub samples: Vec<FieldVector>,
    pub logj: Vec<f64>,
    pub accepted: Vec<bool>,
    pub alphas: Vec<f64>,
    pub proposals: Option<Vec<FieldVector>>,
    pub acceptance_rate: f64,
    pub wall_time_s: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples as a row-per-draw matrix.
    pub fn samples_matrix(&self) -> DMatrix<f64> {
        let n = self.samples.len();
        let mut m = DMatrix::zeros(n, self.dim);
        for (i, s) in self.samples.iter().enumerate() {
            for j in 0..self.dim {
                m[(i, j)] = s[j];
            }
        }
        m
    }

    /// Domain-average scalar series (the default diagnostics series).
    pub fn mean_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.sum() / self.dim as f64).collect()
    }

    pub fn component_series(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[j]).collect()
    }

    /// Equality of the stochastic payload (everything except wall time).
    pub fn payload_eq(&self, other: &Chain) -> bool {
        self.method == other.method
            && self.dim == other.dim
            && self.seed == other.seed
            && self.steps == other.steps
            && self.samples == other.samples
            && self.logj == other.logj
            && self.accepted == other.accepted
            && self.alphas == other.alphas
    }
}

struct Recorder {
    cfg_thinning: usize,
    steps: Vec<usize>,
    samples: Vec<FieldVector>,
    logj: Vec<f64>,
    accepted: Vec<bool>,
    alphas: Vec<f64>,
    proposals: Option<Vec<FieldVector>>,
    n_accept: usize,
    started: Instant,
}

impl Recorder {
    fn new(cfg: &SamplerConfig) -> Self {
        let keep = cfg.n_samples / cfg.thinning + 1;
        Recorder {
            cfg_thinning: cfg.thinning,
            steps: Vec::with_capacity(keep),
            samples: Vec::with_capacity(keep),
            logj: Vec::with_capacity(keep),
            accepted: Vec::with_capacity(cfg.n_samples),
            alphas: Vec::with_capacity(cfg.n_samples),
            proposals: cfg.record_proposals.then(|| Vec::with_capacity(cfg.n_samples)),
            n_accept: 0,
            started: Instant::now(),
        }
    }

    fn record(
        &mut self,
        step: usize,
        state: &FieldVector,
        j: f64,
        accepted: bool,
        alpha: f64,
        proposal: Option<FieldVector>,
    ) {
        self.accepted.push(accepted);
        self.alphas.push(alpha);
        if accepted {
            self.n_accept += 1;
        }
        if let (Some(store), Some(z)) = (self.proposals.as_mut(), proposal) {
            store.push(z);
        }
        if step % self.cfg_thinning == 0 {
            self.steps.push(step);
            self.samples.push(state.clone());
            self.logj.push(j);
        }
    }

    fn finish(self, method: Method, dim: usize, seed: u64) -> Chain {
        let n = self.accepted.len();
        Chain {
            method,
            dim,
            seed,
            thinning: self.cfg_thinning,
            steps: self.steps,
            samples: self.samples,
            logj: self.logj,
            accepted: self.accepted,
            alphas: self.alphas,
            proposals: self.proposals,
            acceptance_rate: self.n_accept as f64 / n as f64,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        }
    }
}

fn check_start<T: TargetDensity + ?Sized>(
    target: &T,
    psi0: &FieldVector,
) -> Result<(), SamplerError> {
    if psi0.len() != target.dim() {
        return Err(SamplerError::DimensionMismatch {
            expected: target.dim(),
            got: psi0.len(),
        });
    }
    Ok(())
}

#[inline]
fn accept_draw<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> bool {
    let u: f64 = rng.random();
    u.ln() < alpha
}

/// Single-step proposal formulas shared by the Hessian-preconditioned
/// methods; the chain loops use these same expressions, and the §3.4
/// identities are tested at this argument level.
pub mod updates {
    use super::*;

    /// `ψ - γ H⁻¹ g + H^{-1/2} u`.
    pub fn sn_map_proposal(
        h: &SpdFactor,
        psi: &FieldVector,
        g: &FieldVector,
        gamma: f64,
        u: &FieldVector,
    ) -> FieldVector {
        psi - h.solve(g) * gamma + h.solve_sqrt_t(u)
    }

    /// `ψ - τ H⁻¹ g + √(2τ) H^{-1/2} u`.
    pub fn mala_proposal(
        h: &SpdFactor,
        psi: &FieldVector,
        g: &FieldVector,
        tau: f64,
        u: &FieldVector,
    ) -> FieldVector {
        psi - h.solve(g) * tau + h.solve_sqrt_t(u) * (2.0 * tau).sqrt()
    }

    /// One leapfrog drift with mass `H` and momentum `p = H^{1/2} u`:
    /// `ψ + Δt H⁻¹ (p - Δt/2 g)`.
    pub fn hhmc_leapfrog_position(
        h: &SpdFactor,
        psi: &FieldVector,
        g: &FieldVector,
        dt: f64,
        u: &FieldVector,
    ) -> FieldVector {
        let p_half = h.apply_sqrt(u) - g * (0.5 * dt);
        psi + h.solve(&p_half) * dt
    }
}

/// Metropolis-Hastings with isotropic Gaussian proposal `z = ψ + Δt·u`.
/// The proposal is symmetric, so `Δq = 0` exactly.
pub fn mh_mcmc<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    cfg.validate()?;
    check_start(target, psi0)?;
    let mut psi = psi0.clone();
    let mut j_cur = target.j(&psi);
    if !j_cur.is_finite() {
        return Err(SamplerError::OutOfSupportStart);
    }
    let dim = target.dim();
    let mut rec = Recorder::new(cfg);
    for step in 1..=cfg.n_samples {
        let u = spd::standard_normal_vector(dim, rng);
        let z = &psi + u * cfg.dt;
        let j_z = target.j(&z);
        let alpha = j_cur - j_z;
        let accepted = accept_draw(rng, alpha);
        if accepted {
            psi = z.clone();
            j_cur = j_z;
        }
        rec.record(step, &psi, j_cur, accepted, alpha, cfg.record_proposals.then(|| z));
    }
    Ok(rec.finish(Method::Mh, dim, cfg.seed))
}

/// Endpoint of a leapfrog trajectory: position, momentum, and the target
/// value/gradient there.
pub struct LeapfrogEnd {
    pub position: FieldVector,
    pub momentum: FieldVector,
    pub j: f64,
    pub grad: FieldVector,
}

/// Outcome of a leapfrog integration; a trajectory that drifts outside
/// the target support reports the offending position.
pub enum LeapfrogResult {
    Complete(LeapfrogEnd),
    OutOfSupport { position: FieldVector, step: usize },
}

impl LeapfrogResult {
    pub fn complete(self) -> Option<LeapfrogEnd> {
        match self {
            LeapfrogResult::Complete(end) => Some(end),
            LeapfrogResult::OutOfSupport { .. } => None,
        }
    }

    pub fn position(&self) -> &FieldVector {
        match self {
            LeapfrogResult::Complete(end) => &end.position,
            LeapfrogResult::OutOfSupport { position, .. } => position,
        }
    }
}

/// `l` leapfrog steps of size `dt` from `(q0, p0)` under mass factor
/// `mass`, given the gradient `g0` at `q0`.
pub fn leapfrog<T: TargetDensity + ?Sized>(
    target: &T,
    mass: &SpdFactor,
    q0: &FieldVector,
    p0: &FieldVector,
    g0: &FieldVector,
    dt: f64,
    l: usize,
) -> LeapfrogResult {
    let mut q = q0.clone();
    let mut p = p0 - g0 * (0.5 * dt);
    let mut end: Option<(f64, FieldVector)> = None;
    for step in 1..=l {
        q += mass.solve(&p) * dt;
        match target.j_grad(&q) {
            Some((j_new, g_new)) => {
                let kick = if step < l { dt } else { 0.5 * dt };
                p -= &g_new * kick;
                end = Some((j_new, g_new));
            }
            None => return LeapfrogResult::OutOfSupport { position: q, step },
        }
    }
    let (j, grad) = end.expect("l >= 1 guarantees an endpoint");
    LeapfrogResult::Complete(LeapfrogEnd { position: q, momentum: p, j, grad })
}

/// Hamiltonian Monte Carlo with Euclidean-Gaussian kinetic energy
/// `½‖M^{-1/2}p‖²` and `leapfrog_steps` drifts per proposal. The mass
/// factor `M = I` gives plain HMC; passing the MAP Hessian gives H-HMC.
pub fn hmc<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    cfg: &SamplerConfig,
    mass: &SpdFactor,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    cfg.validate()?;
    check_start(target, psi0)?;
    if mass.dim() != target.dim() {
        return Err(SamplerError::DimensionMismatch {
            expected: target.dim(),
            got: mass.dim(),
        });
    }
    let (mut j_cur, mut g_cur) = target.j_grad(psi0).ok_or(SamplerError::OutOfSupportStart)?;
    let mut psi = psi0.clone();
    let dim = target.dim();
    let mut rec = Recorder::new(cfg);
    for step in 1..=cfg.n_samples {
        let u = spd::standard_normal_vector(dim, rng);
        let p0 = mass.apply_sqrt(&u);
        let h0 = j_cur + 0.5 * mass.inv_quad(&p0);

        let end = leapfrog(target, mass, &psi, &p0, &g_cur, cfg.dt, cfg.leapfrog_steps);
        let alpha = match &end {
            LeapfrogResult::Complete(e) => h0 - (e.j + 0.5 * mass.inv_quad(&e.momentum)),
            LeapfrogResult::OutOfSupport { .. } => f64::NEG_INFINITY,
        };
        let accepted = accept_draw(rng, alpha);
        let proposal = cfg.record_proposals.then(|| end.position().clone());
        if accepted {
            let e = end.complete().expect("accepted step has a finite endpoint");
            psi = e.position;
            j_cur = e.j;
            g_cur = e.grad;
        }
        rec.record(step, &psi, j_cur, accepted, alpha, proposal);
    }
    Ok(rec.finish(Method::Hmc, dim, cfg.seed))
}

/// HMC with the MAP-point Hessian as mass matrix (momentum `~ N(0, H_MAP)`).
pub fn h_hmc<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    cfg: &SamplerConfig,
    h_map: &SpdFactor,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    let mut chain = hmc(target, psi0, cfg, h_map, rng)?;
    chain.method = Method::HHmc;
    Ok(chain)
}

/// Preconditioned MALA: `z = ψ - τ B g + √(2τ) B^{1/2} u` with `B = H⁻¹`
/// for the supplied SPD factor `H` (pass the MAP Hessian for the
/// MAP-preconditioned variant, or the identity for plain MALA).
pub fn mala<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    cfg: &SamplerConfig,
    precond: &SpdFactor,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    cfg.validate()?;
    check_start(target, psi0)?;
    let (mut j_cur, mut g_cur) = target.j_grad(psi0).ok_or(SamplerError::OutOfSupportStart)?;
    let mut psi = psi0.clone();
    let dim = target.dim();
    let tau = cfg.tau;
    let mut rec = Recorder::new(cfg);
    for step in 1..=cfg.n_samples {
        let u = spd::standard_normal_vector(dim, rng);
        let mean_fwd = &psi - precond.solve(&g_cur) * tau;
        let z = &mean_fwd + precond.solve_sqrt_t(&u) * (2.0 * tau).sqrt();
        let (alpha, moved) = match target.j_grad(&z) {
            Some((j_z, g_z)) => {
                let mean_rev = &z - precond.solve(&g_z) * tau;
                let q_fwd = -precond.quad(&(&z - &mean_fwd)) / (4.0 * tau);
                let q_rev = -precond.quad(&(&psi - &mean_rev)) / (4.0 * tau);
                (j_cur - j_z + q_rev - q_fwd, Some((j_z, g_z)))
            }
            None => (f64::NEG_INFINITY, None),
        };
        let accepted = accept_draw(rng, alpha);
        let proposal = cfg.record_proposals.then(|| z.clone());
        if accepted {
            let (j_z, g_z) = moved.expect("accepted step is in support");
            psi = z;
            j_cur = j_z;
            g_cur = g_z;
        }
        rec.record(step, &psi, j_cur, accepted, alpha, proposal);
    }
    Ok(rec.finish(Method::Mala, dim, cfg.seed))
}

/// Stochastic Newton with the fixed MAP Hessian:
/// `ψ_{k+1} = ψ_k - γ H_MAP⁻¹ g_k + H_MAP^{-1/2} u`. With the learning
/// rate enabled, γ ~ U(0, γ_max] is drawn first and the same γ enters the
/// forward and reverse proposal densities of the step, preserving detailed
/// balance conditional on γ.
pub fn sn_map<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    cfg: &SamplerConfig,
    h_map: &SpdFactor,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    cfg.validate()?;
    check_start(target, psi0)?;
    let (mut j_cur, mut g_cur) = target.j_grad(psi0).ok_or(SamplerError::OutOfSupportStart)?;
    let mut psi = psi0.clone();
    let dim = target.dim();
    let mut rec = Recorder::new(cfg);
    for step in 1..=cfg.n_samples {
        let gamma = match cfg.gamma_max {
            Some(gm) => {
                let v: f64 = rng.random();
                gm * (1.0 - v) // (0, gm]
            }
            None => 1.0,
        };
        let u = spd::standard_normal_vector(dim, rng);
        let z = updates::sn_map_proposal(h_map, &psi, &g_cur, gamma, &u);
        let (alpha, moved) = match target.j_grad(&z) {
            Some((j_z, g_z)) => {
                let mean_fwd = &psi - h_map.solve(&g_cur) * gamma;
                let mean_rev = &z - h_map.solve(&g_z) * gamma;
                let q_fwd = -0.5 * h_map.quad(&(&z - &mean_fwd));
                let q_rev = -0.5 * h_map.quad(&(&psi - &mean_rev));
                (j_cur - j_z + q_rev - q_fwd, Some((j_z, g_z)))
            }
            None => (f64::NEG_INFINITY, None),
        };
        let accepted = accept_draw(rng, alpha);
        let proposal = cfg.record_proposals.then(|| z.clone());
        if accepted {
            let (j_z, g_z) = moved.expect("accepted step is in support");
            psi = z;
            j_cur = j_z;
            g_cur = g_z;
        }
        rec.record(step, &psi, j_cur, accepted, alpha, proposal);
    }
    Ok(rec.finish(Method::SnMap, dim, cfg.seed))
}

/// Eigenvalue flooring at `1e-6·|λ|_max` that turns a local Hessian into an
/// SPD proposal precision.
pub fn floored_factor(h: &DMatrix<f64>) -> Result<SpdFactor, SamplerError> {
    let sym = (h + h.transpose()) * 0.5;
    let (values, vectors) = spd::eigendecompose_sym(&sym)
        .map_err(|e| SamplerError::InvalidConfig(format!("local Hessian eigensolve failed: {e}")))?;
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = if scale > 0.0 { 1e-6 * scale } else { 1e-6 };
    let floored = values.map(|v| v.max(floor));
    SpdFactor::from_eigen(floored, vectors)
        .map_err(|e| SamplerError::InvalidConfig(format!("flooring failed: {e}")))
}

/// Local Newton proposal parameters at `psi`: mean `ψ - H̃⁻¹g` and the
/// floored SPD factor `H̃` of the local Hessian. `None` outside the support
/// or for targets without an analytic Hessian.
pub fn local_newton_proposal<T: TargetDensity + ?Sized>(
    target: &T,
    psi: &FieldVector,
) -> Option<(FieldVector, SpdFactor)> {
    let (_, g) = target.j_grad(psi)?;
    let h = target.hess(psi)?;
    let fact = floored_factor(&h).ok()?;
    Some((psi - fact.solve(&g), fact))
}

/// Stochastic Newton MCMC with position-dependent local Hessians (analytic
/// targets only). Both the forward and reverse proposal densities use their
/// own local Hessian, including the log-determinant terms.
pub fn sn_mcmc<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    cfg.validate()?;
    check_start(target, psi0)?;
    let (mut j_cur, mut g_cur) = target.j_grad(psi0).ok_or(SamplerError::OutOfSupportStart)?;
    let h0 = target.hess(psi0).ok_or(SamplerError::HessianUnavailable)?;
    let mut fact_cur = floored_factor(&h0)?;
    let mut psi = psi0.clone();
    let dim = target.dim();
    let mut rec = Recorder::new(cfg);
    for step in 1..=cfg.n_samples {
        let u = spd::standard_normal_vector(dim, rng);
        let mean_fwd = &psi - fact_cur.solve(&g_cur);
        let z = &mean_fwd + fact_cur.solve_sqrt_t(&u);
        let mut moved = None;
        let alpha = match target.j_grad(&z) {
            Some((j_z, g_z)) => match target.hess(&z) {
                Some(h_z) => {
                    let fact_z = floored_factor(&h_z)?;
                    let mean_rev = &z - fact_z.solve(&g_z);
                    let q_fwd =
                        0.5 * fact_cur.logdet() - 0.5 * fact_cur.quad(&(&z - &mean_fwd));
                    let q_rev = 0.5 * fact_z.logdet() - 0.5 * fact_z.quad(&(&psi - &mean_rev));
                    let alpha = j_cur - j_z + q_rev - q_fwd;
                    moved = Some((j_z, g_z, fact_z));
                    alpha
                }
                None => f64::NEG_INFINITY,
            },
            None => f64::NEG_INFINITY,
        };
        let accepted = accept_draw(rng, alpha);
        let proposal = cfg.record_proposals.then(|| z.clone());
        if accepted {
            let (j_z, g_z, fact_z) = moved.expect("accepted step is in support");
            psi = z;
            j_cur = j_z;
            g_cur = g_z;
            fact_cur = fact_z;
        }
        rec.record(step, &psi, j_cur, accepted, alpha, proposal);
    }
    Ok(rec.finish(Method::SnMcmc, dim, cfg.seed))
}

/// Independence sampler with the fixed Laplace proposal `N(ψ_MAP, H_MAP⁻¹)`;
/// the chain starts at `ψ_MAP`.
pub fn is_map<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi_map: &FieldVector,
    cfg: &SamplerConfig,
    h_map: &SpdFactor,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    cfg.validate()?;
    check_start(target, psi_map)?;
    let mut psi = psi_map.clone();
    let mut j_cur = target.j(&psi);
    if !j_cur.is_finite() {
        return Err(SamplerError::OutOfSupportStart);
    }
    let dim = target.dim();
    let q_to = |x: &FieldVector| -> f64 { -0.5 * h_map.quad(&(x - psi_map)) };
    let mut q_cur = q_to(&psi);
    let mut rec = Recorder::new(cfg);
    for step in 1..=cfg.n_samples {
        let u = spd::standard_normal_vector(dim, rng);
        let z = psi_map + h_map.solve_sqrt_t(&u);
        let j_z = target.j(&z);
        let q_z = q_to(&z);
        let alpha = j_cur - j_z + q_cur - q_z;
        let accepted = accept_draw(rng, alpha);
        if accepted {
            psi = z.clone();
            j_cur = j_z;
            q_cur = q_z;
        }
        rec.record(step, &psi, j_cur, accepted, alpha, cfg.record_proposals.then(|| z));
    }
    Ok(rec.finish(Method::IsMap, dim, cfg.seed))
}

/// Dispatch on `cfg.method`. `h_map` feeds the preconditioned methods
/// (identity mass/preconditioner when omitted for `hmc`/`mala`); `psi_map`
/// overrides the IS-MAP proposal center (default `psi0`).
pub fn run_sampler<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    psi0: &FieldVector,
    cfg: &SamplerConfig,
    h_map: Option<&SpdFactor>,
    psi_map: Option<&FieldVector>,
    rng: &mut R,
) -> Result<Chain, SamplerError> {
    let identity;
    let mass = match h_map {
        Some(h) => h,
        None => {
            identity = SpdFactor::identity(target.dim());
            &identity
        }
    };
    let require = |m: Method| -> Result<(), SamplerError> {
        if h_map.is_none() {
            return Err(SamplerError::InvalidConfig(format!(
                "{} requires a MAP-point Hessian factor",
                m.as_str()
            )));
        }
        Ok(())
    };
    match cfg.method {
        Method::Mh => mh_mcmc(target, psi0, cfg, rng),
        Method::Hmc => hmc(target, psi0, cfg, mass, rng),
        Method::HHmc => {
            require(Method::HHmc)?;
            h_hmc(target, psi0, cfg, mass, rng)
        }
        Method::Mala => mala(target, psi0, cfg, mass, rng),
        Method::SnMap => {
            require(Method::SnMap)?;
            sn_map(target, psi0, cfg, mass, rng)
        }
        Method::SnMcmc => sn_mcmc(target, psi0, cfg, rng),
        Method::IsMap => {
            require(Method::IsMap)?;
            is_map(target, psi_map.unwrap_or(psi0), cfg, mass, rng)
        }
    }
}
