//! Chain convergence diagnostics and the log-normal/normal KL divergence.
//!
//! The integrated autocorrelation time is `τ = 1 + 2 Σ ρ_t`, truncated at
//! the first lag with `ρ_t < 0.05` (or `ρ_t <= 0`) and capped at `N/10`;
//! `N_eff = N/τ`. Two standard-error conventions are exposed: `se = σ̃/N_eff`
//! (the convention the reference tables follow) and the usual
//! `se_sqrt = σ̃/√N_eff`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::spd::{self, SpdError};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("series is constant; autocorrelation undefined")]
    ConstantSeries,
    #[error("series of length {len} too short for max_lag {max_lag}")]
    SeriesTooShort { len: usize, max_lag: usize },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error(transparent)]
    Factorization(#[from] SpdError),
}

/// IACT floor guarding against pathological anticorrelated inputs.
pub const TAU_FLOOR: f64 = 0.1;

/// Truncation threshold on ρ_t for the IACT sum.
pub const RHO_CUTOFF: f64 = 0.05;

/// Scalar-chain convergence summary.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IactStats {
    /// Integrated autocorrelation time τ (clamped to [`TAU_FLOOR`]).
    pub tau: f64,
    /// Effective sample size `N/τ`.
    pub n_eff: f64,
    /// `σ̃ / N_eff` (table convention).
    pub se: f64,
    /// `σ̃ / √N_eff` (conventional CLT standard error).
    pub se_sqrt: f64,
}

fn mean_and_centered(series: &[f64]) -> (f64, Vec<f64>) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    (mean, series.iter().map(|x| x - mean).collect())
}

fn autocov(centered: &[f64], lag: usize) -> f64 {
    let n = centered.len();
    centered[..n - lag]
        .iter()
        .zip(&centered[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// Sample autocorrelations ρ_1..ρ_max_lag with biased-by-N normalization.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>, DiagnosticsError> {
    if series.len() <= max_lag {
        return Err(DiagnosticsError::SeriesTooShort { len: series.len(), max_lag });
    }
    let (_, centered) = mean_and_centered(series);
    let c0 = autocov(&centered, 0);
    if c0 <= 0.0 {
        return Err(DiagnosticsError::ConstantSeries);
    }
    Ok((1..=max_lag).map(|t| autocov(&centered, t) / c0).collect())
}

/// IACT, ESS, and standard errors for a scalar series with chain standard
/// deviation `sigma_tilde`.
pub fn iact_ess_se(series: &[f64], sigma_tilde: f64) -> Result<IactStats, DiagnosticsError> {
    let n = series.len();
    if n < 4 {
        return Err(DiagnosticsError::TooFewSamples { need: 4, got: n });
    }
    let (_, centered) = mean_and_centered(series);
    let c0 = autocov(&centered, 0);
    if c0 <= 0.0 {
        return Err(DiagnosticsError::ConstantSeries);
    }
    let cap = (n / 10).max(1);
    let mut sum = 0.0;
    for t in 1..=cap {
        if t >= n {
            break;
        }
        let rho = autocov(&centered, t) / c0;
        if rho < RHO_CUTOFF {
            break;
        }
        sum += rho;
    }
    let tau = (1.0 + 2.0 * sum).max(TAU_FLOOR);
    let n_eff = n as f64 / tau;
    Ok(IactStats {
        tau,
        n_eff,
        se: sigma_tilde / n_eff,
        se_sqrt: sigma_tilde / n_eff.sqrt(),
    })
}

/// [`iact_ess_se`] with `σ̃` taken as the series' own sample standard
/// deviation.
pub fn scalar_chain_stats(series: &[f64]) -> Result<IactStats, DiagnosticsError> {
    let n = series.len();
    if n < 4 {
        return Err(DiagnosticsError::TooFewSamples { need: 4, got: n });
    }
    let (_, centered) = mean_and_centered(series);
    let var = centered.iter().map(|d| d * d).sum::<f64>() / (n as f64 - 1.0);
    iact_ess_se(series, var.sqrt())
}

/// Per-dimension empirical percentile interval at the given level.
///
/// `samples` is row-major, one sample per row.
pub fn credible_interval(
    samples: &DMatrix<f64>,
    level: f64,
) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    let n = samples.nrows();
    if n < 100 {
        return Err(DiagnosticsError::TooFewSamples { need: 100, got: n });
    }
    let alpha = (1.0 - level) / 2.0;
    let mut out = Vec::with_capacity(samples.ncols());
    let mut col = vec![0.0; n];
    for j in 0..samples.ncols() {
        for i in 0..n {
            col[i] = samples[(i, j)];
        }
        col.sort_by(f64::total_cmp);
        out.push((percentile_sorted(&col, alpha), percentile_sorted(&col, 1.0 - alpha)));
    }
    Ok(out)
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Moments of the log-normal `x`, `log x ~ N(m_q, Σ_q)`:
/// `m̃ᵢ = exp(m_qᵢ + Σ_qᵢᵢ/2)` and
/// `Σ̃ᵢⱼ = exp(m_qᵢ + m_qʲ + (Σ_qᵢᵢ + Σ_qʲʲ)/2)(exp(Σ_qᵢⱼ) - 1)`.
pub fn lognormal_moments(m_q: &DVector<f64>, sigma_q: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m_q.len();
    let m_tilde = DVector::from_fn(n, |i, _| (m_q[i] + 0.5 * sigma_q[(i, i)]).exp());
    let sigma_tilde = DMatrix::from_fn(n, n, |i, j| {
        (m_q[i] + m_q[j] + 0.5 * (sigma_q[(i, i)] + sigma_q[(j, j)])).exp()
            * (sigma_q[(i, j)].exp_m1())
    });
    (m_tilde, sigma_tilde)
}

/// Closed-form `D_KL(logN(m_q, Σ_q) ‖ N(m_p, Σ_p))`:
/// `-½ log(|Σ_q|/|Σ_p|) - n/2 - Σᵢ m_qᵢ + ½ tr{(Σ̃_q + δδᵀ) Σ_p⁻¹}` with
/// `δ = m̃_q - m_p`.
pub fn kld_lognormal_normal(
    m_q: &DVector<f64>,
    sigma_q: &DMatrix<f64>,
    m_p: &DVector<f64>,
    sigma_p: &DMatrix<f64>,
) -> Result<f64, DiagnosticsError> {
    let n = m_q.len() as f64;
    let fq = spd::cholesky(sigma_q)?;
    let fp = spd::cholesky(sigma_p)?;
    let (m_tilde, sigma_tilde) = lognormal_moments(m_q, sigma_q);
    let delta = &m_tilde - m_p;
    // tr{(Σ̃_q + δδᵀ) Σ_p⁻¹} column by column
    let dim = m_q.len();
    let mut trace = 0.0;
    for j in 0..dim {
        let col = sigma_tilde.column(j).into_owned() + &delta * delta[j];
        trace += fp.solve(&col)[j];
    }
    Ok(-0.5 * (fq.logdet() - fp.logdet()) - 0.5 * n - m_q.sum() + 0.5 * trace)
}
