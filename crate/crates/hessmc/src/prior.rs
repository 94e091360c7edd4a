//! Anisotropic Laplacian-like operator and the discrete Gaussian field prior.
//!
//! The operator `A = -γ div(Ψ ∇·) + δ I` with natural (no-flux) boundary
//! conditions is assembled on a [`Mesh2D`] with bilinear elements. The field
//! prior is the Gaussian with covariance `A⁻²`; its discrete precision is
//! `R = Kᵀ N⁻¹ K` where `N` is the mass matrix and `K` the
//! stiffness-reaction matrix, and sampling goes through `R⁻¹ᐟ²` so the
//! finite-dimensional distribution is exact.

use crate::mesh::{shape_gradients, shape_values, Mesh2D, GAUSS_2};
use crate::spd::{self, SpdError, SpdFactor};
use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use thiserror::Error;

/// Nodal coefficients of a discretized field.
pub type FieldVector = DVector<f64>;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("anisotropy parameters must be positive (a={0}, b={1})")]
    NonPositiveParameter(f64, f64),
    #[error("gamma must be >= 0 and delta > 0 (gamma={0}, delta={1})")]
    InvalidOperatorParams(f64, f64),
    #[error("requested rank {r} outside 1..={n}")]
    RankOutOfRange { r: usize, n: usize },
    #[error("mean has {got} entries, mesh has {expected} nodes")]
    MeanDimension { expected: usize, got: usize },
    #[error(transparent)]
    Factorization(#[from] SpdError),
}

/// Anisotropy tensor `Ψ = a (I - (1 - b/a) m̂ m̂ᵀ)` with `m̂ = (cos β, sin β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropyTensor {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
}

impl AnisotropyTensor {
    pub fn new(a: f64, b: f64, beta: f64) -> Result<Self, PriorError> {
        if a <= 0.0 || b <= 0.0 {
            return Err(PriorError::NonPositiveParameter(a, b));
        }
        Ok(AnisotropyTensor { a, b, beta })
    }

    pub fn isotropic() -> Self {
        AnisotropyTensor { a: 1.0, b: 1.0, beta: 0.0 }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        anisotropy_matrix(self.a, self.b, self.beta).expect("validated at construction")
    }
}

/// Closed-form 2-D anisotropy matrix with eigenvalues `{a, b}`.
pub fn anisotropy_matrix(a: f64, b: f64, beta: f64) -> Result<Matrix2<f64>, PriorError> {
    if a <= 0.0 || b <= 0.0 {
        return Err(PriorError::NonPositiveParameter(a, b));
    }
    let (s, c) = beta.sin_cos();
    Ok(Matrix2::new(
        a * s * s + b * c * c,
        (b - a) * s * c,
        (b - a) * s * c,
        b * s * s + a * c * c,
    ))
}

/// Mass matrix `N_ij = ∫ φᵢ φⱼ dx` (2×2 Gauss per cell, exact for bilinears).
pub fn assemble_mass(mesh: &Mesh2D) -> DMatrix<f64> {
    let n = mesh.n_nodes();
    let mut mass = DMatrix::zeros(n, n);
    let (hx, hy) = (mesh.hx(), mesh.hy());
    let jac = 0.25 * hx * hy;
    // element matrix is identical for every cell of a structured mesh
    let mut elem = [[0.0_f64; 4]; 4];
    for &xi in &GAUSS_2 {
        for &eta in &GAUSS_2 {
            let s = shape_values(xi, eta);
            for i in 0..4 {
                for j in 0..4 {
                    elem[i][j] += s[i] * s[j] * jac;
                }
            }
        }
    }
    for (ci, cj) in mesh.cells() {
        let nodes = mesh.cell_nodes(ci, cj);
        for i in 0..4 {
            for j in 0..4 {
                mass[(nodes[i], nodes[j])] += elem[i][j];
            }
        }
    }
    mass
}

/// Stiffness-reaction matrix `K_ij = ∫ [γ Ψ∇φᵢ·∇φⱼ + δ φᵢφⱼ] dx`.
pub fn assemble_stiffness(
    mesh: &Mesh2D,
    gamma: f64,
    delta: f64,
    psi: &AnisotropyTensor,
) -> Result<DMatrix<f64>, PriorError> {
    if gamma < 0.0 || delta <= 0.0 {
        return Err(PriorError::InvalidOperatorParams(gamma, delta));
    }
    let n = mesh.n_nodes();
    let p = psi.matrix();
    let (hx, hy) = (mesh.hx(), mesh.hy());
    let jac = 0.25 * hx * hy;
    let mut elem = [[0.0_f64; 4]; 4];
    for &xi in &GAUSS_2 {
        for &eta in &GAUSS_2 {
            let s = shape_values(xi, eta);
            let g = shape_gradients(xi, eta, hx, hy);
            for i in 0..4 {
                let pg = [
                    p[(0, 0)] * g[i][0] + p[(0, 1)] * g[i][1],
                    p[(1, 0)] * g[i][0] + p[(1, 1)] * g[i][1],
                ];
                for j in 0..4 {
                    let diff = pg[0] * g[j][0] + pg[1] * g[j][1];
                    elem[i][j] += (gamma * diff + delta * s[i] * s[j]) * jac;
                }
            }
        }
    }
    let mut k = DMatrix::zeros(n, n);
    for (ci, cj) in mesh.cells() {
        let nodes = mesh.cell_nodes(ci, cj);
        for i in 0..4 {
            for j in 0..4 {
                k[(nodes[i], nodes[j])] += elem[i][j];
            }
        }
    }
    Ok(k)
}

/// Karhunen-Loève expansion of the prior covariance: eigenpairs of `R⁻¹N`
/// in the `N`-weighted inner product, modes `N`-orthonormal.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    /// Covariance eigenvalues λⱼ², descending.
    pub lambda_sq: Vec<f64>,
    /// N-orthonormal modes, one column per eigenpair.
    pub modes: DMatrix<f64>,
}

impl KlExpansion {
    /// Truncated draw `θ = m + Σ λⱼ ξⱼ φ̃ⱼ` with `ξⱼ ~ N(0,1)`.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &FieldVector, rng: &mut R) -> FieldVector {
        let r = self.lambda_sq.len();
        let xi = spd::standard_normal_vector(r, rng);
        let mut out = mean.clone();
        for j in 0..r {
            out += self.modes.column(j) * (self.lambda_sq[j].sqrt() * xi[j]);
        }
        out
    }
}

/// Discrete Gaussian prior `N(mean, R⁻¹)` with `R = Kᵀ N⁻¹ K`.
#[derive(Debug, Clone)]
pub struct BilaplacianPrior {
    pub mesh: Mesh2D,
    pub gamma: f64,
    pub delta: f64,
    pub psi: AnisotropyTensor,
    pub mean: FieldVector,
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    precision_matrix: DMatrix<f64>,
    precision: SpdFactor,
}

/// Assembles the prior on `mesh`. A constant mean may be broadcast with
/// [`BilaplacianPrior::with_constant_mean`].
pub fn build_prior(
    mesh: &Mesh2D,
    gamma: f64,
    delta: f64,
    psi: AnisotropyTensor,
    mean: FieldVector,
) -> Result<BilaplacianPrior, PriorError> {
    let n = mesh.n_nodes();
    if mean.len() != n {
        return Err(PriorError::MeanDimension { expected: n, got: mean.len() });
    }
    let mass = assemble_mass(mesh);
    let stiffness = assemble_stiffness(mesh, gamma, delta, &psi)?;
    let mass_chol = spd::cholesky(&mass)?;
    // R = Kᵀ N⁻¹ K
    let mut ninv_k = DMatrix::zeros(n, n);
    for j in 0..n {
        ninv_k.set_column(j, &mass_chol.solve(&stiffness.column(j).into_owned()));
    }
    let mut r = stiffness.transpose() * ninv_k;
    r = (&r + r.transpose()) * 0.5;
    let precision = spd::cholesky(&r)?;
    Ok(BilaplacianPrior {
        mesh: mesh.clone(),
        gamma,
        delta,
        psi,
        mean,
        mass,
        stiffness,
        precision_matrix: r,
        precision,
    })
}

impl BilaplacianPrior {
    pub fn with_constant_mean(
        mesh: &Mesh2D,
        gamma: f64,
        delta: f64,
        psi: AnisotropyTensor,
        mean: f64,
    ) -> Result<Self, PriorError> {
        build_prior(mesh, gamma, delta, psi, DVector::from_element(mesh.n_nodes(), mean))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mass_matrix(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiffness_matrix(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn precision_matrix(&self) -> &DMatrix<f64> {
        &self.precision_matrix
    }

    pub fn precision(&self) -> &SpdFactor {
        &self.precision
    }

    /// Log-density `π(ψ) = -½ (ψ-m)ᵀ R (ψ-m)` with the additive constant
    /// fixed to zero; only differences are consumed downstream.
    pub fn log_density(&self, psi: &FieldVector) -> f64 {
        let d = psi - &self.mean;
        -0.5 * self.precision.quad(&d)
    }

    /// Gradient of the log-density, `-R (ψ-m)`.
    pub fn log_density_grad(&self, psi: &FieldVector) -> FieldVector {
        -self.precision.apply(&(psi - &self.mean))
    }

    /// Draw `ψ = m + R⁻¹ᐟ² u`, `u` white noise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldVector {
        &self.mean + self.precision.sample(rng)
    }

    /// Leading `r` eigenpairs of the covariance in the N-weighted geometry:
    /// `R⁻¹ N φ̃ = λ² φ̃` with `φ̃ᵢᵀ N φ̃ⱼ = δᵢⱼ`.
    pub fn kl_expansion(&self, r: usize) -> Result<KlExpansion, PriorError> {
        let n = self.dim();
        if r < 1 || r > n {
            return Err(PriorError::RankOutOfRange { r, n });
        }
        // Generalized problem R φ = μ N φ reduced with N = Lᴺ Lᴺᵀ:
        // (Lᴺ⁻¹ R Lᴺ⁻ᵀ) w = μ w, φ = Lᴺ⁻ᵀ w, λ² = 1/μ.
        let mass_chol = spd::cholesky(&self.mass)?;
        let mut g = DMatrix::zeros(n, n);
        for j in 0..n {
            let col = self.precision_matrix.column(j).into_owned();
            g.set_column(j, &mass_chol.solve_sqrt(&col));
        }
        let gt = g.transpose();
        let mut sym = DMatrix::zeros(n, n);
        for j in 0..n {
            let col = gt.column(j).into_owned();
            sym.set_column(j, &mass_chol.solve_sqrt(&col));
        }
        sym = (&sym + sym.transpose()) * 0.5;
        let (values, vectors) = spd::eigendecompose_sym(&sym)?;
        // μ ascending ⇔ λ² descending: take the tail of the descending list.
        let mut lambda_sq = Vec::with_capacity(r);
        let mut modes = DMatrix::zeros(n, r);
        for k in 0..r {
            let idx = n - 1 - k;
            let mu = values[idx];
            lambda_sq.push(1.0 / mu);
            let w = vectors.column(idx).into_owned();
            modes.set_column(k, &mass_chol.solve_sqrt_t(&w));
        }
        Ok(KlExpansion { lambda_sq, modes })
    }
}
