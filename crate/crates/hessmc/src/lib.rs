//! Hessian-preconditioned MCMC for PDE-constrained Bayesian inversion.
//!
//! The crate bundles the pieces needed to reproduce desk-scale sampler
//! comparisons on Gaussian, log-normal, and Darcy-flow posterior targets:
//!
//! - [`spd`] — dense SPD factorizations, square-root actions, and the
//!   low-rank posterior Hessian surrogate;
//! - [`mesh`] / [`prior`] — bilinear FE assembly of an anisotropic
//!   reaction-diffusion operator, the Gaussian field prior it induces, and
//!   its Karhunen-Loève expansion;
//! - [`targets`] — the negative-log-density contract plus Gaussian,
//!   (shifted) log-normal, and PDE posterior targets;
//! - [`forward`] — transient Darcy flow with injection wells, pointwise
//!   observations, adjoint gradients, and Gauss-Newton misfit Hessians;
//! - [`map_solver`] — dense BFGS with Wolfe line search;
//! - [`samplers`] — MH, HMC, H-HMC, MALA, SN-MAP, SN-MCMC, and IS-MAP
//!   chains with shared bookkeeping and reproducible seeding;
//! - [`diagnostics`] — autocorrelation, IACT/ESS/SE, credible intervals,
//!   and the log-normal↔normal KL divergence;
//! - [`config`] / [`io`] — declarative experiment configs and the CSV/JSON
//!   formats consumed by the `hessmc` CLI.

pub mod config;
pub mod diagnostics;
pub mod forward;
pub mod io;
pub mod map_solver;
pub mod mesh;
pub mod prior;
pub mod samplers;
pub mod spd;
pub mod targets;

pub use mesh::Mesh2D;
pub use prior::{AnisotropyTensor, BilaplacianPrior, FieldVector};
pub use spd::SpdFactor;
pub use targets::TargetDensity;
