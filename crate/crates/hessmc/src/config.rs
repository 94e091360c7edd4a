//! Declarative experiment configuration (TOML) and target construction.
//!
//! One document describes mesh, prior, target, forward model, sampler, and
//! outputs. The schema is strict: unknown keys are rejected at parse time,
//! and cross-section consistency (e.g. a posterior target needs mesh,
//! prior, and forward sections) is validated before any computation.

use crate::forward::{DarcyProblem, FluidProps, ObservationPlan, WellSource};
use crate::mesh::Mesh2D;
use crate::prior::{AnisotropyTensor, BilaplacianPrior, FieldVector};
use crate::samplers::SamplerConfig;
use crate::spd::{SpdFactor, LOWRANK_RELATIVE_CUTOFF};
use crate::targets::{
    GaussianTarget, HessianMode, LogNormalTarget, PosteriorTarget, TargetDensity, TargetError,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config is inconsistent: {0}")]
    Invalid(String),
    #[error("failed to build from config: {0}")]
    Build(String),
}

impl From<TargetError> for ConfigError {
    fn from(e: TargetError) -> Self {
        ConfigError::Build(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    /// Domain extents in meters.
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub gamma: f64,
    /// Reaction coefficient in units of `1/length_unit²`.
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    /// Anisotropy angle in radians.
    pub beta: f64,
    pub mean: f64,
    /// Meters per prior length unit (1000 = operator coefficients per km).
    #[serde(default = "default_length_unit")]
    pub length_unit: f64,
}

fn default_length_unit() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Gaussian,
    Lognormal,
    Posterior,
}

/// Scalar broadcast or explicit vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScalarOrVec {
    fn to_vector(&self, dim: usize, what: &str) -> Result<DVector<f64>, ConfigError> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(DVector::from_element(dim, *v)),
            ScalarOrVec::Vector(v) => {
                if v.len() != dim {
                    return Err(ConfigError::Invalid(format!(
                        "{what} has {} entries but dim = {dim}",
                        v.len()
                    )));
                }
                Ok(DVector::from_vec(v.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    /// Dimension for analytic targets; posterior targets take it from the
    /// mesh. When covariance = "prior", dim defaults to the mesh node count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Gaussian mean / log-normal log-mean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<ScalarOrVec>,
    /// Isotropic variance, ...
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    /// ... per-axis variances, ...
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<f64>>,
    /// ... or a full covariance matrix (row major).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// "explicit" (default) or "prior": covariance = assembled prior R⁻¹.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<String>,
    /// Log-normal support shift c >= 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellConfig {
    pub x: f64,
    pub y: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobConfig {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub base: f64,
    #[serde(default)]
    pub blobs: Vec<BlobConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsConfig {
    /// Near-uniform interior grid `[count_x, count_y]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    /// Explicit coordinates (overrides `grid`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    #[serde(default = "default_bulk_modulus")]
    pub bulk_modulus: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_viscosity")]
    pub viscosity: f64,
    #[serde(default = "default_porosity")]
    pub porosity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<[f64; 2]>,
    pub top_pressure: f64,
    /// Defaults to `top_pressure`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_pressure: Option<f64>,
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub wells: Vec<WellConfig>,
    pub sigma_eps: f64,
    /// Noise level used when synthesizing observations; defaults to
    /// `sigma_eps` (set 0 for noiseless data with a finite likelihood σ).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    pub observations: ObservationsConfig,
    /// Seed for synthetic observation noise.
    #[serde(default)]
    pub noise_seed: u64,
    /// Hidden truth for synthetic data generation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
    /// Observations CSV produced by `gen-data`; when set, `sample` and
    /// `find-map` read data from it instead of synthesizing inline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
}

fn default_bulk_modulus() -> f64 {
    2.27e9
}
fn default_density() -> f64 {
    1000.0
}
fn default_viscosity() -> f64 {
    1e-3
}
fn default_porosity() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    /// "x" for a vertical line x = value, "y" for a horizontal one.
    pub axis: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsConfig {
    pub dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionConfig>,
    pub probes: Vec<[f64; 2]>,
    pub level: f64,
    pub max_lag: usize,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            dir: "out".into(),
            section: None,
            probes: Vec::new(),
            level: 0.95,
            max_lag: 100,
        }
    }
}

/// Full experiment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    pub target: TargetConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardConfig>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sampler
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.outputs.level > 0.0 && self.outputs.level < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "outputs.level must lie in (0,1), got {}",
                self.outputs.level
            )));
        }
        let uses_prior_cov = self.target.covariance.as_deref() == Some("prior");
        if let Some(cov) = self.target.covariance.as_deref() {
            if cov != "prior" && cov != "explicit" {
                return Err(ConfigError::Invalid(format!(
                    "target.covariance must be \"explicit\" or \"prior\", got {cov:?}"
                )));
            }
        }
        match self.target.kind {
            TargetKind::Posterior => {
                if self.mesh.is_none() || self.prior.is_none() || self.forward.is_none() {
                    return Err(ConfigError::Invalid(
                        "posterior target needs [mesh], [prior], and [forward] sections".into(),
                    ));
                }
                let fwd = self.forward.as_ref().unwrap();
                if fwd.truth.is_none() && fwd.data_file.is_none() {
                    return Err(ConfigError::Invalid(
                        "posterior target needs forward.truth or forward.data_file".into(),
                    ));
                }
            }
            TargetKind::Gaussian | TargetKind::Lognormal => {
                if uses_prior_cov {
                    if self.mesh.is_none() || self.prior.is_none() {
                        return Err(ConfigError::Invalid(
                            "covariance = \"prior\" needs [mesh] and [prior] sections".into(),
                        ));
                    }
                } else {
                    let have = self.target.variance.is_some()
                        || self.target.diag.is_some()
                        || self.target.matrix.is_some();
                    if !have {
                        return Err(ConfigError::Invalid(
                            "analytic target needs variance, diag, or matrix".into(),
                        ));
                    }
                    if self.target.dim.is_none() && self.target.diag.is_none()
                        && self.target.matrix.is_none()
                    {
                        return Err(ConfigError::Invalid(
                            "scalar-variance target needs an explicit dim".into(),
                        ));
                    }
                }
                if self.target.kind == TargetKind::Gaussian && self.target.shift.is_some() {
                    return Err(ConfigError::Invalid("shift applies to log-normal targets only".into()));
                }
            }
        }
        if let Some(f) = &self.forward {
            if f.observations.grid.is_none() && f.observations.points.is_none() {
                return Err(ConfigError::Invalid(
                    "forward.observations needs grid or points".into(),
                ));
            }
            if f.sigma_eps < 0.0 {
                return Err(ConfigError::Invalid("sigma_eps must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh2D, ConfigError> {
        let m = self
            .mesh
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [mesh] section".into()))?;
        Mesh2D::new(m.nx, m.ny, m.lx, m.ly).map_err(|e| ConfigError::Build(e.to_string()))
    }

    pub fn build_prior(&self) -> Result<BilaplacianPrior, ConfigError> {
        let p = self
            .prior
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [prior] section".into()))?;
        let mesh = self.build_mesh()?;
        let psi = AnisotropyTensor::new(p.a, p.b, p.beta)
            .map_err(|e| ConfigError::Build(e.to_string()))?;
        BilaplacianPrior::with_constant_mean(
            &mesh.scaled(p.length_unit),
            p.gamma,
            p.delta,
            psi,
            p.mean,
        )
        .map_err(|e| ConfigError::Build(e.to_string()))
    }

    pub fn build_problem(&self) -> Result<DarcyProblem, ConfigError> {
        let f = self
            .forward
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [forward] section".into()))?;
        let mesh = self.build_mesh()?;
        let initial = f.initial_pressure.unwrap_or(f.top_pressure);
        let problem = DarcyProblem {
            fluid: FluidProps {
                bulk_modulus: f.bulk_modulus,
                density: f.density,
                viscosity: f.viscosity,
            },
            porosity: f.porosity,
            gravity: f.gravity.unwrap_or([0.0, 0.0]),
            top_pressure: f.top_pressure,
            initial_pressure: DVector::from_element(mesh.n_nodes(), initial),
            wells: f
                .wells
                .iter()
                .map(|w| WellSource { x: w.x, y: w.y, rate: w.rate })
                .collect(),
            horizon: f.horizon,
            n_steps: f.n_steps,
            mesh,
            mass_cache: Default::default(),
        };
        problem.validate().map_err(|e| ConfigError::Build(e.to_string()))?;
        Ok(problem)
    }

    pub fn build_plan(&self) -> Result<ObservationPlan, ConfigError> {
        let f = self
            .forward
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [forward] section".into()))?;
        if let Some(points) = &f.observations.points {
            return Ok(ObservationPlan {
                points: points.iter().map(|p| (p[0], p[1])).collect(),
            });
        }
        let [cx, cy] = f.observations.grid.expect("validated");
        Ok(ObservationPlan::interior_grid(&self.build_mesh()?, cx, cy))
    }

    /// Hidden truth field for synthetic data generation.
    pub fn build_truth(&self) -> Result<FieldVector, ConfigError> {
        let f = self
            .forward
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [forward] section".into()))?;
        let t = f
            .truth
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing forward.truth section".into()))?;
        let mesh = self.build_mesh()?;
        let blobs: Vec<(f64, f64, f64, f64)> = t
            .blobs
            .iter()
            .map(|b| (b.x, b.y, b.radius, b.amplitude))
            .collect();
        Ok(crate::forward::blob_field(&mesh, t.base, &blobs))
    }

    fn analytic_dim(&self) -> Result<usize, ConfigError> {
        if self.target.covariance.as_deref() == Some("prior") {
            return Ok(self.build_mesh()?.n_nodes());
        }
        if let Some(d) = self.target.dim {
            return Ok(d);
        }
        if let Some(diag) = &self.target.diag {
            return Ok(diag.len());
        }
        if let Some(m) = &self.target.matrix {
            return Ok(m.len());
        }
        Err(ConfigError::Invalid("cannot infer target dimension".into()))
    }

    fn covariance_matrix(&self, dim: usize) -> Result<DMatrix<f64>, ConfigError> {
        if self.target.covariance.as_deref() == Some("prior") {
            let prior = self.build_prior()?;
            let n = prior.dim();
            let mut cov = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                cov.set_column(j, &prior.precision().solve(&e));
            }
            return Ok((&cov + cov.transpose()) * 0.5);
        }
        if let Some(rows) = &self.target.matrix {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(ConfigError::Invalid("target.matrix is not dim×dim".into()));
            }
            return Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]));
        }
        if let Some(diag) = &self.target.diag {
            if diag.len() != dim {
                return Err(ConfigError::Invalid("target.diag length != dim".into()));
            }
            return Ok(DMatrix::from_diagonal(&DVector::from_vec(diag.clone())));
        }
        let v = self
            .target
            .variance
            .ok_or_else(|| ConfigError::Invalid("no covariance specification".into()))?;
        Ok(DMatrix::identity(dim, dim) * v)
    }

    /// Observations for the posterior target: read `data_file` when present,
    /// otherwise synthesize from the truth field with `noise_seed`.
    pub fn observations(
        &self,
        config_dir: &Path,
    ) -> Result<(ObservationPlan, DVector<f64>), ConfigError> {
        let f = self
            .forward
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [forward] section".into()))?;
        if let Some(file) = &f.data_file {
            let path = config_dir.join(file);
            let (points, values) = crate::io::read_observations_csv(&path)
                .map_err(|e| ConfigError::Build(e.to_string()))?;
            return Ok((ObservationPlan { points }, values));
        }
        let plan = self.build_plan()?;
        let truth = self.build_truth()?;
        let problem = self.build_problem()?;
        let noise = f.noise_sigma.unwrap_or(f.sigma_eps);
        let y = crate::forward::synth_data(&problem, &truth, &plan, noise, f.noise_seed)
            .map_err(|e| ConfigError::Build(e.to_string()))?;
        Ok((plan, y))
    }

    /// Instantiate the configured target. `config_dir` resolves relative
    /// data-file paths.
    pub fn build_target(&self, config_dir: &Path) -> Result<TargetInstance, ConfigError> {
        match self.target.kind {
            TargetKind::Gaussian => {
                let dim = self.analytic_dim()?;
                let mean = self
                    .target
                    .mean
                    .as_ref()
                    .unwrap_or(&ScalarOrVec::Scalar(0.0))
                    .to_vector(dim, "target.mean")?;
                let cov = self.covariance_matrix(dim)?;
                Ok(TargetInstance::Gaussian(GaussianTarget::from_covariance(mean, cov)?))
            }
            TargetKind::Lognormal => {
                let dim = self.analytic_dim()?;
                let mean = self
                    .target
                    .mean
                    .as_ref()
                    .unwrap_or(&ScalarOrVec::Scalar(0.0))
                    .to_vector(dim, "target.mean")?;
                let cov = self.covariance_matrix(dim)?;
                let shift = self.target.shift.unwrap_or(0.0);
                if shift < 0.0 {
                    return Err(ConfigError::Invalid("shift must be >= 0".into()));
                }
                Ok(TargetInstance::LogNormal(LogNormalTarget::new(mean, cov, shift)?))
            }
            TargetKind::Posterior => {
                let prior = self.build_prior()?;
                let problem = self.build_problem()?;
                let f = self.forward.as_ref().unwrap();
                let (plan, y) = self.observations(config_dir)?;
                Ok(TargetInstance::Posterior(PosteriorTarget::new(
                    prior,
                    problem,
                    plan,
                    y,
                    f.sigma_eps,
                )?))
            }
        }
    }
}

/// A configured target with uniform access to sampler preconditioners.
#[derive(Debug, Clone)]
pub enum TargetInstance {
    Gaussian(GaussianTarget),
    LogNormal(LogNormalTarget),
    Posterior(PosteriorTarget),
}

impl TargetInstance {
    /// SPD factor of the Hessian at `psi_map`, built the way each target
    /// family supports: exact precision (Gaussian), floored analytic
    /// Hessian (log-normal), or low-rank-regularized Gauss-Newton
    /// (posterior).
    pub fn preconditioner_at(&self, psi_map: &FieldVector) -> Result<SpdFactor, ConfigError> {
        match self {
            TargetInstance::Gaussian(t) => Ok(t.precision().clone()),
            TargetInstance::LogNormal(t) => {
                let h = t
                    .hess(psi_map)
                    .ok_or_else(|| ConfigError::Build("MAP point outside support".into()))?;
                let (values, vectors) = crate::spd::eigendecompose_sym(&h)
                    .map_err(|e| ConfigError::Build(e.to_string()))?;
                let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let floor = if scale > 0.0 { 1e-6 * scale } else { 1e-6 };
                let floored = values.map(|v| v.max(floor));
                SpdFactor::from_eigen(floored, vectors)
                    .map_err(|e| ConfigError::Build(e.to_string()))
            }
            TargetInstance::Posterior(t) => {
                Ok(t.preconditioner_at(psi_map, LOWRANK_RELATIVE_CUTOFF)?)
            }
        }
    }

    /// Closed-form MAP where one exists (analytic targets).
    pub fn closed_form_map(&self) -> Option<FieldVector> {
        match self {
            TargetInstance::Gaussian(t) => Some(t.mean().clone()),
            TargetInstance::LogNormal(t) => Some(t.map_point()),
            TargetInstance::Posterior(_) => None,
        }
    }

    /// A sensible optimizer start: the prior mean for posterior targets,
    /// the closed-form center otherwise.
    pub fn default_start(&self) -> FieldVector {
        match self {
            TargetInstance::Gaussian(t) => t.mean().clone(),
            TargetInstance::LogNormal(t) => t.map_point(),
            TargetInstance::Posterior(t) => t.prior.mean.clone(),
        }
    }

    pub fn mesh(&self) -> Option<&Mesh2D> {
        match self {
            TargetInstance::Posterior(t) => Some(&t.problem.mesh),
            _ => None,
        }
    }
}

impl TargetDensity for TargetInstance {
    fn dim(&self) -> usize {
        match self {
            TargetInstance::Gaussian(t) => t.dim(),
            TargetInstance::LogNormal(t) => t.dim(),
            TargetInstance::Posterior(t) => t.dim(),
        }
    }

    fn j(&self, psi: &FieldVector) -> f64 {
        match self {
            TargetInstance::Gaussian(t) => t.j(psi),
            TargetInstance::LogNormal(t) => t.j(psi),
            TargetInstance::Posterior(t) => t.j(psi),
        }
    }

    fn j_grad(&self, psi: &FieldVector) -> Option<(f64, FieldVector)> {
        match self {
            TargetInstance::Gaussian(t) => t.j_grad(psi),
            TargetInstance::LogNormal(t) => t.j_grad(psi),
            TargetInstance::Posterior(t) => t.j_grad(psi),
        }
    }

    fn hess(&self, psi: &FieldVector) -> Option<DMatrix<f64>> {
        match self {
            TargetInstance::Gaussian(t) => t.hess(psi),
            TargetInstance::LogNormal(t) => t.hess(psi),
            TargetInstance::Posterior(t) => t.hess(psi),
        }
    }

    fn hessian_at(&self, psi: &FieldVector, mode: HessianMode) -> Result<DMatrix<f64>, TargetError> {
        match self {
            TargetInstance::Gaussian(t) => t.hessian_at(psi, mode),
            TargetInstance::LogNormal(t) => t.hessian_at(psi, mode),
            TargetInstance::Posterior(t) => t.hessian_at(psi, mode),
        }
    }
}
