//! Transient Darcy flow in a porous layer with injection wells.
//!
//! The pressure `p` obeys `c ∂p/∂t - div((e^{-θ}/μ)(∇p + ρ_f g)) = q` with
//! storage `c = φ_f/K_f`, log-permeability field `θ = -log κ`, Dirichlet
//! pressure on the top edge and natural (no-flux) conditions elsewhere.
//! Implicit Euler in time yields one SPD solve per step; the matrix is
//! factorized once per field evaluation and reused across steps.
//!
//! Gradients of the data misfit follow the discretize-then-optimize route:
//! the adjoint of the assembled discrete system is solved backward in time
//! and the flux-sensitivity integral
//! `∂/∂θ[(e^{-θ}/μ)(∇p + ρ_f g)·∇p̃] = -(e^{-θ}/μ)(∇p + ρ_f g)·∇p̃`
//! is accumulated per basis function, so the gradient is exactly consistent
//! with [`solve_forward`].

use crate::mesh::{shape_gradients, shape_values, Mesh2D, MeshError, GAUSS_2};
use crate::prior::{assemble_mass, FieldVector};
use crate::spd::{self, SpdError, SpdFactor};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("linear solver breakdown at time step {step}")]
    ForwardSolveFailure { step: usize },
    #[error(transparent)]
    Point(#[from] MeshError),
    #[error("problem is ill-posed: {0}")]
    IllPosed(String),
    #[error("field has {got} entries, mesh has {expected} nodes")]
    FieldDimension { expected: usize, got: usize },
}

/// Fluid phase constants (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    /// Bulk modulus `K_f` (Pa).
    pub bulk_modulus: f64,
    /// Density `ρ_f` (kg/m³).
    pub density: f64,
    /// Dynamic viscosity `μ` (Pa·s).
    pub viscosity: f64,
}

impl Default for FluidProps {
    fn default() -> Self {
        // reference values for a water-saturated layer
        FluidProps {
            bulk_modulus: 2.27e9,
            density: 1000.0,
            viscosity: 1e-3,
        }
    }
}

/// Point injection well at `(x, y)` with volumetric rate per unit thickness
/// (m²/s); the load is distributed bilinearly into the containing cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellSource {
    pub x: f64,
    pub y: f64,
    pub rate: f64,
}

/// Forward problem definition: mesh, fluid, boundary/initial data, sources,
/// and time discretization. Immutable during evaluations.
#[derive(Debug, Clone)]
pub struct DarcyProblem {
    pub mesh: Mesh2D,
    pub fluid: FluidProps,
    /// Fluid volume fraction `φ_f`; storage is `c = φ_f / K_f`.
    pub porosity: f64,
    /// Gravity vector entering the flux as `ρ_f g` (m/s²).
    pub gravity: [f64; 2],
    /// Dirichlet pressure on the top edge `y = ly` (Pa).
    pub top_pressure: f64,
    /// Initial pressure field (Pa), one value per node.
    pub initial_pressure: FieldVector,
    pub wells: Vec<WellSource>,
    /// Time horizon `T` (s), discretized with `n_steps` implicit Euler steps.
    pub horizon: f64,
    pub n_steps: usize,
    /// Mass matrix cache; θ-independent, filled on first use.
    #[doc(hidden)]
    pub mass_cache: OnceLock<DMatrix<f64>>,
}

impl DarcyProblem {
    pub fn storage(&self) -> f64 {
        self.porosity / self.fluid.bulk_modulus
    }

    fn mass(&self) -> &DMatrix<f64> {
        self.mass_cache.get_or_init(|| assemble_mass(&self.mesh))
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<(), ForwardError> {
        if self.n_steps < 1 {
            return Err(ForwardError::IllPosed("n_steps must be >= 1".into()));
        }
        if self.storage() <= 0.0 {
            return Err(ForwardError::IllPosed("storage c must be positive".into()));
        }
        if self.horizon <= 0.0 {
            return Err(ForwardError::IllPosed("horizon must be positive".into()));
        }
        if self.initial_pressure.len() != self.mesh.n_nodes() {
            return Err(ForwardError::FieldDimension {
                expected: self.mesh.n_nodes(),
                got: self.initial_pressure.len(),
            });
        }
        for (i, w) in self.wells.iter().enumerate() {
            self.mesh.locate(w.x, w.y, i)?;
        }
        Ok(())
    }
}

/// Pointwise pressure observations at the final time horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationPlan {
    pub points: Vec<(f64, f64)>,
}

impl ObservationPlan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Near-uniform interior grid of `count_x × count_y` points.
    pub fn interior_grid(mesh: &Mesh2D, count_x: usize, count_y: usize) -> Self {
        let mut points = Vec::with_capacity(count_x * count_y);
        for j in 0..count_y {
            for i in 0..count_x {
                let x = (i as f64 + 0.5) / count_x as f64 * mesh.lx;
                let y = (j as f64 + 0.5) / count_y as f64 * mesh.ly;
                points.push((x, y));
            }
        }
        ObservationPlan { points }
    }
}

/// Pressure fields at `t = 0, dt, …, T`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mesh: Mesh2D,
    pub fields: Vec<FieldVector>,
}

impl Trajectory {
    pub fn final_field(&self) -> &FieldVector {
        self.fields.last().expect("trajectory has at least the initial field")
    }
}

/// Assembled operators for one field evaluation; shared by the forward and
/// adjoint sweeps.
struct Operators {
    free: Vec<usize>,
    dirichlet: Vec<usize>,
    /// Cholesky factor of the free-free block of `Mc/dt + A(θ)`.
    system: SpdFactor,
    /// Full-storage matrix `Mc/dt + A(θ)` (Dirichlet coupling; the mass
    /// balance test reads boundary fluxes from it).
    #[cfg_attr(not(test), allow(dead_code))]
    s_full: DMatrix<f64>,
    /// Full-storage `Mc/dt`.
    mc_dt: DMatrix<f64>,
    /// Constant part of the free right-hand side (sources, gravity load,
    /// Dirichlet coupling).
    rhs_const_f: DVector<f64>,
}

fn check_theta(prob: &DarcyProblem, theta: &FieldVector) -> Result<(), ForwardError> {
    if theta.len() != prob.mesh.n_nodes() {
        return Err(ForwardError::FieldDimension {
            expected: prob.mesh.n_nodes(),
            got: theta.len(),
        });
    }
    Ok(())
}

fn assemble_operators(prob: &DarcyProblem, theta: &FieldVector) -> Result<Operators, ForwardError> {
    prob.validate()?;
    check_theta(prob, theta)?;
    let mesh = &prob.mesh;
    let n = mesh.n_nodes();
    let (hx, hy) = (mesh.hx(), mesh.hy());
    let jac = 0.25 * hx * hy;
    let inv_mu = 1.0 / prob.fluid.viscosity;
    let rho_g = [
        prob.fluid.density * prob.gravity[0],
        prob.fluid.density * prob.gravity[1],
    ];

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b_g = DVector::<f64>::zeros(n);
    for (ci, cj) in mesh.cells() {
        let nodes = mesh.cell_nodes(ci, cj);
        for &xi in &GAUSS_2 {
            for &eta in &GAUSS_2 {
                let s = shape_values(xi, eta);
                let g = shape_gradients(xi, eta, hx, hy);
                let theta_q: f64 = (0..4).map(|k| s[k] * theta[nodes[k]]).sum();
                let mobility = (-theta_q).exp() * inv_mu;
                for i in 0..4 {
                    for j in 0..4 {
                        a[(nodes[i], nodes[j])] +=
                            mobility * (g[i][0] * g[j][0] + g[i][1] * g[j][1]) * jac;
                    }
                    b_g[nodes[i]] -= mobility * (rho_g[0] * g[i][0] + rho_g[1] * g[i][1]) * jac;
                }
            }
        }
    }

    let mut f_src = DVector::<f64>::zeros(n);
    for (i, w) in prob.wells.iter().enumerate() {
        let (ci, cj, xi, eta) = mesh.locate(w.x, w.y, i)?;
        let nodes = mesh.cell_nodes(ci, cj);
        let s = shape_values(xi, eta);
        for k in 0..4 {
            f_src[nodes[k]] += w.rate * s[k];
        }
    }

    let mc_dt = prob.mass() * (prob.storage() / prob.dt());
    let s_full = &mc_dt + &a;

    let dirichlet = mesh.top_edge_nodes();
    let is_dirichlet = {
        let mut mask = vec![false; n];
        for &d in &dirichlet {
            mask[d] = true;
        }
        mask
    };
    let free: Vec<usize> = (0..n).filter(|&i| !is_dirichlet[i]).collect();
    if free.is_empty() {
        return Err(ForwardError::IllPosed("no free degrees of freedom".into()));
    }

    let nf = free.len();
    let mut s_ff = DMatrix::<f64>::zeros(nf, nf);
    for (ii, &gi) in free.iter().enumerate() {
        for (jj, &gj) in free.iter().enumerate() {
            s_ff[(ii, jj)] = s_full[(gi, gj)];
        }
    }
    let system = spd::cholesky(&s_ff).map_err(|e| match e {
        SpdError::NotPositiveDefinite(_) | SpdError::NotSymmetric(_) => {
            ForwardError::ForwardSolveFailure { step: 0 }
        }
        other => ForwardError::IllPosed(other.to_string()),
    })?;

    let mut rhs_const_f = DVector::<f64>::zeros(nf);
    for (ii, &gi) in free.iter().enumerate() {
        let mut v = f_src[gi] + b_g[gi];
        for &gd in &dirichlet {
            v -= s_full[(gi, gd)] * prob.top_pressure;
        }
        rhs_const_f[ii] = v;
    }

    Ok(Operators {
        free,
        dirichlet,
        system,
        s_full,
        mc_dt,
        rhs_const_f,
    })
}

impl Operators {
    fn gather(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| full[i]))
    }

    fn scatter(&self, free_vals: &DVector<f64>, dirichlet_value: f64, n: usize) -> DVector<f64> {
        let mut out = DVector::from_element(n, dirichlet_value);
        for (ii, &gi) in self.free.iter().enumerate() {
            out[gi] = free_vals[ii];
        }
        for &gd in &self.dirichlet {
            out[gd] = dirichlet_value;
        }
        out
    }
}

/// Implicit-Euler solution of the pressure equation for the field `θ`.
pub fn solve_forward(prob: &DarcyProblem, theta: &FieldVector) -> Result<Trajectory, ForwardError> {
    let ops = assemble_operators(prob, theta)?;
    let n = prob.mesh.n_nodes();
    let mut fields = Vec::with_capacity(prob.n_steps + 1);
    fields.push(prob.initial_pressure.clone());
    let mut prev = prob.initial_pressure.clone();
    for _step in 1..=prob.n_steps {
        let coupling = &ops.mc_dt * &prev;
        let rhs_f = ops.gather(&coupling) + &ops.rhs_const_f;
        let p_f = ops.system.solve(&rhs_f);
        let p = ops.scatter(&p_f, prob.top_pressure, n);
        fields.push(p.clone());
        prev = p;
    }
    Ok(Trajectory {
        mesh: prob.mesh.clone(),
        fields,
    })
}

/// Bilinear interpolation of the final-horizon pressure at each plan point.
pub fn observe(trajectory: &Trajectory, plan: &ObservationPlan) -> Result<DVector<f64>, ForwardError> {
    let field = trajectory.final_field();
    let mut out = DVector::zeros(plan.len());
    for (k, &(x, y)) in plan.points.iter().enumerate() {
        let (ci, cj, xi, eta) = trajectory.mesh.locate(x, y, k)?;
        let nodes = trajectory.mesh.cell_nodes(ci, cj);
        let s = shape_values(xi, eta);
        out[k] = (0..4).map(|i| s[i] * field[nodes[i]]).sum();
    }
    Ok(out)
}

/// Synthetic observations `y = observe(solve_forward(θ_true)) + σ_ε η` with
/// `η` standard normal drawn from `seed`.
pub fn synth_data(
    prob: &DarcyProblem,
    theta_true: &FieldVector,
    plan: &ObservationPlan,
    sigma_eps: f64,
    seed: u64,
) -> Result<DVector<f64>, ForwardError> {
    let traj = solve_forward(prob, theta_true)?;
    let mut y = observe(&traj, plan)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = spd::standard_normal_vector(y.len(), &mut rng);
    y += noise * sigma_eps;
    Ok(y)
}

/// `∫ φ_j (e^{-θ}/μ)(∇p + ρ_f g)·∇λ dx` accumulated into `out`.
fn accumulate_flux_sensitivity(
    prob: &DarcyProblem,
    theta: &FieldVector,
    p: &FieldVector,
    lam: &FieldVector,
    out: &mut FieldVector,
) {
    let mesh = &prob.mesh;
    let (hx, hy) = (mesh.hx(), mesh.hy());
    let jac = 0.25 * hx * hy;
    let inv_mu = 1.0 / prob.fluid.viscosity;
    let rho_g = [
        prob.fluid.density * prob.gravity[0],
        prob.fluid.density * prob.gravity[1],
    ];
    for (ci, cj) in mesh.cells() {
        let nodes = mesh.cell_nodes(ci, cj);
        for &xi in &GAUSS_2 {
            for &eta in &GAUSS_2 {
                let s = shape_values(xi, eta);
                let g = shape_gradients(xi, eta, hx, hy);
                let theta_q: f64 = (0..4).map(|k| s[k] * theta[nodes[k]]).sum();
                let mobility = (-theta_q).exp() * inv_mu;
                let mut grad_p = [rho_g[0], rho_g[1]];
                let mut grad_l = [0.0, 0.0];
                for k in 0..4 {
                    grad_p[0] += g[k][0] * p[nodes[k]];
                    grad_p[1] += g[k][1] * p[nodes[k]];
                    grad_l[0] += g[k][0] * lam[nodes[k]];
                    grad_l[1] += g[k][1] * lam[nodes[k]];
                }
                let core = mobility * (grad_p[0] * grad_l[0] + grad_p[1] * grad_l[1]) * jac;
                for k in 0..4 {
                    out[nodes[k]] += core * s[k];
                }
            }
        }
    }
}

/// Restriction of the observation operator to free dofs, transposed: for a
/// unit weight on observation `k`, the load vector on free dofs.
fn observation_load(
    ops: &Operators,
    mesh: &Mesh2D,
    plan: &ObservationPlan,
    weights: &DVector<f64>,
) -> Result<DVector<f64>, ForwardError> {
    let n = mesh.n_nodes();
    let mut full = DVector::<f64>::zeros(n);
    for (k, &(x, y)) in plan.points.iter().enumerate() {
        if weights[k] == 0.0 {
            continue;
        }
        let (ci, cj, xi, eta) = mesh.locate(x, y, k)?;
        let nodes = mesh.cell_nodes(ci, cj);
        let s = shape_values(xi, eta);
        for i in 0..4 {
            full[nodes[i]] += weights[k] * s[i];
        }
    }
    Ok(ops.gather(&full))
}

/// Backward-in-time adjoint sweep for a terminal free-dof load, returning
/// the flux-sensitivity accumulation over all steps.
fn adjoint_sweep(
    prob: &DarcyProblem,
    theta: &FieldVector,
    ops: &Operators,
    trajectory: &Trajectory,
    terminal_load_f: &DVector<f64>,
) -> FieldVector {
    let n = prob.mesh.n_nodes();
    let mut grad = DVector::<f64>::zeros(n);
    let mut lam_f = ops.system.solve(terminal_load_f);
    for step in (1..=prob.n_steps).rev() {
        let lam_full = ops.scatter(&lam_f, 0.0, n);
        accumulate_flux_sensitivity(prob, theta, &trajectory.fields[step], &lam_full, &mut grad);
        if step > 1 {
            let coupled = &ops.mc_dt * &lam_full;
            lam_f = ops.system.solve(&ops.gather(&coupled));
        }
    }
    grad
}

/// Adjoint gradient of the data misfit `1/(2σ²) Σ (oᵢ - yᵢ)²` with respect
/// to `θ` (misfit term only; the prior gradient is added by the target).
pub fn gradient_adjoint(
    prob: &DarcyProblem,
    theta: &FieldVector,
    plan: &ObservationPlan,
    y: &DVector<f64>,
    sigma_eps: f64,
) -> Result<FieldVector, ForwardError> {
    let (_, grad) = misfit_and_gradient(prob, theta, plan, y, sigma_eps)?;
    Ok(grad)
}

/// Misfit value and adjoint gradient from a single forward solve.
pub fn misfit_and_gradient(
    prob: &DarcyProblem,
    theta: &FieldVector,
    plan: &ObservationPlan,
    y: &DVector<f64>,
    sigma_eps: f64,
) -> Result<(f64, FieldVector), ForwardError> {
    let ops = assemble_operators(prob, theta)?;
    let trajectory = advance(prob, &ops)?;
    let obs = observe(&trajectory, plan)?;
    let residual = &obs - y;
    let inv_var = 1.0 / (sigma_eps * sigma_eps);
    let misfit = 0.5 * inv_var * residual.norm_squared();
    let load = observation_load(&ops, &prob.mesh, plan, &(residual * inv_var))?;
    let grad = adjoint_sweep(prob, theta, &ops, &trajectory, &load);
    Ok((misfit, grad))
}

fn advance(prob: &DarcyProblem, ops: &Operators) -> Result<Trajectory, ForwardError> {
    let n = prob.mesh.n_nodes();
    let mut fields = Vec::with_capacity(prob.n_steps + 1);
    fields.push(prob.initial_pressure.clone());
    let mut prev = prob.initial_pressure.clone();
    for _ in 1..=prob.n_steps {
        let coupling = &ops.mc_dt * &prev;
        let rhs_f = ops.gather(&coupling) + &ops.rhs_const_f;
        let p_f = ops.system.solve(&rhs_f);
        let p = ops.scatter(&p_f, prob.top_pressure, n);
        fields.push(p.clone());
        prev = p;
    }
    Ok(Trajectory {
        mesh: prob.mesh.clone(),
        fields,
    })
}

/// Gauss-Newton misfit Hessian `JᵀJ/σ²`, with the observation Jacobian
/// assembled row by row through one adjoint sweep per observation (cheaper
/// than per-parameter tangents whenever observations ≪ nodes).
pub fn misfit_hessian_gn(
    prob: &DarcyProblem,
    theta: &FieldVector,
    plan: &ObservationPlan,
    sigma_eps: f64,
) -> Result<DMatrix<f64>, ForwardError> {
    let ops = assemble_operators(prob, theta)?;
    let trajectory = advance(prob, &ops)?;
    let n = prob.mesh.n_nodes();
    let m = plan.len();
    let mut jac = DMatrix::<f64>::zeros(m, n);
    for k in 0..m {
        let mut w = DVector::zeros(m);
        w[k] = 1.0;
        let load = observation_load(&ops, &prob.mesh, plan, &w)?;
        let row = adjoint_sweep(prob, theta, &ops, &trajectory, &load);
        for j in 0..n {
            jac[(k, j)] = row[j];
        }
    }
    let mut h = jac.transpose() * &jac / (sigma_eps * sigma_eps);
    h = (&h + h.transpose()) * 0.5;
    Ok(h)
}

/// Sum of Gaussian bumps on top of a constant base value; used to build
/// synthetic "blob" truth fields.
pub fn blob_field(mesh: &Mesh2D, base: f64, blobs: &[(f64, f64, f64, f64)]) -> FieldVector {
    DVector::from_fn(mesh.n_nodes(), |node, _| {
        let (x, y) = mesh.node_coords(node);
        let mut v = base;
        for &(cx, cy, radius, amplitude) in blobs {
            let r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (radius * radius);
            v += amplitude * (-0.5 * r2).exp();
        }
        v
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Small well-scaled reference problem used across the forward tests.
    pub(crate) fn reference_problem(nx: usize, ny: usize, n_steps: usize) -> DarcyProblem {
        let mesh = Mesh2D::new(nx, ny, 8000.0, 4000.0).unwrap();
        let n = mesh.n_nodes();
        DarcyProblem {
            mesh,
            fluid: FluidProps::default(),
            porosity: 0.2,
            gravity: [0.0, 0.0],
            top_pressure: 5.0e8,
            initial_pressure: DVector::from_element(n, 5.0e8),
            wells: vec![
                WellSource { x: 2000.0, y: 1500.0, rate: 1.5e-3 },
                WellSource { x: 6000.0, y: 2500.0, rate: 1.0e-3 },
            ],
            horizon: 2.0e8,
            n_steps,
            mass_cache: Default::default(),
        }
    }

    fn constant_theta(prob: &DarcyProblem, v: f64) -> FieldVector {
        DVector::from_element(prob.mesh.n_nodes(), v)
    }

    #[test]
    fn no_forcing_stays_constant() {
        let mut prob = reference_problem(6, 4, 8);
        prob.wells.clear();
        let theta = constant_theta(&prob, 33.0);
        let traj = solve_forward(&prob, &theta).unwrap();
        for (k, field) in traj.fields.iter().enumerate() {
            for v in field.iter() {
                assert!(
                    (v - prob.top_pressure).abs() <= 1e-10 * prob.top_pressure,
                    "step {k} drifted"
                );
            }
        }
    }

    #[test]
    fn discrete_mass_balance() {
        let prob = reference_problem(8, 4, 10);
        let theta = blob_field(&prob.mesh, 33.0, &[(2500.0, 2000.0, 1200.0, 1.5)]);
        let traj = solve_forward(&prob, &theta).unwrap();

        // weak-form identity with test function 1: summed over steps,
        // c·1ᵀN(p_T - p_0) = dt·Σ_k [1ᵀf - boundary flux residual].
        let ops = assemble_operators(&prob, &theta).unwrap();
        let nmat = assemble_mass(&prob.mesh);
        let c = prob.storage();
        let dt = prob.dt();
        let ones = DVector::from_element(prob.mesh.n_nodes(), 1.0);

        let mut f_src = DVector::<f64>::zeros(prob.mesh.n_nodes());
        for (i, w) in prob.wells.iter().enumerate() {
            let (ci, cj, xi, eta) = prob.mesh.locate(w.x, w.y, i).unwrap();
            let nodes = prob.mesh.cell_nodes(ci, cj);
            let s = shape_values(xi, eta);
            for k in 0..4 {
                f_src[nodes[k]] += w.rate * s[k];
            }
        }

        let mut injected = 0.0;
        let mut outflux = 0.0;
        for step in 1..=prob.n_steps {
            injected += dt * f_src.sum();
            // residual on Dirichlet rows = discrete boundary flux
            let p = &traj.fields[step];
            let p_prev = &traj.fields[step - 1];
            let resid = &ops.s_full * p - &ops.mc_dt * p_prev - &f_src;
            // gravity load is zero here (g = 0); the Dirichlet-row residual
            // is the discrete flux entering through the boundary
            for &d in &ops.dirichlet {
                outflux -= dt * resid[d];
            }
        }
        let lhs = c * ones.dot(&(&nmat * (traj.final_field() - &traj.fields[0])));
        let rhs = injected - outflux;
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
    }

    #[test]
    fn self_convergence_under_refinement() {
        let coarse = reference_problem(16, 8, 20);
        let fine = reference_problem(32, 16, 40);
        let blobs = [(2000.0, 2800.0, 1200.0, 1.5), (5500.0, 1200.0, 1200.0, -1.5)];
        // 5×3 grid keeps every observation at least two fine cells away
        // from the (log-singular) well nodes
        let plan = ObservationPlan::interior_grid(&coarse.mesh, 5, 3);
        let obs_c = observe(
            &solve_forward(&coarse, &blob_field(&coarse.mesh, 33.0, &blobs)).unwrap(),
            &plan,
        )
        .unwrap();
        let obs_f = observe(
            &solve_forward(&fine, &blob_field(&fine.mesh, 33.0, &blobs)).unwrap(),
            &plan,
        )
        .unwrap();
        // compare pressure *changes* so the 5% gate is not diluted by the
        // large constant background pressure
        for k in 0..plan.len() {
            let dc = obs_c[k] - coarse.top_pressure;
            let df = obs_f[k] - fine.top_pressure;
            let denom = df.abs().max(1e6);
            assert!(
                (dc - df).abs() / denom < 0.05,
                "observation {k}: coarse {dc:.4e} vs fine {df:.4e}"
            );
        }
    }

    #[test]
    fn observe_at_node_and_constant_field() {
        let prob = reference_problem(4, 4, 2);
        let mesh = prob.mesh.clone();
        let mut field = DVector::zeros(mesh.n_nodes());
        let node = mesh.node_index(2, 3);
        field[node] = 7.5;
        let traj = Trajectory { mesh: mesh.clone(), fields: vec![field] };
        let (x, y) = mesh.node_coords(node);
        let got = observe(&traj, &ObservationPlan { points: vec![(x, y)] }).unwrap();
        assert_relative_eq!(got[0], 7.5, epsilon = 1e-12);

        let traj = Trajectory {
            mesh: mesh.clone(),
            fields: vec![DVector::from_element(mesh.n_nodes(), 3.25)],
        };
        let plan = ObservationPlan::interior_grid(&mesh, 3, 3);
        let got = observe(&traj, &plan).unwrap();
        for v in got.iter() {
            assert_relative_eq!(*v, 3.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn observe_cell_center_bilinear() {
        let mesh = Mesh2D::new(1, 1, 1.0, 1.0).unwrap();
        // corners (SW, SE, NE, NW) = (0, 1, 2, 1) → bilinear value 1.0 at center
        let mut field = DVector::zeros(4);
        field[mesh.node_index(0, 0)] = 0.0;
        field[mesh.node_index(1, 0)] = 1.0;
        field[mesh.node_index(1, 1)] = 2.0;
        field[mesh.node_index(0, 1)] = 1.0;
        let traj = Trajectory { mesh, fields: vec![field] };
        let got = observe(&traj, &ObservationPlan { points: vec![(0.5, 0.5)] }).unwrap();
        assert_relative_eq!(got[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn observe_rejects_outside_point() {
        let prob = reference_problem(4, 4, 2);
        let traj = solve_forward(&prob, &constant_theta(&prob, 33.0)).unwrap();
        let err = observe(&traj, &ObservationPlan { points: vec![(9000.0, 100.0)] });
        assert!(matches!(
            err,
            Err(ForwardError::Point(MeshError::PointOutsideDomain { index: 0, .. }))
        ));
    }

    #[test]
    fn synth_data_noise_contract() {
        let prob = reference_problem(6, 4, 6);
        let theta = constant_theta(&prob, 33.0);
        let plan = ObservationPlan::interior_grid(&prob.mesh, 4, 3);
        let clean = synth_data(&prob, &theta, &plan, 0.0, 1).unwrap();
        let truth = observe(&solve_forward(&prob, &theta).unwrap(), &plan).unwrap();
        assert_eq!(clean, truth);

        let a = synth_data(&prob, &theta, &plan, 2.0e6, 42).unwrap();
        let b = synth_data(&prob, &theta, &plan, 2.0e6, 42).unwrap();
        assert_eq!(a, b);

        // Monte Carlo noise scale over regenerations
        let sigma = 2.0e6;
        let mut sq = 0.0;
        let reps = 1000;
        for seed in 0..reps {
            let y = synth_data(&prob, &theta, &plan, sigma, seed).unwrap();
            sq += (&y - &truth).norm_squared();
        }
        let emp = (sq / (reps as f64 * plan.len() as f64)).sqrt();
        assert!((emp - sigma).abs() / sigma < 0.10, "empirical σ = {emp:.4e}");
    }

    #[test]
    fn adjoint_zero_residual_zero_gradient() {
        let prob = reference_problem(6, 4, 6);
        let theta = blob_field(&prob.mesh, 33.0, &[(3000.0, 2000.0, 1500.0, 1.0)]);
        let plan = ObservationPlan::interior_grid(&prob.mesh, 4, 3);
        let y = synth_data(&prob, &theta, &plan, 0.0, 0).unwrap();
        let g = gradient_adjoint(&prob, &theta, &plan, &y, 1e6).unwrap();
        assert!(g.amax() <= 1e-12, "gradient max {}", g.amax());
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        // 6×4 mesh, gravity on to exercise the body-force term
        let mut prob = reference_problem(6, 4, 6);
        prob.gravity = [0.0, -9.81];
        let theta0 = blob_field(&prob.mesh, 33.0, &[(3000.0, 2000.0, 1500.0, 1.0)]);
        let plan = ObservationPlan::interior_grid(&prob.mesh, 4, 3);
        let sigma = 1e6;
        let y = synth_data(&prob, &theta0, &plan, sigma, 9).unwrap();
        let theta = blob_field(&prob.mesh, 33.0, &[(4000.0, 1000.0, 2000.0, -0.8)]);
        let (_, grad) = misfit_and_gradient(&prob, &theta, &plan, &y, sigma).unwrap();

        let misfit_of = |t: &FieldVector| -> f64 {
            let obs = observe(&solve_forward(&prob, t).unwrap(), &plan).unwrap();
            0.5 / (sigma * sigma) * (&obs - &y).norm_squared()
        };

        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..5 {
            let dir = spd::standard_normal_vector(theta.len(), &mut rng).normalize();
            let h = 1e-4;
            let fd = (misfit_of(&(&theta + &dir * h)) - misfit_of(&(&theta - &dir * h))) / (2.0 * h);
            let an = grad.dot(&dir);
            assert!(
                (fd - an).abs() <= 1e-4 * an.abs().max(1e-12),
                "fd {fd:.6e} vs adjoint {an:.6e}"
            );
        }
    }

    #[test]
    fn adjoint_directional_derivative_decays_quadratically() {
        // evaluation point near the data-generating field keeps |J| small,
        // so truncation (not the ε|J|/h roundoff floor) dominates at the
        // larger steps
        let prob = reference_problem(6, 4, 6);
        let theta = blob_field(&prob.mesh, 33.0, &[(3000.0, 2000.0, 1500.0, 1.0)]);
        let plan = ObservationPlan::interior_grid(&prob.mesh, 4, 3);
        let sigma = 1e6;
        let y = synth_data(&prob, &theta, &plan, sigma, 5).unwrap();
        let eval_theta = blob_field(&prob.mesh, 33.0, &[(3000.0, 2000.0, 1500.0, 0.9)]);
        let (j, grad) = misfit_and_gradient(&prob, &eval_theta, &plan, &y, sigma).unwrap();
        let misfit_of = |t: &FieldVector| -> f64 {
            let obs = observe(&solve_forward(&prob, t).unwrap(), &plan).unwrap();
            0.5 / (sigma * sigma) * (&obs - &y).norm_squared()
        };
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let dir = spd::standard_normal_vector(eval_theta.len(), &mut rng).normalize();
        let an = grad.dot(&dir);
        let err_at = |h: f64| -> f64 {
            let fd =
                (misfit_of(&(&eval_theta + &dir * h)) - misfit_of(&(&eval_theta - &dir * h))) / (2.0 * h);
            (fd - an).abs()
        };
        // clean quadratic regime between the two largest steps
        let e2 = err_at(1e-2);
        let e3 = err_at(1e-3);
        assert!(
            e3 <= e2 / 50.0 && e3 >= e2 / 200.0,
            "decade ratio {} outside the quadratic band",
            e2 / e3
        );
        // the stated steps stay under the quadratic envelope C·h² plus a
        // roundoff allowance ~ ε|J|/h amplified by the solve
        let c = e3 / 1e-6;
        for &h in &[1e-3, 1e-4, 1e-5] {
            let floor = 1e4 * f64::EPSILON * j.abs() / h;
            let e = err_at(h);
            assert!(
                e <= c * h * h + floor,
                "h={h:.0e}: err {e:.3e} above envelope {:.3e}",
                c * h * h + floor
            );
            assert!(e <= 1e-4 * an.abs(), "h={h:.0e}: relative error too large");
        }
        assert!(err_at(1e-4) < e3, "no decay from 1e-3 to 1e-4");
    }

    #[test]
    fn gradient_respects_mirror_symmetry() {
        // wells, θ, and observations symmetric about x = lx/2 ⇒ the misfit
        // gradient must be mirror-symmetric
        let mesh = Mesh2D::new(6, 4, 6000.0, 4000.0).unwrap();
        let n = mesh.n_nodes();
        let prob = DarcyProblem {
            mesh: mesh.clone(),
            fluid: FluidProps::default(),
            porosity: 0.2,
            gravity: [0.0, 0.0],
            top_pressure: 5.0e8,
            initial_pressure: DVector::from_element(n, 5.0e8),
            wells: vec![
                WellSource { x: 1500.0, y: 2000.0, rate: 1.0e-3 },
                WellSource { x: 4500.0, y: 2000.0, rate: 1.0e-3 },
            ],
            horizon: 2.0e8,
            n_steps: 6,
            mass_cache: Default::default(),
        };
        let theta = blob_field(
            &mesh,
            33.0,
            &[(1500.0, 2000.0, 1000.0, 1.0), (4500.0, 2000.0, 1000.0, 1.0)],
        );
        let plan = ObservationPlan {
            points: vec![(1000.0, 1000.0), (5000.0, 1000.0), (3000.0, 3000.0)],
        };
        let y = DVector::from_element(plan.len(), 5.0e8);
        let g = gradient_adjoint(&prob, &theta, &plan, &y, 1e6).unwrap();
        for j in 0..=mesh.ny {
            for i in 0..=mesh.nx {
                let a = g[mesh.node_index(i, j)];
                let b = g[mesh.node_index(mesh.nx - i, j)];
                assert!(
                    (a - b).abs() <= 1e-10 * g.amax().max(1e-300),
                    "asymmetry at ({i},{j}): {a:.6e} vs {b:.6e}"
                );
            }
        }
    }

    #[test]
    fn gn_hessian_psd_and_rank_bounded() {
        let prob = reference_problem(6, 4, 6);
        let theta = constant_theta(&prob, 33.0);
        let plan = ObservationPlan::interior_grid(&prob.mesh, 3, 2);
        let h = misfit_hessian_gn(&prob, &theta, &plan, 1e6).unwrap();
        let (vals, _) = spd::eigendecompose_sym(&h).unwrap();
        let hnorm = vals[0].abs();
        assert!(vals[vals.len() - 1] >= -1e-10 * hnorm, "not PSD: {}", vals[vals.len() - 1]);
        let rank = vals.iter().filter(|&&v| v > 1e-10 * hnorm).count();
        assert!(rank <= plan.len(), "rank {rank} exceeds {} observations", plan.len());
    }
}
