//! Config-driven experiment runner.
//!
//! Subcommands: `gen-data` (synthetic observations), `find-map` (BFGS),
//! `sample` (one or more MCMC chains), `diagnose` (IACT/ESS/SE, credible
//! intervals, autocorrelations). Exit codes: 0 success, 2 configuration
//! error, 3 I/O error, 4 numerical failure.

use clap::{Args, Parser, Subcommand};
use hessmc::config::{ConfigError, ExperimentConfig, TargetInstance};
use hessmc::diagnostics;
use hessmc::io;
use hessmc::map_solver;
use hessmc::prior::FieldVector;
use hessmc::samplers::{self, Chain};
use hessmc::targets::TargetDensity;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hessmc", about = "Hessian-preconditioned MCMC experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to outputs.dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic observations from the configured truth field.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Override forward.noise_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Locate the MAP point with BFGS.
    FindMap {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured sampler and write chain CSV + metadata.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Override sampler.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of independent chains (seeds seed, seed+1, …).
        #[arg(long, default_value_t = 1)]
        chains: usize,
    },
    /// Convergence diagnostics for one or more chain files.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Chain CSV files produced by `sample`.
        #[arg(required = true)]
        chains: Vec<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Parse(_) | ConfigError::Invalid(_) => CliError::Config(e.to_string()),
            ConfigError::Build(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { common, seed } => cmd_gen_data(&common, seed),
        Command::FindMap { common } => cmd_find_map(&common),
        Command::Sample { common, seed, chains } => cmd_sample(&common, seed, chains),
        Command::Diagnose { common, chains } => cmd_diagnose(&common, &chains),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf, PathBuf), CliError> {
    let cfg = ExperimentConfig::from_path(&common.config)?;
    let config_dir = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.outputs.dir));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    Ok((cfg, config_dir, out_dir))
}

#[derive(serde::Serialize)]
struct GenDataMeta {
    seed: u64,
    sigma_eps: f64,
    count: usize,
}

fn cmd_gen_data(common: &Common, seed: Option<u64>) -> Result<(), CliError> {
    let (mut cfg, _config_dir, out_dir) = load(common)?;
    let fwd = cfg
        .forward
        .as_mut()
        .ok_or_else(|| CliError::Config("gen-data needs a [forward] section".into()))?;
    if let Some(s) = seed {
        fwd.noise_seed = s;
    }
    let noise_seed = fwd.noise_seed;
    let sigma_eps = fwd.noise_sigma.unwrap_or(fwd.sigma_eps);
    let mesh = cfg.build_mesh()?;
    let plan = cfg.build_plan()?;
    let truth = cfg.build_truth()?;
    let problem = cfg.build_problem()?;
    let y = hessmc::forward::synth_data(&problem, &truth, &plan, sigma_eps, noise_seed)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    io::write_observations_csv(&out_dir.join("observations.csv"), &plan.points, &y)?;
    io::write_field_csv(&out_dir.join("theta_true.csv"), &mesh, &truth)?;
    io::write_json(
        &out_dir.join("gen_meta.json"),
        &GenDataMeta { seed: noise_seed, sigma_eps, count: plan.len() },
    )?;
    println!(
        "wrote {} observations (sigma_eps = {sigma_eps}, seed = {noise_seed}) to {}",
        plan.len(),
        out_dir.display()
    );
    Ok(())
}

/// Start point for the optimizer: perturbed for analytic targets (so the
/// solve is non-trivial), prior mean for the posterior.
fn optimizer_start(target: &TargetInstance) -> FieldVector {
    match target {
        TargetInstance::Gaussian(t) => t.mean().add_scalar(1.0),
        TargetInstance::LogNormal(t) => {
            let map = t.map_point();
            map.map(|v| 1.5 * (v - t.shift()) + 0.1 + t.shift())
        }
        TargetInstance::Posterior(t) => t.prior.mean.clone(),
    }
}

fn target_coords(target: &TargetInstance, dim: usize) -> Vec<(f64, f64)> {
    match target.mesh() {
        Some(mesh) => (0..mesh.n_nodes()).map(|i| mesh.node_coords(i)).collect(),
        None => (0..dim).map(|i| (i as f64, 0.0)).collect(),
    }
}

fn run_find_map(
    cfg: &ExperimentConfig,
    config_dir: &Path,
) -> Result<(TargetInstance, map_solver::OptimizeResult), CliError> {
    let target = cfg.build_target(config_dir)?;
    let start = optimizer_start(&target);
    let result = map_solver::bfgs_minimize(&target, &start, 0.0, 2000)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok((target, result))
}

fn cmd_find_map(common: &Common) -> Result<(), CliError> {
    let (cfg, config_dir, out_dir) = load(common)?;
    let (target, result) = run_find_map(&cfg, &config_dir)?;
    let coords = target_coords(&target, result.psi_map.len());
    io::write_field_csv_coords(&out_dir.join("map_field.csv"), &coords, &result.psi_map)?;
    io::write_json(&out_dir.join("map_result.json"), &result)?;
    println!(
        "MAP: J = {:.6e}, |grad|_inf = {:.3e}, {} iterations, converged = {}",
        result.j_final, result.grad_norm_final, result.iterations, result.converged
    );
    Ok(())
}

fn cmd_sample(common: &Common, seed: Option<u64>, chains: usize) -> Result<(), CliError> {
    let (mut cfg, config_dir, out_dir) = load(common)?;
    if let Some(s) = seed {
        cfg.sampler.seed = s;
    }
    if chains == 0 {
        return Err(CliError::Config("--chains must be >= 1".into()));
    }
    let target = cfg.build_target(&config_dir)?;

    // chain start and preconditioner both come from the MAP point
    let needs_h = cfg.sampler.method.needs_preconditioner();
    let psi_map = match target.closed_form_map() {
        Some(m) => m,
        None => {
            let start = optimizer_start(&target);
            let result = map_solver::bfgs_minimize(&target, &start, 0.0, 2000)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            result.psi_map
        }
    };
    let h_map = if needs_h {
        Some(target.preconditioner_at(&psi_map)?)
    } else {
        None
    };

    let base_seed = cfg.sampler.seed;
    let mut results: Vec<Option<Result<Chain, String>>> = Vec::new();
    results.resize_with(chains, || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for k in 0..chains {
            let mut chain_cfg = cfg.sampler.clone();
            chain_cfg.seed = base_seed + k as u64;
            let target = &target;
            let h_map = h_map.as_ref();
            let psi_map = &psi_map;
            handles.push(scope.spawn(move || {
                let mut rng = ChaCha20Rng::seed_from_u64(chain_cfg.seed);
                samplers::run_sampler(target, psi_map, &chain_cfg, h_map, Some(psi_map), &mut rng)
                    .map_err(|e| e.to_string())
            }));
        }
        for (k, h) in handles.into_iter().enumerate() {
            results[k] = Some(h.join().expect("chain thread panicked"));
        }
    });

    for (k, res) in results.into_iter().enumerate() {
        let chain = res
            .expect("all chains executed")
            .map_err(CliError::Numeric)?;
        let stem = if chains == 1 {
            "chain".to_string()
        } else {
            format!("chain_{k:03}")
        };
        let mut chain_cfg = cfg.sampler.clone();
        chain_cfg.seed = chain.seed;
        io::write_chain_csv(&out_dir.join(format!("{stem}.csv")), &chain)?;
        io::write_json(
            &out_dir.join(format!("{stem}.meta.json")),
            &io::ChainMetadata::from_chain(&chain, &chain_cfg),
        )?;
        println!(
            "{stem}: {} steps, acceptance {:.4}, {:.2}s",
            chain.accepted.len(),
            chain.acceptance_rate,
            chain.wall_time_s
        );
    }
    Ok(())
}

/// Nodes on the configured section line (defaults to every node/dimension).
fn section_nodes(cfg: &ExperimentConfig, target: &TargetInstance, dim: usize) -> Vec<usize> {
    if let (Some(mesh), Some(section)) = (target.mesh(), cfg.outputs.section.as_ref()) {
        let mut best = Vec::new();
        if section.axis == "x" {
            let i = ((section.value / mesh.hx()).round() as isize).clamp(0, mesh.nx as isize) as usize;
            for j in 0..=mesh.ny {
                best.push(mesh.node_index(i, j));
            }
        } else {
            let j = ((section.value / mesh.hy()).round() as isize).clamp(0, mesh.ny as isize) as usize;
            for i in 0..=mesh.nx {
                best.push(mesh.node_index(i, j));
            }
        }
        best
    } else {
        (0..dim).collect()
    }
}

#[derive(serde::Serialize)]
struct ChainDiagnostics {
    file: String,
    #[serde(flatten)]
    report: io::DiagnosticsReport,
}

fn cmd_diagnose(common: &Common, chain_paths: &[PathBuf]) -> Result<(), CliError> {
    let (cfg, config_dir, out_dir) = load(common)?;
    let target = cfg.build_target(&config_dir)?;
    let dim = target.dim();
    let coords = target_coords(&target, dim);

    let mut reports = Vec::new();
    let mut pooled: Vec<DMatrix<f64>> = Vec::new();
    let mut autocorr_cols: Vec<(String, Vec<f64>)> = Vec::new();

    for path in chain_paths {
        let file = io::read_chain_csv(path)?;
        if file.samples.ncols() != dim {
            return Err(CliError::Config(format!(
                "{}: chain dimension {} does not match target dimension {dim}",
                path.display(),
                file.samples.ncols()
            )));
        }
        let avg: Vec<f64> = (0..file.samples.nrows())
            .map(|i| file.samples.row(i).sum() / dim as f64)
            .collect();
        let stats = diagnostics::scalar_chain_stats(&avg)
            .map_err(|e| CliError::Numeric(format!("{}: {e}", path.display())))?;
        // acceptance rate from the sidecar when present, else the accept column
        let meta_path = path.with_extension("meta.json");
        let acceptance = if meta_path.exists() {
            io::read_json::<io::ChainMetadata>(&meta_path)?.acceptance_rate
        } else {
            file.accepted.iter().filter(|&&a| a).count() as f64 / file.accepted.len() as f64
        };
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "chain".into());
        reports.push(ChainDiagnostics {
            file: path.display().to_string(),
            report: io::DiagnosticsReport::new(&stats, acceptance),
        });

        let max_lag = cfg.outputs.max_lag.min(avg.len().saturating_sub(1)).max(1);
        if let Ok(rho) = diagnostics::autocorrelation(&avg, max_lag) {
            autocorr_cols.push((format!("{stem}_avg"), rho));
        }
        for (pi, probe) in cfg.outputs.probes.iter().enumerate() {
            let node = nearest_coord(&coords, probe[0], probe[1]);
            let series: Vec<f64> = (0..file.samples.nrows())
                .map(|i| file.samples[(i, node)])
                .collect();
            if let Ok(rho) = diagnostics::autocorrelation(&series, max_lag) {
                autocorr_cols.push((format!("{stem}_probe{pi}"), rho));
            }
        }
        pooled.push(file.samples);
    }

    io::write_json(&out_dir.join("diagnostics.json"), &reports)?;

    let total_rows: usize = pooled.iter().map(|m| m.nrows()).sum();
    let mut all = DMatrix::zeros(total_rows, dim);
    let mut row = 0;
    for m in &pooled {
        all.rows_mut(row, m.nrows()).copy_from(m);
        row += m.nrows();
    }
    let intervals = diagnostics::credible_interval(&all, cfg.outputs.level)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let means: DVector<f64> = DVector::from_fn(dim, |j, _| all.column(j).mean());
    let nodes = section_nodes(&cfg, &target, dim);
    let rows: Vec<(usize, f64, f64, f64, f64, f64)> = nodes
        .iter()
        .map(|&n| {
            let (x, y) = coords[n];
            (n, x, y, means[n], intervals[n].0, intervals[n].1)
        })
        .collect();
    io::write_intervals_csv(&out_dir.join("intervals.csv"), &rows)?;
    io::write_autocorr_csv(&out_dir.join("autocorr.csv"), &autocorr_cols)?;
    println!(
        "diagnosed {} chain(s): tau = [{}]",
        reports.len(),
        reports
            .iter()
            .map(|r| format!("{:.2}", r.report.tau))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn nearest_coord(coords: &[(f64, f64)], x: f64, y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &(cx, cy)) in coords.iter().enumerate() {
        let d = (cx - x) * (cx - x) + (cy - y) * (cy - y);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}
