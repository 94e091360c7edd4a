//! CSV and JSON formats for fields, observations, chains, and diagnostics.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! written file parses back bit-identically and rerunning a command with
//! the same seed reproduces files byte for byte.

use crate::diagnostics::IactStats;
use crate::forward::Trajectory;
use crate::mesh::Mesh2D;
use crate::prior::FieldVector;
use crate::samplers::{Chain, Method, SamplerConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Json { path: String, msg: String },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File { path: path.display().to_string(), source }
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Malformed { path: path.display().to_string(), line, msg: msg.into() }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64, IoError> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| malformed(path, line, format!("bad float {s:?}: {e}")))
}

/// `node,x,y,value` rows for a nodal field.
pub fn write_field_csv(path: &Path, mesh: &Mesh2D, field: &FieldVector) -> Result<(), IoError> {
    let coords: Vec<(f64, f64)> = (0..mesh.n_nodes()).map(|i| mesh.node_coords(i)).collect();
    write_field_csv_coords(path, &coords, field)
}

/// [`write_field_csv`] with explicit coordinates (meshless targets use the
/// component index as `x`).
pub fn write_field_csv_coords(
    path: &Path,
    coords: &[(f64, f64)],
    field: &FieldVector,
) -> Result<(), IoError> {
    let mut out = String::from("node,x,y,value\n");
    for i in 0..field.len() {
        let (x, y) = coords.get(i).copied().unwrap_or((i as f64, 0.0));
        out.push_str(&format!("{i},{x},{y},{v}\n", v = field[i]));
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

pub fn read_field_csv(path: &Path) -> Result<FieldVector, IoError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut values = Vec::new();
    for (ln, row) in text.lines().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 4 {
            return Err(malformed(path, ln + 1, "expected 4 columns"));
        }
        values.push(parse_f64(path, ln + 1, cols[3])?);
    }
    Ok(DVector::from_vec(values))
}

/// One field CSV per time step, `step_000.csv` … `step_{n_t}.csv`.
pub fn write_trajectory_csv(dir: &Path, trajectory: &Trajectory) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    for (k, field) in trajectory.fields.iter().enumerate() {
        write_field_csv(&dir.join(format!("step_{k:03}.csv")), &trajectory.mesh, field)?;
    }
    Ok(())
}

/// `index,x,y,value` rows for observations at explicit coordinates.
pub fn write_observations_csv(
    path: &Path,
    points: &[(f64, f64)],
    values: &DVector<f64>,
) -> Result<(), IoError> {
    let mut out = String::from("index,x,y,value\n");
    for (i, &(x, y)) in points.iter().enumerate() {
        out.push_str(&format!("{i},{x},{y},{v}\n", v = values[i]));
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

pub fn read_observations_csv(path: &Path) -> Result<(Vec<(f64, f64)>, DVector<f64>), IoError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (ln, row) in text.lines().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 4 {
            return Err(malformed(path, ln + 1, "expected 4 columns"));
        }
        points.push((parse_f64(path, ln + 1, cols[1])?, parse_f64(path, ln + 1, cols[2])?));
        values.push(parse_f64(path, ln + 1, cols[3])?);
    }
    Ok((points, DVector::from_vec(values)))
}

/// Chain CSV with header `step,accepted,logJ,psi_0..psi_{n-1}`.
pub fn write_chain_csv(path: &Path, chain: &Chain) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut header = String::from("step,accepted,logJ");
    for j in 0..chain.dim {
        header.push_str(&format!(",psi_{j}"));
    }
    header.push('\n');
    w.write_all(header.as_bytes()).map_err(|e| file_err(path, e))?;
    for (i, step) in chain.steps.iter().enumerate() {
        let acc = chain.accepted[step - 1] as u8;
        let mut row = format!("{step},{acc},{}", chain.logj[i]);
        for j in 0..chain.dim {
            row.push_str(&format!(",{}", chain.samples[i][j]));
        }
        row.push('\n');
        w.write_all(row.as_bytes()).map_err(|e| file_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Parsed chain file: raw step indices, accept flags, `logJ`, and samples
/// (row per draw).
#[derive(Debug)]
pub struct ChainFile {
    pub steps: Vec<usize>,
    pub accepted: Vec<bool>,
    pub logj: Vec<f64>,
    pub samples: DMatrix<f64>,
}

pub fn read_chain_csv(path: &Path) -> Result<ChainFile, IoError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "step" || cols[1] != "accepted" || cols[2] != "logJ" {
        return Err(malformed(path, 1, "expected header step,accepted,logJ,psi_0.."));
    }
    let dim = cols.len() - 3;
    let mut steps = Vec::new();
    let mut accepted = Vec::new();
    let mut logj = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (ln, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != dim + 3 {
            return Err(malformed(path, ln + 1, format!("expected {} columns", dim + 3)));
        }
        steps.push(
            cells[0]
                .parse::<usize>()
                .map_err(|e| malformed(path, ln + 1, format!("bad step: {e}")))?,
        );
        accepted.push(cells[1].trim() == "1");
        logj.push(parse_f64(path, ln + 1, cells[2])?);
        for c in &cells[3..] {
            rows.push(parse_f64(path, ln + 1, c)?);
        }
    }
    let n = steps.len();
    let samples = DMatrix::from_row_iterator(n, dim, rows);
    Ok(ChainFile { steps, accepted, logj, samples })
}

/// Sidecar metadata written next to each chain CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub method: Method,
    pub seed: u64,
    pub dim: usize,
    pub n_steps: usize,
    pub acceptance_rate: f64,
    pub wall_time_s: f64,
    pub config: SamplerConfig,
}

impl ChainMetadata {
    pub fn from_chain(chain: &Chain, config: &SamplerConfig) -> Self {
        ChainMetadata {
            method: chain.method,
            seed: chain.seed,
            dim: chain.dim,
            n_steps: chain.accepted.len(),
            acceptance_rate: chain.acceptance_rate,
            wall_time_s: chain.wall_time_s,
            config: config.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::Json { path: path.display().to_string(), msg: e.to_string() })?;
    fs::write(path, text + "\n").map_err(|e| file_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| IoError::Json { path: path.display().to_string(), msg: e.to_string() })
}

/// Per-chain diagnostics summary (`se` follows the σ̃/N_eff convention,
/// `se_sqrt` the usual σ̃/√N_eff).
#[derive(Debug, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub tau: f64,
    pub n_eff: f64,
    pub se: f64,
    pub se_sqrt: f64,
    pub acceptance_rate: f64,
}

impl DiagnosticsReport {
    pub fn new(stats: &IactStats, acceptance_rate: f64) -> Self {
        DiagnosticsReport {
            tau: stats.tau,
            n_eff: stats.n_eff,
            se: stats.se,
            se_sqrt: stats.se_sqrt,
            acceptance_rate,
        }
    }
}

/// `node,x,y,mean,lo,hi` rows along a section (or all nodes).
pub fn write_intervals_csv(
    path: &Path,
    rows: &[(usize, f64, f64, f64, f64, f64)],
) -> Result<(), IoError> {
    let mut out = String::from("node,x,y,mean,lo,hi\n");
    for &(node, x, y, mean, lo, hi) in rows {
        out.push_str(&format!("{node},{x},{y},{mean},{lo},{hi}\n"));
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

/// `lag,<name>...` autocorrelation table, one column per named series.
pub fn write_autocorr_csv(
    path: &Path,
    columns: &[(String, Vec<f64>)],
) -> Result<(), IoError> {
    let mut out = String::from("lag");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let max_lag = columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for lag in 0..max_lag {
        out.push_str(&format!("{}", lag + 1));
        for (_, v) in columns {
            out.push(',');
            if lag < v.len() {
                out.push_str(&format!("{}", v[lag]));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}
