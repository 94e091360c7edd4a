//! Structured 2-D quadrilateral mesh with bilinear Lagrange basis.
//!
//! Nodes are numbered lexicographically, `node = j*(nx+1) + i`, and every
//! cell is an axis-aligned rectangle, so the reference-element Jacobian is
//! diagonal. A 2×2 Gauss rule integrates the bilinear mass and stiffness
//! products exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell counts must be >= 1 (got nx={0}, ny={1})")]
    EmptyMesh(usize, usize),
    #[error("domain extents must be positive (got lx={0}, ly={1})")]
    NonPositiveExtent(f64, f64),
    #[error("point ({x}, {y}) lies outside the domain (observation {index})")]
    PointOutsideDomain { index: usize, x: f64, y: f64 },
}

/// Gauss points of the 2-point rule on [-1, 1].
pub const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_76, 0.577_350_269_189_625_76];

/// Structured rectangle mesh on `[0, lx] × [0, ly]` with `nx × ny` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, MeshError> {
        if nx < 1 || ny < 1 {
            return Err(MeshError::EmptyMesh(nx, ny));
        }
        if lx <= 0.0 || ly <= 0.0 {
            return Err(MeshError::NonPositiveExtent(lx, ly));
        }
        Ok(Mesh2D { nx, ny, lx, ly })
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let i = node % (self.nx + 1);
        let j = node / (self.nx + 1);
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    /// Corner nodes of cell `(ci, cj)` in counter-clockwise order
    /// (SW, SE, NE, NW).
    pub fn cell_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        let sw = self.node_index(ci, cj);
        [sw, sw + 1, sw + 1 + (self.nx + 1), sw + (self.nx + 1)]
    }

    /// Iterator over `(ci, cj)` cell indices.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nx = self.nx;
        (0..self.n_cells()).map(move |c| (c % nx, c / nx))
    }

    /// Node indices on the top edge `y = ly`.
    pub fn top_edge_nodes(&self) -> Vec<usize> {
        (0..=self.nx).map(|i| self.node_index(i, self.ny)).collect()
    }

    /// Same topology with coordinates rescaled by `1/length_unit`; used to
    /// assemble operators whose coefficients are given in another length
    /// unit (e.g. a prior with `delta` per km²).
    pub fn scaled(&self, length_unit: f64) -> Mesh2D {
        Mesh2D {
            nx: self.nx,
            ny: self.ny,
            lx: self.lx / length_unit,
            ly: self.ly / length_unit,
        }
    }

    /// Cell containing `(x, y)` and the local reference coordinates
    /// `(xi, eta) ∈ [-1,1]²`. Points on upper boundaries fall into the last
    /// cell; points outside the closed domain are an error.
    pub fn locate(&self, x: f64, y: f64, index: usize) -> Result<(usize, usize, f64, f64), MeshError> {
        let tol = 1e-12 * self.lx.max(self.ly);
        if x < -tol || x > self.lx + tol || y < -tol || y > self.ly + tol {
            return Err(MeshError::PointOutsideDomain { index, x, y });
        }
        let hx = self.hx();
        let hy = self.hy();
        let ci = ((x / hx).floor() as isize).clamp(0, self.nx as isize - 1) as usize;
        let cj = ((y / hy).floor() as isize).clamp(0, self.ny as isize - 1) as usize;
        let xi = 2.0 * (x - ci as f64 * hx) / hx - 1.0;
        let eta = 2.0 * (y - cj as f64 * hy) / hy - 1.0;
        Ok((ci, cj, xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0)))
    }
}

/// Bilinear shape function values at `(xi, eta)`, corner order SW, SE, NE, NW.
pub fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

/// Physical-space shape gradients at `(xi, eta)` for a rectangle of size
/// `hx × hy`; rows follow the corner order of [`shape_values`].
pub fn shape_gradients(xi: f64, eta: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    let dxi = [
        -0.25 * (1.0 - eta),
        0.25 * (1.0 - eta),
        0.25 * (1.0 + eta),
        -0.25 * (1.0 + eta),
    ];
    let deta = [
        -0.25 * (1.0 - xi),
        -0.25 * (1.0 + xi),
        0.25 * (1.0 + xi),
        0.25 * (1.0 - xi),
    ];
    let mut g = [[0.0; 2]; 4];
    for k in 0..4 {
        g[k][0] = dxi[k] * 2.0 / hx;
        g[k][1] = deta[k] * 2.0 / hy;
    }
    g
}
