//! Upwind finite-difference generators on a [`Grid`].

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::domain::BoundaryClass;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(col, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    #[inline]
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yr = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        Self::from_rows(rows)
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.n {
            for (c, _) in self.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n).map(|r| self.get(r, r).abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Which eigenfunction the Dirichlet conditions are set up for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Backward generator; pinned on the outgoing boundary and `|p| = p_max`.
    Phi,
    /// Forward (adjoint) generator; pinned on the incoming boundary and `|p| = p_max`.
    Psi,
}

/// Per-node role in an assembled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Free,
    /// Boundary node pinned to zero, with its stratum.
    Pinned(BoundaryClass),
    /// Momentum truncation row.
    Truncation,
}

impl NodeKind {
    pub fn is_free(self) -> bool {
        self == NodeKind::Free
    }
}

/// Boundary stratum of a boundary-column node: `p . n > 0` is outgoing.
pub fn stratum(grid: &Grid, i: usize, j: usize) -> BoundaryClass {
    if !grid.is_boundary_column(i) {
        return BoundaryClass::Interior;
    }
    let pn = if i == 0 { -grid.p(j) } else { grid.p(j) };
    if pn > 0.0 {
        BoundaryClass::GammaPlus
    } else if pn < 0.0 {
        BoundaryClass::GammaMinus
    } else {
        BoundaryClass::GammaZero
    }
}

pub fn node_kinds(grid: &Grid, convention: Convention) -> Vec<NodeKind> {
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            if j == 0 || j == grid.n_p - 1 {
                return NodeKind::Truncation;
            }
            match (stratum(grid, i, j), convention) {
                (BoundaryClass::Interior, _) => NodeKind::Free,
                (BoundaryClass::GammaZero, _) => NodeKind::Pinned(BoundaryClass::GammaZero),
                (BoundaryClass::GammaPlus, Convention::Phi) => NodeKind::Pinned(BoundaryClass::GammaPlus),
                (BoundaryClass::GammaMinus, Convention::Psi) => NodeKind::Pinned(BoundaryClass::GammaMinus),
                _ => NodeKind::Free,
            }
        })
        .collect()
}

/// Discretized generator over all grid nodes, with identity rows at pinned nodes.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub grid: Grid,
    pub convention: Convention,
    pub kinds: Vec<NodeKind>,
    pub matrix: Csr,
    /// `dgamma` for the spectral relations (`gamma` in one dimension).
    pub gamma: f64,
}

impl OperatorMatrix {
    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.kinds[k].is_free()).collect()
    }

    /// Operator restricted to free nodes, together with the node list.
    pub fn reduced(&self) -> (Csr, Vec<usize>) {
        let free = self.free_nodes();
        let mut pos = vec![usize::MAX; self.grid.len()];
        for (r, &k) in free.iter().enumerate() {
            pos[k] = r;
        }
        let rows = free
            .iter()
            .map(|&k| {
                self.matrix
                    .row(k)
                    .filter(|(c, _)| pos[*c] != usize::MAX)
                    .map(|(c, v)| (pos[c], v))
                    .collect()
            })
            .collect();
        (Csr::from_rows(rows), free)
    }

    /// Applies the full operator (pinned rows return the input value).
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix.matvec(f)
    }
}

fn check_1d(params: &ModelParams) -> Result<()> {
    if params.dim != 1 {
        return Err(Error::Unsupported(format!("spectral solver is one-dimensional, got d = {}", params.dim)));
    }
    params.validate()
}

struct Stencil {
    q_rate: f64,
    up: f64,
    down: f64,
    diff: f64,
}

/// Upwind rates at node `(i, j)`: transport speed over `h_q`, and the jump
/// rates up/down in momentum built from face-centred drifts `F(q) - gamma p`.
fn stencil(grid: &Grid, params: &ModelParams, i: usize, j: usize) -> Stencil {
    let f = params.force.eval_1d(grid.q(i));
    let p = grid.p(j);
    let drift_up = f - params.gamma * (p + 0.5 * grid.h_p);
    let drift_down = f - params.gamma * (p - 0.5 * grid.h_p);
    Stencil {
        q_rate: p.abs() / grid.h_q,
        up: drift_up.max(0.0) / grid.h_p,
        down: (-drift_down).max(0.0) / grid.h_p,
        diff: 0.5 * params.sigma * params.sigma / (grid.h_p * grid.h_p),
    }
}

/// Backward generator `p d_q + (F - gamma p) d_p + sigma^2/2 d_pp` as the
/// generator of a continuous-time Markov chain on the grid.
pub fn build_generator(grid: &Grid, params: &ModelParams) -> Result<OperatorMatrix> {
    check_1d(params)?;
    let kinds = node_kinds(grid, Convention::Phi);
    let rows = (0..grid.len())
        .map(|k| {
            if !kinds[k].is_free() {
                return vec![(k, 1.0)];
            }
            let (i, j) = grid.coords(k);
            let s = stencil(grid, params, i, j);
            let mut row = Vec::with_capacity(5);
            let p = grid.p(j);
            if p > 0.0 {
                row.push((grid.index(i + 1, j), s.q_rate));
            } else if p < 0.0 {
                row.push((grid.index(i - 1, j), s.q_rate));
            }
            row.push((grid.index(i, j + 1), s.up + s.diff));
            row.push((grid.index(i, j - 1), s.down + s.diff));
            row.push((k, -(s.q_rate + s.up + s.down + 2.0 * s.diff)));
            row
        })
        .collect();
    Ok(OperatorMatrix {
        grid: grid.clone(),
        convention: Convention::Phi,
        kinds,
        matrix: Csr::from_rows(rows),
        gamma: params.gamma,
    })
}

/// Forward operator `-p d_q psi - d_p((F - gamma p) psi) + sigma^2/2 d_pp psi`
/// in flux form: upwind inflow in position, face fluxes in momentum.
pub fn build_adjoint_generator(grid: &Grid, params: &ModelParams) -> Result<OperatorMatrix> {
    check_1d(params)?;
    let kinds = node_kinds(grid, Convention::Psi);
    let rows = (0..grid.len())
        .map(|k| {
            if !kinds[k].is_free() {
                return vec![(k, 1.0)];
            }
            let (i, j) = grid.coords(k);
            let p = grid.p(j);
            let q_rate = p.abs() / grid.h_q;
            let mut row = Vec::with_capacity(5);
            if p > 0.0 {
                row.push((grid.index(i - 1, j), q_rate));
            } else if p < 0.0 {
                row.push((grid.index(i + 1, j), q_rate));
            }
            // flux through face j+1/2 is G = b+ psi_j - b- psi_{j+1}
            let f = params.force.eval_1d(grid.q(i));
            let b_hi = f - params.gamma * (p + 0.5 * grid.h_p);
            let b_lo = f - params.gamma * (p - 0.5 * grid.h_p);
            let diff = 0.5 * params.sigma * params.sigma / (grid.h_p * grid.h_p);
            row.push((grid.index(i, j + 1), (-b_hi).max(0.0) / grid.h_p + diff));
            row.push((grid.index(i, j - 1), b_lo.max(0.0) / grid.h_p + diff));
            let out = (b_hi.max(0.0) + (-b_lo).max(0.0)) / grid.h_p;
            row.push((k, -(q_rate + out + 2.0 * diff)));
            row
        })
        .collect();
    Ok(OperatorMatrix {
        grid: grid.clone(),
        convention: Convention::Psi,
        kinds,
        matrix: Csr::from_rows(rows),
        gamma: params.gamma,
    })
}

/// Permutation `p -> -p` of node indices.
pub fn momentum_reversal(grid: &Grid) -> Vec<usize> {
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            grid.index(i, grid.n_p - 1 - j)
        })
        .collect()
}
