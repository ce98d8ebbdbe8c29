use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{BoxGrid, GridDensity};
use crate::error::{Error, Result};
use crate::model::SkewModel;
use crate::orbit::orbit_rng;

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from per-column `(row, value)` lists.
    pub fn from_columns(n_rows: usize, cols: &[Vec<(usize, f64)>]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for col in cols {
            for &(r, _) in col {
                counts[r + 1] += 1;
            }
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let nnz = row_ptr[n_rows];
        let mut col_idx = vec![0; nnz];
        let mut vals = vec![0.0; nnz];
        let mut next = counts;
        for (c, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                col_idx[next[r]] = c;
                vals[next[r]] = v;
                next[r] += 1;
            }
        }
        Self { n_rows, n_cols: cols.len(), row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().with_min_len(256).for_each(|(r, o)| {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            *o = self.col_idx[a..b].iter().zip(&self.vals[a..b]).map(|(&c, &w)| w * v[c]).sum();
        });
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_cols];
        for (&c, &v) in self.col_idx.iter().zip(&self.vals) {
            s[c] += v;
        }
        s
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.vals[k];
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sampling {
    /// Cell-centred sub-points: `per_axis` per y axis, and per x axis the
    /// smallest multiple of `|e_i|` that is at least `per_axis` when `E` is
    /// diagonal. The latter makes the x factor of the matrix exact.
    Subgrid { per_axis: usize },
    /// Uniform random points, one stream per column.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Subgrid { per_axis: 3 }
    }
}

impl Sampling {
    /// Sub-points per axis, x axes first.
    pub fn axis_counts(&self, model: &SkewModel) -> Option<Vec<usize>> {
        let Sampling::Subgrid { per_axis } = *self else { return None };
        let diag = model.e().diagonal_entries();
        let mut counts: Vec<usize> = (0..model.u())
            .map(|i| match &diag {
                Some(e) => {
                    let m = e[i].unsigned_abs() as usize;
                    per_axis.div_ceil(m) * m
                }
                None => per_axis,
            })
            .collect();
        counts.extend(std::iter::repeat_n(per_axis, model.d()));
        Some(counts)
    }

    pub fn samples_per_cell(&self, model: &SkewModel) -> usize {
        match *self {
            Sampling::Subgrid { .. } => self.axis_counts(model).expect("subgrid").iter().product(),
            Sampling::MonteCarlo { samples, .. } => samples,
        }
    }
}

/// Ulam matrix `M[j][i] ≈ vol(B_i ∩ T⁻¹B_j) / vol(B_i)`.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    pub grid: BoxGrid,
    pub sampling: Sampling,
    pub samples_per_cell: usize,
    pub matrix: CsrMatrix,
    /// Fraction of each column's samples mapped outside the box.
    pub leak: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UlamSummary {
    pub cells: usize,
    pub nnz: usize,
    pub samples_per_cell: usize,
    pub sampling: Sampling,
    pub max_leak: f64,
    pub leaking_columns: usize,
}

pub fn build_ulam(model: &SkewModel, grid: &BoxGrid, sampling: Sampling) -> Result<UlamOperator> {
    if grid.u() != model.u() || grid.d() != model.d() {
        return Err(Error::Dimension("grid and model dimensions differ".into()));
    }
    let spc = sampling.samples_per_cell(model);
    if spc == 0 {
        return Err(Error::InvalidArgument("need at least one sample per cell".into()));
    }
    let built: Vec<(Vec<(usize, f64)>, f64)> = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| column(model, grid, sampling, spc, i))
        .collect();
    let (cols, leak): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    Ok(UlamOperator { grid: grid.clone(), sampling, samples_per_cell: spc, matrix: CsrMatrix::from_columns(grid.n_cells(), &cols), leak })
}

fn column(model: &SkewModel, grid: &BoxGrid, sampling: Sampling, spc: usize, i: usize) -> (Vec<(usize, f64)>, f64) {
    let (xl, xw, yl, yw) = grid.cell_box(i);
    let u = xl.len();
    let lo: Vec<f64> = xl.iter().chain(&yl).copied().collect();
    let w: Vec<f64> = xw.iter().chain(&yw).copied().collect();
    let dims = lo.len();
    let mut pt = vec![0.0; dims];
    let mut xo = vec![0.0; u];
    let mut yo = vec![0.0; dims - u];
    let mut hits: Vec<usize> = Vec::with_capacity(spc);
    let mut leaked = 0usize;
    let mut push = |pt: &[f64], hits: &mut Vec<usize>| {
        model.map_into(&pt[..u], &pt[u..], &mut xo, &mut yo);
        match grid.locate(&xo, &yo) {
            Some(j) => hits.push(j),
            None => leaked += 1,
        }
    };
    match sampling {
        Sampling::Subgrid { .. } => {
            let counts = sampling.axis_counts(model).expect("subgrid");
            for flat in 0..spc {
                let mut rest = flat;
                for k in (0..dims).rev() {
                    let s = rest % counts[k];
                    rest /= counts[k];
                    pt[k] = lo[k] + (s as f64 + 0.5) / counts[k] as f64 * w[k];
                }
                push(&pt, &mut hits);
            }
        }
        Sampling::MonteCarlo { seed, .. } => {
            let mut rng = orbit_rng(seed, i as u64);
            for _ in 0..spc {
                for k in 0..dims {
                    pt[k] = lo[k] + rng.random::<f64>() * w[k];
                }
                push(&pt, &mut hits);
            }
        }
    }
    hits.sort_unstable();
    let mut col: Vec<(usize, f64)> = Vec::new();
    let mut k = 0;
    while k < hits.len() {
        let j = hits[k];
        let mut count = 0usize;
        while k < hits.len() && hits[k] == j {
            count += 1;
            k += 1;
        }
        col.push((j, count as f64 / spc as f64));
    }
    (col, leaked as f64 / spc as f64)
}

impl UlamOperator {
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec(v, out);
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.matrix.column_sums()
    }

    pub fn max_leak(&self) -> f64 {
        self.leak.iter().fold(0.0, |a: f64, &b| a.max(b))
    }

    /// Whether any column leaks more than `tol`.
    pub fn leak_flagged(&self, tol: f64) -> bool {
        self.max_leak() > tol
    }

    pub fn summary(&self) -> UlamSummary {
        UlamSummary {
            cells: self.dim(),
            nnz: self.matrix.nnz(),
            samples_per_cell: self.samples_per_cell,
            sampling: self.sampling,
            max_leak: self.max_leak(),
            leaking_columns: self.leak.iter().filter(|&&l| l > 0.0).count(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UlamSolve {
    #[serde(skip)]
    pub density: GridDensity,
    /// `‖Mψ − ψ‖₁` of the returned density.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The Cesàro average was returned instead of the last power iterate.
    pub cesaro: bool,
}

fn l1_residual(op: &UlamOperator, psi: &[f64], buf: &mut [f64]) -> f64 {
    op.apply(psi, buf);
    buf.iter().zip(psi).map(|(a, b)| (a - b).abs()).sum()
}

/// Fixed density of the Ulam matrix by power iteration from the uniform
/// density, with the running Cesàro average as fallback.
pub fn srb_density_ulam(op: &UlamOperator, tol: f64, max_iters: usize) -> Result<UlamSolve> {
    let n = op.dim();
    let mut psi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut avg = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_iters {
        op.apply(&psi, &mut next);
        residual = next.iter().zip(&psi).map(|(a, b)| (a - b).abs()).sum();
        iterations += 1;
        let total: f64 = next.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("all mass leaked from the grid".into()));
        }
        next.iter_mut().for_each(|v| *v /= total);
        std::mem::swap(&mut psi, &mut next);
        for (a, p) in avg.iter_mut().zip(&psi) {
            *a += p;
        }
        if residual <= tol {
            break;
        }
    }
    let mut cesaro = false;
    if residual > tol && iterations > 0 {
        let total: f64 = avg.iter().sum();
        avg.iter_mut().for_each(|v| *v /= total);
        if l1_residual(op, &avg, &mut next) < l1_residual(op, &psi, &mut next) {
            psi = avg;
            cesaro = true;
        }
    }
    let mut density = GridDensity::new(op.grid.clone(), psi)?;
    density.normalize();
    let residual = l1_residual(op, &density.mass, &mut next);
    let converged = residual <= tol;
    Ok(UlamSolve { density, residual, iterations, converged, cesaro })
}
