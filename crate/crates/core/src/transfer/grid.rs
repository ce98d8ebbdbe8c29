use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::wrap01;

/// Box grid on `𝕋^u × [−K₀, K₀]^d`; cells are indexed with the x axes
/// first and the last y axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxGrid {
    pub nx: Vec<usize>,
    pub ny: Vec<usize>,
    pub k0: f64,
}

impl BoxGrid {
    pub fn new(nx: Vec<usize>, ny: Vec<usize>, k0: f64) -> Result<Self> {
        if nx.is_empty() || ny.is_empty() || nx.iter().chain(&ny).any(|&n| n == 0) {
            return Err(Error::InvalidArgument("grid resolutions must be positive".into()));
        }
        if !(k0 > 0.0) {
            return Err(Error::InvalidArgument("K0 must be positive".into()));
        }
        Ok(Self { nx, ny, k0 })
    }

    /// Uniform resolution `n` on every axis.
    pub fn uniform(u: usize, d: usize, n: usize, k0: f64) -> Result<Self> {
        Self::new(vec![n; u], vec![n; d], k0)
    }

    pub fn u(&self) -> usize {
        self.nx.len()
    }

    pub fn d(&self) -> usize {
        self.ny.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.nx.iter().chain(&self.ny).copied().collect()
    }

    pub fn n_cells(&self) -> usize {
        self.nx.iter().chain(&self.ny).product()
    }

    pub fn y_width(&self, axis: usize) -> f64 {
        2.0 * self.k0 / self.ny[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        let vx: f64 = self.nx.iter().map(|&n| 1.0 / n as f64).product();
        let vy: f64 = (0..self.d()).map(|i| self.y_width(i)).product();
        vx * vy
    }

    pub fn domain_volume(&self) -> f64 {
        (2.0 * self.k0).powi(self.d() as i32)
    }

    /// Multi-index of a flat cell index.
    pub fn multi(&self, mut idx: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut out = vec![0; dims.len()];
        for i in (0..dims.len()).rev() {
            out[i] = idx % dims[i];
            idx /= dims[i];
        }
        out
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().zip(self.dims()).fold(0, |acc, (&m, n)| acc * n + m)
    }

    /// Cell containing `(x, y)`; `None` when `y` leaves `[−K₀, K₀]^d`.
    pub fn locate(&self, x: &[f64], y: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for (i, &n) in self.nx.iter().enumerate() {
            let k = ((wrap01(x[i]) * n as f64) as usize).min(n - 1);
            idx = idx * n + k;
        }
        for (i, &n) in self.ny.iter().enumerate() {
            let t = (y[i] + self.k0) / (2.0 * self.k0);
            if !(0.0..=1.0).contains(&t) {
                return None;
            }
            let k = ((t * n as f64) as usize).min(n - 1);
            idx = idx * n + k;
        }
        Some(idx)
    }

    /// Lower corner and side lengths of a cell.
    pub fn cell_box(&self, idx: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.multi(idx);
        let u = self.u();
        let x_lo = (0..u).map(|i| m[i] as f64 / self.nx[i] as f64).collect();
        let x_w = self.nx.iter().map(|&n| 1.0 / n as f64).collect();
        let y_lo = (0..self.d()).map(|i| -self.k0 + m[u + i] as f64 * self.y_width(i)).collect();
        let y_w = (0..self.d()).map(|i| self.y_width(i)).collect();
        (x_lo, x_w, y_lo, y_w)
    }

    pub fn cell_center(&self, idx: usize) -> (Vec<f64>, Vec<f64>) {
        let (xl, xw, yl, yw) = self.cell_box(idx);
        (
            xl.iter().zip(&xw).map(|(l, w)| l + 0.5 * w).collect(),
            yl.iter().zip(&yw).map(|(l, w)| l + 0.5 * w).collect(),
        )
    }

    /// The grid with every resolution multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nx: self.nx.iter().map(|n| n * factor).collect(),
            ny: self.ny.iter().map(|n| n * factor).collect(),
            k0: self.k0,
        }
    }
}

/// Cell masses on a [`BoxGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDensity {
    pub grid: BoxGrid,
    pub mass: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: BoxGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.n_cells() {
            return Err(Error::Dimension(format!("{} masses for {} cells", mass.len(), grid.n_cells())));
        }
        if mass.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::InvalidArgument("cell masses must be finite and nonnegative".into()));
        }
        Ok(Self { grid, mass })
    }

    /// Masses of a function integrated by its cell-centre values.
    pub fn from_fn(grid: BoxGrid, f: impl Fn(&[f64], &[f64]) -> f64) -> Result<Self> {
        let vol = grid.cell_volume();
        let mass = (0..grid.n_cells())
            .map(|i| {
                let (x, y) = grid.cell_center(i);
                f(&x, &y) * vol
            })
            .collect();
        Self::new(grid, mass)
    }

    pub fn uniform(grid: BoxGrid) -> Self {
        let n = grid.n_cells();
        Self { grid, mass: vec![1.0 / n as f64; n] }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn normalize(&mut self) {
        let t = self.total();
        if t > 0.0 {
            self.mass.iter_mut().for_each(|m| *m /= t);
        }
    }

    /// Density values (mass per unit volume).
    pub fn values(&self) -> Vec<f64> {
        let v = self.grid.cell_volume();
        self.mass.iter().map(|m| m / v).collect()
    }

    pub fn sup(&self) -> f64 {
        self.mass.iter().fold(0.0f64, |a, &m| a.max(m)) / self.grid.cell_volume()
    }

    /// Total variation distance `½ Σ |m − m'|`.
    pub fn tv_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Dimension("densities live on different grids".into()));
        }
        Ok(0.5 * self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Masses summed over all y cells, on the x grid.
    pub fn x_marginal(&self) -> Vec<f64> {
        let ny: usize = self.grid.ny.iter().product();
        self.mass.chunks(ny).map(|c| c.iter().sum()).collect()
    }

    /// Masses summed over all x cells, on the y grid.
    pub fn y_marginal(&self) -> Vec<f64> {
        let ny: usize = self.grid.ny.iter().product();
        let mut out = vec![0.0; ny];
        for chunk in self.mass.chunks(ny) {
            for (o, m) in out.iter_mut().zip(chunk) {
                *o += m;
            }
        }
        out
    }

    /// Coarsening by an integer factor on every axis (masses add).
    pub fn coarsen(&self, factor: usize) -> Result<GridDensity> {
        if self.grid.dims().iter().any(|n| n % factor != 0) {
            return Err(Error::InvalidArgument(format!("factor {factor} does not divide the grid")));
        }
        let coarse = BoxGrid::new(
            self.grid.nx.iter().map(|n| n / factor).collect(),
            self.grid.ny.iter().map(|n| n / factor).collect(),
            self.grid.k0,
        )?;
        let mut mass = vec![0.0; coarse.n_cells()];
        for (i, &m) in self.mass.iter().enumerate() {
            let mi: Vec<usize> = self.grid.multi(i).iter().map(|v| v / factor).collect();
            mass[coarse.flat(&mi)] += m;
        }
        GridDensity::new(coarse, mass)
    }
}
