use num_complex::Complex64;
use serde::Serialize;

use super::fft::{fft_nd, signed_freq};
use crate::error::{Error, Result};
use crate::transfer::{BoxGrid, GridDensity};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SobolevOptions {
    /// Relative padding of the y range before periodisation.
    pub pad: f64,
    /// Largest admissible fraction of the total mass in the outermost y cells.
    pub boundary_tol: f64,
}

impl Default for SobolevOptions {
    fn default() -> Self {
        Self { pad: 0.5, boundary_tol: 1e-8 }
    }
}

/// Fraction of `Σ|v|` carried by cells in the outermost y layer.
pub fn boundary_fraction(grid: &BoxGrid, values: &[f64]) -> f64 {
    let u = grid.u();
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let edge: f64 = values
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let m = grid.multi(*i);
            (0..grid.d()).any(|k| m[u + k] == 0 || m[u + k] + 1 == grid.ny[k])
        })
        .map(|(_, v)| v.abs())
        .sum();
    edge / total
}

/// Cell values on `𝕋^u × [−Y, Y]^d` after zero padding, with their
/// transform `V·DFT` and squared frequencies `|ξ|² + |η|²`, where `ξ ∈ ℤ^u`
/// and `η ∈ ℤ^d / (2Y)`.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    pub dims: Vec<usize>,
    pub lengths: Vec<f64>,
    /// `|φ̂|² / Π L_j` per frequency.
    pub power: Vec<f64>,
    pub freq_sq: Vec<f64>,
}

impl SpectralGrid {
    pub fn from_values(grid: &BoxGrid, values: &[f64], opts: &SobolevOptions) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Dimension("value count does not match the grid".into()));
        }
        let frac = boundary_fraction(grid, values);
        if frac > opts.boundary_tol {
            return Err(Error::BoundaryMass { mass: frac, tol: opts.boundary_tol });
        }
        let u = grid.u();
        let padded_y: Vec<usize> = grid.ny.iter().map(|&n| n + 2 * ((n as f64 * opts.pad) / 2.0).ceil() as usize).collect();
        let dims: Vec<usize> = grid.nx.iter().chain(&padded_y).copied().collect();
        let mut lengths = vec![1.0; u];
        for (k, &m) in padded_y.iter().enumerate() {
            lengths.push(m as f64 * grid.y_width(k));
        }
        let total: usize = dims.iter().product();
        let mut data = vec![Complex64::new(0.0, 0.0); total];
        for (i, &v) in values.iter().enumerate() {
            let mut m = grid.multi(i);
            for k in 0..grid.d() {
                m[u + k] += (padded_y[k] - grid.ny[k]) / 2;
            }
            let flat = m.iter().zip(&dims).fold(0, |acc, (&mi, &n)| acc * n + mi);
            data[flat] = Complex64::new(v, 0.0);
        }
        fft_nd(&mut data, &dims, false);
        let vol = grid.cell_volume();
        let period: f64 = lengths.iter().product();
        let scale = vol * vol / period;
        let mut freq_sq = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rest = flat;
            let mut acc = 0.0;
            for a in (0..dims.len()).rev() {
                let k = rest % dims[a];
                rest /= dims[a];
                let f = signed_freq(k, dims[a]) / lengths[a];
                acc += f * f;
            }
            freq_sq.push(acc);
        }
        let power = data.iter().map(|z| z.norm_sqr() * scale).collect();
        Ok(Self { dims, lengths, power, freq_sq })
    }

    pub fn from_density(density: &GridDensity, opts: &SobolevOptions) -> Result<Self> {
        Self::from_values(&density.grid, &density.values(), opts)
    }

    /// `‖φ‖_{H^s}`.
    pub fn norm(&self, s: f64) -> f64 {
        self.power.iter().zip(&self.freq_sq).map(|(p, f)| p * (1.0 + f).powf(s)).sum::<f64>().sqrt()
    }

    /// Smallest `K` with `‖φ‖²_{H^t} ≤ ε‖φ‖²_{H^s} + K‖φ‖²_{L¹}` for every
    /// grid function on this lattice: frequencies where the `H^t` weight
    /// exceeds `ε` times the `H^s` weight are bounded through `|φ̂| ≤ ‖φ‖_{L¹}`.
    pub fn interpolation_constant(&self, t: f64, s: f64, eps: f64) -> f64 {
        let period: f64 = self.lengths.iter().product();
        self.freq_sq
            .iter()
            .map(|f| (1.0 + f).powf(t))
            .zip(self.freq_sq.iter().map(|f| (1.0 + f).powf(s)))
            .filter(|(wt, ws)| *wt > eps * ws)
            .map(|(wt, _)| wt)
            .sum::<f64>()
            / period
    }
}

/// Fourier `H^s` norm of a grid density (as a piecewise-constant function).
pub fn sobolev_norm(density: &GridDensity, s: f64, opts: &SobolevOptions) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument("s must be nonnegative".into()));
    }
    Ok(SpectralGrid::from_density(density, opts)?.norm(s))
}

/// Midpoint `L²` norm of cell values.
pub fn l2_norm(grid: &BoxGrid, values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume()).sqrt()
}

/// `L¹` norm of cell values.
pub fn l1_norm(grid: &BoxGrid, values: &[f64]) -> f64 {
    values.iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume()
}
