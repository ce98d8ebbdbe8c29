use num_complex::Complex64;
use serde::Serialize;

use super::fft::fft_nd;
use super::sobolev::l2_norm;
use crate::error::{Error, Result};
use crate::transfer::{BoxGrid, GridDensity};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DqOptions {
    /// Shifts `h` are restricted to `0 < |h| ≤ radius`.
    pub radius: f64,
}

impl Default for DqOptions {
    fn default() -> Self {
        Self { radius: 1.0 }
    }
}

/// Autocorrelation `A(k) = Σ_z g(z) g(z + k)` of cell values, periodic in
/// x and zero-extended in y. Indexed in the padded layout: x axes have the
/// grid length, y axes length `2 n_y` (negative lags wrap).
fn autocorrelation(grid: &BoxGrid, values: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let dims: Vec<usize> = grid.nx.iter().copied().chain(grid.ny.iter().map(|&n| 2 * n)).collect();
    let total: usize = dims.iter().product();
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    for (i, &v) in values.iter().enumerate() {
        let m = grid.multi(i);
        let flat = m.iter().zip(&dims).fold(0, |acc, (&mi, &n)| acc * n + mi);
        data[flat] = Complex64::new(v, 0.0);
    }
    fft_nd(&mut data, &dims, false);
    for z in data.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    fft_nd(&mut data, &dims, true);
    let scale = 1.0 / total as f64;
    (dims, data.iter().map(|z| z.re * scale).collect())
}

/// `Σ_{0<|h|≤R} |h|^{−(n+2δ)} ‖g(·+h) − g‖²_{L²}` with `h` on the cell
/// lattice.
pub(crate) fn dq_seminorm_sq(grid: &BoxGrid, values: &[f64], delta: f64, radius: f64) -> f64 {
    let u = grid.u();
    let n = (u + grid.d()) as f64;
    let widths: Vec<f64> = grid.nx.iter().map(|&k| 1.0 / k as f64).chain((0..grid.d()).map(|k| grid.y_width(k))).collect();
    let counts: Vec<usize> = grid.nx.iter().chain(&grid.ny).copied().collect();
    let (dims, acorr) = autocorrelation(grid, values);
    let a0 = acorr[0];
    let vol = grid.cell_volume();
    let reach: Vec<i64> = widths.iter().map(|w| (radius / w).floor() as i64).collect();
    let mut lag = reach.iter().map(|r| -r).collect::<Vec<_>>();
    let mut acc = 0.0;
    loop {
        let h2: f64 = lag.iter().zip(&widths).map(|(&l, w)| (l as f64 * w).powi(2)).sum();
        let in_range = (0..u + grid.d()).all(|a| a < u || (lag[a].unsigned_abs() as usize) < counts[a]);
        if h2 > 0.0 && h2 <= radius * radius {
            // a shift past the whole y range leaves no overlap
            let overlap = if in_range {
                acorr[lag.iter().zip(&dims).fold(0, |acc, (&l, &m)| acc * m + l.rem_euclid(m as i64) as usize)]
            } else {
                0.0
            };
            let kernel = h2.sqrt().powf(-(n + 2.0 * delta));
            acc += kernel * (2.0 * a0 - 2.0 * overlap) * vol;
        }
        let mut axis = lag.len();
        loop {
            if axis == 0 {
                return acc * vol;
            }
            axis -= 1;
            if lag[axis] < reach[axis] {
                lag[axis] += 1;
                break;
            }
            lag[axis] = -reach[axis];
        }
    }
}

/// Central difference along axis `axis` (x periodic, y zero outside).
pub(crate) fn partial_difference(grid: &BoxGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let u = grid.u();
    let counts: Vec<usize> = grid.nx.iter().chain(&grid.ny).copied().collect();
    let width = if axis < u { 1.0 / grid.nx[axis] as f64 } else { grid.y_width(axis - u) };
    let mut out = vec![0.0; values.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let m = grid.multi(i);
        let fetch = |step: i64| {
            let mut mm = m.clone();
            let k = m[axis] as i64 + step;
            if axis < u {
                mm[axis] = k.rem_euclid(counts[axis] as i64) as usize;
            } else if k < 0 || k >= counts[axis] as i64 {
                return 0.0;
            } else {
                mm[axis] = k as usize;
            }
            values[grid.flat(&mm)]
        };
        *o = (fetch(1) - fetch(-1)) / (2.0 * width);
    }
    out
}

/// Difference-quotient `H̃^s` norm for non-integer `s ∈ (0, 2)`:
/// `‖g‖²_{L²}` plus the truncated quotient of `g` for `s < 1`; for `s > 1`
/// the first derivatives (central differences) enter in `L²` and through
/// their own quotient of order `s − 1`.
pub fn sobolev_norm_dq_values(grid: &BoxGrid, values: &[f64], s: f64, opts: &DqOptions) -> Result<f64> {
    if !(s > 0.0 && s < 2.0) || s.fract() == 0.0 {
        return Err(Error::InvalidArgument(format!("difference-quotient norm needs non-integer s in (0,2), got {s}")));
    }
    if !(opts.radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    if values.len() != grid.n_cells() {
        return Err(Error::Dimension("value count does not match the grid".into()));
    }
    let delta = s.fract();
    let mut total = l2_norm(grid, values).powi(2);
    if s < 1.0 {
        total += dq_seminorm_sq(grid, values, delta, opts.radius);
    } else {
        for axis in 0..grid.u() + grid.d() {
            let g = partial_difference(grid, values, axis);
            total += l2_norm(grid, &g).powi(2) + dq_seminorm_sq(grid, &g, delta, opts.radius);
        }
    }
    Ok(total.sqrt())
}

pub fn sobolev_norm_dq(density: &GridDensity, s: f64, opts: &DqOptions) -> Result<f64> {
    sobolev_norm_dq_values(&density.grid, &density.values(), s, opts)
}

#[cfg(test)]
pub(crate) fn naive_seminorm_sq(grid: &BoxGrid, values: &[f64], delta: f64, radius: f64) -> f64 {
    assert_eq!((grid.u(), grid.d()), (1, 1));
    let (nx, ny) = (grid.nx[0] as i64, grid.ny[0] as i64);
    let (wx, wy) = (1.0 / nx as f64, grid.y_width(0));
    let at = |i: i64, j: i64| if j < 0 || j >= ny { 0.0 } else { values[(i.rem_euclid(nx) * ny + j) as usize] };
    let vol = grid.cell_volume();
    let rx = (radius / wx).floor() as i64;
    let ry = (radius / wy).floor() as i64;
    let mut acc = 0.0;
    for hx in -rx..=rx {
        for hy in -ry..=ry {
            let h = ((hx as f64 * wx).powi(2) + (hy as f64 * wy).powi(2)).sqrt();
            if h == 0.0 || h > radius {
                continue;
            }
            let kernel = h.powf(-(2.0 + 2.0 * delta));
            // sum over every z whose value or shifted value is nonzero
            for i in 0..nx {
                for j in -ny.abs() - ry.abs()..2 * ny + ry.abs() {
                    let diff = at(i + hx, j + hy) - at(i, j);
                    acc += kernel * diff * diff * vol * vol;
                }
            }
        }
    }
    acc
}
