use serde::Serialize;

use super::dagger::{dagger_norm_lower, LeafDictionary};
use super::field::MollifiedDensity;
use super::sobolev::{sobolev_norm, SobolevOptions};
use crate::error::{Error, Result};
use crate::transfer::{BoxGrid, GridDensity, UlamOperator};

#[derive(Debug, Clone, Serialize)]
pub struct LyOptions {
    pub s: f64,
    pub rho: usize,
    pub iterations: usize,
    /// Gaussian width (in cells) used before evaluating leaf norms.
    pub mollify_cells: f64,
    pub sobolev: SobolevOptions,
}

impl Default for LyOptions {
    fn default() -> Self {
        Self { s: 0.15, rho: 0, iterations: 40, mollify_cells: 2.0, sobolev: SobolevOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LyRow {
    pub n: usize,
    pub hs: f64,
    pub dagger: Option<f64>,
    pub hs_ratio: Option<f64>,
    pub dagger_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub s: f64,
    pub rho: usize,
    pub rows: Vec<LyRow>,
    /// Geometric-mean ratio `(‖φ_N‖ / ‖φ_{N/2}‖)^{1/(N − N/2)}`.
    pub asymptotic_ratio: f64,
}

impl NormReport {
    pub fn hs_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.hs).collect()
    }
}

/// Normalised indicator of `𝕋^u × [−a K₀, a K₀]^d`, smoothed with
/// Gaussian ramps of width `ramp` (in units of `K₀`) and sampled at cell
/// centres. Vanishes to machine precision near `|y| = K₀` when
/// `a + 8·ramp < 1`.
pub fn smoothed_indicator(grid: &BoxGrid, a: f64, ramp: f64) -> Result<GridDensity> {
    if !(a > 0.0 && a < 1.0 && ramp > 0.0) {
        return Err(Error::InvalidArgument("need 0 < a < 1 and ramp > 0".into()));
    }
    let k0 = grid.k0;
    let edge = a * k0;
    let w = ramp * k0;
    let mut dens = GridDensity::from_fn(grid.clone(), |_, y| {
        y.iter()
            .map(|&v| 0.5 * statrs::function::erf::erfc((v.abs() - edge) / (w * std::f64::consts::SQRT_2)))
            .product()
    })?;
    dens.normalize();
    Ok(dens)
}

/// Iterates `φ_{n+1} = P φ_n` with the Ulam matrix and records `‖φ_n‖_{H^s}`
/// and, when a dictionary is given, the leaf-norm lower bound of the
/// mollified iterate.
pub fn ly_ratio_track(op: &UlamOperator, start: &GridDensity, dict: Option<&LeafDictionary>, opts: &LyOptions) -> Result<NormReport> {
    if start.grid != op.grid {
        return Err(Error::Dimension("start density lives on a different grid".into()));
    }
    let mut mass = start.mass.clone();
    let mut next = vec![0.0; mass.len()];
    let mut rows: Vec<LyRow> = Vec::with_capacity(opts.iterations + 1);
    for n in 0..=opts.iterations {
        if n > 0 {
            op.apply(&mass, &mut next);
            std::mem::swap(&mut mass, &mut next);
        }
        let dens = GridDensity::new(op.grid.clone(), mass.clone())?;
        let hs = sobolev_norm(&dens, opts.s, &opts.sobolev)?;
        let dagger = match dict {
            Some(dict) => Some(dagger_norm_lower(&MollifiedDensity::new(&dens, opts.mollify_cells), opts.rho, dict)?.value),
            None => None,
        };
        let prev = rows.last();
        let ratio = |cur: Option<f64>, old: Option<f64>| match (cur, old) {
            (Some(c), Some(o)) if o > 0.0 => Some(c / o),
            _ => None,
        };
        let hs_ratio = ratio(Some(hs), prev.map(|r| r.hs));
        let dagger_ratio = ratio(dagger, prev.and_then(|r| r.dagger));
        rows.push(LyRow { n, hs, dagger, hs_ratio, dagger_ratio });
    }
    let last = opts.iterations;
    let mid = last / 2;
    let asymptotic_ratio = if last > mid && rows[mid].hs > 0.0 {
        (rows[last].hs / rows[mid].hs).powf(1.0 / (last - mid) as f64)
    } else {
        1.0
    };
    Ok(NormReport { s: opts.s, rho: opts.rho, rows, asymptotic_ratio })
}
