//! Correlation decay along long orbits: `C_n = ∫φ·ψ∘Tⁿ dμ − ∫φ dμ ∫ψ dμ`
//! estimated by time averages, an exponential fit over the lags that stand
//! above the statistical noise, and the theoretical rate interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SkewModel;
use crate::orbit::{Orbit, DEFAULT_NOISE_BITS};
use crate::transversality::smallest_dth_singular;

/// `cos`/`sin` amplitudes of the mode `e^{2πi⟨k, x⟩}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum YFactor {
    One,
    /// `Σ_j coeffs[j] · y[axis]^j`.
    Polynomial { axis: usize, coeffs: Vec<f64> },
    /// `exp(1 − 1/(1 − |y − center|²/radius²))` inside the ball, else 0.
    Bump { center: Vec<f64>, radius: f64 },
}

/// Product observable `X(x)·Y(y)`; `X ≡ 1` when `x_terms` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observable {
    #[serde(default)]
    pub x_terms: Option<Vec<TrigTerm>>,
    pub y: YFactor,
}

impl Observable {
    pub fn constant() -> Self {
        Self { x_terms: None, y: YFactor::One }
    }

    pub fn cos_x(k: Vec<i64>) -> Self {
        Self { x_terms: Some(vec![TrigTerm { k, cos: 1.0, sin: 0.0 }]), y: YFactor::One }
    }

    pub fn y_coordinate(axis: usize) -> Self {
        Self { x_terms: None, y: YFactor::Polynomial { axis, coeffs: vec![0.0, 1.0] } }
    }

    pub fn validate(&self, u: usize, d: usize) -> Result<()> {
        if let Some(terms) = &self.x_terms {
            if terms.iter().any(|t| t.k.len() != u) {
                return Err(Error::Dimension(format!("observable modes must have length u = {u}")));
            }
        }
        match &self.y {
            YFactor::One => Ok(()),
            YFactor::Polynomial { axis, .. } if *axis >= d => Err(Error::Dimension(format!("y axis {axis} out of range"))),
            YFactor::Bump { center, radius } if center.len() != d || !(*radius > 0.0) => {
                Err(Error::InvalidArgument("bump needs a centre in R^d and a positive radius".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let xf = match &self.x_terms {
            None => 1.0,
            Some(terms) => terms
                .iter()
                .map(|t| {
                    let phase = 2.0 * std::f64::consts::PI * t.k.iter().zip(x).map(|(&k, &v)| k as f64 * v).sum::<f64>();
                    t.cos * phase.cos() + t.sin * phase.sin()
                })
                .sum(),
        };
        let yf = match &self.y {
            YFactor::One => 1.0,
            YFactor::Polynomial { axis, coeffs } => coeffs.iter().rev().fold(0.0, |acc, &c| acc * y[*axis] + c),
            YFactor::Bump { center, radius } => {
                let r2: f64 = y.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (radius * radius);
                if r2 < 1.0 {
                    (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
        };
        xf * yf
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationOptions {
    pub n_orbits: usize,
    pub burn_in: usize,
    pub orbit_len: usize,
    pub max_lag: usize,
    pub seed: u64,
    #[serde(default = "default_noise_bits")]
    pub noise_bits: u32,
}

fn default_noise_bits() -> u32 {
    DEFAULT_NOISE_BITS
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationTable {
    pub lags: Vec<usize>,
    pub c: Vec<f64>,
    /// Standard error over independent orbits.
    pub sigma: Vec<f64>,
    pub mean_phi: f64,
    pub mean_psi: f64,
    pub samples: usize,
}

/// Per-orbit lagged covariances averaged over independent orbits (orbit `k`
/// uses random stream `k` of `seed`).
pub fn estimate_correlations(model: &SkewModel, phi: &Observable, psi: &Observable, opts: &CorrelationOptions) -> Result<CorrelationTable> {
    phi.validate(model.u(), model.d())?;
    psi.validate(model.u(), model.d())?;
    if opts.n_orbits < 2 {
        return Err(Error::InvalidArgument("need at least two orbits for an error bar".into()));
    }
    if opts.orbit_len <= opts.max_lag + 1 {
        return Err(Error::InvalidArgument("orbit length must exceed the largest lag".into()));
    }
    let per_orbit: Vec<(Vec<f64>, f64, f64)> = (0..opts.n_orbits)
        .into_par_iter()
        .map(|k| {
            let mut orbit = Orbit::new(model, opts.seed, k as u64, opts.noise_bits);
            orbit.advance(opts.burn_in);
            let mut a = Vec::with_capacity(opts.orbit_len);
            let mut b = Vec::with_capacity(opts.orbit_len);
            for _ in 0..opts.orbit_len {
                a.push(phi.eval(orbit.x(), orbit.y()));
                b.push(psi.eval(orbit.x(), orbit.y()));
                orbit.step();
            }
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            a.iter_mut().for_each(|v| *v -= ma);
            b.iter_mut().for_each(|v| *v -= mb);
            let c = (0..=opts.max_lag)
                .map(|n| {
                    let len = a.len() - n;
                    a[..len].iter().zip(&b[n..]).map(|(p, q)| p * q).sum::<f64>() / len as f64
                })
                .collect();
            (c, ma, mb)
        })
        .collect();
    let k = opts.n_orbits as f64;
    let lags: Vec<usize> = (0..=opts.max_lag).collect();
    let mut c = vec![0.0; lags.len()];
    let mut sigma = vec![0.0; lags.len()];
    for n in 0..lags.len() {
        let mean = per_orbit.iter().map(|(v, _, _)| v[n]).sum::<f64>() / k;
        let var = per_orbit.iter().map(|(v, _, _)| (v[n] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        c[n] = mean;
        sigma[n] = (var / k).sqrt();
    }
    let mean_phi = per_orbit.iter().map(|p| p.1).sum::<f64>() / k;
    let mean_psi = per_orbit.iter().map(|p| p.2).sum::<f64>() / k;
    Ok(CorrelationTable { lags, c, sigma, mean_phi, mean_psi, samples: opts.n_orbits * opts.orbit_len })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// A lag is noise once `|C_n| ≤ noise_sigmas · σ_n`.
    pub noise_sigmas: f64,
    pub min_points: usize,
    pub first_lag: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { noise_sigmas: 3.0, min_points: 5, first_lag: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub zeta: f64,
    pub log_amplitude: f64,
    pub r_squared: f64,
    /// Inclusive lag window used by the fit.
    pub window: (usize, usize),
    /// First lag at or above `first_lag` inside the noise band.
    pub noise_floor: Option<usize>,
}

/// Least-squares fit of `log|C_n| = a + n log ζ` over `first_lag..floor`.
pub fn fit_decay(table: &CorrelationTable, opts: &FitOptions) -> Result<DecayFit> {
    let floor = table
        .lags
        .iter()
        .position(|&n| n >= opts.first_lag && table.c[n].abs() <= opts.noise_sigmas * table.sigma[n]);
    let end = floor.unwrap_or(table.lags.len());
    if end < opts.first_lag + opts.min_points.max(2) {
        return Err(Error::FitRefused(format!(
            "only {} lags above the noise floor, need {}",
            end.saturating_sub(opts.first_lag),
            opts.min_points
        )));
    }
    let xs: Vec<f64> = (opts.first_lag..end).map(|n| n as f64).collect();
    let ys: Vec<f64> = (opts.first_lag..end).map(|n| table.c[n].abs().ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DecayFit { zeta: slope.exp(), log_amplitude: intercept, r_squared, window: (opts.first_lag, end - 1), noise_floor: floor })
}

/// Admissible range `(lower, 1)` for the contraction rate, with the
/// unknown constant `B₁` set to 1.
#[derive(Debug, Clone, Serialize)]
pub struct DecayInterval {
    pub lower: f64,
    pub upper: f64,
    /// `lower < upper`.
    pub nonempty: bool,
    pub expansion_term: f64,
    pub volume_term: f64,
    pub nu: f64,
    pub rho0: usize,
    pub rho1: usize,
    pub q: usize,
    pub tau_upper: usize,
    pub b1_omitted: bool,
    /// Whether `s < ρ₀ − u − d` holds for the chosen orders.
    pub order_condition: bool,
}

/// `ν(ρ₀, ρ₁) = Σ_{j=ρ₁+1}^{ρ₀} 1/j`.
pub fn nu(rho0: usize, rho1: usize) -> f64 {
    (rho1 + 1..=rho0).map(|j| 1.0 / j as f64).sum()
}

/// `lower = max(‖E⁻¹‖^{1/ν}, (τ^{1/q} / (|det E||det C| m(C)^{2s}))^{1/2})`
/// with `ρ₀ = r − 1`, `ρ₁ = 0`.
pub fn theoretical_interval(model: &SkewModel, q: usize, tau_upper: usize) -> Result<DecayInterval> {
    if q == 0 || tau_upper == 0 {
        return Err(Error::InvalidArgument("q and tau must be positive".into()));
    }
    let (rho0, rho1) = (model.r() - 1, 0);
    let nu = nu(rho0, rho1);
    let e_inv_norm = model.e().inverse().singular_values().max();
    let k = model.constants();
    let m_c = smallest_dth_singular(model.c().matrix())?;
    let expansion_term = e_inv_norm.powf(1.0 / nu);
    let volume_term = ((tau_upper as f64).powf(1.0 / q as f64) / (k.det_e * k.det_c.abs() * m_c.powf(2.0 * model.s()))).sqrt();
    let lower = expansion_term.max(volume_term);
    Ok(DecayInterval {
        lower,
        upper: 1.0,
        nonempty: lower < 1.0,
        expansion_term,
        volume_term,
        nu,
        rho0,
        rho1,
        q,
        tau_upper,
        b1_omitted: true,
        order_condition: model.s() < rho0 as f64 - (model.u() + model.d()) as f64,
    })
}
