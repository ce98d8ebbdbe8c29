use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::field::SmoothField;
use crate::coding::MarkovPartition;
use crate::error::{Error, Result};
use crate::model::SkewModel;

/// Affine leaf `ψ(y) = x₀ + L y` over the box `U = [−K₀, K₀]^d`.
#[derive(Debug, Clone, Serialize)]
pub struct Leaf {
    pub base: Vec<f64>,
    /// `u × d` slope, row-major.
    pub slope: Vec<f64>,
}

impl Leaf {
    pub fn vertical(base: Vec<f64>, d: usize) -> Self {
        let u = base.len();
        Self { base, slope: vec![0.0; u * d] }
    }

    pub fn eval(&self, y: &[f64], out: &mut [f64]) {
        let d = y.len();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.base[i] + (0..d).map(|j| self.slope[i * d + j] * y[j]).sum::<f64>();
        }
    }

    pub fn slope_norm(&self, d: usize) -> f64 {
        let u = self.base.len();
        DMatrix::from_row_slice(u, d, &self.slope).singular_values().max()
    }
}

/// Polynomial by ascending coefficients.
fn poly_eval(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * z + a)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Order-`m` smoothstep: `S(0) = 0`, `S(1) = 1`, derivatives `1..=m` vanish
/// at both ends.
fn smoothstep(m: usize) -> Vec<f64> {
    let mut c = vec![0.0; 2 * m + 2];
    for k in 0..=m {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        c[m + 1 + k] = sign * binomial(m + k, k) * binomial(2 * m + 1, m - k);
    }
    c
}

/// Guaranteed upper bound on `sup_{[0,1]} |P|`: dense sampling plus half a
/// step times a coefficient bound on `P'`.
fn sup_bound_01(c: &[f64]) -> f64 {
    let n = 2048;
    let sampled = (0..=n).map(|i| poly_eval(c, i as f64 / n as f64).abs()).fold(0.0, f64::max);
    let lip: f64 = poly_deriv(c).iter().map(|a| a.abs()).sum();
    sampled + lip * 0.5 / n as f64
}

/// Tensor product of plateau profiles, scaled so that every partial
/// derivative of order `≤ order` is bounded by 1 and supported in the open
/// box `center ± half_width`.
#[derive(Debug, Clone, Serialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub plateau: f64,
    pub order: usize,
    #[serde(skip)]
    ramp: Vec<f64>,
    pub scale: f64,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, half_width: Vec<f64>, plateau: f64, order: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&plateau) {
            return Err(Error::InvalidArgument("plateau fraction must lie in [0, 1)".into()));
        }
        if center.len() != half_width.len() || half_width.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("bad test-function box".into()));
        }
        let ramp = smoothstep(order);
        let mut derivs = ramp.clone();
        let mut sups = vec![1.0];
        for _ in 1..=order {
            derivs = poly_deriv(&derivs);
            sups.push(sup_bound_01(&derivs));
        }
        let scale = half_width
            .iter()
            .map(|&w| {
                let stretch = (1.0 - plateau) * w;
                sups.iter().enumerate().map(|(j, s)| s / stretch.powi(j as i32)).fold(1.0, f64::max)
            })
            .product();
        Ok(Self { center, half_width, plateau, order, ramp, scale })
    }

    fn profile(&self, t: f64) -> f64 {
        let a = t.abs();
        if a >= 1.0 {
            0.0
        } else if a <= self.plateau {
            1.0
        } else {
            poly_eval(&self.ramp, (1.0 - a) / (1.0 - self.plateau))
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let p: f64 = y.iter().zip(&self.center).zip(&self.half_width).map(|((&v, &c), &w)| self.profile((v - c) / w)).product();
        p / self.scale
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DictionarySpec {
    /// Base points per x axis.
    pub base_points: usize,
    /// Slope entries take values `k·κ/steps`, `|k| ≤ steps`.
    pub slope_steps: usize,
    /// Plateau fractions of the full-width test functions.
    pub plateaus: Vec<f64>,
    /// Each y axis is also split into this many local test boxes.
    pub local_splits: usize,
    /// Midpoint nodes per y axis.
    pub quad_points: usize,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self { base_points: 8, slope_steps: 2, plateaus: vec![0.0, 0.5, 0.9], local_splits: 2, quad_points: 32 }
    }
}

/// Finite families of admissible leaves and test functions.
#[derive(Debug, Clone, Serialize)]
pub struct LeafDictionary {
    pub spec: DictionarySpec,
    pub leaves: Vec<Leaf>,
    pub k0: f64,
    /// Slope cap `min(α₀⁻¹/2, block limit)` per x axis.
    pub slope_cap: Vec<f64>,
    pub r: usize,
    d: usize,
}

impl LeafDictionary {
    /// Leaves have single-entry slopes with entries at most `α₀⁻¹/2` and
    /// small enough that `ψ(U)` fits inside the block around the level-1
    /// cell containing `ψ(0)`.
    pub fn build(model: &SkewModel, partition: &MarkovPartition, spec: DictionarySpec) -> Result<Self> {
        if spec.base_points == 0 || spec.quad_points == 0 || spec.local_splits == 0 {
            return Err(Error::InvalidArgument("dictionary sizes must be positive".into()));
        }
        let (u, d) = (model.u(), model.d());
        let k0 = model.k0();
        let k1 = if model.alpha0() > 0.0 { 0.5 / model.alpha0() } else { f64::INFINITY };
        let widths: Vec<f64> = partition.letter_box(0).iter().map(|(lo, hi)| hi - lo).collect();
        let slope_cap: Vec<f64> = widths.iter().map(|w| k1.min(0.999 * w / k0)).collect();
        let mut slopes = vec![vec![0.0; u * d]];
        for i in 0..u {
            for j in 0..d {
                for k in 1..=spec.slope_steps {
                    for sign in [-1.0, 1.0] {
                        let mut l = vec![0.0; u * d];
                        l[i * d + j] = sign * slope_cap[i] * k as f64 / spec.slope_steps as f64;
                        slopes.push(l);
                    }
                }
            }
        }
        let nb = spec.base_points;
        let mut leaves = Vec::new();
        for flat in 0..nb.pow(u as u32) {
            let mut rest = flat;
            let mut base = vec![0.0; u];
            for b in base.iter_mut().rev() {
                *b = ((rest % nb) as f64 + 0.5) / nb as f64;
                rest /= nb;
            }
            for l in &slopes {
                leaves.push(Leaf { base: base.clone(), slope: l.clone() });
            }
        }
        Ok(Self { spec, leaves, k0, slope_cap, r: model.r(), d })
    }

    /// Test functions of the given derivative order.
    pub fn tests(&self, order: usize) -> Vec<TestFunction> {
        let d = self.d;
        // keep the closed support strictly inside U
        let inner = self.k0 * (1.0 - 1e-9);
        let mut out = Vec::new();
        for &p in &self.spec.plateaus {
            if let Ok(t) = TestFunction::new(vec![0.0; d], vec![inner; d], p, order) {
                out.push(t);
            }
        }
        let n = self.spec.local_splits;
        if n > 1 {
            let w = inner / n as f64;
            for flat in 0..n.pow(d as u32) {
                let mut rest = flat;
                let mut center = vec![0.0; d];
                for c in center.iter_mut().rev() {
                    *c = -inner + (2 * (rest % n) + 1) as f64 * w;
                    rest /= n;
                }
                if let Ok(t) = TestFunction::new(center, vec![w; d], 0.5, order) {
                    out.push(t);
                }
            }
        }
        out
    }
}

/// `∫ φ(y) ∂_x^α ∂_y^β h(ψ(y), y) dy` by the midpoint rule on the support
/// of `φ`.
pub fn leaf_integral(h: &dyn SmoothField, leaf: &Leaf, test: &TestFunction, alpha: &[u32], beta: &[u32], nq: usize) -> f64 {
    let d = test.center.len();
    let mut x = vec![0.0; leaf.base.len()];
    let mut y = vec![0.0; d];
    let mut acc = 0.0;
    let cell: f64 = test.half_width.iter().map(|w| 2.0 * w / nq as f64).product();
    for flat in 0..nq.pow(d as u32) {
        let mut rest = flat;
        for k in (0..d).rev() {
            let i = rest % nq;
            rest /= nq;
            y[k] = test.center[k] - test.half_width[k] + (i as f64 + 0.5) * 2.0 * test.half_width[k] / nq as f64;
        }
        let phi = test.eval(&y);
        if phi == 0.0 {
            continue;
        }
        leaf.eval(&y, &mut x);
        acc += phi * h.partial(&x, &y, alpha, beta);
    }
    acc * cell
}

/// All multi-indices of length `n` with total order `m`.
pub fn multi_indices(n: usize, m: usize) -> Vec<Vec<u32>> {
    if n == 0 {
        return if m == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in multi_indices(n - 1, m - first) {
            rest.insert(0, first as u32);
            out.push(rest);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DaggerWitness {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub leaf: usize,
    pub test: TestFunction,
    pub integral: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DaggerBound {
    pub rho: usize,
    pub value: f64,
    /// Best value among derivatives of total order exactly `m`.
    pub per_order: Vec<f64>,
    pub witness: Option<DaggerWitness>,
}

/// Lower bound on the leaf norm `‖h‖^†_ρ`: the maximum of `|∫φ ∂^α∂^β h∘(ψ,id)|`
/// over the dictionary's leaves and test functions and all `|α|+|β| ≤ ρ`.
pub fn dagger_norm_lower(h: &dyn SmoothField, rho: usize, dict: &LeafDictionary) -> Result<DaggerBound> {
    if rho + 1 > dict.r {
        return Err(Error::OrderTooHigh { order: rho, r: dict.r });
    }
    let (u, d) = (h.u(), h.d());
    let mut per_order = Vec::with_capacity(rho + 1);
    let mut best: Option<DaggerWitness> = None;
    for m in 0..=rho {
        let tests = dict.tests(m);
        let mut level_best: Option<DaggerWitness> = None;
        for alpha_beta in multi_indices(u + d, m) {
            let (alpha, beta) = alpha_beta.split_at(u);
            let candidate = dict
                .leaves
                .par_iter()
                .enumerate()
                .flat_map_iter(|(li, leaf)| {
                    tests.iter().map(move |t| (li, t, leaf_integral(h, leaf, t, alpha, beta, dict.spec.quad_points)))
                })
                .map(|(li, t, v)| DaggerWitness { alpha: alpha.to_vec(), beta: beta.to_vec(), leaf: li, test: t.clone(), integral: v })
                .max_by(|a, b| a.integral.abs().total_cmp(&b.integral.abs()));
            if let Some(c) = candidate {
                if level_best.as_ref().is_none_or(|b| c.integral.abs() > b.integral.abs()) {
                    level_best = Some(c);
                }
            }
        }
        per_order.push(level_best.as_ref().map_or(0.0, |w| w.integral.abs()));
        if let Some(c) = level_best {
            if best.as_ref().is_none_or(|b| c.integral.abs() > b.integral.abs()) {
                best = Some(c);
            }
        }
    }
    let value = per_order.iter().copied().fold(0.0, f64::max);
    Ok(DaggerBound { rho, value, per_order, witness: best })
}
