//! The skew product `T(x, y) = (E x mod 1, C y + f(x))`, its derived
//! constants and the standing hypotheses.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Reduce a coordinate to `[0, 1)`.
#[inline]
pub fn wrap01(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Integer lift of a linear expanding map of `𝕋^u`.
#[derive(Debug, Clone)]
pub struct ExpandingMap {
    rows: Vec<Vec<i64>>,
    real: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det: i128,
    coset_reps: Vec<Vec<i64>>,
}

impl ExpandingMap {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let u = rows.len();
        if u == 0 || rows.iter().any(|r| r.len() != u) {
            return Err(Error::InvalidModel("E must be a non-empty square integer matrix".into()));
        }
        let det = linalg::int_det(&rows);
        if det.abs() < 2 {
            return Err(Error::InvalidModel(format!("|det E| = {} must be at least 2", det.abs())));
        }
        if det.abs() > 1 << 22 {
            return Err(Error::InvalidModel(format!("|det E| = {} is too large", det.abs())));
        }
        let real = DMatrix::from_fn(u, u, |i, j| rows[i][j] as f64);
        let inverse = real
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidModel("E is singular".into()))?;
        if linalg::min_singular(&real) <= 1.0 {
            return Err(Error::InvalidModel(format!(
                "E is not expanding: smallest singular value {} <= 1",
                linalg::min_singular(&real)
            )));
        }
        let coset_reps = coset_representatives(&rows, det);
        debug_assert_eq!(coset_reps.len() as i128, det.abs());
        Ok(Self { rows, real, inverse, det, coset_reps })
    }

    pub fn scalar(e: i64) -> Result<Self> {
        Self::new(vec![vec![e]])
    }

    pub fn diagonal(entries: &[i64]) -> Result<Self> {
        let u = entries.len();
        Self::new((0..u).map(|i| (0..u).map(|j| if i == j { entries[i] } else { 0 }).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.real
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn det(&self) -> i128 {
        self.det
    }

    /// `N = |det E|`.
    pub fn degree(&self) -> usize {
        self.det.unsigned_abs() as usize
    }

    /// Diagonal entries when the lift is diagonal.
    pub fn diagonal_entries(&self) -> Option<Vec<i64>> {
        let u = self.dim();
        for i in 0..u {
            for j in 0..u {
                if i != j && self.rows[i][j] != 0 {
                    return None;
                }
            }
        }
        Some((0..u).map(|i| self.rows[i][i]).collect())
    }

    /// Representatives of `ℤ^u / Eℤ^u`.
    pub fn coset_reps(&self) -> &[Vec<i64>] {
        &self.coset_reps
    }

    pub fn apply_mod1(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                acc += self.rows[i][j] as f64 * xj;
            }
            *o = wrap01(acc);
        }
    }

    /// The `N` solutions of `E x' = x` in `𝕋^u`.
    pub fn torus_preimages(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let u = self.dim();
        self.coset_reps
            .iter()
            .map(|k| {
                let shifted: Vec<f64> = (0..u).map(|i| x[i] + k[i] as f64).collect();
                (0..u)
                    .map(|i| wrap01((0..u).map(|j| self.inverse[(i, j)] * shifted[j]).sum()))
                    .collect()
            })
            .collect()
    }
}

/// Integer points `k` with `E⁻¹k ∈ [0,1)^u`, tested exactly through the adjugate.
fn coset_representatives(rows: &[Vec<i64>], det: i128) -> Vec<Vec<i64>> {
    let u = rows.len();
    let adj = adjugate(rows);
    // Bounding box of E·[0,1]^u.
    let mut lo = vec![0i64; u];
    let mut hi = vec![0i64; u];
    for i in 0..u {
        for j in 0..u {
            let v = rows[i][j];
            if v < 0 {
                lo[i] += v;
            } else {
                hi[i] += v;
            }
        }
    }
    let mut reps = Vec::new();
    let mut k = lo.clone();
    loop {
        let inside = (0..u).all(|i| {
            let v: i128 = (0..u).map(|j| adj[i][j] * k[j] as i128).sum();
            if det > 0 {
                v >= 0 && v < det
            } else {
                v <= 0 && v > det
            }
        });
        if inside {
            reps.push(k.clone());
        }
        let mut axis = 0;
        loop {
            if axis == u {
                return reps;
            }
            k[axis] += 1;
            if k[axis] <= hi[axis] {
                break;
            }
            k[axis] = lo[axis];
            axis += 1;
        }
    }
}

fn adjugate(rows: &[Vec<i64>]) -> Vec<Vec<i128>> {
    let u = rows.len();
    if u == 1 {
        return vec![vec![1]];
    }
    let mut adj = vec![vec![0i128; u]; u];
    for i in 0..u {
        for j in 0..u {
            let minor: Vec<Vec<i64>> = rows
                .iter()
                .enumerate()
                .filter(|&(r, _)| r != i)
                .map(|(_, row)| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &v)| v).collect())
                .collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            adj[j][i] = sign * linalg::int_det(&minor);
        }
    }
    adj
}

/// Invertible linear contraction of `ℝ^d`.
#[derive(Debug, Clone)]
pub struct Contraction {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    norm: f64,
    min_sv: f64,
    det: f64,
}

impl Contraction {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidModel("C must be a non-empty square matrix".into()));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidModel("C is not invertible".into()))?;
        let norm = linalg::op_norm(&matrix);
        let min_sv = linalg::min_singular(&matrix);
        if norm >= 1.0 {
            return Err(Error::InvalidModel(format!("‖C‖ = {norm} must be < 1")));
        }
        if min_sv <= 0.0 {
            return Err(Error::InvalidModel("C is singular".into()));
        }
        let det = matrix.determinant();
        Ok(Self { matrix, inverse, norm, min_sv, det })
    }

    pub fn scalar(c: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, c))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `λ̄ = ‖C‖`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// `m(C) = λ̲ = ‖C⁻¹‖⁻¹`.
    pub fn min_singular(&self) -> f64 {
        self.min_sv
    }

    pub fn det(&self) -> f64 {
        self.det
    }
}

/// One Fourier mode `c_k e^{2πi⟨k,x⟩}` with `c_k ∈ ℂ^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierTerm {
    pub k: Vec<i64>,
    pub coeff: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct HalfTerm {
    k: Vec<f64>,
    coeff: Vec<Complex64>,
    // 2 for a ±k pair, 1 for k = 0
    weight: f64,
}

/// Real trigonometric polynomial `f: 𝕋^u → ℝ^d` stored with Hermitian
/// symmetric coefficients.
#[derive(Debug, Clone)]
pub struct TrigForcing {
    u: usize,
    d: usize,
    terms: Vec<FourierTerm>,
    half: Vec<HalfTerm>,
}

impl TrigForcing {
    pub fn new(u: usize, d: usize, terms: Vec<FourierTerm>) -> Result<Self> {
        for t in &terms {
            if t.k.len() != u || t.coeff.len() != d {
                return Err(Error::Dimension(format!(
                    "forcing term with k of length {} and {} coefficients; expected {u} and {d}",
                    t.k.len(),
                    t.coeff.len()
                )));
            }
        }
        let mut merged: Vec<(Vec<i64>, Vec<Complex64>)> = Vec::new();
        for t in &terms {
            let c: Vec<Complex64> = t.coeff.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            match merged.iter_mut().find(|(k, _)| *k == t.k) {
                Some((_, acc)) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                None => merged.push((t.k.clone(), c)),
            }
        }
        let scale = merged
            .iter()
            .flat_map(|(_, c)| c.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
            .max(1e-300);
        let tol = 1e-12 * scale;
        let mut half = Vec::new();
        for (k, c) in &merged {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            let is_zero = k.iter().all(|&v| v == 0);
            let partner = merged.iter().find(|(kk, _)| *kk == neg).map(|(_, cc)| cc.clone());
            let partner = match partner {
                Some(p) => p,
                None if c.iter().all(|z| z.norm() <= tol) => vec![Complex64::new(0.0, 0.0); d],
                None => {
                    return Err(Error::InvalidModel(format!(
                        "forcing is not Hermitian: frequency {k:?} has no partner {neg:?}"
                    )))
                }
            };
            if c.iter().zip(&partner).any(|(a, b)| (a - b.conj()).norm() > tol) {
                return Err(Error::InvalidModel(format!(
                    "forcing is not Hermitian at frequency {k:?}: coeff(-k) must be conj(coeff(k))"
                )));
            }
            // keep one representative per ±k pair: the lexicographically positive one
            let positive = k.iter().find(|&&v| v != 0).map(|&v| v > 0).unwrap_or(false);
            if is_zero || positive {
                half.push(HalfTerm {
                    k: k.iter().map(|&v| v as f64).collect(),
                    coeff: c.clone(),
                    weight: if is_zero { 1.0 } else { 2.0 },
                });
            }
        }
        Ok(Self { u, d, terms, half })
    }

    pub fn zero(u: usize, d: usize) -> Self {
        Self { u, d, terms: Vec::new(), half: Vec::new() }
    }

    /// `Σ_i amplitude_i cos(2π⟨k,x⟩ + phase)` in each component.
    pub fn cosine(k: &[i64], amplitude: &[f64], phase: f64) -> Result<Self> {
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        let c = Complex64::from_polar(0.5, phase);
        let plus = amplitude.iter().map(|&a| ((c * a).re, (c * a).im)).collect();
        let minus = amplitude.iter().map(|&a| ((c * a).re, -(c * a).im)).collect();
        Self::new(
            k.len(),
            amplitude.len(),
            vec![FourierTerm { k: k.to_vec(), coeff: plus }, FourierTerm { k: neg, coeff: minus }],
        )
    }

    /// Random trigonometric polynomial with frequencies `0 < |k|_∞ ≤ kmax`,
    /// Gaussian coefficients, rescaled so that the coefficient ℓ¹ mass
    /// (the sup-norm bound) equals `amplitude`.
    pub fn random<R: Rng>(u: usize, d: usize, kmax: i64, amplitude: f64, rng: &mut R) -> Self {
        if amplitude == 0.0 || kmax < 1 {
            return Self::zero(u, d);
        }
        let mut freqs = Vec::new();
        let mut k = vec![-kmax; u];
        loop {
            let positive = k.iter().find(|&&v| v != 0).map(|&v| v > 0).unwrap_or(false);
            if positive {
                freqs.push(k.clone());
            }
            let mut axis = 0;
            loop {
                if axis == u {
                    break;
                }
                k[axis] += 1;
                if k[axis] <= kmax {
                    break;
                }
                k[axis] = -kmax;
                axis += 1;
            }
            if axis == u {
                break;
            }
        }
        let mut raw: Vec<(Vec<i64>, Vec<Complex64>)> = freqs
            .into_iter()
            .map(|k| {
                let c = (0..d)
                    .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                (k, c)
            })
            .collect();
        let l1: f64 = raw
            .iter()
            .map(|(_, c)| 2.0 * c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .sum();
        let scale = amplitude / l1;
        let mut terms = Vec::new();
        for (k, c) in raw.iter_mut() {
            c.iter_mut().for_each(|z| *z *= scale);
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            terms.push(FourierTerm { k: k.clone(), coeff: c.iter().map(|z| (z.re, z.im)).collect() });
            terms.push(FourierTerm { k: neg, coeff: c.iter().map(|z| (z.re, -z.im)).collect() });
        }
        Self::new(u, d, terms).expect("random forcing is Hermitian by construction")
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.half.iter().all(|t| t.coeff.iter().all(|z| z.norm() == 0.0))
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.half {
            let phase = 2.0 * PI * dot(&t.k, x);
            let (s, c) = phase.sin_cos();
            for (o, z) in out.iter_mut().zip(&t.coeff) {
                *o += t.weight * (z.re * c - z.im * s);
            }
        }
    }

    /// `D^j f(x)[v_1, …, v_j]` for `j = dirs.len()`.
    pub fn deriv_along(&self, x: &[f64], dirs: &[&[f64]], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let j = dirs.len() as i32;
        // (2πi)^j
        let ipow = Complex64::i().powi(j) * (2.0 * PI).powi(j);
        for t in &self.half {
            let mut prod = 1.0;
            for v in dirs {
                prod *= dot(&t.k, v);
            }
            if prod == 0.0 {
                continue;
            }
            let e = Complex64::from_polar(1.0, 2.0 * PI * dot(&t.k, x)) * ipow * prod;
            for (o, z) in out.iter_mut().zip(&t.coeff) {
                *o += t.weight * (z * e).re;
            }
        }
    }

    /// Partial derivative `∂^α f(x)` for a multi-index `α ∈ ℕ^u`.
    pub fn partial(&self, x: &[f64], alpha: &[u32], out: &mut [f64]) {
        let mut axes: Vec<Vec<f64>> = Vec::new();
        for (l, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                let mut e = vec![0.0; self.u];
                e[l] = 1.0;
                axes.push(e);
            }
        }
        let dirs: Vec<&[f64]> = axes.iter().map(|v| v.as_slice()).collect();
        self.deriv_along(x, &dirs, out);
    }

    /// Upper bound `Σ_k ‖c_k‖ (2π|k|)^j` for `sup_x ‖D^j f(x)‖`.
    pub fn sup_bound(&self, j: usize) -> f64 {
        self.half
            .iter()
            .map(|t| {
                let cn = t.coeff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                t.weight * cn * (2.0 * PI * norm(&t.k)).powi(j as i32)
            })
            .sum()
    }

    /// Upper bound for `max_i sup_x |f_i(x)|`.
    pub fn component_sup_bound(&self) -> f64 {
        (0..self.d)
            .map(|i| self.half.iter().map(|t| t.weight * t.coeff[i].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `‖f‖_{C^r} = max_{0≤j≤r} sup ‖D^j f‖`, evaluated through [`sup_bound`](Self::sup_bound).
    pub fn cr_norm(&self, r: usize) -> f64 {
        (0..=r).map(|j| self.sup_bound(j)).fold(0.0, f64::max)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Options for the trapping-box half-width `K₀`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrapOptions {
    /// Relative margin above `‖f‖_∞ / (1 − ‖C‖)`.
    pub margin: f64,
    /// Lower bound on `K₀`, so that `f ≡ 0` still gets a box of positive height.
    pub floor: f64,
}

impl Default for TrapOptions {
    fn default() -> Self {
        Self { margin: 0.1, floor: 0.25 }
    }
}

/// Derived constants of a [`SkewModel`].
#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub u: usize,
    pub d: usize,
    pub degree: usize,
    pub det_e: f64,
    pub det_c: f64,
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub theta: f64,
    pub f_sup: f64,
    pub f_cr: f64,
    pub alpha0: f64,
    pub k0: f64,
}

#[derive(Debug, Clone)]
pub struct SkewModel {
    e: ExpandingMap,
    c: Contraction,
    f: TrigForcing,
    r: usize,
    s: f64,
    consts: Constants,
}

/// Membership tests for the standing hypotheses at a Sobolev index `s`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub s: f64,
    /// `|det C||det E| m(C)^{2s} > 1`.
    pub volume_clause: bool,
    /// `log(|det E||det C|) + 2 s log m(C)`.
    pub volume_margin: f64,
    /// `‖C‖ < ‖E⁻¹‖⁻¹ / |det E|^{1/(u−d+1)}`.
    pub norm_clause: bool,
    pub norm_bound: f64,
    pub norm_margin: f64,
    /// `s < r − ((u+d)/2 + 1)`.
    pub smoothness_clause: bool,
    pub smoothness_bound: f64,
    /// Largest index with `|det E||det C| m(C)^{2s*} = 1`.
    pub s_star: f64,
    pub volume_expanding: bool,
}

impl SkewModel {
    pub fn new(e: ExpandingMap, c: Contraction, f: TrigForcing, r: usize, s: f64, trap: TrapOptions) -> Result<Self> {
        let u = e.dim();
        let d = c.dim();
        if d < 1 || u < d {
            return Err(Error::InvalidModel(format!("need u >= d >= 1, got u = {u}, d = {d}")));
        }
        if f.u() != u || f.d() != d {
            return Err(Error::Dimension(format!(
                "forcing maps 𝕋^{} → ℝ^{}, model needs 𝕋^{u} → ℝ^{d}",
                f.u(),
                f.d()
            )));
        }
        if r < 2 {
            return Err(Error::InvalidModel(format!("smoothness order r = {r} must be >= 2")));
        }
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidModel(format!("Sobolev index s = {s} must be a finite non-negative number")));
        }
        if !(trap.margin > 0.0) || trap.floor < 0.0 {
            return Err(Error::InvalidModel("trapping margin must be positive and floor non-negative".into()));
        }
        let mu_lower = linalg::min_singular(e.matrix());
        let mu_upper = linalg::op_norm(e.matrix());
        let lambda_upper = c.norm();
        let lambda_lower = c.min_singular();
        let theta = lambda_upper / mu_lower;
        if theta >= 1.0 {
            return Err(Error::InvalidModel(format!("θ = {theta} must be < 1")));
        }
        let f_cr = f.cr_norm(r);
        let alpha0 = f_cr / (1.0 - lambda_upper);
        // The box [−K₀,K₀]^d is trapped under y ↦ Cy + f(x) iff ‖C‖_∞K₀ + max_i sup|f_i| ≤ K₀.
        let c_inf = linalg::inf_norm(c.matrix());
        if c_inf >= 1.0 {
            return Err(Error::InvalidModel(format!(
                "‖C‖_∞ = {c_inf} >= 1: no trapping box of the form [−K₀,K₀]^d"
            )));
        }
        let f_box = f.component_sup_bound();
        let k0 = ((1.0 + trap.margin) * f_box / (1.0 - c_inf)).max(trap.floor);
        if !(k0 > 0.0) {
            return Err(Error::InvalidModel("degenerate trapping region: K₀ = 0 (raise the floor)".into()));
        }
        if c_inf * k0 + f_box > k0 {
            return Err(Error::InvalidModel("trapping inclusion T(D) ⊂ D fails".into()));
        }
        let consts = Constants {
            u,
            d,
            degree: e.degree(),
            det_e: e.det() as f64,
            det_c: c.det(),
            mu_lower,
            mu_upper,
            lambda_lower,
            lambda_upper,
            theta,
            f_sup: f.sup_bound(0),
            f_cr,
            alpha0,
            k0,
        };
        Ok(Self { e, c, f, r, s, consts })
    }

    pub fn e(&self) -> &ExpandingMap {
        &self.e
    }

    pub fn c(&self) -> &Contraction {
        &self.c
    }

    pub fn f(&self) -> &TrigForcing {
        &self.f
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn u(&self) -> usize {
        self.consts.u
    }

    pub fn d(&self) -> usize {
        self.consts.d
    }

    pub fn constants(&self) -> &Constants {
        &self.consts
    }

    pub fn k0(&self) -> f64 {
        self.consts.k0
    }

    pub fn alpha0(&self) -> f64 {
        self.consts.alpha0
    }

    pub fn theta(&self) -> f64 {
        self.consts.theta
    }

    /// `|det DT| = |det E||det C|`, constant over the phase space.
    pub fn jacobian(&self) -> f64 {
        (self.consts.det_e * self.consts.det_c).abs()
    }

    /// Same model with a different forcing (used by scans).
    pub fn with_forcing(&self, f: TrigForcing, trap: TrapOptions) -> Result<Self> {
        Self::new(self.e.clone(), self.c.clone(), f, self.r, self.s, trap)
    }

    pub fn eval_t(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x1 = vec![0.0; self.u()];
        let mut y1 = vec![0.0; self.d()];
        self.map_into(x, y, &mut x1, &mut y1);
        (x1, y1)
    }

    /// `T(x, y)` written into caller-provided buffers.
    pub fn map_into(&self, x: &[f64], y: &[f64], x_out: &mut [f64], y_out: &mut [f64]) {
        self.f.eval(x, y_out);
        let cm = self.c.matrix();
        for (i, yo) in y_out.iter_mut().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                *yo += cm[(i, j)] * yj;
            }
        }
        self.e.apply_mod1(x, x_out);
    }

    /// All `N` points `(x', y')` with `T(x', y') = (x, y)`.
    pub fn preimages(&self, x: &[f64], y: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let d = self.d();
        let mut fx = vec![0.0; d];
        self.e
            .torus_preimages(x)
            .into_iter()
            .map(|xp| {
                self.f.eval(&xp, &mut fx);
                let diff: Vec<f64> = (0..d).map(|i| y[i] - fx[i]).collect();
                let cinv = self.c.inverse();
                let yp = (0..d).map(|i| (0..d).map(|j| cinv[(i, j)] * diff[j]).sum()).collect();
                (xp, yp)
            })
            .collect()
    }

    /// `∂^α f(x)` for `|α| ≤ r`.
    pub fn deriv_f(&self, x: &[f64], alpha: &[u32]) -> Result<Vec<f64>> {
        if alpha.len() != self.u() || x.len() != self.u() {
            return Err(Error::Dimension("multi-index and point must have length u".into()));
        }
        let order: usize = alpha.iter().map(|&a| a as usize).sum();
        if order > self.r {
            return Err(Error::OrderTooHigh { order, r: self.r });
        }
        let mut out = vec![0.0; self.d()];
        self.f.partial(x, alpha, &mut out);
        Ok(out)
    }

    pub fn check_conditions(&self) -> ConditionReport {
        self.check_conditions_at(self.s)
    }

    pub fn check_conditions_at(&self, s: f64) -> ConditionReport {
        let k = &self.consts;
        let vol = (k.det_e * k.det_c).abs();
        let m_c = k.lambda_lower;
        let volume_margin = vol.ln() + 2.0 * s * m_c.ln();
        let exponent = 1.0 / (k.u as f64 - k.d as f64 + 1.0);
        let norm_bound = k.mu_lower / (k.degree as f64).powf(exponent);
        let smoothness_bound = self.r as f64 - ((k.u + k.d) as f64 / 2.0 + 1.0);
        ConditionReport {
            s,
            volume_clause: volume_margin > 0.0,
            volume_margin,
            norm_clause: k.lambda_upper < norm_bound,
            norm_bound,
            norm_margin: norm_bound - k.lambda_upper,
            smoothness_clause: s < smoothness_bound,
            smoothness_bound,
            s_star: vol.ln() / (2.0 * (1.0 / m_c).ln()),
            volume_expanding: vol > 1.0,
        }
    }

    /// Whether `(x, y)` lies in `D = 𝕋^u × [−K₀, K₀]^d`.
    pub fn in_trapping_region(&self, y: &[f64]) -> bool {
        y.iter().all(|v| v.abs() <= self.consts.k0)
    }
}
