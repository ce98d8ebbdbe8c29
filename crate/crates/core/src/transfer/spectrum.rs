use nalgebra::{DMatrix, Schur};
use rand::Rng;
use serde::Serialize;

use super::ulam::UlamOperator;
use crate::error::{Error, Result};
use crate::orbit::orbit_rng;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ArnoldiOptions {
    pub krylov_dim: usize,
    pub seed: u64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self { krylov_dim: 120, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    /// Ritz values `(re, im)` sorted by decreasing modulus.
    pub eigenvalues: Vec<(f64, f64)>,
    pub moduli: Vec<f64>,
    pub krylov_dim: usize,
    /// The subspace became invariant before `krylov_dim` steps.
    pub invariant: bool,
}

impl Spectrum {
    pub fn leading(&self) -> f64 {
        self.moduli[0]
    }

    pub fn second(&self) -> Option<f64> {
        self.moduli.get(1).copied()
    }
}

/// Leading `k` Ritz values of a linear map of dimension `n` from an Arnoldi
/// factorisation with full reorthogonalisation.
pub fn arnoldi_ritz(
    n: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    k: usize,
    opts: &ArnoldiOptions,
) -> Result<Spectrum> {
    if k < 2 {
        return Err(Error::InvalidArgument("need k >= 2 eigenvalues".into()));
    }
    let m = opts.krylov_dim.min(n).max(1);
    let mut rng = orbit_rng(opts.seed, 0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut v0: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nrm = norm(&v0);
    v0.iter_mut().for_each(|v| *v /= nrm);
    basis.push(v0);
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut w = vec![0.0; n];
    let mut steps = m;
    let mut invariant = false;
    for j in 0..m {
        apply(&basis[j], &mut w);
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = dot(b, &w);
                h[(i, j)] += c;
                w.iter_mut().zip(b).for_each(|(wv, bv)| *wv -= c * bv);
            }
        }
        let beta = norm(&w);
        h[(j + 1, j)] = beta;
        if beta < 1e-12 {
            steps = j + 1;
            invariant = true;
            break;
        }
        if j + 1 < m {
            basis.push(w.iter().map(|v| v / beta).collect());
        }
    }
    let hm = h.view((0, 0), (steps, steps)).into_owned();
    let schur = Schur::try_new(hm, 1e-14, 10_000).ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let mut ev: Vec<(f64, f64)> = schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|a, b| b.0.hypot(b.1).total_cmp(&a.0.hypot(a.1)));
    ev.truncate(k);
    if ev.is_empty() {
        return Err(Error::Eigen("empty Krylov space".into()));
    }
    let moduli = ev.iter().map(|(r, i)| r.hypot(*i)).collect();
    Ok(Spectrum { eigenvalues: ev, moduli, krylov_dim: steps, invariant })
}

/// Top-`k` eigenvalue moduli of the Ulam matrix.
pub fn spectral_gap_estimate(op: &UlamOperator, k: usize, opts: &ArnoldiOptions) -> Result<Spectrum> {
    arnoldi_ritz(op.dim(), |v, out| op.apply(v, out), k, opts)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
