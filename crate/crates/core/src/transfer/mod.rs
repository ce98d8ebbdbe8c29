//! Transfer operator `ℒφ(p) = Σ_{T(q)=p} φ(q) / |det DT(q)|`, its Ulam
//! discretisation, SRB density estimators and spectral probes.
//!
//! `|det DT| = |det E||det C|` is constant for this family, so `ℒ` needs no
//! Jacobian field.

mod grid;
mod mc;
mod spectrum;
mod ulam;

pub use grid::{BoxGrid, GridDensity};
pub use mc::{srb_histogram_mc, McHistogram, McOptions};
pub use spectrum::{arnoldi_ritz, spectral_gap_estimate, ArnoldiOptions, Spectrum};
pub use ulam::{build_ulam, srb_density_ulam, CsrMatrix, Sampling, UlamOperator, UlamSolve, UlamSummary};

use crate::model::SkewModel;

/// `ℒφ(x, y)` evaluated through the `N` preimages.
pub fn apply_l_exact(model: &SkewModel, phi: impl Fn(&[f64], &[f64]) -> f64, x: &[f64], y: &[f64]) -> f64 {
    model.preimages(x, y).iter().map(|(xp, yp)| phi(xp, yp)).sum::<f64>() / model.jacobian()
}

/// Midpoint rule over the box with `n` points per axis.
pub fn box_integral(u: usize, d: usize, k0: f64, n: usize, g: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> f64 {
    use rayon::prelude::*;
    let grid = BoxGrid::uniform(u, d, n, k0).expect("valid quadrature grid");
    let vol = grid.cell_volume();
    (0..grid.n_cells())
        .into_par_iter()
        .map(|i| {
            let (x, y) = grid.cell_center(i);
            g(&x, &y)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * vol
}

/// `(⟨ℒφ, ψ⟩, ⟨φ, ψ∘T⟩)` on the trapping box by midpoint quadrature with `n`
/// points per axis. Both sides agree when `φ` vanishes outside the box.
pub fn duality_pair(
    model: &SkewModel,
    phi: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    psi: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    n: usize,
) -> (f64, f64) {
    let (u, d, k0) = (model.u(), model.d(), model.k0());
    let lhs = box_integral(u, d, k0, n, |x, y| apply_l_exact(model, &phi, x, y) * psi(x, y));
    let rhs = box_integral(u, d, k0, n, |x, y| {
        let (x1, y1) = model.eval_t(x, y);
        phi(x, y) * psi(&x1, &y1)
    });
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Contraction, ExpandingMap, TrapOptions, TrigForcing};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn fat2(amp: f64) -> SkewModel {
        let f = if amp == 0.0 { TrigForcing::zero(1, 1) } else { TrigForcing::cosine(&[1], &[amp], 0.0).unwrap() };
        SkewModel::new(ExpandingMap::scalar(2).unwrap(), Contraction::scalar(0.6).unwrap(), f, 2, 0.0, TrapOptions::default())
            .unwrap()
    }

    fn bump(t: f64) -> f64 {
        if t.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - t * t)).exp()
        }
    }

    #[test]
    fn l_of_constant() {
        let m = fat2(0.0);
        let k0 = m.k0();
        let one_on_d = |_: &[f64], y: &[f64]| if y[0].abs() <= k0 { 1.0 } else { 0.0 };
        assert!((apply_l_exact(&m, one_on_d, &[0.3], &[0.0]) - 1.0 / 0.6).abs() < 1e-15);
        // support far from the preimages of (0.3, 0)
        let far = |x: &[f64], _: &[f64]| if (x[0] - 0.9).abs() < 0.01 { 1.0 } else { 0.0 };
        assert_eq!(apply_l_exact(&m, far, &[0.3], &[0.0]), 0.0);
    }

    #[test]
    fn l_preserves_integrals() {
        let m = fat2(0.1);
        let k0 = m.k0();
        let phi = |x: &[f64], y: &[f64]| (1.0 + 0.5 * (2.0 * PI * x[0]).cos()) * bump(y[0] / k0);
        let a = box_integral(1, 1, k0, 400, |x, y| apply_l_exact(&m, phi, x, y));
        let b = box_integral(1, 1, k0, 400, phi);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn duality_on_random_pairs() {
        let m = fat2(0.1);
        let k0 = m.k0();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let (a1, b1, a2, b2, w) = (rng.random::<f64>(), rng.random::<f64>() * 6.0, rng.random::<f64>(), rng.random::<f64>(), rng.random_range(0.5..0.95));
            let phi = move |x: &[f64], y: &[f64]| (1.0 + a1 * (2.0 * PI * x[0] + b1).cos()) * bump(y[0] / (w * k0));
            let psi = move |x: &[f64], y: &[f64]| (a2 * (4.0 * PI * x[0]).sin() + b2) * (3.0 * y[0]).cos();
            let (l, r) = duality_pair(&m, phi, psi, 300);
            assert!((l - r).abs() < 1e-4);
        }
    }

    #[test]
    fn ulam_zero_forcing_conserves_mass() {
        let m = fat2(0.0);
        let g = BoxGrid::uniform(1, 1, 32, m.k0()).unwrap();
        let op = build_ulam(&m, &g, Sampling::default()).unwrap();
        assert_eq!(op.max_leak(), 0.0);
        for s in op.column_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let sol = srb_density_ulam(&op, 1e-10, 5000).unwrap();
        assert!((sol.density.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stochastic_iteration_keeps_mass() {
        let m = fat2(0.1);
        let g = BoxGrid::uniform(1, 1, 16, m.k0()).unwrap();
        let op = build_ulam(&m, &g, Sampling::MonteCarlo { samples: 20, seed: 1 }).unwrap();
        let mut v: Vec<f64> = (0..g.n_cells()).map(|i| (i % 7) as f64).collect();
        let t0: f64 = v.iter().sum();
        let mut out = vec![0.0; v.len()];
        for _ in 0..20 {
            op.apply(&v, &mut out);
            std::mem::swap(&mut v, &mut out);
        }
        assert!((v.iter().sum::<f64>() - t0).abs() < 1e-9 * t0);
    }

    /// 1-D Ulam matrix of `t ↦ scale·t` on `n` equal cells of `[lo, hi)`
    /// (periodic when `periodic`), sampled at `k` cell-centred points.
    fn ulam_1d(n: usize, lo: f64, hi: f64, scale: f64, periodic: bool, k: usize) -> DMatrix<f64> {
        let w = (hi - lo) / n as f64;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for s in 0..k {
                let t = lo + (i as f64 + (s as f64 + 0.5) / k as f64) * w;
                let mut img = scale * t;
                if periodic {
                    img = img.rem_euclid(1.0);
                }
                let j = (((img - lo) / w) as usize).min(n - 1);
                m[(j, i)] += 1.0 / k as f64;
            }
        }
        m
    }

    #[test]
    fn zero_forcing_has_product_structure() {
        let m = fat2(0.0);
        // odd y resolution: y = 0 is a cell centre, so the y factor has a
        // single absorbing cell and the leading eigenvalue is simple
        let (nx, ny) = (16, 15);
        let g = BoxGrid::new(vec![nx], vec![ny], m.k0()).unwrap();
        let op = build_ulam(&m, &g, Sampling::default()).unwrap();
        let mx = ulam_1d(nx, 0.0, 1.0, 2.0, true, 4);
        let my = ulam_1d(ny, -m.k0(), m.k0(), 0.6, false, 3);
        let kron = mx.kronecker(&my);
        assert!((op.matrix.to_dense() - &kron).abs().max() < 1e-12);

        let ex: Vec<f64> = mx.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        let ey: Vec<f64> = my.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        let mut prods: Vec<f64> = ex.iter().flat_map(|a| ey.iter().map(move |b| a * b)).collect();
        prods.sort_by(|a, b| b.total_cmp(a));
        let spec = spectral_gap_estimate(&op, 4, &ArnoldiOptions::default()).unwrap();
        assert!((spec.leading() - 1.0).abs() < 1e-8);
        assert!((spec.second().unwrap() - prods[1]).abs() < 1e-6, "{:?} vs {:?}", spec.moduli, &prods[..4]);
    }

    #[test]
    fn histogram_of_zero_forcing_sits_on_the_zero_section() {
        let m = fat2(0.0);
        let g = BoxGrid::uniform(1, 1, 32, m.k0()).unwrap();
        let h = srb_histogram_mc(&m, &g, &McOptions::new(16, 60, 2000, 3)).unwrap();
        assert_eq!(h.escaped, 0);
        // y = 0 is the boundary between cells 15 and 16; 0.6^60·K₀ is far below a cell
        let ym = h.density.y_marginal();
        assert!((ym[15] + ym[16] - 1.0).abs() < 1e-12);
        let xm = h.density.x_marginal();
        let tv: f64 = 0.5 * xm.iter().map(|v| (v - 1.0 / 32.0).abs()).sum::<f64>();
        assert!(tv < 0.02, "x-marginal TV {tv}");
    }

    #[test]
    fn histogram_is_deterministic() {
        let m = fat2(0.1);
        let g = BoxGrid::uniform(1, 1, 16, m.k0()).unwrap();
        let a = srb_histogram_mc(&m, &g, &McOptions::new(20, 100, 500, 9)).unwrap();
        let b = srb_histogram_mc(&m, &g, &McOptions::new(20, 100, 500, 9)).unwrap();
        assert_eq!(a.density.mass, b.density.mass);
        let c = srb_histogram_mc(&m, &g, &McOptions::new(20, 100, 500, 10)).unwrap();
        assert_ne!(a.density.mass, c.density.mass);
    }

    #[test]
    fn ulam_and_histogram_roughly_agree() {
        let m = fat2(0.1);
        let g = BoxGrid::uniform(1, 1, 32, m.k0()).unwrap();
        let op = build_ulam(&m, &g, Sampling::default()).unwrap();
        let sol = srb_density_ulam(&op, 1e-10, 2000).unwrap();
        assert!(sol.converged);
        let h = srb_histogram_mc(&m, &g, &McOptions::new(64, 1000, 20_000, 1)).unwrap();
        let tv = sol.density.tv_distance(&h.density).unwrap();
        assert!(tv < 0.1, "TV {tv}");
    }
}
