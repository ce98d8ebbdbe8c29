//! Long orbits of `T` for Monte-Carlo estimators.
//!
//! Iterating `x ↦ E x mod 1` in binary floating point loses one bit per step
//! for `E = 2` and collapses onto 0 after about 50 steps. The base coordinate
//! is therefore kept as a 64-bit fixed-point fraction, `E` is applied with
//! wrapping integer arithmetic (exact mod 1), and the lowest `noise_bits` bits
//! are refreshed from the orbit's random stream after every step. The
//! perturbation is below `2^(noise_bits − 64)` per step.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::SkewModel;

pub const DEFAULT_NOISE_BITS: u32 = 12;

const SCALE: f64 = 1.0 / 18_446_744_073_709_551_616.0; // 2^-64

/// Random stream `stream` of the generator seeded with `seed`.
pub fn orbit_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct Orbit<'m> {
    model: &'m SkewModel,
    rows: Vec<Vec<u64>>,
    fixed: Vec<u64>,
    next_fixed: Vec<u64>,
    x: Vec<f64>,
    y: Vec<f64>,
    next_y: Vec<f64>,
    mask: u64,
    rng: ChaCha8Rng,
}

impl<'m> Orbit<'m> {
    /// Orbit started from a uniform point of the trapping box.
    pub fn new(model: &'m SkewModel, seed: u64, stream: u64, noise_bits: u32) -> Self {
        let mut rng = orbit_rng(seed, stream);
        let u = model.u();
        let fixed: Vec<u64> = (0..u).map(|_| rng.next_u64()).collect();
        let k0 = model.k0();
        let y = (0..model.d()).map(|_| rng.random_range(-k0..k0)).collect();
        Self::from_parts(model, fixed, y, rng, noise_bits)
    }

    /// Orbit started from a given point.
    pub fn from_point(model: &'m SkewModel, x: &[f64], y: &[f64], seed: u64, stream: u64, noise_bits: u32) -> Self {
        let fixed = x.iter().map(|&v| (crate::model::wrap01(v) * 18_446_744_073_709_551_616.0) as u64).collect();
        Self::from_parts(model, fixed, y.to_vec(), orbit_rng(seed, stream), noise_bits)
    }

    fn from_parts(model: &'m SkewModel, fixed: Vec<u64>, y: Vec<f64>, rng: ChaCha8Rng, noise_bits: u32) -> Self {
        let rows = model.e().rows().iter().map(|r| r.iter().map(|&v| v as u64).collect()).collect();
        let x = fixed.iter().map(|&v| v as f64 * SCALE).collect();
        let mask = if noise_bits >= 64 { u64::MAX } else { (1u64 << noise_bits) - 1 };
        let u = fixed.len();
        let d = y.len();
        Self { model, rows, next_fixed: vec![0; u], fixed, x, next_y: vec![0.0; d], y, mask, rng }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn step(&mut self) {
        let f = self.model.f();
        f.eval(&self.x, &mut self.next_y);
        let cm = self.model.c().matrix();
        for (i, out) in self.next_y.iter_mut().enumerate() {
            for (j, &yj) in self.y.iter().enumerate() {
                *out += cm[(i, j)] * yj;
            }
        }
        std::mem::swap(&mut self.y, &mut self.next_y);
        for (i, out) in self.next_fixed.iter_mut().enumerate() {
            let mut acc = 0u64;
            for (j, &xj) in self.fixed.iter().enumerate() {
                acc = acc.wrapping_add(self.rows[i][j].wrapping_mul(xj));
            }
            *out = if self.mask == 0 { acc } else { (acc & !self.mask) | (self.rng.next_u64() & self.mask) };
        }
        std::mem::swap(&mut self.fixed, &mut self.next_fixed);
        for (xf, &v) in self.x.iter_mut().zip(&self.fixed) {
            *xf = v as f64 * SCALE;
        }
    }

    pub fn advance(&mut self, n: usize) {
        for _ in 0..n {
            self.step();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Contraction, ExpandingMap, TrapOptions, TrigForcing};

    fn fat2() -> SkewModel {
        SkewModel::new(
            ExpandingMap::scalar(2).unwrap(),
            Contraction::scalar(0.6).unwrap(),
            TrigForcing::cosine(&[1], &[0.1], 0.0).unwrap(),
            2,
            0.0,
            TrapOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_step_matches_the_map() {
        let m = fat2();
        let mut o = Orbit::from_point(&m, &[0.3], &[0.1], 1, 0, 0);
        let (x1, y1) = m.eval_t(&[0.3], &[0.1]);
        o.step();
        assert!((o.x()[0] - x1[0]).abs() < 1e-15);
        assert!((o.y()[0] - y1[0]).abs() < 1e-15);
    }

    #[test]
    fn doubling_does_not_collapse() {
        let m = fat2();
        let mut o = Orbit::new(&m, 3, 0, DEFAULT_NOISE_BITS);
        o.advance(200);
        let mut hits = [0usize; 4];
        for _ in 0..40_000 {
            o.step();
            hits[(o.x()[0] * 4.0) as usize] += 1;
            assert!(m.in_trapping_region(o.y()));
        }
        for h in hits {
            assert!((h as f64 / 10_000.0 - 1.0).abs() < 0.05, "{hits:?}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let m = fat2();
        let run = |stream| {
            let mut o = Orbit::new(&m, 11, stream, DEFAULT_NOISE_BITS);
            o.advance(100);
            (o.x()[0], o.y()[0])
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0), run(1));
    }
}
