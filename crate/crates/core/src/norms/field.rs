use statrs::function::erf::erfc;

use crate::transfer::GridDensity;

/// A function on `𝕋^u × ℝ^d` with computable partial derivatives.
pub trait SmoothField: Sync {
    fn u(&self) -> usize;
    fn d(&self) -> usize;
    /// `∂_x^α ∂_y^β h(x, y)`.
    fn partial(&self, x: &[f64], y: &[f64], alpha: &[u32], beta: &[u32]) -> f64;
}

/// Field given by a closure `(x, y, α, β) ↦ ∂_x^α ∂_y^β h(x, y)`.
pub struct FnField<F> {
    u: usize,
    d: usize,
    func: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &[f64], &[u32], &[u32]) -> f64 + Sync,
{
    pub fn new(u: usize, d: usize, func: F) -> Self {
        Self { u, d, func }
    }
}

impl<F> SmoothField for FnField<F>
where
    F: Fn(&[f64], &[f64], &[u32], &[u32]) -> f64 + Sync,
{
    fn u(&self) -> usize {
        self.u
    }

    fn d(&self) -> usize {
        self.d
    }

    fn partial(&self, x: &[f64], y: &[f64], alpha: &[u32], beta: &[u32]) -> f64 {
        (self.func)(x, y, alpha, beta)
    }
}

const CUTOFF: f64 = 9.0;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Probabilists' Hermite polynomial `He_n(z)`.
fn hermite(n: u32, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = z * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `d^k/dt^k [Φ((t − a)/σ) − Φ((t − b)/σ)]`, the Gaussian-smoothed
/// indicator of `[a, b]`.
fn smoothed_step(t: f64, a: f64, b: f64, sigma: f64, k: u32) -> f64 {
    let za = (t - a) / sigma;
    let zb = (t - b) / sigma;
    if za < -CUTOFF || zb > CUTOFF {
        return 0.0;
    }
    if k == 0 {
        return std_normal_cdf(za) - std_normal_cdf(zb);
    }
    // Φ^{(k)}(z) = (−1)^{k−1} He_{k−1}(z) φ(z)
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    let dk = |z: f64| sign * hermite(k - 1, z) * std_normal_pdf(z);
    (dk(za) - dk(zb)) / sigma.powi(k as i32)
}

/// Grid density convolved with an axis-aligned Gaussian (periodic in x).
pub struct MollifiedDensity {
    density: GridDensity,
    values: Vec<f64>,
    sigma: Vec<f64>,
}

impl MollifiedDensity {
    /// Standard deviation `width_cells` cell widths on every axis.
    pub fn new(density: &GridDensity, width_cells: f64) -> Self {
        let g = &density.grid;
        let sigma = g
            .nx
            .iter()
            .map(|&n| width_cells / n as f64)
            .chain((0..g.d()).map(|k| width_cells * g.y_width(k)))
            .collect();
        Self { density: density.clone(), values: density.values(), sigma }
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Nonzero per-axis weights `(index, factor)` for a point coordinate.
    fn axis_factors(&self, axis: usize, t: f64, order: u32) -> Vec<(usize, f64)> {
        let g = &self.density.grid;
        let u = g.u();
        let sigma = self.sigma[axis];
        let mut out = Vec::new();
        if axis < u {
            let n = g.nx[axis];
            let w = 1.0 / n as f64;
            for k in 0..n {
                let lo = k as f64 * w;
                let mut acc = 0.0;
                for image in [-1.0, 0.0, 1.0] {
                    acc += smoothed_step(t, lo + image, lo + w + image, sigma, order);
                }
                if acc != 0.0 {
                    out.push((k, acc));
                }
            }
        } else {
            let k_axis = axis - u;
            let n = g.ny[k_axis];
            let w = g.y_width(k_axis);
            let base = -g.k0;
            for k in 0..n {
                let lo = base + k as f64 * w;
                let v = smoothed_step(t, lo, lo + w, sigma, order);
                if v != 0.0 {
                    out.push((k, v));
                }
            }
        }
        out
    }
}

impl SmoothField for MollifiedDensity {
    fn u(&self) -> usize {
        self.density.grid.u()
    }

    fn d(&self) -> usize {
        self.density.grid.d()
    }

    fn partial(&self, x: &[f64], y: &[f64], alpha: &[u32], beta: &[u32]) -> f64 {
        let g = &self.density.grid;
        let u = g.u();
        let factors: Vec<Vec<(usize, f64)>> = (0..u + g.d())
            .map(|a| if a < u { self.axis_factors(a, x[a], alpha[a]) } else { self.axis_factors(a, y[a - u], beta[a - u]) })
            .collect();
        if factors.iter().any(|f| f.is_empty()) {
            return 0.0;
        }
        let mut pos = vec![0usize; factors.len()];
        let mut multi = vec![0usize; factors.len()];
        let mut acc = 0.0;
        loop {
            let mut w = 1.0;
            for (a, f) in factors.iter().enumerate() {
                multi[a] = f[pos[a]].0;
                w *= f[pos[a]].1;
            }
            acc += w * self.values[g.flat(&multi)];
            let mut a = factors.len();
            loop {
                if a == 0 {
                    return acc;
                }
                a -= 1;
                pos[a] += 1;
                if pos[a] < factors[a].len() {
                    break;
                }
                pos[a] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::BoxGrid;

    #[test]
    fn hermite_recursion() {
        assert_eq!(hermite(0, 0.7), 1.0);
        assert!((hermite(2, 0.7) - (0.49 - 1.0)).abs() < 1e-15);
        assert!((hermite(3, 0.7) - (0.343 - 2.1)).abs() < 1e-15);
    }

    #[test]
    fn mollified_derivatives_match_differences() {
        let grid = BoxGrid::uniform(1, 1, 16, 0.3).unwrap();
        let dens = GridDensity::from_fn(grid, |x, y| 1.0 + (6.0 * x[0]).sin() * (1.0 - y[0].abs() / 0.3)).unwrap();
        let m = MollifiedDensity::new(&dens, 1.5);
        let (x, y) = ([0.37], [0.05]);
        let h = 1e-5;
        for (alpha, beta) in [([1u32], [0u32]), ([0], [1]), ([1], [1]), ([0], [2]), ([2], [0])] {
            let lower = |a: [u32; 1], b: [u32; 1]| m.partial(&x, &y, &a, &b);
            let fd = if alpha[0] > 0 {
                let da = [alpha[0] - 1];
                (m.partial(&[x[0] + h], &y, &da, &beta) - m.partial(&[x[0] - h], &y, &da, &beta)) / (2.0 * h)
            } else {
                let db = [beta[0] - 1];
                (m.partial(&x, &[y[0] + h], &alpha, &db) - m.partial(&x, &[y[0] - h], &alpha, &db)) / (2.0 * h)
            };
            let exact = lower(alpha, beta);
            assert!((exact - fd).abs() < 1e-4 * (1.0 + exact.abs()), "{alpha:?} {beta:?}: {exact} vs {fd}");
        }
    }

    #[test]
    fn mollified_mass_and_periodicity() {
        let grid = BoxGrid::uniform(1, 1, 16, 0.3).unwrap();
        let dens = GridDensity::from_fn(grid, |x, y| (1.0 + (2.0 * std::f64::consts::PI * x[0]).cos()) * (0.3 - y[0].abs())).unwrap();
        let m = MollifiedDensity::new(&dens, 2.0);
        let a = m.partial(&[0.999_999], &[0.0], &[0], &[0]);
        let b = m.partial(&[0.000_001], &[0.0], &[0], &[0]);
        assert!((a - b).abs() < 1e-4);
        // total integral is preserved by convolution
        let n = 200;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.5) / n as f64;
                let y = -0.6 + 1.2 * (j as f64 + 0.5) / n as f64;
                acc += m.partial(&[x], &[y], &[0], &[0]);
            }
        }
        acc *= 1.2 / (n * n) as f64;
        assert!((acc - dens.total()).abs() < 1e-3 * dens.total(), "{acc} vs {}", dens.total());
    }
}
