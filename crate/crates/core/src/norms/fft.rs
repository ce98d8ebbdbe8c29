use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place multi-dimensional FFT of a row-major array (last axis fastest).
/// The inverse is unnormalised.
pub(crate) fn fft_nd(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    let total: usize = dims.iter().product();
    assert_eq!(total, data.len());
    for (axis, &n) in dims.iter().enumerate() {
        if n <= 1 {
            continue;
        }
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride: usize = dims[axis + 1..].iter().product();
        let outer = total / (n * stride);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
}

/// Signed frequency index of DFT bin `k` of length `n`.
pub(crate) fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_dft() {
        let dims = [3, 4];
        let input: Vec<Complex64> = (0..12).map(|i| Complex64::new((i as f64).sin(), (i * i) as f64 * 0.1)).collect();
        let mut out = input.clone();
        fft_nd(&mut out, &dims, false);
        for k0 in 0..3 {
            for k1 in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for j0 in 0..3 {
                    for j1 in 0..4 {
                        let ph = -2.0 * std::f64::consts::PI * ((k0 * j0) as f64 / 3.0 + (k1 * j1) as f64 / 4.0);
                        acc += input[j0 * 4 + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((acc - out[k0 * 4 + k1]).norm() < 1e-12);
            }
        }
        fft_nd(&mut out, &dims, true);
        for (a, b) in out.iter().zip(&input) {
            assert!((a / 12.0 - b).norm() < 1e-12);
        }
    }
}
