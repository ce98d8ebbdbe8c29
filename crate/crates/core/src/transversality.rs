//! Certified transversality of leaf derivatives and upper bounds on `τ(q)`.
//!
//! For words `a, b ∈ I^q(c)` the pair is transversal on `c` when
//! `m(DS_c(x, a) − DS_c(y, b)) > 3 θ^q α₀` for all `x, y` in the block of `c`.
//! The infimum over the block is bounded below from a cell-centred grid and a
//! Lipschitz correction: `m` is 1-Lipschitz in operator norm, and `DS_c(·, a)`
//! is Lipschitz with the constant of [`LeafEval::ds_lipschitz`]. Distances are
//! measured in ℓ¹, which makes the certified bound monotone under nested
//! subdivision.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{enumerate_words, LeafEval, MarkovPartition, Target, Word};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Contraction, ExpandingMap, SkewModel, TrapOptions, TrigForcing};

/// `σ_d(A)` for a `d × u` matrix with `d ≤ u`.
pub fn smallest_dth_singular(a: &DMatrix<f64>) -> Result<f64> {
    let (d, u) = a.shape();
    if d > u {
        return Err(Error::Dimension(format!("m(A) needs d <= u, got {d}x{u}")));
    }
    if d == 0 {
        return Ok(0.0);
    }
    if d == 1 {
        return Ok(a.norm());
    }
    Ok(linalg::singular_values(a)[d - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Transversal,
    NonTransversal,
    Undecided,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertifyOptions {
    /// Grid cells per axis on the first attempt.
    pub initial_cells: usize,
    /// Refinement stops once the cells per axis would exceed this.
    pub max_cells: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { initial_cells: 8, max_cells: 128 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairCertificate {
    pub c: Word,
    pub a: Word,
    pub b: Word,
    pub q: usize,
    pub verdict: Verdict,
    /// Certified lower bound of the infimum minus the threshold for
    /// transversal and undecided verdicts; sampled minimum minus the
    /// threshold for non-transversal ones.
    pub margin: f64,
    pub threshold: f64,
    pub sampled_min: f64,
    pub cells_per_axis: usize,
    pub lipschitz: f64,
}

/// `3 θ^q α₀`.
pub fn threshold(model: &SkewModel, q: usize) -> f64 {
    3.0 * model.theta().powi(q as i32) * model.alpha0()
}

/// Cell-centred sample points of the block, row-major over axes.
fn block_grid(target: &Target, n: usize) -> Vec<Vec<f64>> {
    let block = target.block();
    let u = block.len();
    let total = n.pow(u as u32);
    let mut pts = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rest = flat;
        let mut p = vec![0.0; u];
        for i in (0..u).rev() {
            let k = rest % n;
            rest /= n;
            let (lo, hi) = block[i];
            p[i] = lo + (k as f64 + 0.5) * (hi - lo) / n as f64;
        }
        pts.push(p);
    }
    pts
}

/// ℓ¹ half-diagonal of a grid sub-box.
fn grid_radius(target: &Target, n: usize) -> f64 {
    target.block().iter().map(|(lo, hi)| 0.5 * (hi - lo) / n as f64).sum()
}

/// `DS_c(·, a)` sampled on the block grid, plus its Lipschitz constant.
#[derive(Debug, Clone)]
pub struct LeafSamples {
    pub word: Word,
    pub ds: Vec<DMatrix<f64>>,
    pub lipschitz: f64,
}

pub fn sample_leaf(model: &SkewModel, p: &MarkovPartition, target: &Target, a: &Word, n: usize) -> Result<LeafSamples> {
    let leaf = LeafEval::new(model, p, target, a)?;
    let pts = block_grid(target, n);
    Ok(LeafSamples { word: a.clone(), ds: pts.iter().map(|z| leaf.ds(z)).collect(), lipschitz: leaf.ds_lipschitz() })
}

fn min_pairwise(sa: &LeafSamples, sb: &LeafSamples) -> f64 {
    let mut best = f64::INFINITY;
    for da in &sa.ds {
        for db in &sb.ds {
            let v = smallest_dth_singular(&(da - db)).expect("d <= u by model invariant");
            if v < best {
                best = v;
            }
        }
    }
    best
}

fn verdict_from(sampled_min: f64, lower: f64, thr: f64) -> (Verdict, f64) {
    if sampled_min <= thr {
        (Verdict::NonTransversal, sampled_min - thr)
    } else if lower - thr > 0.0 {
        (Verdict::Transversal, lower - thr)
    } else {
        (Verdict::Undecided, lower - thr)
    }
}

fn certify_samples(
    target: &Target,
    q: usize,
    thr: f64,
    sa: &LeafSamples,
    sb: &LeafSamples,
    n: usize,
) -> PairCertificate {
    let radius = grid_radius(target, n);
    let sampled_min = min_pairwise(sa, sb);
    let lipschitz = sa.lipschitz + sb.lipschitz;
    let (verdict, margin) = verdict_from(sampled_min, sampled_min - lipschitz * radius, thr);
    PairCertificate {
        c: target.word.clone(),
        a: sa.word.clone(),
        b: sb.word.clone(),
        q,
        verdict,
        margin,
        threshold: thr,
        sampled_min,
        cells_per_axis: n,
        lipschitz,
    }
}

/// Certificate at a fixed mesh of `n` cells per axis, without refinement.
pub fn certify_pair_at(
    model: &SkewModel,
    p: &MarkovPartition,
    c: &Word,
    a: &Word,
    b: &Word,
    n: usize,
) -> Result<PairCertificate> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid must have at least one cell".into()));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("words of different lengths".into()));
    }
    let target = Target::new(p, c)?;
    let q = a.len();
    let sa = sample_leaf(model, p, &target, a, n)?;
    let sb = sample_leaf(model, p, &target, b, n)?;
    Ok(certify_samples(&target, q, threshold(model, q), &sa, &sb, n))
}

/// Adaptive certificate: undecided pairs are re-examined on a mesh halved
/// until `max_cells` is exceeded.
pub fn certify_pair(
    model: &SkewModel,
    p: &MarkovPartition,
    c: &Word,
    a: &Word,
    b: &Word,
    opts: &CertifyOptions,
) -> Result<PairCertificate> {
    let mut n = opts.initial_cells.max(1);
    loop {
        let cert = certify_pair_at(model, p, c, a, b, n)?;
        if cert.verdict != Verdict::Undecided || 2 * n > opts.max_cells {
            return Ok(cert);
        }
        n *= 2;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthRow {
    pub p: usize,
    /// `max_{c ∈ I^p} max_{a ∈ I^q(c)}` of the non-transversal-or-undecided count.
    pub max_count: usize,
    pub worst_c: Option<Word>,
    pub worst_a: Option<Word>,
    pub pairs: u64,
    pub transversal: u64,
    pub non_transversal: u64,
    pub undecided: u64,
    pub budget_limited: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    pub q: usize,
    pub threshold: f64,
    pub rows: Vec<DepthRow>,
    pub tau_upper: usize,
    /// `log(τ_ub) / q`.
    pub growth: f64,
    pub margin: f64,
    pub s: f64,
    pub budget_limited: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificates: Option<Vec<PairCertificate>>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TauOptions {
    pub certify: CertifyOptions,
    /// Cap on the number of `(c, a, b)` triples examined per depth.
    pub max_triples: u64,
    pub keep_certificates: bool,
}

impl Default for TauOptions {
    fn default() -> Self {
        Self { certify: CertifyOptions::default(), max_triples: 5_000_000, keep_certificates: false }
    }
}

struct CaOutcome {
    count: usize,
    transversal: u64,
    non_transversal: u64,
    undecided: u64,
    certs: Vec<PairCertificate>,
}

fn examine_target(
    model: &SkewModel,
    p: &MarkovPartition,
    c: &Word,
    q: usize,
    opts: &TauOptions,
) -> Result<Vec<(Word, CaOutcome)>> {
    let target = Target::new(p, c)?;
    let words = enumerate_words(p, q, Some(c))?;
    let thr = threshold(model, q);
    let n0 = opts.certify.initial_cells.max(1);
    let samples: Vec<LeafSamples> =
        words.iter().map(|a| sample_leaf(model, p, &target, a, n0)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(words.len());
    for sa in &samples {
        let mut o = CaOutcome { count: 0, transversal: 0, non_transversal: 0, undecided: 0, certs: Vec::new() };
        for sb in &samples {
            let mut cert = certify_samples(&target, q, thr, sa, sb, n0);
            let mut n = n0;
            while cert.verdict == Verdict::Undecided && 2 * n <= opts.certify.max_cells {
                n *= 2;
                let ra = sample_leaf(model, p, &target, &sa.word, n)?;
                let rb = sample_leaf(model, p, &target, &sb.word, n)?;
                cert = certify_samples(&target, q, thr, &ra, &rb, n);
            }
            match cert.verdict {
                Verdict::Transversal => o.transversal += 1,
                Verdict::NonTransversal => {
                    o.non_transversal += 1;
                    o.count += 1
                }
                Verdict::Undecided => {
                    o.undecided += 1;
                    o.count += 1
                }
            }
            if opts.keep_certificates {
                o.certs.push(cert);
            }
        }
        out.push((sa.word.clone(), o));
    }
    Ok(out)
}

/// Number of `(c, a, b)` triples at depth `p`.
pub fn triple_count(p: &MarkovPartition, depth: usize, q: usize) -> Result<u64> {
    let targets = enumerate_words(p, depth, None)?;
    let mut total = 0u64;
    let mut cache = std::collections::HashMap::new();
    for c in targets.iter() {
        let last = c.last().expect("non-empty");
        let k = match cache.get(&last) {
            Some(&k) => k,
            None => {
                let k = enumerate_words(p, q, Some(c))?.len() as u64;
                cache.insert(last, k);
                k
            }
        };
        total = total.saturating_add(k * k);
    }
    Ok(total)
}

/// Upper bound on `τ(q)` from the depths in `depths`; undecided pairs count
/// as non-transversal. Depths whose triple count exceeds the budget are
/// skipped and flagged; if none completes, the trivial bound `max_c |I^q(c)|`
/// is reported.
pub fn tau_upper_bound(
    model: &SkewModel,
    p: &MarkovPartition,
    q: usize,
    depths: &[usize],
    opts: &TauOptions,
) -> Result<TransversalityReport> {
    if q == 0 || depths.is_empty() {
        return Err(Error::InvalidArgument("need q >= 1 and a nonempty depth list".into()));
    }
    let mut rows = Vec::new();
    let mut certificates = opts.keep_certificates.then(Vec::new);
    for &depth in depths {
        if depth == 0 {
            return Err(Error::InvalidArgument("depth p must be >= 1".into()));
        }
        let triples = triple_count(p, depth, q)?;
        if triples > opts.max_triples {
            rows.push(DepthRow {
                p: depth,
                max_count: 0,
                worst_c: None,
                worst_a: None,
                pairs: 0,
                transversal: 0,
                non_transversal: 0,
                undecided: 0,
                budget_limited: true,
            });
            continue;
        }
        let targets = enumerate_words(p, depth, None)?;
        let per_target: Vec<Vec<(Word, CaOutcome)>> = targets
            .words
            .par_iter()
            .map(|c| examine_target(model, p, c, q, opts))
            .collect::<Result<_>>()?;
        let mut row = DepthRow {
            p: depth,
            max_count: 0,
            worst_c: None,
            worst_a: None,
            pairs: 0,
            transversal: 0,
            non_transversal: 0,
            undecided: 0,
            budget_limited: false,
        };
        for (c, outcomes) in targets.iter().zip(per_target) {
            for (a, o) in outcomes {
                row.pairs += o.transversal + o.non_transversal + o.undecided;
                row.transversal += o.transversal;
                row.non_transversal += o.non_transversal;
                row.undecided += o.undecided;
                if row.worst_c.is_none() || o.count > row.max_count {
                    row.max_count = o.count;
                    row.worst_c = Some(c.clone());
                    row.worst_a = Some(a);
                }
                if let Some(all) = certificates.as_mut() {
                    all.extend(o.certs);
                }
            }
        }
        rows.push(row);
    }
    let budget_limited = rows.iter().any(|r| r.budget_limited);
    let trivial = (0..p.n_letters())
        .map(|l| enumerate_words(p, q, Some(&Word(vec![l]))).map(|w| w.len()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(1);
    let tau_upper = rows.iter().filter(|r| !r.budget_limited).map(|r| r.max_count).min().unwrap_or(trivial);
    let s = model.s();
    let mut report = TransversalityReport {
        q,
        threshold: threshold(model, q),
        rows,
        tau_upper,
        growth: (tau_upper as f64).ln() / q as f64,
        margin: 0.0,
        s,
        budget_limited,
        certificates,
    };
    report.margin = condition_margin(model, &report, s);
    Ok(report)
}

/// `q·log(|det E||det C| m(C)^{2s}) − log τ_ub(q)`.
pub fn condition_margin(model: &SkewModel, report: &TransversalityReport, s: f64) -> f64 {
    margin_from(model, report.q, report.tau_upper, s)
}

pub fn margin_from(model: &SkewModel, q: usize, tau_upper: usize, s: f64) -> f64 {
    let k = model.constants();
    let per_step = (k.det_e as f64 * k.det_c.abs()).ln() + 2.0 * s * k.lambda_lower.ln();
    q as f64 * per_step - (tau_upper as f64).ln()
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub amplitude: f64,
    pub seed: u64,
    pub q: usize,
    pub tau_upper: usize,
    pub margin: f64,
    pub growth: f64,
    pub budget_limited: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanSpec {
    pub amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
    pub q: usize,
    pub depths: Vec<usize>,
    /// Largest frequency component of the random forcing.
    pub kmax: i64,
    pub r: usize,
    pub s: f64,
    pub gamma: f64,
}

/// Certification summary over random trig-polynomial forcings.
pub fn random_f_scan(
    e: &ExpandingMap,
    c: &Contraction,
    spec: &ScanSpec,
    trap: TrapOptions,
    opts: &TauOptions,
) -> Result<Vec<ScanRow>> {
    let u = e.dim();
    let d = c.dim();
    let partition = MarkovPartition::build(e, spec.gamma)?;
    let mut rows = Vec::new();
    for &amplitude in &spec.amplitudes {
        for &seed in &spec.seeds {
            let f = if amplitude == 0.0 {
                TrigForcing::zero(u, d)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                TrigForcing::random(u, d, spec.kmax, amplitude, &mut rng)
            };
            let model = SkewModel::new(e.clone(), c.clone(), f, spec.r, spec.s, trap)?;
            let rep = tau_upper_bound(&model, &partition, spec.q, &spec.depths, opts)?;
            rows.push(ScanRow {
                amplitude,
                seed,
                q: spec.q,
                tau_upper: rep.tau_upper,
                margin: rep.margin,
                growth: rep.growth,
                budget_limited: rep.budget_limited,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Contraction;
    use rand::Rng;
    use std::f64::consts::PI;

    fn fat2(amp: f64, s: f64) -> SkewModel {
        let f = if amp == 0.0 { TrigForcing::zero(1, 1) } else { TrigForcing::cosine(&[1], &[amp], 0.0).unwrap() };
        SkewModel::new(ExpandingMap::scalar(2).unwrap(), Contraction::scalar(0.6).unwrap(), f, 2, s, TrapOptions::default())
            .unwrap()
    }

    fn base(level: usize) -> MarkovPartition {
        MarkovPartition::at_level(&ExpandingMap::scalar(2).unwrap(), level).unwrap()
    }

    #[test]
    fn m_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert!((smallest_dth_singular(&a).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(smallest_dth_singular(&DMatrix::zeros(2, 3)).unwrap(), 0.0);
        let a = DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((smallest_dth_singular(&a).unwrap() - 1.0).abs() < 1e-12);
        assert!(smallest_dth_singular(&DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn zero_forcing_is_never_transversal() {
        let m = fat2(0.0, 0.0);
        let p = base(1);
        for q in 1..=3 {
            let rep = tau_upper_bound(&m, &p, q, &[1], &TauOptions::default()).unwrap();
            assert_eq!(rep.tau_upper, 1 << q);
            assert!(rep.margin < 0.0 || q == 0);
        }
        let cert = certify_pair(&m, &p, &Word(vec![0]), &Word(vec![0]), &Word(vec![1]), &CertifyOptions::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::NonTransversal);
    }

    #[test]
    fn self_pair_is_non_transversal() {
        let m = fat2(0.1, 0.0);
        let p = base(2);
        let c = Word(vec![0]);
        let a = enumerate_words(&p, 4, Some(&c)).unwrap().words[3].clone();
        let cert = certify_pair(&m, &p, &c, &a, &a, &CertifyOptions::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::NonTransversal);
    }

    #[test]
    fn margins() {
        let m = fat2(0.0, 0.0);
        let lhs = margin_from(&m, 3, 8, 0.0);
        assert!((lhs - (3.0 * 1.2f64.ln() - 8f64.ln())).abs() < 1e-12);
        assert!((margin_from(&m, 3, 1, 0.0) - 3.0 * 1.2f64.ln()).abs() < 1e-12);
        assert!(margin_from(&m, 4, 5, 0.0) > margin_from(&m, 3, 5, 0.0));
    }

    #[test]
    fn symmetric_verdicts() {
        let m = fat2(0.1, 0.0);
        let p = base(2);
        let c = Word(vec![2, 1]);
        let ws = enumerate_words(&p, 4, Some(&c)).unwrap();
        for a in ws.iter().take(6) {
            for b in ws.iter().skip(5).take(6) {
                let ab = certify_pair_at(&m, &p, &c, a, b, 8).unwrap();
                let ba = certify_pair_at(&m, &p, &c, b, a, 8).unwrap();
                assert_eq!(ab.verdict, ba.verdict);
                assert_eq!(ab.margin, ba.margin);
            }
        }
    }

    #[test]
    fn verdict_matches_fine_reference() {
        // fine reference: 10× the grid, same certification rule
        let m = fat2(0.1, 0.0);
        let p = base(2);
        let c = Word(vec![1]);
        let ws = enumerate_words(&p, 1, Some(&c)).unwrap();
        for a in ws.iter() {
            for b in ws.iter() {
                let coarse = certify_pair_at(&m, &p, &c, a, b, 8).unwrap();
                let fine = certify_pair_at(&m, &p, &c, a, b, 80).unwrap();
                assert_eq!(coarse.verdict, fine.verdict);
            }
        }
    }

    /// Direct evaluation of `DS_c(x, a)` for `E = 2`, `C = λ`, `f = A cos 2πx`.
    fn ds_direct(amp: f64, lambda: f64, p: &MarkovPartition, c: &Word, a: &Word, x: f64) -> f64 {
        let t = Target::new(p, c).unwrap();
        let x_ref = t.center[0];
        let mut w = x_ref;
        let mut total = 0.0;
        for (i, &l) in a.letters().iter().enumerate() {
            w = p.branch(l, &[w]).unwrap()[0];
            let scale = 0.5f64.powi(i as i32 + 1);
            let wi = w + scale * (x - x_ref);
            total += lambda.powi(i as i32) * (-2.0 * PI * amp * (2.0 * PI * wi).sin()) * scale;
        }
        total
    }

    fn naive_tau(amp: f64, q: usize, p: &MarkovPartition, depth: usize, n: usize) -> usize {
        let m = fat2(amp, 0.0);
        let thr = threshold(&m, q);
        let lip_each = |a: &Word| -> f64 {
            (0..a.len()).map(|i| 0.6f64.powi(i as i32) * 0.25f64.powi(i as i32 + 1) * amp * (2.0 * PI).powi(2)).sum()
        };
        let mut worst = 0;
        for c in enumerate_words(p, depth, None).unwrap().iter() {
            let t = Target::new(p, c).unwrap();
            let (lo, hi) = t.block()[0];
            let xs: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) * (hi - lo) / n as f64).collect();
            let radius = 0.5 * (hi - lo) / n as f64;
            let ws = enumerate_words(p, q, Some(c)).unwrap();
            for a in ws.iter() {
                let mut count = 0;
                for b in ws.iter() {
                    let mut mn = f64::INFINITY;
                    for &x in &xs {
                        for &y in &xs {
                            mn = mn.min((ds_direct(amp, 0.6, p, c, a, x) - ds_direct(amp, 0.6, p, c, b, y)).abs());
                        }
                    }
                    let lower = mn - (lip_each(a) + lip_each(b)) * radius;
                    if !(mn > thr && lower > thr) {
                        count += 1;
                    }
                }
                worst = worst.max(count);
            }
        }
        worst
    }

    #[test]
    fn tau_matches_naive_double_loop() {
        let m = fat2(0.1, 0.0);
        let p = base(2);
        let opts = TauOptions { certify: CertifyOptions { initial_cells: 8, max_cells: 8 }, ..Default::default() };
        for q in 1..=5 {
            for depth in 1..=3 {
                let rep = tau_upper_bound(&m, &p, q, &[depth], &opts).unwrap();
                assert_eq!(rep.tau_upper, naive_tau(0.1, q, &p, depth, 8), "q = {q}, p = {depth}");
                assert!(rep.tau_upper >= 1);
                assert_eq!(rep.growth, (rep.tau_upper as f64).ln() / q as f64);
            }
        }
    }

    #[test]
    fn tau_is_monotone_in_depth_list() {
        let m = fat2(0.1, 0.0);
        let p = base(2);
        for q in 3..=5 {
            let one = tau_upper_bound(&m, &p, q, &[1], &TauOptions::default()).unwrap();
            let three = tau_upper_bound(&m, &p, q, &[1, 2, 3], &TauOptions::default()).unwrap();
            assert!(three.tau_upper <= one.tau_upper);
        }
    }

    #[test]
    fn budget_flag() {
        let m = fat2(0.1, 0.0);
        let p = base(2);
        let opts = TauOptions { max_triples: 10, ..Default::default() };
        let rep = tau_upper_bound(&m, &p, 3, &[2], &opts).unwrap();
        assert!(rep.budget_limited);
        assert_eq!(rep.tau_upper, 8);
    }

    #[test]
    fn deterministic_reports() {
        let m = fat2(0.1, 0.0);
        let p = base(2);
        let a = serde_json::to_string(&tau_upper_bound(&m, &p, 4, &[1, 2], &TauOptions::default()).unwrap()).unwrap();
        let b = serde_json::to_string(&tau_upper_bound(&m, &p, 4, &[1, 2], &TauOptions::default()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scan_zero_amplitude_row() {
        let spec = ScanSpec {
            amplitudes: vec![0.0, 0.1],
            seeds: vec![1, 2],
            q: 2,
            depths: vec![1],
            kmax: 2,
            r: 2,
            s: 0.0,
            gamma: 0.45,
        };
        let rows = random_f_scan(
            &ExpandingMap::scalar(2).unwrap(),
            &Contraction::scalar(0.6).unwrap(),
            &spec,
            TrapOptions::default(),
            &TauOptions::default(),
        )
        .unwrap();
        for r in rows.iter().filter(|r| r.amplitude == 0.0) {
            assert_eq!(r.tau_upper, 4);
            assert!((r.margin - (2.0 * 1.2f64.ln() - 4f64.ln())).abs() < 1e-12);
        }
        let again = random_f_scan(
            &ExpandingMap::scalar(2).unwrap(),
            &Contraction::scalar(0.6).unwrap(),
            &spec,
            TrapOptions::default(),
            &TauOptions::default(),
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&rows).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn coarse_transversal_survives_refinement() {
        let m = fat2(0.1, 0.0);
        let p = base(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cs = enumerate_words(&p, 2, None).unwrap();
        let mut seen = 0;
        for _ in 0..40 {
            let c = &cs.words[rng.random_range(0..cs.len())];
            let q = rng.random_range(4..=6);
            let ws = enumerate_words(&p, q, Some(c)).unwrap();
            let a = &ws.words[rng.random_range(0..ws.len())];
            let b = &ws.words[rng.random_range(0..ws.len())];
            let coarse = certify_pair_at(&m, &p, c, a, b, 4).unwrap();
            if coarse.verdict == Verdict::Transversal {
                seen += 1;
                let fine = certify_pair_at(&m, &p, c, a, b, 40).unwrap();
                assert_eq!(fine.verdict, Verdict::Transversal);
                assert!(fine.margin >= coarse.margin);
            }
        }
        assert!(seen > 0);
    }
}
