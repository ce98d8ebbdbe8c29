//! Symbolic coding of the base dynamics.
//!
//! Partitions are built for diagonal integer lifts `E = diag(e_1, …, e_u)`.
//! Level-`m` cells are the boxes `Π_i [j_i/|e_i|^m, (j_i+1)/|e_i|^m]`; the
//! level-1 cells are the coset cells `E⁻¹([0,1)^u + k)` and level `m` is their
//! `m`-fold pullback refinement, so every level is a Markov partition.
//!
//! Words follow the orientation `ℛ(a) = ∩_{i<n} E^{-i} ℛ(a_{n-i})`: the point
//! `a(x)` is reached by applying the inverse branch into `a_1` first, then
//! into `a_2`, and so on. Consequently `[a]_i(x)` is the image of `x` under
//! the first `i` branches and `(a·b)(x) = b(a(x))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{wrap01, ExpandingMap, SkewModel};

pub type Letter = usize;

/// Slack used for closed-cell membership tests.
pub const CELL_SLACK: f64 = 1e-12;

/// Default target diameter for [`MarkovPartition::build`].
pub const DEFAULT_GAMMA: f64 = 0.45;

const DEFAULT_MAX_LEVEL: usize = 24;

#[derive(Debug, Clone, Serialize)]
pub struct MarkovPartition {
    diag: Vec<i64>,
    level: usize,
    per_axis: Vec<u64>,
    n_letters: usize,
    gamma: Option<f64>,
    #[serde(skip)]
    preds: Vec<Vec<Letter>>,
}

fn ipow(b: u64, e: usize) -> u64 {
    (0..e).fold(1u64, |acc, _| acc * b)
}

/// Level-`(m−1)` index of the image of the level-`m` cell `j` under `x ↦ e x`.
fn image_index(j: u64, m: usize, e: i64) -> u64 {
    let mp = ipow(e.unsigned_abs(), m - 1) as i128;
    let t = (e.signum() as i128 * (2 * j as i128 + 1)).rem_euclid(2 * mp);
    ((t - 1) / 2) as u64
}

impl MarkovPartition {
    /// Coarsest refinement level whose cells have diameter `< gamma`.
    pub fn build(e: &ExpandingMap, gamma: f64) -> Result<Self> {
        Self::build_with_max(e, gamma, DEFAULT_MAX_LEVEL)
    }

    pub fn build_with_max(e: &ExpandingMap, gamma: f64, max_level: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("γ = {gamma} must lie in (0, 1)")));
        }
        let diag = Self::diagonal_of(e)?;
        for level in 1..=max_level {
            let diam = Self::diameter_at(&diag, level);
            if diam < gamma {
                let mut p = Self::from_diag(diag, level);
                p.gamma = Some(gamma);
                return Ok(p);
            }
        }
        Err(Error::DiameterUnreachable { gamma, max_level })
    }

    /// Partition at an explicit level (level 1 is the coset partition).
    pub fn at_level(e: &ExpandingMap, level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidArgument("partition level must be >= 1".into()));
        }
        let diag = Self::diagonal_of(e)?;
        let total = diag.iter().fold(1u128, |acc, v| acc * ipow(v.unsigned_abs(), level) as u128);
        if total > 1 << 24 {
            return Err(Error::InvalidArgument(format!("level {level} gives {total} cells")));
        }
        Ok(Self::from_diag(diag, level))
    }

    fn diagonal_of(e: &ExpandingMap) -> Result<Vec<i64>> {
        e.diagonal_entries().ok_or_else(|| {
            Error::Unsupported("explicit Markov partitions are built for diagonal expanding maps only".into())
        })
    }

    fn diameter_at(diag: &[i64], level: usize) -> f64 {
        diag.iter()
            .map(|e| (1.0 / ipow(e.unsigned_abs(), level) as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn from_diag(diag: Vec<i64>, level: usize) -> Self {
        let per_axis: Vec<u64> = diag.iter().map(|e| ipow(e.unsigned_abs(), level)).collect();
        let n_letters = per_axis.iter().product::<u64>() as usize;
        let mut p = Self { diag, level, per_axis, n_letters, gamma: None, preds: Vec::new() };
        p.preds = (0..n_letters)
            .map(|to| (0..n_letters).filter(|&from| p.transition(from, to)).collect())
            .collect();
        p
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_letters(&self) -> usize {
        self.n_letters
    }

    pub fn diag(&self) -> &[i64] {
        &self.diag
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// `N = |det E|`.
    pub fn degree(&self) -> usize {
        self.diag.iter().map(|e| e.unsigned_abs() as usize).product()
    }

    pub fn cells_per_axis(&self) -> &[u64] {
        &self.per_axis
    }

    pub fn letter_multi(&self, letter: Letter) -> Vec<u64> {
        let mut rest = letter as u64;
        let mut out = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            out[i] = rest % self.per_axis[i];
            rest /= self.per_axis[i];
        }
        out
    }

    pub fn letter_from_multi(&self, multi: &[u64]) -> Letter {
        multi.iter().zip(&self.per_axis).fold(0u64, |acc, (&j, &n)| acc * n + j) as Letter
    }

    /// Closed box of a letter.
    pub fn letter_box(&self, letter: Letter) -> Vec<(f64, f64)> {
        self.letter_multi(letter)
            .iter()
            .zip(&self.per_axis)
            .map(|(&j, &n)| (j as f64 / n as f64, (j + 1) as f64 / n as f64))
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.n_letters as f64
    }

    pub fn cell_diameter(&self) -> f64 {
        Self::diameter_at(&self.diag, self.level)
    }

    /// Diameter of the block formed by an atom and its neighbours.
    pub fn star_diameter(&self) -> f64 {
        3.0 * self.cell_diameter()
    }

    /// `E(ℛ(from)) ⊃ ℛ(to)`; by the Markov property this is equivalent to
    /// `E(ℛ(from)) ∩ ℛ(to) ≠ ∅` for open cells.
    pub fn transition(&self, from: Letter, to: Letter) -> bool {
        if self.level == 1 {
            return true;
        }
        let f = self.letter_multi(from);
        let t = self.letter_multi(to);
        (0..self.dim()).all(|i| {
            let e = self.diag[i];
            image_index(f[i], self.level, e) == t[i] / e.unsigned_abs()
        })
    }

    /// Letters `b` with `E(ℛ(b)) ⊃ ℛ(to)`, in increasing order.
    pub fn predecessors(&self, to: Letter) -> &[Letter] {
        &self.preds[to]
    }

    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        (0..self.n_letters)
            .map(|from| (0..self.n_letters).map(|to| self.transition(from, to)).collect())
            .collect()
    }

    /// Symbol `π(x)`: the cell containing `x`, ties broken towards the
    /// lexicographically smallest index.
    pub fn pi(&self, x: &[f64]) -> Letter {
        let multi: Vec<u64> = x
            .iter()
            .zip(&self.per_axis)
            .map(|(&xi, &n)| {
                let t = wrap01(xi) * n as f64;
                let r = t.round();
                if (t - r).abs() <= CELL_SLACK * n as f64 {
                    let hi = (r as u64) % n;
                    let lo = (r as u64 + n - 1) % n;
                    hi.min(lo)
                } else {
                    (t.floor() as u64).min(n - 1)
                }
            })
            .collect();
        self.letter_from_multi(&multi)
    }

    /// Per-axis offset `z − z_start` of the inverse branch into `letter`,
    /// where `z_start` is the cell endpoint mapped to the start of the image arc.
    fn branch_offsets(&self, letter: Letter, x: &[f64]) -> Option<Vec<f64>> {
        let multi = self.letter_multi(letter);
        (0..self.dim())
            .map(|i| {
                let n = self.per_axis[i] as f64;
                let e = self.diag[i] as f64;
                let start = if e > 0.0 { multi[i] as f64 / n } else { (multi[i] + 1) as f64 / n };
                let mut t = wrap01(x[i] - e * start);
                if t > 1.0 - CELL_SLACK {
                    t = 0.0;
                }
                (self.level == 1 || t <= e.abs() / n + CELL_SLACK).then_some(start + t / e)
            })
            .collect()
    }

    /// Whether `x` lies in the closure of `E(ℛ(letter))`.
    pub fn in_image(&self, letter: Letter, x: &[f64]) -> bool {
        self.branch_offsets(letter, x).is_some()
    }

    /// Inverse branch of `E` into the closed cell `letter`.
    pub fn branch(&self, letter: Letter, x: &[f64]) -> Result<Vec<f64>> {
        self.branch_offsets(letter, x)
            .ok_or_else(|| Error::Domain(format!("x = {x:?} is not in E(ℛ({letter}))")))
    }

    pub fn contains(&self, letter: Letter, x: &[f64]) -> bool {
        self.letter_box(letter).iter().zip(x).all(|(&(lo, hi), &xi)| {
            let v = wrap01(xi);
            (v >= lo - CELL_SLACK && v <= hi + CELL_SLACK) || (hi >= 1.0 && v <= CELL_SLACK)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    pub fn concat(&self, other: &Word) -> Word {
        Word(self.0.iter().chain(&other.0).copied().collect())
    }

    /// `E(ℛ(a_{i+1})) ⊃ ℛ(a_i)` for every `i`.
    pub fn check_admissible(&self, p: &MarkovPartition) -> Result<()> {
        for (i, &l) in self.0.iter().enumerate() {
            if l >= p.n_letters() {
                return Err(Error::InvalidArgument(format!("letter {l} outside the alphabet")));
            }
            if i + 1 < self.0.len() && !p.transition(self.0[i + 1], l) {
                return Err(Error::NotAdmissible { position: i });
            }
        }
        Ok(())
    }

    pub fn is_admissible(&self, p: &MarkovPartition) -> bool {
        self.check_admissible(p).is_ok()
    }
}

/// Admissible words of a fixed length, possibly constrained to `I^n(c)`.
#[derive(Debug, Clone, Serialize)]
pub struct WordTable {
    pub n: usize,
    pub constraint: Option<Word>,
    pub words: Vec<Word>,
}

impl WordTable {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Word> {
        self.words.iter()
    }
}

/// `I^n`, or `I^n(c)` when a constraint word is given.
pub fn enumerate_words(p: &MarkovPartition, n: usize, constraint: Option<&Word>) -> Result<WordTable> {
    if n == 0 {
        return Err(Error::InvalidArgument("word length must be >= 1".into()));
    }
    let first: Vec<Letter> = match constraint {
        Some(c) => {
            c.check_admissible(p)?;
            let last = c.last().ok_or_else(|| Error::InvalidArgument("empty constraint word".into()))?;
            p.predecessors(last).to_vec()
        }
        None => (0..p.n_letters()).collect(),
    };
    let mut words = Vec::new();
    let mut stack: Vec<Letter> = Vec::with_capacity(n);
    fn extend(p: &MarkovPartition, n: usize, stack: &mut Vec<Letter>, out: &mut Vec<Word>) {
        if stack.len() == n {
            out.push(Word(stack.clone()));
            return;
        }
        let prev = *stack.last().expect("non-empty stack");
        for &l in p.predecessors(prev) {
            stack.push(l);
            extend(p, n, stack, out);
            stack.pop();
        }
    }
    for l in first {
        stack.push(l);
        extend(p, n, &mut stack, &mut words);
        stack.pop();
    }
    Ok(WordTable { n, constraint: constraint.cloned(), words })
}

/// The points `[a]_1(x), …, [a]_n(x)`.
pub fn branch_points(p: &MarkovPartition, x: &[f64], word: &Word) -> Result<Vec<Vec<f64>>> {
    word.check_admissible(p)?;
    let mut out = Vec::with_capacity(word.len());
    let mut cur = x.iter().map(|&v| wrap01(v)).collect::<Vec<_>>();
    for &l in word.letters() {
        cur = p.branch(l, &cur)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// `a(x)`: the point of `ℛ(a)` with `E^n(a(x)) = x`.
pub fn preimage_point(p: &MarkovPartition, x: &[f64], word: &Word) -> Result<Vec<f64>> {
    branch_points(p, x, word)?
        .pop()
        .ok_or_else(|| Error::InvalidArgument("empty word".into()))
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..v.len()).map(|j| m[(i, j)] * v[j]).sum();
    }
}

/// `S(x, a) = Σ_{i=1}^n C^{i−1} f([a]_i(x))`.
pub fn eval_s(model: &SkewModel, p: &MarkovPartition, x: &[f64], word: &Word) -> Result<Vec<f64>> {
    let pts = branch_points(p, x, word)?;
    Ok(sum_along(model, &pts))
}

fn sum_along(model: &SkewModel, pts: &[Vec<f64>]) -> Vec<f64> {
    let d = model.d();
    let mut acc = vec![0.0; d];
    let mut fx = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    // Horner from the innermost term: acc ← f(w_i) + C acc.
    for w in pts.iter().rev() {
        model.f().eval(w, &mut fx);
        mat_vec(model.c().matrix(), &acc, &mut tmp);
        for i in 0..d {
            acc[i] = fx[i] + tmp[i];
        }
    }
    acc
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncatedS {
    pub value: Vec<f64>,
    pub terms: usize,
    /// `‖C‖^n ‖f‖_∞ / (1 − ‖C‖)`.
    pub tail_bound: f64,
}

/// Number of terms after which the tail of `S(x, a)` is at most `tol`.
pub fn terms_for_tail(model: &SkewModel, tol: f64) -> usize {
    let lam = model.constants().lambda_upper;
    let fsup = model.constants().f_sup;
    let mut n = 0usize;
    let mut bound = fsup / (1.0 - lam);
    while bound > tol && n < 100_000 {
        n += 1;
        bound *= lam;
    }
    n.max(1)
}

/// `S(x, a)` for an infinite word given by a long enough prefix.
pub fn eval_s_inf(model: &SkewModel, p: &MarkovPartition, x: &[f64], prefix: &Word, tol: f64) -> Result<TruncatedS> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tail tolerance must be positive".into()));
    }
    let n = terms_for_tail(model, tol);
    if prefix.len() < n {
        return Err(Error::PrefixTooShort { needed: n, got: prefix.len() });
    }
    let word = Word(prefix.0[..n].to_vec());
    let value = eval_s(model, p, x, &word)?;
    let c = model.constants();
    Ok(TruncatedS { value, terms: n, tail_bound: c.lambda_upper.powi(n as i32) * c.f_sup / (1.0 - c.lambda_upper) })
}

/// Geometry of a target word `c ∈ I^p`: `ℛ(c)` is a cell of level
/// `L + p − 1`, and `ℛ_*(c)` is the 3^u block of that level around it, kept
/// as a box in the lift centred on the cell.
#[derive(Debug, Clone, Serialize)]
pub struct Target {
    pub word: Word,
    pub level: usize,
    pub center: Vec<f64>,
    pub cell_half_width: Vec<f64>,
}

impl Target {
    pub fn new(p: &MarkovPartition, c: &Word) -> Result<Self> {
        c.check_admissible(p)?;
        let first = *c.letters().first().ok_or_else(|| Error::InvalidArgument("empty target word".into()))?;
        let mut center: Vec<f64> = p.letter_box(first).iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
        for &l in &c.letters()[1..] {
            center = p.branch(l, &center)?;
        }
        let level = p.level() + c.len() - 1;
        let cell_half_width = p.diag().iter().map(|e| 0.5 / ipow(e.unsigned_abs(), level) as f64).collect();
        Ok(Self { word: c.clone(), level, center, cell_half_width })
    }

    /// Closed block `ℛ_*(c)` in the lift, per axis `(lo, hi)`.
    pub fn block(&self) -> Vec<(f64, f64)> {
        self.center
            .iter()
            .zip(&self.cell_half_width)
            .map(|(&c, &h)| (c - 3.0 * h, c + 3.0 * h))
            .collect()
    }

    pub fn in_block(&self, z: &[f64]) -> bool {
        self.block().iter().zip(z).all(|(&(lo, hi), &v)| v >= lo - CELL_SLACK && v <= hi + CELL_SLACK)
    }

    pub fn block_diameter(&self) -> f64 {
        self.cell_half_width.iter().map(|h| (6.0 * h).powi(2)).sum::<f64>().sqrt()
    }
}

/// Derivative tensor of order `j` of a map `ℝ^u → ℝ^d`, stored as
/// `data[comp * u^j + flat(axes)]` with the first axis most significant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivTensor {
    pub order: usize,
    pub u: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl DerivTensor {
    fn index(&self, comp: usize, axes: &[usize]) -> usize {
        comp * self.u.pow(self.order as u32) + axes.iter().fold(0, |acc, &a| acc * self.u + a)
    }

    pub fn get(&self, comp: usize, axes: &[usize]) -> f64 {
        self.data[self.index(comp, axes)]
    }

    /// `∂^α` as a vector in `ℝ^d`.
    pub fn partial(&self, alpha: &[u32]) -> Vec<f64> {
        let axes: Vec<usize> = alpha.iter().enumerate().flat_map(|(l, &a)| std::iter::repeat_n(l, a as usize)).collect();
        (0..self.d).map(|c| self.get(c, &axes)).collect()
    }

    /// The order-1 tensor as a `d × u` matrix.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 1);
        DMatrix::from_fn(self.d, self.u, |i, j| self.data[i * self.u + j])
    }
}

/// The extension `S_c(·, a)` of the leaf map to the block of a target, with
/// cached affine inverse branches `E^{-i}_{c,a}`.
#[derive(Debug, Clone)]
pub struct LeafEval<'m> {
    model: &'m SkewModel,
    pub word: Word,
    pub x_ref: Vec<f64>,
    anchors: Vec<Vec<f64>>,
    inv_pows: Vec<DMatrix<f64>>,
    c_pows: Vec<DMatrix<f64>>,
}

impl<'m> LeafEval<'m> {
    /// Requires `a ∈ I^q(c)`.
    pub fn new(model: &'m SkewModel, p: &MarkovPartition, target: &Target, word: &Word) -> Result<Self> {
        word.check_admissible(p)?;
        let first = *word.letters().first().ok_or_else(|| Error::InvalidArgument("empty word".into()))?;
        let c_last = target.word.last().expect("non-empty target");
        if !p.transition(first, c_last) {
            return Err(Error::Domain(format!("word {:?} is not in I^q({:?})", word.0, target.word.0)));
        }
        let anchors = branch_points(p, &target.center, word)?;
        let q = word.len();
        let inv = model.e().inverse();
        let inv_pows = (1..=q).map(|i| linalg::mat_pow(inv, i)).collect();
        let c_pows = (0..q).map(|i| linalg::mat_pow(model.c().matrix(), i)).collect();
        Ok(Self { model, word: word.clone(), x_ref: target.center.clone(), anchors, inv_pows, c_pows })
    }

    /// `E^{-i}_{c,a}(z)` for a lifted point `z` of the block.
    pub fn branch_point(&self, i: usize, z: &[f64]) -> Vec<f64> {
        let u = z.len();
        let m = &self.inv_pows[i - 1];
        (0..u)
            .map(|r| self.anchors[i - 1][r] + (0..u).map(|c| m[(r, c)] * (z[c] - self.x_ref[c])).sum::<f64>())
            .collect()
    }

    pub fn s(&self, z: &[f64]) -> Vec<f64> {
        let pts: Vec<Vec<f64>> = (1..=self.word.len()).map(|i| self.branch_point(i, z)).collect();
        sum_along(self.model, &pts)
    }

    /// `DS_c(z, a)` as a `d × u` matrix.
    pub fn ds(&self, z: &[f64]) -> DMatrix<f64> {
        let u = self.model.u();
        let d = self.model.d();
        let mut out = DMatrix::zeros(d, u);
        let mut col = vec![0.0; d];
        let mut term = DMatrix::zeros(d, u);
        for i in 1..=self.word.len() {
            let w = self.branch_point(i, z);
            let m = &self.inv_pows[i - 1];
            for l in 0..u {
                let dir: Vec<f64> = (0..u).map(|r| m[(r, l)]).collect();
                self.model.f().deriv_along(&w, &[&dir], &mut col);
                for k in 0..d {
                    term[(k, l)] = col[k];
                }
            }
            out += &self.c_pows[i - 1] * &term;
        }
        out
    }

    /// All partial derivatives of order `j` of `S_c(·, a)` at `z`.
    pub fn deriv(&self, z: &[f64], j: usize) -> DerivTensor {
        let u = self.model.u();
        let d = self.model.d();
        let size = u.pow(j as u32);
        let mut data = vec![0.0; d * size];
        let mut val = vec![0.0; d];
        for i in 1..=self.word.len() {
            let w = self.branch_point(i, z);
            let m = &self.inv_pows[i - 1];
            let cols: Vec<Vec<f64>> = (0..u).map(|l| (0..u).map(|r| m[(r, l)]).collect()).collect();
            let cp = &self.c_pows[i - 1];
            for flat in 0..size {
                let mut axes = vec![0usize; j];
                let mut rest = flat;
                for slot in (0..j).rev() {
                    axes[slot] = rest % u;
                    rest /= u;
                }
                let dirs: Vec<&[f64]> = axes.iter().map(|&a| cols[a].as_slice()).collect();
                if j == 0 {
                    self.model.f().eval(&w, &mut val);
                } else {
                    self.model.f().deriv_along(&w, &dirs, &mut val);
                }
                for k in 0..d {
                    let mut acc = 0.0;
                    for m2 in 0..d {
                        acc += cp[(k, m2)] * val[m2];
                    }
                    data[k * size + flat] += acc;
                }
            }
        }
        DerivTensor { order: j, u, d, data }
    }

    /// Bound on `sup_z ‖D²S_c(z, a)‖`, i.e. a Lipschitz constant of `DS_c(·, a)`
    /// in operator norm.
    pub fn ds_lipschitz(&self) -> f64 {
        let b2 = self.model.f().sup_bound(2);
        (0..self.word.len())
            .map(|i| linalg::op_norm(&self.c_pows[i]) * linalg::op_norm(&self.inv_pows[i]).powi(2) * b2)
            .sum()
    }
}

/// `D^j S_c(x, a)` with the order checked against `r`.
pub fn eval_ds(
    model: &SkewModel,
    p: &MarkovPartition,
    target: &Target,
    x: &[f64],
    word: &Word,
    order: usize,
) -> Result<DerivTensor> {
    if order > model.r() {
        return Err(Error::OrderTooHigh { order, r: model.r() });
    }
    if !target.in_block(x) {
        return Err(Error::Domain(format!("x = {x:?} is outside ℛ_*({:?})", target.word.0)));
    }
    Ok(LeafEval::new(model, p, target, word)?.deriv(x, order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Contraction, TrapOptions, TrigForcing};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn e2() -> ExpandingMap {
        ExpandingMap::scalar(2).unwrap()
    }

    fn fat2(amp: f64) -> SkewModel {
        let f = if amp == 0.0 { TrigForcing::zero(1, 1) } else { TrigForcing::cosine(&[1], &[amp], 0.0).unwrap() };
        SkewModel::new(e2(), Contraction::scalar(0.6).unwrap(), f, 2, 0.0, TrapOptions::default()).unwrap()
    }

    #[test]
    fn build_examples() {
        let p = MarkovPartition::build(&e2(), 0.4).unwrap();
        assert_eq!(p.level(), 2);
        assert_eq!(p.n_letters(), 4);
        assert!((p.letter_box(1)[0].1 - p.letter_box(1)[0].0 - 0.25).abs() < 1e-15);

        let p = MarkovPartition::build(&ExpandingMap::scalar(3).unwrap(), 0.4).unwrap();
        assert_eq!((p.level(), p.n_letters()), (1, 3));

        let p = MarkovPartition::build(&ExpandingMap::diagonal(&[2, 2]).unwrap(), 0.6).unwrap();
        assert_eq!(p.n_letters(), 16);
        assert!(MarkovPartition::build(&e2(), 1.5).is_err());
        assert!(MarkovPartition::build(&e2(), 0.0).is_err());
        assert!(matches!(
            MarkovPartition::build_with_max(&e2(), 0.01, 3),
            Err(Error::DiameterUnreachable { .. })
        ));
        let nondiag = ExpandingMap::new(vec![vec![2, 1], vec![1, 3]]).unwrap();
        assert!(matches!(MarkovPartition::build(&nondiag, 0.4), Err(Error::Unsupported(_))));
    }

    #[test]
    fn diag22_diameter_arithmetic() {
        let e = ExpandingMap::diagonal(&[2, 2]).unwrap();
        let base = MarkovPartition::at_level(&e, 1).unwrap();
        assert!((base.cell_diameter() - 0.5f64.sqrt()).abs() < 1e-15);
        let next = MarkovPartition::at_level(&e, 2).unwrap();
        assert!((next.cell_diameter() - 0.125f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn volumes_sum_to_one() {
        for level in 1..5 {
            let p = MarkovPartition::at_level(&ExpandingMap::diagonal(&[2, -3]).unwrap(), level).unwrap();
            let total: f64 = (0..p.n_letters())
                .map(|l| p.letter_box(l).iter().map(|(lo, hi)| hi - lo).product::<f64>())
                .sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    /// Adjacency by interval overlap of the lifted image `e·[lo, hi]` with open cells.
    fn geometric_adjacency(e: i64, level: usize) -> Vec<Vec<bool>> {
        let n = ipow(e.unsigned_abs(), level);
        let w = 1.0 / n as f64;
        (0..n)
            .map(|from| {
                let a = e as f64 * from as f64 * w;
                let b = e as f64 * (from + 1) as f64 * w;
                let (lo, hi) = (a.min(b), a.max(b));
                (0..n)
                    .map(|to| {
                        let (clo, chi) = (to as f64 * w, (to + 1) as f64 * w);
                        (-4..4).any(|shift| {
                            let s = shift as f64;
                            lo < chi + s - 1e-12 && hi > clo + s + 1e-12
                        })
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn transitions_match_geometry() {
        for &e in &[2i64, 3, -2, -3] {
            for level in 1..4 {
                let p = MarkovPartition::at_level(&ExpandingMap::scalar(e).unwrap(), level).unwrap();
                assert_eq!(p.adjacency(), geometric_adjacency(e, level), "e = {e}, level = {level}");
                // Markov: images are unions of cells
                for from in 0..p.n_letters() {
                    let covered: f64 =
                        (0..p.n_letters()).filter(|&to| p.transition(from, to)).map(|_| p.cell_volume()).sum();
                    assert!((covered - (e.abs() as f64 * p.cell_volume()).min(1.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn word_counts() {
        let base = MarkovPartition::at_level(&e2(), 1).unwrap();
        assert_eq!(enumerate_words(&base, 3, None).unwrap().len(), 8);
        let p3 = MarkovPartition::at_level(&ExpandingMap::scalar(3).unwrap(), 1).unwrap();
        for c in 0..3 {
            assert_eq!(enumerate_words(&p3, 2, Some(&Word(vec![c]))).unwrap().len(), 9);
        }
        // refined partition: counts equal sums of powers of the geometric adjacency matrix
        let p = MarkovPartition::at_level(&e2(), 2).unwrap();
        let adj = geometric_adjacency(2, 2);
        let n = adj.len();
        for len in 1..6 {
            // paths a_n → … → a_1: total = 1ᵀ A^{len−1} 1
            let mut v = vec![1u64; n];
            for _ in 1..len {
                v = (0..n).map(|from| (0..n).filter(|&to| adj[from][to]).map(|to| v[to]).sum()).collect();
            }
            let total: u64 = v.iter().sum();
            assert_eq!(enumerate_words(&p, len, None).unwrap().len() as u64, total);
            for c in 0..n {
                let constrained: u64 = (0..n).filter(|&a1| adj[a1][c]).map(|a1| {
                    let mut w = vec![0u64; n];
                    w[a1] = 1;
                    for _ in 1..len {
                        w = (0..n).map(|from| (0..n).filter(|&to| adj[from][to]).map(|to| w[to]).sum()).collect();
                    }
                    w.iter().sum::<u64>()
                }).sum();
                assert_eq!(enumerate_words(&p, len, Some(&Word(vec![c]))).unwrap().len() as u64, constrained);
            }
        }
        for w in enumerate_words(&p, 4, None).unwrap().iter() {
            assert!(w.is_admissible(&p));
        }
    }

    #[test]
    fn preimage_examples() {
        let p = MarkovPartition::at_level(&e2(), 1).unwrap();
        assert_eq!(preimage_point(&p, &[0.0], &Word(vec![1])).unwrap(), vec![0.5]);
        let a = preimage_point(&p, &[0.8], &Word(vec![0, 0])).unwrap();
        assert!((a[0] - 0.2).abs() < 1e-15);
        let q = MarkovPartition::at_level(&e2(), 2).unwrap();
        // letter 0 = [0, 1/4] maps onto [0, 1/2]; 0.8 is outside
        assert!(matches!(preimage_point(&q, &[0.8], &Word(vec![0])), Err(Error::Domain(_))));
        assert!(matches!(
            preimage_point(&q, &[0.1], &Word(vec![0, 3])),
            Err(Error::NotAdmissible { position: 0 })
        ));
    }

    #[test]
    fn preimage_round_trip_random() {
        let e = ExpandingMap::diagonal(&[2, -3]).unwrap();
        let p = MarkovPartition::at_level(&e, 2).unwrap();
        let words = enumerate_words(&p, 3, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tested = 0;
        while tested < 1000 {
            let w = &words.words[rng.random_range(0..words.len())];
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let Ok(pt) = preimage_point(&p, &x, w) else { continue };
            let mut y = pt.clone();
            let mut buf = y.clone();
            for _ in 0..3 {
                e.apply_mod1(&y, &mut buf);
                y.copy_from_slice(&buf);
            }
            for i in 0..2 {
                let dx = (y[i] - x[i]).abs();
                assert!(dx.min(1.0 - dx) < 1e-10);
            }
            // a(x) ∈ ℛ(a): its first symbol is the last letter
            assert!(p.contains(w.last().unwrap(), &pt));
            tested += 1;
        }
    }

    #[test]
    fn semigroup_of_words() {
        let p = MarkovPartition::at_level(&e2(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let all3 = enumerate_words(&p, 3, None).unwrap();
        for _ in 0..200 {
            let a = &all3.words[rng.random_range(0..all3.len())];
            let tail = enumerate_words(&p, 2, Some(a)).unwrap();
            let b = &tail.words[rng.random_range(0..tail.len())];
            let ab = a.concat(b);
            assert!(ab.is_admissible(&p));
            // x inside 𝔻(a) = E(ℛ(a_1))
            let cell = p.letter_box(a.0[0]);
            let xs = vec![wrap01(2.0 * 0.5 * (cell[0].0 + cell[0].1) + 0.01)];
            let lhs = preimage_point(&p, &xs, &ab).unwrap();
            let rhs = preimage_point(&p, &preimage_point(&p, &xs, a).unwrap(), b).unwrap();
            assert!((lhs[0] - rhs[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn s_examples() {
        let m = fat2(0.1);
        let p = MarkovPartition::at_level(&e2(), 1).unwrap();
        assert!((eval_s(&m, &p, &[0.0], &Word(vec![1])).unwrap()[0] + 0.1).abs() < 1e-15);
        let s = eval_s(&m, &p, &[0.0], &Word(vec![1, 0])).unwrap()[0];
        assert!((s - (-0.1 + 0.06 * (PI / 2.0).cos())).abs() < 1e-15);
        let z = fat2(0.0);
        assert_eq!(eval_s(&z, &p, &[0.3], &Word(vec![1, 0, 1])).unwrap()[0], 0.0);
    }

    #[test]
    fn s_one_step_recursion() {
        let m = fat2(0.1);
        let p = MarkovPartition::at_level(&e2(), 2).unwrap();
        let words = enumerate_words(&p, 5, None).unwrap();
        for w in words.iter().step_by(7) {
            let mut x = vec![0.0];
            // x in E(ℛ(a_1))
            let c = p.letter_box(w.0[0]);
            x[0] = wrap01(2.0 * 0.5 * (c[0].0 + c[0].1) + 0.03);
            let first = p.branch(w.0[0], &x).unwrap();
            let rest = Word(w.0[1..].to_vec());
            let lhs = eval_s(&m, &p, &x, w).unwrap()[0];
            let mut fx = [0.0];
            m.f().eval(&first, &mut fx);
            let rhs = fx[0] + 0.6 * eval_s(&m, &p, &first, &rest).unwrap()[0];
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn tail_bound_is_sound() {
        let m = fat2(0.1);
        let p = MarkovPartition::at_level(&e2(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let long = Word((0..200).map(|_| rng.random_range(0..2)).collect());
        for &tol in &[1e-2, 1e-4, 1e-8] {
            let t = eval_s_inf(&m, &p, &[0.37], &long, tol).unwrap();
            assert!(t.tail_bound <= tol);
            let full = eval_s(&m, &p, &[0.37], &long).unwrap();
            assert!((full[0] - t.value[0]).abs() <= t.tail_bound);
        }
        assert!(matches!(
            eval_s_inf(&m, &p, &[0.37], &Word(vec![0; 3]), 1e-8),
            Err(Error::PrefixTooShort { .. })
        ));
    }

    #[test]
    fn ds_examples() {
        let m = fat2(0.1);
        let p = MarkovPartition::at_level(&e2(), 1).unwrap();
        let t = Target::new(&p, &Word(vec![0])).unwrap();
        // x = 0 lies in the block around ℛ(0) = [0, 1/2]
        let ds = eval_ds(&m, &p, &t, &[0.0], &Word(vec![1]), 1).unwrap();
        assert!(ds.data[0].abs() < 1e-15);
        let z = fat2(0.0);
        let ds = eval_ds(&z, &p, &t, &[0.1], &Word(vec![1, 0]), 2).unwrap();
        assert_eq!(ds.data, vec![0.0]);
        assert!(matches!(eval_ds(&m, &p, &t, &[0.1], &Word(vec![1]), 3), Err(Error::OrderTooHigh { .. })));
    }

    #[test]
    fn ds_matches_finite_differences() {
        let m = fat2(0.1);
        let p = MarkovPartition::at_level(&e2(), 2).unwrap();
        let t = Target::new(&p, &Word(vec![2, 1])).unwrap();
        let words = enumerate_words(&p, 3, Some(&t.word)).unwrap();
        for w in words.iter() {
            let leaf = LeafEval::new(&m, &p, &t, w).unwrap();
            let z = [t.center[0] + 0.01];
            let h = 1e-5;
            let fd = (leaf.s(&[z[0] + h])[0] - leaf.s(&[z[0] - h])[0]) / (2.0 * h);
            assert!((leaf.ds(&z)[(0, 0)] - fd).abs() < 1e-8);
            let fd2 = (leaf.ds(&[z[0] + h])[(0, 0)] - leaf.ds(&[z[0] - h])[(0, 0)]) / (2.0 * h);
            assert!((leaf.deriv(&z, 2).data[0] - fd2).abs() < 1e-7);
            assert!((leaf.deriv(&z, 1).data[0] - leaf.ds(&z)[(0, 0)]).abs() < 1e-15);
            // the extension agrees with S on ℛ(c)
            let direct = eval_s(&m, &p, &z, w).unwrap()[0];
            assert!((leaf.s(&z)[0] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn alpha0_bound_audit() {
        let m = SkewModel::new(
            e2(),
            Contraction::scalar(0.6).unwrap(),
            TrigForcing::cosine(&[1], &[0.1], 0.0).unwrap(),
            3,
            0.0,
            TrapOptions::default(),
        )
        .unwrap();
        let p = MarkovPartition::at_level(&e2(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let targets = enumerate_words(&p, 2, None).unwrap();
        let norm_e = 2.0f64;
        for _ in 0..1000 {
            let c = &targets.words[rng.random_range(0..targets.len())];
            let t = Target::new(&p, c).unwrap();
            let q = rng.random_range(1..6);
            let ws = enumerate_words(&p, q, Some(c)).unwrap();
            let a = &ws.words[rng.random_range(0..ws.len())];
            let block = t.block();
            let x = [rng.random_range(block[0].0..=block[0].1)];
            let j = rng.random_range(0..=3usize);
            let tensor = eval_ds(&m, &p, &t, &x, a, j).unwrap();
            let val = tensor.partial(&[j as u32])[0].abs();
            assert!(norm_e.powi(j as i32) * val <= m.alpha0() + 1e-9);
        }
    }

    #[test]
    fn pi_tie_breaking() {
        let p = MarkovPartition::at_level(&e2(), 2).unwrap();
        assert_eq!(p.pi(&[0.0]), 0);
        assert_eq!(p.pi(&[0.25]), 0);
        assert_eq!(p.pi(&[0.5]), 1);
        assert_eq!(p.pi(&[0.6]), 2);
    }
}
