//! Problem definitions, dictionary diagnostics and seeded instance generation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matkernel::{all_finite, numerical_rank, select_columns, RankTolerance, RealMatrix, RealVector};
use crate::seed::rng_from_seed;

/// Number of exactly nonzero entries.
pub fn nnz(v: &RealVector) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

/// Ascending indices of the exactly nonzero entries.
pub fn support_of(v: &RealVector) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Sparse-vector estimation problem `y = H alpha0 + w`, `||alpha0||_0 <= s`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub h: RealMatrix,
    pub sigma: f64,
    pub s: usize,
    pub alpha0: Option<RealVector>,
}

impl ProblemInstance {
    pub fn new(h: RealMatrix, sigma: f64, s: usize, alpha0: Option<RealVector>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !all_finite(&h) {
            return Err(Error::InvalidParameter("dictionary has non-finite entries".into()));
        }
        let p = h.ncols();
        if s == 0 || s >= p {
            return Err(Error::InvalidParameter(format!("need 1 <= s < p, got s = {s}, p = {p}")));
        }
        if let Some(a) = &alpha0 {
            if a.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "alpha0 has length {}, dictionary has {p} columns",
                    a.len()
                )));
            }
            let k = nnz(a);
            if k > s {
                return Err(Error::InfeasiblePoint { nnz: k, s });
            }
        }
        Ok(Self { h, sigma, s, alpha0 })
    }

    pub fn p(&self) -> usize {
        self.h.ncols()
    }
}

/// Signal-space problem `y = A x + w`, `x = D alpha`, `||alpha||_0 <= s`.
///
/// `representation` is the unique sparse `r(x)`; computing it from `x` is
/// NP-hard in general, so it is supplied by the caller.
#[derive(Debug, Clone)]
pub struct SignalModel {
    pub a: RealMatrix,
    pub d: RealMatrix,
    pub s: usize,
    pub representation: Option<RealVector>,
}

impl SignalModel {
    pub fn new(a: RealMatrix, d: RealMatrix, s: usize, representation: Option<RealVector>) -> Result<Self> {
        if a.ncols() != d.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{} but D is {}x{}",
                a.nrows(),
                a.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if s == 0 || s >= d.ncols() {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= s < p, got s = {s}, p = {}",
                d.ncols()
            )));
        }
        if let Some(r) = &representation {
            if r.len() != d.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "representation has length {}, D has {} columns",
                    r.len(),
                    d.ncols()
                )));
            }
            let k = nnz(r);
            if k > s {
                return Err(Error::InfeasiblePoint { nnz: k, s });
            }
        }
        Ok(Self { a, d, s, representation })
    }

    /// Checks `spark(D) > 2s` by exhaustive search.
    pub fn dictionary_identifiable(&self) -> bool {
        identifiable(&self.d, self.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparkValue {
    Finite(usize),
    /// No dependent subset exists up to the search limit.
    Infinite,
}

impl SparkValue {
    pub fn exceeds(&self, k: usize) -> bool {
        match *self {
            SparkValue::Finite(v) => v > k,
            SparkValue::Infinite => true,
        }
    }
}

impl fmt::Display for SparkValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparkValue::Finite(v) => write!(f, "{v}"),
            SparkValue::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparkReport {
    pub value: SparkValue,
    /// A smallest dependent column subset, ascending, when one was found.
    pub witness: Option<Vec<usize>>,
    /// Column subsets whose rank was decided by an explicit SVD.
    pub svd_checks: usize,
}

pub fn spark(m: &RealMatrix, limit: usize) -> SparkValue {
    spark_search(m, limit).value
}

/// Smallest number of linearly dependent columns, searching subsets of size
/// at most `limit`.
///
/// The search is exhaustive in effect but prunes subtrees that a Gershgorin
/// (cumulative coherence) argument on the Schur complement certifies as well
/// conditioned. Only subsets that cannot be certified that way are passed to
/// the SVD rank test, so rank decisions match [`numerical_rank`].
pub fn spark_search(m: &RealMatrix, limit: usize) -> SparkReport {
    let p = m.ncols();
    let limit = limit.min(p);
    let order = coherent_first(m, limit);
    let permuted = select_columns(m, &order);
    let mut searcher = SparkSearcher::new(&permuted, limit);
    searcher.run();
    let witness = searcher.best.map(|w| {
        let mut orig: Vec<usize> = w.iter().map(|&k| order[k]).collect();
        orig.sort_unstable();
        orig
    });
    let value = match &witness {
        Some(w) => SparkValue::Finite(w.len()),
        None => SparkValue::Infinite,
    };
    SparkReport {
        value,
        witness,
        svd_checks: searcher.svd_checks,
    }
}

/// Column order for the search: columns with the largest sum of their
/// `limit - 1` strongest normalized correlations first. Subtrees rooted past
/// them then see only weakly coupled candidates and certify early.
fn coherent_first(m: &RealMatrix, limit: usize) -> Vec<usize> {
    let p = m.ncols();
    let norms: Vec<f64> = (0..p).map(|j| m.column(j).norm()).collect();
    let take = limit.saturating_sub(1).min(p.saturating_sub(1));
    let gram = m.transpose() * m;
    let score: Vec<f64> = (0..p)
        .map(|j| {
            if norms[j] == 0.0 {
                return f64::INFINITY;
            }
            let mut row: Vec<f64> = (0..p)
                .filter(|&l| l != j)
                .map(|l| if norms[l] == 0.0 { 0.0 } else { (gram[(j, l)] / (norms[j] * norms[l])).abs() })
                .collect();
            if take == 0 {
                return 0.0;
            }
            row.select_nth_unstable_by(take - 1, |a, b| b.total_cmp(a));
            row[..take].iter().sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    order
}

/// `spark(M) > 2s`, the identifiability condition for `s`-sparse vectors.
pub fn identifiable(m: &RealMatrix, s: usize) -> bool {
    spark(m, 2 * s).exceeds(2 * s)
}

// A subset is certified independent when a lower bound on the smallest
// singular value of its column-normalized submatrix (scaled by the column norm
// spread) sits this many times above the SVD rank cutoff.
const CERTIFY_MARGIN: f64 = 1e3;
const RANK_FACTOR: f64 = 1e-10;

struct SparkSearcher<'a> {
    m: &'a RealMatrix,
    p: usize,
    gram: Vec<f64>,
    norm_ratio: f64,
    max_size: usize,
    best: Option<Vec<usize>>,
    svd_checks: usize,
    scratch: Vec<f64>,
}

impl<'a> SparkSearcher<'a> {
    fn new(m: &'a RealMatrix, limit: usize) -> Self {
        let p = m.ncols();
        Self {
            m,
            p,
            gram: Vec::new(),
            norm_ratio: 1.0,
            max_size: limit,
            best: None,
            svd_checks: 0,
            scratch: Vec::new(),
        }
    }

    fn run(&mut self) {
        if self.max_size == 0 {
            return;
        }
        let norms: Vec<f64> = (0..self.p).map(|j| self.m.column(j).norm()).collect();
        for j in 0..self.p {
            self.svd_checks += 1;
            if numerical_rank(&select_columns(self.m, &[j]), RankTolerance::Auto) == 0 {
                self.best = Some(vec![j]);
                return;
            }
        }
        if self.max_size < 2 {
            return;
        }
        let (lo, hi) = norms
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &n| (lo.min(n), hi.max(n)));
        self.norm_ratio = lo / hi;

        let p = self.p;
        let mut gram = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let g = self.m.column(i).dot(&self.m.column(j)) / (norms[i] * norms[j]);
                gram[i * p + j] = g;
                gram[j * p + i] = g;
            }
        }
        self.gram = gram;

        let coeffs: Vec<Vec<f64>> = vec![Vec::new(); p];
        let res2 = vec![1.0; p];
        let mut chosen = Vec::new();
        self.visit(&mut chosen, 1.0, &coeffs, &res2, 0);
    }

    /// Lower bound on sigma_min^2 of a normalized subset of size `k` whose
    /// Gram determinant is at least `det`.
    fn sigma_min_sq_bound(det: f64, k: usize) -> f64 {
        det / (k as f64).powi(k as i32 - 1)
    }

    fn certified(&self, sigma_min_sq: f64, k: usize) -> bool {
        let sigma_lb = sigma_min_sq.max(0.0).sqrt() * self.norm_ratio / (k as f64).sqrt();
        sigma_lb > CERTIFY_MARGIN * RANK_FACTOR * (self.m.nrows().max(k) as f64)
    }

    fn subset_dependent(&mut self, subset: &[usize]) -> bool {
        self.svd_checks += 1;
        numerical_rank(&select_columns(self.m, subset), RankTolerance::Auto) < subset.len()
    }

    /// `chosen` is an independent set; `coeffs[j]`/`res2[j]` hold the
    /// projection coefficients and squared residual of normalized column `j`
    /// against span(chosen), for every candidate `j >= start`.
    fn visit(&mut self, chosen: &mut Vec<usize>, det: f64, coeffs: &[Vec<f64>], res2: &[f64], start: usize) {
        let d = chosen.len();
        if d >= self.max_size || start >= self.p {
            return;
        }
        let q = self.max_size - d;
        if q >= 2 && self.subtree_certified(det, coeffs, res2, start, q) {
            return;
        }

        for i in start..self.p {
            if chosen.len() >= self.max_size {
                // a dependent set of the current size was found; only smaller ones matter now
                return;
            }
            let k = d + 1;
            let det_i = det * res2[i];
            chosen.push(i);
            let independent = if self.certified(Self::sigma_min_sq_bound(det_i, k), k) {
                true
            } else {
                let sub = chosen.clone();
                !self.subset_dependent(&sub)
            };
            if !independent {
                self.best = Some(chosen.clone());
                self.max_size = k - 1;
                chosen.pop();
                return;
            }
            if k < self.max_size && i + 1 < self.p && res2[i] > 0.0 {
                let (child_coeffs, child_res2) = self.extend(i, coeffs, res2);
                self.visit(chosen, det_i, &child_coeffs, &child_res2, i + 1);
            }
            chosen.pop();
        }
    }

    fn extend(&self, i: usize, coeffs: &[Vec<f64>], res2: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let p = self.p;
        let pivot = res2[i].sqrt();
        let mut child_coeffs = vec![Vec::new(); p];
        let mut child_res2 = vec![0.0; p];
        for j in (i + 1)..p {
            let dot: f64 = coeffs[i].iter().zip(&coeffs[j]).map(|(a, b)| a * b).sum();
            let c = (self.gram[i * p + j] - dot) / pivot;
            let mut w = Vec::with_capacity(coeffs[j].len() + 1);
            w.extend_from_slice(&coeffs[j]);
            w.push(c);
            child_coeffs[j] = w;
            child_res2[j] = (res2[j] - c * c).max(0.0);
        }
        (child_coeffs, child_res2)
    }

    /// Certifies every extension of `chosen` by at most `q` candidates.
    fn subtree_certified(&mut self, det: f64, coeffs: &[Vec<f64>], res2: &[f64], start: usize, q: usize) -> bool {
        let p = self.p;
        let c = p - start;
        if c == 0 {
            return true;
        }
        let min_res2 = res2[start..].iter().copied().fold(f64::INFINITY, f64::min);
        if min_res2 <= 0.0 {
            return false;
        }
        let take = (q - 1).min(c - 1);
        let d = coeffs[start].len();
        let mut flat = std::mem::take(&mut self.scratch);
        flat.clear();
        flat.resize(c * d + c + c * c, 0.0);
        let (coef, rest) = flat.split_at_mut(c * d);
        let (scale, corr) = rest.split_at_mut(c);
        for a in 0..c {
            coef[a * d..(a + 1) * d].copy_from_slice(&coeffs[start + a]);
            scale[a] = 1.0 / res2[start + a].sqrt();
        }
        for a in 0..c {
            let ca = &coef[a * d..(a + 1) * d];
            let grow = &self.gram[(start + a) * p + start..(start + 1 + a) * p];
            for b in (a + 1)..c {
                let cb = &coef[b * d..(b + 1) * d];
                let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                let r = ((grow[b] - dot) * scale[a] * scale[b]).abs();
                corr[a * c + b] = r;
                corr[b * c + a] = r;
            }
        }
        // the zero diagonal entry never raises a top-`take` sum
        let mut babel = 0.0f64;
        if take > 0 {
            for row in corr.chunks_mut(c) {
                row.select_nth_unstable_by(take - 1, |x, y| y.total_cmp(x));
                babel = babel.max(row[..take].iter().sum());
                if babel >= 1.0 {
                    break;
                }
            }
        }
        self.scratch = flat;
        if babel >= 1.0 {
            return false;
        }
        // det(G_{T+R}) >= det(G_T) * prod res2 * (1 - babel)^|R|, worst case |R| = q
        // and the largest subset in the subtree gives the weakest bound
        let floor = (min_res2 * (1.0 - babel)).min(1.0);
        let det_lb = det * floor.powi(q as i32);
        self.certified(Self::sigma_min_sq_bound(det_lb, self.max_size), self.max_size)
    }
}

/// Mutual coherence `max_{i != j} |h_i^T h_j|` of a unit-norm dictionary.
pub fn coherence(m: &RealMatrix) -> Result<f64> {
    coherence_with_pair(m).map(|(mu, _)| mu)
}

/// Coherence together with the column pair attaining it.
pub fn coherence_with_pair(m: &RealMatrix) -> Result<(f64, Option<(usize, usize)>)> {
    for j in 0..m.ncols() {
        let n = m.column(j).norm();
        if (n - 1.0).abs() > 1e-8 {
            return Err(Error::NotNormalized { column: j, norm: n });
        }
    }
    let gram = m.transpose() * m;
    let mut best = (0.0, None);
    for i in 0..m.ncols() {
        for j in (i + 1)..m.ncols() {
            let v = gram[(i, j)].abs();
            if best.1.is_none() || v > best.0 {
                best = (v, Some((i, j)));
            }
        }
    }
    Ok((best.0.min(1.0), best.1))
}

/// IID standard normal `m x p` matrix with unit-norm columns.
pub fn generate_dictionary(m: usize, p: usize, seed: u64) -> RealMatrix {
    let mut rng = rng_from_seed(seed);
    let mut h = RealMatrix::from_fn(m, p, |_, _| 0.0);
    // column-major fill so each column is a contiguous block of the stream
    for j in 0..p {
        for i in 0..m {
            h[(i, j)] = rng.sample(StandardNormal);
        }
    }
    for mut col in h.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    h
}

/// Random `s`-sparse vector: uniform support, IID standard normal values.
///
/// The support is the first `s` entries of a seeded uniform permutation and the
/// values are drawn in permutation order, so for a fixed seed the vector for
/// `s` is a restriction of the vector for `s + 1`.
pub fn generate_sparse_param(p: usize, s: usize, seed: u64) -> RealVector {
    assert!(s <= p, "sparsity {s} exceeds dimension {p}");
    let mut rng = rng_from_seed(seed);
    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(&mut rng);
    let mut alpha = RealVector::zeros(p);
    for &idx in perm.iter().take(s) {
        let v = loop {
            let v: f64 = rng.sample(StandardNormal);
            if v != 0.0 {
                break v;
            }
        };
        alpha[idx] = v;
    }
    alpha
}

/// `H alpha + w`, `w` IID `N(0, sigma^2)` from the seeded stream.
pub fn simulate_measurements(h: &RealMatrix, alpha: &RealVector, sigma: f64, seed: u64) -> RealVector {
    assert_eq!(alpha.len(), h.ncols(), "alpha length must match dictionary columns");
    let mut rng = rng_from_seed(seed);
    let mut y = h * alpha;
    if sigma != 0.0 {
        for yi in y.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *yi += sigma * z;
        }
    }
    y
}
