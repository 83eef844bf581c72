use super::{check_dims, oracle, EstimateRecord};
use crate::error::{Error, Result};
use crate::matkernel::{RealMatrix, RealVector};

/// Largest number of supports `ml` is willing to enumerate.
pub const DEFAULT_ML_CAP: u128 = 5_000_000;

/// Relative (to `|y|^2`) window inside which two residuals count as tied.
const TIE_WINDOW: f64 = 1e-12;

/// `n choose k`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub fn ml(h: &RealMatrix, y: &RealVector, s: usize) -> Result<EstimateRecord> {
    ml_with_cap(h, y, s, DEFAULT_ML_CAP)
}

/// Exhaustive search over all `s`-column supports for the smallest LS residual.
pub fn ml_with_cap(h: &RealMatrix, y: &RealVector, s: usize, cap: u128) -> Result<EstimateRecord> {
    check_dims(h, y)?;
    let p = h.ncols();
    if s == 0 || s > p {
        return Err(Error::InvalidParameter(format!("ml needs 1 <= s <= p, got s = {s}, p = {p}")));
    }
    let count = binomial(p, s);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut search = Search::new(h, y, s);
    search.descend(0, 0)?;
    let best = search.best_support.expect("at least one support is enumerated");
    let mut rec = oracle(h, y, &best)?;
    rec.solver_iterations = search.visited;
    Ok(rec)
}

/// Depth-first walk over supports in lexicographic order, carrying a
/// Cholesky factor of the selected Gram block and `L^{-1} b_S`.
struct Search {
    gram: RealMatrix,
    b: RealVector,
    yy: f64,
    s: usize,
    p: usize,
    chosen: Vec<usize>,
    chol: RealMatrix,
    z: Vec<f64>,
    best_residual: f64,
    best_support: Option<Vec<usize>>,
    visited: usize,
}

impl Search {
    fn new(h: &RealMatrix, y: &RealVector, s: usize) -> Self {
        Self {
            gram: h.transpose() * h,
            b: h.transpose() * y,
            yy: y.norm_squared(),
            s,
            p: h.ncols(),
            chosen: Vec::with_capacity(s),
            chol: RealMatrix::zeros(s, s),
            z: vec![0.0; s],
            best_residual: f64::INFINITY,
            best_support: None,
            visited: 0,
        }
    }

    fn descend(&mut self, depth: usize, start: usize) -> Result<()> {
        let remaining = self.s - depth;
        for j in start..=(self.p - remaining) {
            self.push(depth, j)?;
            if depth + 1 == self.s {
                self.visited += 1;
                let fit: f64 = self.z.iter().map(|v| v * v).sum();
                let residual = (self.yy - fit).max(0.0);
                if residual < self.best_residual - TIE_WINDOW * self.yy || self.best_support.is_none() {
                    self.best_residual = residual;
                    self.best_support = Some(self.chosen.clone());
                }
            } else {
                self.descend(depth + 1, j + 1)?;
            }
            self.chosen.pop();
        }
        Ok(())
    }

    fn push(&mut self, depth: usize, j: usize) -> Result<()> {
        let mut acc_sq = 0.0;
        let mut acc_z = 0.0;
        for k in 0..depth {
            let mut v = self.gram[(self.chosen[k], j)];
            for t in 0..k {
                v -= self.chol[(k, t)] * self.chol[(depth, t)];
            }
            v /= self.chol[(k, k)];
            self.chol[(depth, k)] = v;
            acc_sq += v * v;
            acc_z += v * self.z[k];
        }
        let pivot = self.gram[(j, j)] - acc_sq;
        if pivot <= 1e-12 * self.gram[(j, j)].max(f64::MIN_POSITIVE) {
            let mut support = self.chosen.clone();
            support.push(j);
            return Err(Error::RankDeficient(format!(
                "ml needs every {}-column subset to be independent; columns {support:?} are not",
                self.s
            )));
        }
        let d = pivot.sqrt();
        self.chol[(depth, depth)] = d;
        self.z[depth] = (self.b[j] - acc_z) / d;
        self.chosen.push(j);
        Ok(())
    }
}
