//! Dantzig selector as a linear program, solved by a dense dual simplex.
//!
//! With `G = H^T H` and `b = H^T y` the program
//! `min |x|_1  s.t.  |b - G x|_inf <= tau` is written over `x = u - v`,
//! `u, v >= 0`, with one slack per inequality:
//!
//! ```text
//!  G u - G v + s1        = b + tau
//! -G u + G v      + s2   = tau - b
//! ```
//!
//! Every cost is nonnegative, so the all-slack basis is dual feasible and the
//! dual simplex can start from it directly. The program is always feasible:
//! `b` lies in the range of `G`, so `x = G^+ b` meets the constraint with zero
//! residual for every `tau >= 0`, whatever the rank of `H`. The objective is
//! bounded below by zero, hence an optimal vertex exists.
//!
//! Pivoting is deterministic: the leaving row is the most negative basic
//! value (lowest row on ties) and the entering column is the smallest ratio
//! (lowest column on ties). After a run of pivots that fail to raise the dual
//! objective the leaving rule switches to the lowest basic index, which rules
//! out cycling.

use nalgebra::DMatrix;

use super::{check_dims, EstimateRecord, SolverConfig};
use crate::error::{Error, Result};
use crate::matkernel::{RealMatrix, RealVector};

const PIVOT_TOL: f64 = 1e-11;
const RATIO_TIE: f64 = 1e-12;
const STALL_LIMIT: usize = 50;
const REFACTOR_EVERY: usize = 200;
const MAX_REPAIRS: usize = 5;

pub fn dantzig(h: &RealMatrix, y: &RealVector, tau: f64, cfg: &SolverConfig) -> Result<EstimateRecord> {
    check_dims(h, y)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let gram = h.transpose() * h;
    let b = h.transpose() * y;
    let mut lp = Tableau::new(&gram, &b, tau);

    let mut pivots = 0usize;
    let mut repairs = 0usize;
    loop {
        let finished = lp.run(cfg.max_iterations, &mut pivots)?;
        let (x, duals) = lp.resolve()?;
        let cert = certificate(&gram, &b, tau, &x, &duals);
        if cert <= cfg.tol {
            return Ok(EstimateRecord::new(x, pivots, cert));
        }
        if !finished || repairs >= MAX_REPAIRS {
            return Err(Error::NotConverged {
                iterations: pivots,
                residual: cert,
                best: x,
            });
        }
        repairs += 1;
        lp.refactor()?;
    }
}

/// Primal infeasibility, dual infeasibility and relative duality gap, combined
/// by maximum. `duals` are the equality multipliers `(w1, w2)`, which are
/// nonpositive at a dual feasible point.
fn certificate(gram: &RealMatrix, b: &RealVector, tau: f64, x: &RealVector, duals: &RealVector) -> f64 {
    let p = x.len();
    let w1 = duals.rows(0, p);
    let w2 = duals.rows(p, p);
    let primal = ((b - gram * x).amax() - tau).max(0.0);
    let lambda = w1 - w2;
    let dual_inf = ((gram * &lambda).amax() - 1.0).max(0.0).max(duals.max().max(0.0));
    let primal_obj = x.lp_norm(1);
    let dual_obj = b.dot(&lambda) + tau * (w1.sum() + w2.sum());
    let gap = (primal_obj - dual_obj).abs() / primal_obj.max(1.0);
    primal.max(dual_inf).max(gap)
}

struct Tableau {
    p: usize,
    rows: usize,
    cols: usize,
    /// Original constraint matrix `[A | r]`, row major, `rows x (cols + 1)`.
    original: Vec<f64>,
    cost: Vec<f64>,
    /// Current `B^{-1} [A | r]`, row major.
    tab: Vec<f64>,
    reduced: Vec<f64>,
    objective: f64,
    basis: Vec<usize>,
    bland: bool,
    stall: usize,
    since_refactor: usize,
}

impl Tableau {
    fn new(gram: &RealMatrix, b: &RealVector, tau: f64) -> Self {
        let p = gram.nrows();
        let rows = 2 * p;
        let cols = 4 * p;
        let width = cols + 1;
        let mut original = vec![0.0; rows * width];
        for i in 0..p {
            for j in 0..p {
                let g = gram[(i, j)];
                original[i * width + j] = g;
                original[i * width + p + j] = -g;
                original[(p + i) * width + j] = -g;
                original[(p + i) * width + p + j] = g;
            }
            original[i * width + 2 * p + i] = 1.0;
            original[(p + i) * width + 3 * p + i] = 1.0;
            original[i * width + cols] = b[i] + tau;
            original[(p + i) * width + cols] = tau - b[i];
        }
        let mut cost = vec![0.0; cols];
        cost[..2 * p].fill(1.0);
        Self {
            p,
            rows,
            cols,
            tab: original.clone(),
            original,
            reduced: cost.clone(),
            cost,
            objective: 0.0,
            basis: (2 * p..4 * p).collect(),
            bland: false,
            stall: 0,
            since_refactor: 0,
        }
    }

    fn width(&self) -> usize {
        self.cols + 1
    }

    fn rhs(&self, i: usize) -> f64 {
        self.tab[i * self.width() + self.cols]
    }

    fn feasibility_tol(&self) -> f64 {
        let scale = (0..self.rows)
            .map(|i| self.original[i * self.width() + self.cols].abs())
            .fold(1.0, f64::max);
        1e-12 * scale
    }

    /// Pivots until primal feasible. Returns false when the iteration budget
    /// ran out first.
    fn run(&mut self, max_pivots: usize, pivots: &mut usize) -> Result<bool> {
        let feas = self.feasibility_tol();
        loop {
            let Some(r) = self.leaving_row(feas) else {
                return Ok(true);
            };
            if *pivots >= max_pivots {
                return Ok(false);
            }
            let Some(q) = self.entering_column(r) else {
                return Err(Error::LinearProgram(format!(
                    "row {r} certifies primal infeasibility, which contradicts b lying in the range of G"
                )));
            };
            let before = self.objective;
            self.pivot(r, q);
            *pivots += 1;
            if self.objective <= before + 1e-14 * before.abs().max(1.0) {
                self.stall += 1;
                if self.stall >= STALL_LIMIT {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
            }
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    fn leaving_row(&self, feas: f64) -> Option<usize> {
        let mut pick: Option<usize> = None;
        for i in 0..self.rows {
            let v = self.rhs(i);
            if v >= -feas {
                continue;
            }
            pick = match pick {
                None => Some(i),
                Some(k) if self.bland && self.basis[i] < self.basis[k] => Some(i),
                Some(k) if !self.bland && v < self.rhs(k) => Some(i),
                keep => keep,
            };
        }
        pick
    }

    fn entering_column(&self, r: usize) -> Option<usize> {
        let row = &self.tab[r * self.width()..r * self.width() + self.cols];
        let mut best: Option<(usize, f64)> = None;
        for (j, &a) in row.iter().enumerate() {
            if a >= -PIVOT_TOL {
                continue;
            }
            let ratio = self.reduced[j].max(0.0) / -a;
            match best {
                Some((_, br)) if ratio >= br - RATIO_TIE * br.abs().max(1.0) => {}
                _ => best = Some((j, ratio)),
            }
        }
        best.map(|(j, _)| j)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width();
        let piv = self.tab[r * w + q];
        for v in &mut self.tab[r * w..(r + 1) * w] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.tab[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.tab[i * w + q];
            if f == 0.0 {
                continue;
            }
            for (t, &pv) in self.tab[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *t -= f * pv;
            }
            self.tab[i * w + q] = 0.0;
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (d, &pv) in self.reduced.iter_mut().zip(&pivot_row[..self.cols]) {
                *d -= f * pv;
            }
            self.objective += f * pivot_row[self.cols];
        }
        self.reduced[q] = 0.0;
        self.basis[r] = q;
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let w = self.width();
        DMatrix::from_fn(self.rows, self.rows, |i, k| self.original[i * w + self.basis[k]])
    }

    /// Rebuilds the tableau and reduced costs from the original data and the
    /// current basis.
    fn refactor(&mut self) -> Result<()> {
        let w = self.width();
        let lu = self.basis_matrix().lu();
        let full = DMatrix::from_row_slice(self.rows, w, &self.original);
        let solved = lu
            .solve(&full)
            .ok_or_else(|| Error::LinearProgram("basis matrix became singular".into()))?;
        for i in 0..self.rows {
            for j in 0..w {
                self.tab[i * w + j] = solved[(i, j)];
            }
        }
        let duals = self.duals()?;
        let mut objective = 0.0;
        for j in 0..self.cols {
            let mut d = self.cost[j];
            for i in 0..self.rows {
                d -= duals[i] * self.original[i * w + j];
            }
            self.reduced[j] = d;
        }
        for (i, &k) in self.basis.iter().enumerate() {
            self.reduced[k] = 0.0;
            objective += self.cost[k] * self.rhs(i);
        }
        self.objective = objective;
        self.since_refactor = 0;
        Ok(())
    }

    /// Simplex multipliers `B^{-T} c_B`.
    fn duals(&self) -> Result<RealVector> {
        let cb = RealVector::from_iterator(self.rows, self.basis.iter().map(|&k| self.cost[k]));
        self.basis_matrix()
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| Error::LinearProgram("basis matrix became singular".into()))
    }

    /// Primal point and multipliers recomputed from the original data.
    fn resolve(&self) -> Result<(RealVector, RealVector)> {
        let w = self.width();
        let r = RealVector::from_iterator(self.rows, (0..self.rows).map(|i| self.original[i * w + self.cols]));
        let xb = self
            .basis_matrix()
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::LinearProgram("basis matrix became singular".into()))?;
        let floor = self.feasibility_tol();
        let mut x = RealVector::zeros(self.p);
        for (i, &k) in self.basis.iter().enumerate() {
            let v = if xb[i] <= floor { 0.0 } else { xb[i] };
            if k < self.p {
                x[k] += v;
            } else if k < 2 * self.p {
                x[k - self.p] -= v;
            }
        }
        Ok((x, self.duals()?))
    }
}
