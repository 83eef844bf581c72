//! Estimators of a sparse coefficient vector from `y = H alpha + w`.
//!
//! `oracle` and `ls` are closed-form least squares, `ml` enumerates supports,
//! `bpdn` and `dantzig` are convex programs solved here from scratch, and the
//! two "Gauss" variants refit least squares on the support picked by a convex
//! screener.

mod dantzig;
mod lasso;
mod ml;

use std::fmt;
use std::str::FromStr;

pub use dantzig::dantzig;
pub use lasso::{bpdn, subgradient_violation};
pub use ml::{binomial, ml, ml_with_cap, DEFAULT_ML_CAP};

use crate::error::{Error, Result};
use crate::matkernel::{lstsq, select_columns, RankTolerance, RealMatrix, RealVector};
use crate::model::support_of;

/// Relative magnitude (of the largest entry) above which a screener
/// coefficient counts as part of the support handed to the LS refit.
pub const SUPPORT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub estimate: RealVector,
    /// Indices of the nonzero entries of `estimate`, ascending.
    pub support: Vec<usize>,
    pub solver_iterations: usize,
    /// Optimality certificate reported by the solver (0 for closed forms up to roundoff).
    pub objective_residual: f64,
}

impl EstimateRecord {
    pub(crate) fn new(estimate: RealVector, solver_iterations: usize, objective_residual: f64) -> Self {
        let support = support_of(&estimate);
        Self {
            estimate,
            support,
            solver_iterations,
            objective_residual,
        }
    }
}

/// Componentwise `sign(v) * max(|v| - t, 0)`.
pub fn soft_threshold(v: &RealVector, t: f64) -> RealVector {
    v.map(|x| {
        let mag = x.abs() - t;
        if mag > 0.0 {
            mag.copysign(x)
        } else {
            0.0
        }
    })
}

/// Indices whose magnitude exceeds `rel_eps * max|v|`.
pub fn significant_support(v: &RealVector, rel_eps: f64) -> Vec<usize> {
    let peak = v.amax();
    if peak == 0.0 {
        return Vec::new();
    }
    let cut = rel_eps * peak;
    (0..v.len()).filter(|&i| v[i].abs() > cut).collect()
}

fn check_dims(h: &RealMatrix, y: &RealVector) -> Result<()> {
    if h.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "y has length {}, H has {} rows",
            y.len(),
            h.nrows()
        )));
    }
    Ok(())
}

fn normal_residual(h: &RealMatrix, y: &RealVector, x: &RealVector) -> f64 {
    (h.transpose() * (y - h * x)).amax()
}

fn scatter(p: usize, support: &[usize], values: &RealVector) -> RealVector {
    let mut out = RealVector::zeros(p);
    for (k, &i) in support.iter().enumerate() {
        out[i] = values[k];
    }
    out
}

/// Least squares restricted to `support`, zero elsewhere.
pub fn oracle(h: &RealMatrix, y: &RealVector, support: &[usize]) -> Result<EstimateRecord> {
    check_dims(h, y)?;
    let p = h.ncols();
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != support.len() {
        return Err(Error::InvalidParameter(format!("support {support:?} has repeated indices")));
    }
    if let Some(&bad) = sorted.iter().find(|&&i| i >= p) {
        return Err(Error::InvalidParameter(format!("support index {bad} out of range for {p} columns")));
    }
    if sorted.is_empty() {
        return Ok(EstimateRecord::new(RealVector::zeros(p), 0, 0.0));
    }
    let hs = select_columns(h, &sorted);
    let (coef, rank) = lstsq(&hs, y, RankTolerance::Auto);
    if rank < sorted.len() {
        return Err(Error::RankDeficient(format!(
            "support columns {sorted:?} have rank {rank}"
        )));
    }
    let est = scatter(p, &sorted, &coef);
    let resid = (hs.transpose() * (y - &hs * &coef)).amax();
    Ok(EstimateRecord::new(est, 0, resid))
}

/// Unconstrained least squares `(H^T H)^{-1} H^T y`.
pub fn ls(h: &RealMatrix, y: &RealVector) -> Result<EstimateRecord> {
    check_dims(h, y)?;
    let (x, rank) = lstsq(h, y, RankTolerance::Auto);
    if rank < h.ncols() {
        return Err(Error::RankDeficient(format!(
            "least squares needs full column rank, got rank {rank} for {} columns",
            h.ncols()
        )));
    }
    let resid = normal_residual(h, y, &x);
    Ok(EstimateRecord::new(x, 0, resid))
}

/// LS refit on a screener's support; dependent support columns fall back to
/// the minimum-norm (pseudoinverse) solution on that support.
fn refit(h: &RealMatrix, y: &RealVector, screened: EstimateRecord) -> Result<EstimateRecord> {
    let support = significant_support(&screened.estimate, SUPPORT_EPSILON);
    let p = h.ncols();
    let fitted = match oracle(h, y, &support) {
        Ok(r) => r,
        Err(Error::RankDeficient(_)) => {
            let hs = select_columns(h, &support);
            let (coef, _) = lstsq(&hs, y, RankTolerance::Auto);
            let resid = (hs.transpose() * (y - &hs * &coef)).amax();
            EstimateRecord::new(scatter(p, &support, &coef), 0, resid)
        }
        Err(e) => return Err(e),
    };
    Ok(EstimateRecord::new(
        fitted.estimate,
        screened.solver_iterations,
        screened.objective_residual.max(fitted.objective_residual),
    ))
}

/// Gauss-Dantzig selector: Dantzig support, then least squares on it.
pub fn gds(h: &RealMatrix, y: &RealVector, tau: f64, cfg: &SolverConfig) -> Result<EstimateRecord> {
    let ds = dantzig(h, y, tau, cfg)?;
    refit(h, y, ds)
}

/// BPDN support, then least squares on it.
pub fn gauss_bpdn(h: &RealMatrix, y: &RealVector, gamma: f64, cfg: &SolverConfig) -> Result<EstimateRecord> {
    let bp = bpdn(h, y, gamma, cfg)?;
    refit(h, y, bp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstimatorKind {
    Oracle,
    Ls,
    Ml,
    Bpdn,
    Ds,
    Gds,
    GaussBpdn,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Oracle,
        EstimatorKind::Ls,
        EstimatorKind::Ml,
        EstimatorKind::Bpdn,
        EstimatorKind::Ds,
        EstimatorKind::Gds,
        EstimatorKind::GaussBpdn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Ls => "ls",
            EstimatorKind::Ml => "ml",
            EstimatorKind::Bpdn => "bpdn",
            EstimatorKind::Ds => "ds",
            EstimatorKind::Gds => "gds",
            EstimatorKind::GaussBpdn => "gauss-bpdn",
        }
    }

    /// Parses a comma separated list such as `oracle,ds,gds`.
    pub fn parse_list(list: &str) -> Result<Vec<EstimatorKind>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownEstimator(s.to_string()))
    }
}

/// Everything an estimator may need besides `(H, y)`.
#[derive(Debug, Clone)]
pub struct EstimatorParams {
    pub s: usize,
    pub tau: f64,
    pub gamma: f64,
    pub solver: SolverConfig,
    pub ml_cap: u128,
    /// True support, consumed only by the oracle.
    pub oracle_support: Vec<usize>,
}

pub fn run_estimator(kind: EstimatorKind, h: &RealMatrix, y: &RealVector, params: &EstimatorParams) -> Result<EstimateRecord> {
    match kind {
        EstimatorKind::Oracle => oracle(h, y, &params.oracle_support),
        EstimatorKind::Ls => ls(h, y),
        EstimatorKind::Ml => ml_with_cap(h, y, params.s, params.ml_cap),
        EstimatorKind::Bpdn => bpdn(h, y, params.gamma, &params.solver),
        EstimatorKind::Ds => dantzig(h, y, params.tau, &params.solver),
        EstimatorKind::Gds => gds(h, y, params.tau, &params.solver),
        EstimatorKind::GaussBpdn => gauss_bpdn(h, y, params.gamma, &params.solver),
    }
}
