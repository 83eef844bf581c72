//! Constrained Cramér-Rao bounds.
//!
//! The general bound takes an orthonormal basis `U` of the feasible
//! subspace at the point of interest, the bias gradient restricted to that
//! subspace (`BU`), and the Fisher information `J`:
//!
//! ```text
//! Cov >= (U + BU) (U^T J U)^+ (U + BU)^T
//! ```
//!
//! valid whenever `R(U (U + BU)^T) ⊆ R(U U^T J U U^T)`. When that inclusion
//! fails no finite-variance estimator has the prescribed bias gradient.
//!
//! For `s`-sparse vectors the feasible subspace is spanned by the support
//! coordinates when the support is maximal (`||alpha||_0 = s`) and is the
//! whole space otherwise, which gives the oracle / unconstrained dichotomy.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matkernel::{
    has_full_column_rank, is_psd, projector_onto_columns, pseudoinverse, range_inclusion, select_columns,
    spd_inverse, symmetrize, RankTolerance, RealMatrix, RealVector,
};
use crate::model::{nnz, support_of, ProblemInstance, SignalModel};

/// Orthonormal basis of the feasible subspace at a sparse point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleBasis {
    pub u: RealMatrix,
    pub maximal_support: bool,
    pub support: Vec<usize>,
}

impl FeasibleBasis {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn regime(&self) -> Regime {
        if self.maximal_support {
            Regime::MaximalSupport
        } else {
            Regime::NonMaximalSupport
        }
    }
}

/// Bias gradient restricted to the feasible directions, `B U`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSpec {
    pub bu: RealMatrix,
    pub description: String,
}

impl BiasSpec {
    pub fn unbiased(basis: &FeasibleBasis) -> Self {
        Self {
            bu: RealMatrix::zeros(basis.u.nrows(), basis.u.ncols()),
            description: "unbiased".into(),
        }
    }

    pub fn new(bu: RealMatrix, description: impl Into<String>) -> Self {
        Self {
            bu,
            description: description.into(),
        }
    }

    pub fn is_unbiased(&self) -> bool {
        self.bu.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    NonMaximalSupport,
    MaximalSupport,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::NonMaximalSupport => "non-maximal",
            Regime::MaximalSupport => "maximal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub bound_matrix: Option<RealMatrix>,
    pub trace: Option<f64>,
    pub feasible: bool,
    pub regime: Regime,
}

impl BoundResult {
    fn feasible(matrix: RealMatrix, regime: Regime) -> Self {
        let m = symmetrize(&matrix);
        let trace = m.trace();
        Self {
            bound_matrix: Some(m),
            trace: Some(trace),
            feasible: true,
            regime,
        }
    }

    fn infeasible(regime: Regime) -> Self {
        Self {
            bound_matrix: None,
            trace: None,
            feasible: false,
            regime,
        }
    }

    /// Checks the PSD invariant of a feasible result.
    pub fn is_psd(&self, tol: f64) -> bool {
        match &self.bound_matrix {
            Some(m) => is_psd(m, tol).unwrap_or(false),
            None => true,
        }
    }
}

/// Fisher information of the linear Gaussian model, `H^T H / sigma^2`.
pub fn fisher_information(h: &RealMatrix, sigma: f64) -> Result<RealMatrix> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    Ok(h.transpose() * h / (sigma * sigma))
}

/// Feasible-subspace basis at a point of `{alpha : ||alpha||_0 <= s}`.
///
/// Maximal support gives `[e_i1, ..., e_is]` with ascending indices; otherwise
/// every coordinate direction is feasible and `U = I`.
pub fn feasible_basis(alpha: &RealVector, s: usize) -> Result<FeasibleBasis> {
    let p = alpha.len();
    let support = support_of(alpha);
    let k = support.len();
    if k > s {
        return Err(Error::InfeasiblePoint { nnz: k, s });
    }
    if k == s && s > 0 {
        let mut u = RealMatrix::zeros(p, k);
        for (col, &i) in support.iter().enumerate() {
            u[(i, col)] = 1.0;
        }
        Ok(FeasibleBasis {
            u,
            maximal_support: true,
            support,
        })
    } else {
        Ok(FeasibleBasis {
            u: RealMatrix::identity(p, p),
            maximal_support: false,
            support,
        })
    }
}

/// `(U + BU)(U^T J U)^+ (U + BU)^T`, or `None` when the range condition fails.
///
/// Works for any orthonormal `u`; [`crb_general`] is the sparse-basis entry point.
pub fn constrained_crb(u: &RealMatrix, bu: &RealMatrix, fim: &RealMatrix) -> Result<Option<RealMatrix>> {
    let n = u.nrows();
    if fim.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "FIM is {}x{}, basis lives in dimension {n}",
            fim.nrows(),
            fim.ncols()
        )));
    }
    if bu.shape() != u.shape() {
        return Err(Error::DimensionMismatch(format!(
            "BU is {}x{}, U is {}x{}",
            bu.nrows(),
            bu.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    let mean_grad = u + bu;
    let uu = u * u.transpose();
    let lhs = u * mean_grad.transpose();
    let rhs = &uu * fim * &uu;
    if !range_inclusion(&lhs, &rhs, RankTolerance::Auto)? {
        return Ok(None);
    }
    let reduced = u.transpose() * fim * u;
    let inv = pseudoinverse(&symmetrize(&reduced), RankTolerance::Auto);
    Ok(Some(&mean_grad * inv * mean_grad.transpose()))
}

pub fn crb_general(basis: &FeasibleBasis, bias: &BiasSpec, fim: &RealMatrix) -> Result<BoundResult> {
    match constrained_crb(&basis.u, &bias.bu, fim)? {
        Some(m) => Ok(BoundResult::feasible(m, basis.regime())),
        None => Ok(BoundResult::infeasible(basis.regime())),
    }
}

/// Bound for estimating an `s`-sparse vector from `y = H alpha0 + w`.
///
/// Assumes `spark(H) > 2s`; this is not re-checked here. A rank-deficient
/// support submatrix is reported as an error since it violates that assumption.
pub fn crb_sparse_vector(instance: &ProblemInstance, bias: &BiasSpec) -> Result<BoundResult> {
    let alpha0 = instance.alpha0.as_ref().ok_or(Error::MissingAlpha)?;
    let basis = feasible_basis(alpha0, instance.s)?;
    let h = &instance.h;
    let p = h.ncols();
    let var = instance.sigma * instance.sigma;
    if bias.bu.shape() != basis.u.shape() {
        return Err(Error::DimensionMismatch(format!(
            "BU must be {}x{} in the {} regime, got {}x{}",
            basis.u.nrows(),
            basis.u.ncols(),
            basis.regime().as_str(),
            bias.bu.nrows(),
            bias.bu.ncols()
        )));
    }
    let mean_grad = &basis.u + &bias.bu;

    if basis.maximal_support {
        let hs = select_columns(h, &basis.support);
        let gram = hs.transpose() * &hs;
        let inv = spd_inverse(&gram).ok_or_else(|| {
            Error::RankDeficient(format!(
                "support columns {:?} are linearly dependent (spark assumption violated)",
                basis.support
            ))
        })?;
        let bound = &mean_grad * inv * mean_grad.transpose() * var;
        return Ok(BoundResult::feasible(bound, Regime::MaximalSupport));
    }

    // U = I, so B = BU and the existence condition is N(H) ⊆ N(I + B),
    // equivalently R(I + B^T) ⊆ R(H^T).
    let feasible = if bias.is_unbiased() {
        has_full_column_rank(h, RankTolerance::Auto)
    } else {
        range_inclusion(&mean_grad.transpose(), &h.transpose(), RankTolerance::Auto)?
    };
    if !feasible {
        return Ok(BoundResult::infeasible(Regime::NonMaximalSupport));
    }
    // (H^T H)^+ = H^+ H^+^T, which keeps the conditioning of H rather than squaring it
    let h_pinv = pseudoinverse(h, RankTolerance::Auto);
    let gram_pinv = &h_pinv * h_pinv.transpose();
    debug_assert_eq!(gram_pinv.shape(), (p, p));
    let bound = &mean_grad * gram_pinv * mean_grad.transpose() * var;
    Ok(BoundResult::feasible(bound, Regime::NonMaximalSupport))
}

/// Whether a finite-variance estimator unbiased over the sparse set can exist at `alpha`.
pub fn unbiased_estimator_exists(h: &RealMatrix, alpha: &RealVector, s: usize) -> Result<bool> {
    let k = nnz(alpha);
    if k > s {
        return Err(Error::InfeasiblePoint { nnz: k, s });
    }
    if k == s {
        return Ok(true);
    }
    Ok(has_full_column_rank(h, RankTolerance::Auto))
}

/// Bound on unbiased estimators of `x = D alpha` from `y = A x + w`.
pub fn crb_signal(model: &SignalModel, sigma: f64) -> Result<BoundResult> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let repr = model.representation.as_ref().ok_or(Error::MissingRepresentation)?;
    if !has_full_column_rank(&model.a, RankTolerance::Auto) {
        return Err(Error::RankDeficient("A must have full column rank".into()));
    }
    let var = sigma * sigma;
    let ata = model.a.transpose() * &model.a;
    let support = support_of(repr);
    if support.len() < model.s {
        let inv = spd_inverse(&ata).ok_or_else(|| Error::RankDeficient("A^T A is singular".into()))?;
        return Ok(BoundResult::feasible(inv * var, Regime::NonMaximalSupport));
    }
    let dx = select_columns(&model.d, &support);
    let proj = projector_onto_columns(&dx).map_err(|_| {
        Error::RankDeficient(format!("dictionary columns {support:?} are linearly dependent"))
    })?;
    let reduced = symmetrize(&(&proj * ata * &proj));
    let bound = pseudoinverse(&reduced, RankTolerance::Auto) * var;
    Ok(BoundResult::feasible(bound, Regime::MaximalSupport))
}

/// Gershgorin bracket on the unbiased bound for unit-norm dictionaries:
/// `s sigma^2 / (1 + s mu) <= bound <= s sigma^2 / (1 - s mu)`.
///
/// The upper end is `None` once `s mu >= 1`.
pub fn coherence_sandwich(mu: f64, s: usize, sigma: f64) -> (f64, Option<f64>) {
    let s = s as f64;
    let base = s * sigma * sigma;
    let lower = base / (1.0 + s * mu);
    let upper = if s * mu < 1.0 {
        Some(base / (1.0 - s * mu))
    } else {
        None
    };
    (lower, upper)
}

/// The estimator attaining the bound at `alpha0` (bias function taken as zero):
/// `alpha0 + (U + BU)(U^T J U)^+ U^T Delta`, `Delta = H^T (y - H alpha0) / sigma^2`.
///
/// It depends on the unknown `alpha0`, so it is only useful for checking achievability.
pub fn efficient_estimate(
    instance: &ProblemInstance,
    basis: &FeasibleBasis,
    bias: &BiasSpec,
    y: &RealVector,
) -> Result<RealVector> {
    let alpha0 = instance.alpha0.as_ref().ok_or(Error::MissingAlpha)?;
    let h = &instance.h;
    if y.len() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "y has length {}, H has {} rows",
            y.len(),
            h.nrows()
        )));
    }
    let var = instance.sigma * instance.sigma;
    let fim = fisher_information(h, instance.sigma)?;
    let score = h.transpose() * (y - h * alpha0) / var;
    let reduced: DMatrix<f64> = basis.u.transpose() * fim * &basis.u;
    let inv = pseudoinverse(&symmetrize(&reduced), RankTolerance::Auto);
    let mean_grad = &basis.u + &bias.bu;
    Ok(alpha0 + mean_grad * inv * (basis.u.transpose() * score))
}
