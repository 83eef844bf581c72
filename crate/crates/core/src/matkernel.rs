//! Dense kernels shared by the bound and estimator code.
//!
//! Every rank decision (pseudoinverse, range bases, range inclusion) goes
//! through one SVD with one cutoff rule, so the kernels never disagree about
//! the rank of a matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type RealVector = DVector<f64>;

const DEFAULT_RANK_FACTOR: f64 = 1e-10;

/// Cutoff below which singular values are treated as zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTolerance {
    /// `1e-10 * sigma_max * max(rows, cols)` of the matrix being factored.
    #[default]
    Auto,
    /// Absolute singular-value cutoff.
    Fixed(f64),
}

impl RankTolerance {
    pub fn cutoff(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        match *self {
            RankTolerance::Auto => DEFAULT_RANK_FACTOR * sigma_max * rows.max(cols) as f64,
            RankTolerance::Fixed(t) => t.max(0.0),
        }
    }
}

/// Thin SVD restricted to the singular triplets above the cutoff.
struct TruncatedSvd {
    u: RealMatrix,
    singular_values: Vec<f64>,
    v: RealMatrix,
}

fn truncated_svd(m: &RealMatrix, tol: RankTolerance) -> TruncatedSvd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return TruncatedSvd {
            u: RealMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            v: RealMatrix::zeros(cols, 0),
        };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol.cutoff(sigma_max, rows, cols);

    let mut keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cutoff)
        .collect();
    // descending order, stable on index for ties
    keep.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let k = keep.len();
    let mut u_k = RealMatrix::zeros(rows, k);
    let mut v_k = RealMatrix::zeros(cols, k);
    let mut s_k = Vec::with_capacity(k);
    for (dst, &src) in keep.iter().enumerate() {
        u_k.set_column(dst, &u.column(src));
        v_k.set_column(dst, &v_t.row(src).transpose());
        s_k.push(svd.singular_values[src]);
    }
    TruncatedSvd {
        u: u_k,
        singular_values: s_k,
        v: v_k,
    }
}

pub fn numerical_rank(m: &RealMatrix, tol: RankTolerance) -> usize {
    truncated_svd(m, tol).singular_values.len()
}

pub fn has_full_column_rank(m: &RealMatrix, tol: RankTolerance) -> bool {
    numerical_rank(m, tol) == m.ncols()
}

/// Moore-Penrose pseudoinverse, singular values at or below the cutoff are zeroed.
pub fn pseudoinverse(m: &RealMatrix, tol: RankTolerance) -> RealMatrix {
    let svd = truncated_svd(m, tol);
    let mut v_scaled = svd.v.clone();
    for (j, s) in svd.singular_values.iter().enumerate() {
        v_scaled.column_mut(j).scale_mut(1.0 / s);
    }
    v_scaled * svd.u.transpose()
}

/// Minimum-norm least-squares solution `M^+ rhs` together with the numerical rank of `M`.
pub fn lstsq(m: &RealMatrix, rhs: &RealVector, tol: RankTolerance) -> (RealVector, usize) {
    let svd = truncated_svd(m, tol);
    let mut coef = svd.u.transpose() * rhs;
    for (c, s) in coef.iter_mut().zip(&svd.singular_values) {
        *c /= s;
    }
    (&svd.v * coef, svd.singular_values.len())
}

/// Orthonormal basis of the column space; column count equals the numerical rank.
pub fn orthonormal_range_basis(m: &RealMatrix, tol: RankTolerance) -> RealMatrix {
    truncated_svd(m, tol).u
}

/// Orthogonal projector `M (M^T M)^{-1} M^T` onto the columns of a full-column-rank `M`.
pub fn projector_onto_columns(m: &RealMatrix) -> Result<RealMatrix> {
    let q = orthonormal_range_basis(m, RankTolerance::Auto);
    if q.ncols() != m.ncols() {
        return Err(Error::RankDeficient(format!(
            "projector requires full column rank, got rank {} for {} columns",
            q.ncols(),
            m.ncols()
        )));
    }
    Ok(&q * q.transpose())
}

/// Tests `R(sub) ⊆ R(sup)`: each column of `sub`, after removing its component
/// in the range of `sup`, must leave a residual at most `tol` times its norm.
///
/// With `RankTolerance::Auto` the residual threshold is `1e-10 * max(rows, cols)`,
/// which is the `Auto` cutoff evaluated on the orthonormal basis (`sigma_max = 1`).
pub fn range_inclusion(sub: &RealMatrix, sup: &RealMatrix, tol: RankTolerance) -> Result<bool> {
    if sub.nrows() != sup.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "range inclusion needs equal row counts ({} vs {})",
            sub.nrows(),
            sup.nrows()
        )));
    }
    let q = orthonormal_range_basis(sup, tol);
    let rel = tol.cutoff(1.0, sup.nrows(), sup.ncols());
    let residual = sub - &q * (q.transpose() * sub);
    Ok((0..sub.ncols()).all(|j| residual.column(j).norm() <= rel * sub.column(j).norm()))
}

pub fn symmetrize(m: &RealMatrix) -> RealMatrix {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &RealMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized first).
pub fn min_eigenvalue(m: &RealMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// `true` iff the smallest eigenvalue is at least `-tol`.
pub fn is_psd(m: &RealMatrix, tol: f64) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    let asymmetry = max_asymmetry(m);
    if asymmetry > tol * scale {
        return Err(Error::NotSymmetric { tol, asymmetry });
    }
    Ok(min_eigenvalue(m)? >= -tol)
}

/// Columns of `m` listed in `idx`, in that order.
pub fn select_columns(m: &RealMatrix, idx: &[usize]) -> RealMatrix {
    RealMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &RealMatrix) -> Option<RealMatrix> {
    m.clone().cholesky().map(|c| c.inverse())
}

pub fn all_finite(m: &RealMatrix) -> bool {
    m.iter().all(|v| v.is_finite())
}
