//! Dense matrix helpers shared by every other module.
//!
//! Matrices are stored as `nalgebra` `DMatrix`; singular value and symmetric
//! eigen decompositions are delegated to `faer`, which stays accurate on
//! exactly rank-deficient inputs (rank-one products, zero blocks). Block
//! indexing follows the 1-based inclusive convention `M(p1:p2; q1:q2)` used
//! when describing the stacked horizon operators, so that the block copies in
//! the estimator code read the same way as their definitions.

use faer::Mat;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Relative asymmetry accepted by [`min_eig_sym`].
pub const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(invalid(format!(
            "{what} is empty ({}x{})",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD `(U, σ, V)` with singular values in descending order.
fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let dec = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Degenerate(format!("singular value decomposition failed: {e:?}")))?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    let k = s.nrows();
    Ok((
        DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]),
        (0..k).map(|i| s[i]).collect(),
        DMatrix::from_fn(m.ncols(), k, |i, j| v[(i, j)]),
    ))
}

fn default_cutoff(m: &DMatrix<f64>, smax: f64) -> f64 {
    m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax
}

/// Moore–Penrose pseudoinverse.
///
/// Singular values at or below `tol × σ_max` are treated as zero. `tol = 0`
/// selects `max(rows, cols) × ε_mach × σ_max`.
pub fn pinv(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    ensure_finite(m, "pinv argument")?;
    if tol.is_nan() || tol < 0.0 {
        return Err(invalid("pinv tolerance must be nonnegative"));
    }
    let (u, sv, v) = thin_svd(m)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let cutoff = if tol == 0.0 {
        default_cutoff(m, smax)
    } else {
        tol * smax
    };

    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in sv.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_k u_kᵀ / s
            out.ger(1.0 / s, &v.column(k), &u.column(k), 1.0);
        }
    }
    Ok(out)
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    ensure_finite(m, "matrix")?;
    let sv = to_faer(m)
        .singular_values()
        .map_err(|e| Error::Degenerate(format!("singular value computation failed: {e:?}")))?;
    let mut sv: Vec<f64> = sv.into_iter().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Number of singular values exceeding `tol × σ_max` (`tol = 0` uses the
/// same default cutoff as [`pinv`]).
pub fn rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let sv = singular_values(m)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    let cutoff = if tol == 0.0 {
        default_cutoff(m, smax)
    } else {
        tol * smax
    };
    Ok(sv.iter().filter(|&&s| s > cutoff).count())
}

/// Largest singular value, `‖M‖₂`.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Spectral norm for matrices known to be finite. Used on internally built
/// products where the error path cannot trigger.
pub(crate) fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m)
        .ok()
        .and_then(|s| s.first().copied())
        .unwrap_or(f64::NAN)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(m: &DMatrix<f64>) -> Result<f64> {
    ensure_finite(m, "matrix")?;
    if !m.is_square() {
        return Err(invalid(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(invalid(format!(
            "matrix not symmetric (relative asymmetry {:.3e})",
            asym / scale
        )));
    }
    let eig = to_faer(&symmetrize(m))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Degenerate(format!("symmetric eigen-solve failed: {e:?}")))?;
    Ok(eig.into_iter().fold(f64::INFINITY, f64::min))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Block `M(p1:p2; q1:q2)` with 1-based inclusive indices.
pub fn block(m: &DMatrix<f64>, p1: usize, p2: usize, q1: usize, q2: usize) -> Result<DMatrix<f64>> {
    let (r, c) = m.shape();
    if p1 < 1 || p1 > p2 || p2 > r || q1 < 1 || q1 > q2 || q2 > c {
        return Err(Error::Bounds(format!(
            "block ({p1}:{p2}; {q1}:{q2}) outside a {r}x{c} matrix"
        )));
    }
    Ok(m.view((p1 - 1, q1 - 1), (p2 - p1 + 1, q2 - q1 + 1))
        .into_owned())
}

/// Solves `S X = B` for symmetric positive-definite `S`.
pub(crate) fn spd_solve(s: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(symmetrize(s))
        .ok_or_else(|| Error::Degenerate(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub(crate) fn spd_inverse(s: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(symmetrize(s))
        .ok_or_else(|| Error::Degenerate(format!("{what} is not positive definite")))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Concatenates vectors vertically.
pub fn vstack(parts: &[&DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}
