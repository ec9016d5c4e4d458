//! Direct numerical solution of the online window problem
//!
//! ```text
//! min  α‖x − x̄‖² + Σ‖ω_h‖²/σ_ω² + Σ‖ν_h‖²/σ_ν²
//! s.t. y_window = G x + H u_window + F ω + ν
//! ```
//!
//! with `ν` eliminated through the constraint. The decision vector `(x, ω)`
//! is found from the normal equations of one stacked weighted least-squares
//! system, without going through `Γ` or `Λ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

#[allow(clippy::too_many_arguments)]
pub fn oracle_online_solve(
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    f: &DMatrix<f64>,
    xbar: &DVector<f64>,
    u_window: &DVector<f64>,
    y_window: &DVector<f64>,
    alpha: f64,
    sigma_w: f64,
    sigma_v: f64,
) -> Result<DVector<f64>> {
    let (rows, n) = g.shape();
    let nw = f.ncols();
    if h.nrows() != rows
        || f.nrows() != rows
        || xbar.len() != n
        || u_window.len() != h.ncols()
        || y_window.len() != rows
    {
        return Err(invalid("oracle dimensions inconsistent"));
    }
    if !(alpha > 0.0 && sigma_w > 0.0 && sigma_v > 0.0) {
        return Err(invalid("alpha and sigmas must be positive"));
    }
    let dim = n + nw;
    let total = n + nw + rows;
    let mut m = DMatrix::zeros(total, dim);
    let mut b = DVector::zeros(total);

    let sa = alpha.sqrt();
    for i in 0..n {
        m[(i, i)] = sa;
        b[i] = sa * xbar[i];
    }
    for j in 0..nw {
        m[(n + j, n + j)] = 1.0 / sigma_w;
    }
    let r = y_window - h * u_window;
    m.view_mut((n + nw, 0), (rows, n)).copy_from(&(g / sigma_v));
    m.view_mut((n + nw, n), (rows, nw))
        .copy_from(&(f / sigma_v));
    b.rows_mut(n + nw, rows).copy_from(&(r / sigma_v));

    let normal = m.transpose() * &m;
    let rhs = m.transpose() * b;
    let z = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("oracle normal matrix is singular".into()))?;
    Ok(z.rows(0, n).into_owned())
}
