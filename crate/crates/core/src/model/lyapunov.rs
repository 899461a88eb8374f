use nalgebra::DMatrix;

use crate::error::{HpsError, Result};
use crate::linalg;

/// Solves `-AᵀP - PA + Q = 0` for `P`, where `-A` is Hurwitz and `Q` is
/// symmetric positive definite. Small N only: the Kronecker form is N²×N².
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(HpsError::Dimension(format!(
            "lyapunov: A is {}x{}, Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if let Some(ev) = linalg::eigenvalues(a).into_iter().find(|ev| ev.re <= 0.0) {
        return Err(HpsError::NotHurwitz {
            context: "lyapunov (-A must be Hurwitz)".into(),
            eigenvalue: ev,
        });
    }
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
        return Err(HpsError::NotPositiveDefinite("Q is not symmetric".into()));
    }
    if q.clone().cholesky().is_none() {
        return Err(HpsError::NotPositiveDefinite("Q has a non-positive eigenvalue".into()));
    }

    // vec(AᵀP) = (I ⊗ Aᵀ) vec P,  vec(PA) = (Aᵀ ⊗ I) vec P  (column-major vec)
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let kron = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let vec_p = linalg::solve(&kron, &rhs, "lyapunov")?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// `‖AᵀP + PA - Q‖_max / ‖Q‖_max`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a - q).amax() / q.amax()
}
