//! Small dense helpers shared by the model, the KKT oracle and the integrator.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{HpsError, Result};

/// Condition numbers above this are reported as ill-conditioned.
pub const CONDITION_WARN: f64 = 1e12;

pub fn diag(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}

pub fn dvec(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = rhs` by LU with partial pivoting. Logs a warning when the
/// system is ill-conditioned and fails only when the factorization is singular.
pub fn solve(a: &DMatrix<f64>, rhs: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu.solve(rhs).ok_or_else(|| HpsError::Singular {
        context: context.to_string(),
        condition: f64::INFINITY,
    })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(HpsError::Singular {
            context: context.to_string(),
            condition: condition_number(a),
        });
    }
    if a.nrows() <= 256 {
        let cond = condition_number(a);
        if cond > CONDITION_WARN {
            log::warn!("{context}: condition number {cond:.3e} exceeds {CONDITION_WARN:.0e}");
        }
    }
    Ok(x)
}

/// Eigenvalues of a general real matrix. The matrix is balanced first since
/// the closed loop mixes rows scaled by 1/C_t with rows of order one.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    balance(a).complex_eigenvalues().iter().copied().collect()
}

/// Parlett-Reinsch balancing: a diagonal similarity by powers of two that
/// equalizes row and column norms.
pub fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut b = a.clone();
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / radix {
                f *= radix;
                c *= radix * radix;
            }
            while c > r * radix {
                f /= radix;
                c /= radix * radix;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                }
                for j in 0..n {
                    b[(j, i)] *= f;
                }
            }
        }
    }
    b
}

/// Relative residual `‖r‖ / (1 + ‖scale‖)`.
pub fn relative(residual: f64, scale: f64) -> f64 {
    residual / (1.0 + scale)
}
