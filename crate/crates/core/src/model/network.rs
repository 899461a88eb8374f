use nalgebra::{DMatrix, DVector};

use crate::error::{HpsError, Result};
use crate::model::params::{LineParams, Topology};

/// Graph Laplacian of the social influence weights: `L_ii = Σ_j b_ij`, `L_ij = -b_ij`.
pub fn social_laplacian(topology: &Topology) -> Result<DMatrix<f64>> {
    let w = &topology.social_weights;
    let n = w.nrows();
    if w.ncols() != n {
        return Err(HpsError::Dimension(format!(
            "social weights must be square, got {}x{}",
            n,
            w.ncols()
        )));
    }
    let mut lap = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let b = w[(i, j)];
            if b < 0.0 {
                return Err(HpsError::NegativeWeight { i, j, value: b });
            }
            lap[(i, j)] = -b;
            lap[(i, i)] += b;
        }
    }
    Ok(lap)
}

/// Steady-state line admittances in the dq frame.
///
/// With `V_q = 0` the line currents are `I_d = J V_d` and `I_q = K V_d`. For a
/// general `V_q` the rotation adds the cross terms `I_d = J V_d - K V_q`,
/// `I_q = K V_d + J V_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineReduction {
    /// E×N, `(-R - ω₀² L R⁻¹ L)⁻¹ Bᵀ`.
    pub j: DMatrix<f64>,
    /// E×N, `-ω₀ R⁻¹ L J`.
    pub k: DMatrix<f64>,
    /// Diagonal of `-R - ω₀² L R⁻¹ L`, strictly negative.
    pub inner_diagonal: DVector<f64>,
}

pub fn line_reduction(lines: &[LineParams], incidence: &DMatrix<f64>, omega0: f64) -> Result<LineReduction> {
    let e = lines.len();
    if incidence.ncols() != e {
        return Err(HpsError::Dimension(format!(
            "incidence has {} columns for {e} lines",
            incidence.ncols()
        )));
    }
    let inner = DVector::from_iterator(
        e,
        lines
            .iter()
            .map(|l| -l.resistance - omega0 * omega0 * l.inductance * l.inductance / l.resistance),
    );
    let bt = incidence.transpose();
    let mut j = bt.clone();
    for (k, mut row) in j.row_iter_mut().enumerate() {
        row /= inner[k];
    }
    let mut kmat = j.clone();
    for (k, mut row) in kmat.row_iter_mut().enumerate() {
        row *= -omega0 * lines[k].inductance / lines[k].resistance;
    }
    Ok(LineReduction {
        j,
        k: kmat,
        inner_diagonal: inner,
    })
}
