//! Direct solution of the welfare problem through its KKT system.
//!
//! Unknowns are ordered like the controller state: seven primal blocks
//! `(z_l*, I_td*, I_tq*, u_d*, u_q*, V_d*, s*)` followed by the multipliers
//! `λ_a..λ_e`. The assembled matrix is symmetric: the multiplier rows hold the
//! constraint Jacobian and the stationarity rows hold its transpose.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{ControllerPorts, ControllerState};
use crate::error::{HpsError, Result};
use crate::linalg;
use crate::model::HpsModel;

pub const PRIMAL_BLOCKS: usize = 7;
pub const DUAL_BLOCKS: usize = 5;

/// The seven decision variables of the welfare problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Primal {
    pub z_l: Vec<f64>,
    pub i_td: Vec<f64>,
    pub i_tq: Vec<f64>,
    pub u_d: Vec<f64>,
    pub u_q: Vec<f64>,
    pub v_d: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dual {
    pub lambda_a: Vec<f64>,
    pub lambda_b: Vec<f64>,
    pub lambda_c: Vec<f64>,
    pub lambda_d: Vec<f64>,
    pub lambda_e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktSolution {
    pub primal: Primal,
    pub dual: Dual,
    pub objective_value: f64,
    /// Norm of the gradient rows of the KKT system.
    pub stationarity_residual: f64,
    /// Norm of the constraint rows of the KKT system.
    pub feasibility_residual: f64,
    /// Dual function at the multipliers, equal to the objective under strong duality.
    pub dual_value: f64,
    pub current_sharing_error: f64,
    pub condition_number: f64,
}

impl Primal {
    fn from_blocks(b: &[DVector<f64>]) -> Self {
        let v = |k: usize| b[k].as_slice().to_vec();
        Self {
            z_l: v(0),
            i_td: v(1),
            i_tq: v(2),
            u_d: v(3),
            u_q: v(4),
            v_d: v(5),
            s: v(6),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 7] {
        [&self.z_l, &self.i_td, &self.i_tq, &self.u_d, &self.u_q, &self.v_d, &self.s]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(7 * self.z_l.len(), self.blocks().into_iter().flatten().copied())
    }

    pub fn from_vector(n: usize, x: &DVector<f64>) -> Self {
        let blocks: Vec<DVector<f64>> = (0..7).map(|k| x.rows(k * n, n).into_owned()).collect();
        Self::from_blocks(&blocks)
    }
}

impl Dual {
    pub fn blocks(&self) -> [&[f64]; 5] {
        [&self.lambda_a, &self.lambda_b, &self.lambda_c, &self.lambda_d, &self.lambda_e]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(5 * self.lambda_a.len(), self.blocks().into_iter().flatten().copied())
    }
}

impl KktSolution {
    /// Stacked `[primal; dual]`, ordered like [`ControllerState`].
    pub fn to_vector(&self) -> DVector<f64> {
        let p = self.primal.to_vector();
        let d = self.dual.to_vector();
        DVector::from_iterator(p.len() + d.len(), p.iter().chain(d.iter()).copied())
    }

    pub fn to_controller_state(&self) -> ControllerState {
        let n = self.primal.z_l.len();
        ControllerState::from_slice(n, self.to_vector().as_slice()).expect("12N entries")
    }
}

/// Symmetric `12N × 12N` KKT matrix and right-hand side.
pub fn assemble_kkt(model: &HpsModel, p_bar: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = model.n();
    if p_bar.len() != n {
        return Err(HpsError::Dimension(format!("p_bar has {} entries, expected {n}", p_bar.len())));
    }
    let w = &model.params.weights;
    let w0 = model.omega0;
    let ga = model.active_coupling();
    let gb = model.reactive_coupling();
    let il2 = model.load_magnitude_sq();
    let eye = DMatrix::<f64>::identity(n, n);
    let d = |v: &DVector<f64>| DMatrix::from_diagonal(v);
    let lt_w0 = &model.l_t * w0;

    let mut a = DMatrix::zeros(12 * n, 12 * n);
    let mut r = DVector::zeros(12 * n);
    let mut set = |i: usize, j: usize, m: DMatrix<f64>| {
        let mut view = a.view_mut((i * n, j * n), (n, n));
        view += m;
    };
    let (z, td, tq, ud, uq, vd, s, la, lb, lc, ld, le) = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11);

    // stationarity
    set(z, z, d(&(model.pi_u.component_mul(&il2) * w.alpha)));
    set(z, la, d(&model.i_ld));
    set(z, lb, d(&model.i_lq));
    set(z, le, -&eye);
    set(td, td, d(&(&model.pi_c * w.beta)));
    set(td, la, -&eye);
    set(td, lc, d(&model.r_t));
    set(td, ld, -d(&lt_w0));
    set(tq, lb, -&eye);
    set(tq, lc, -d(&lt_w0));
    set(tq, ld, -d(&model.r_t));
    set(ud, ud, &eye * w.gamma);
    set(ud, lc, -&eye);
    set(uq, uq, &eye * w.delta);
    set(uq, ld, eye.clone());
    set(vd, vd, &eye * w.epsilon);
    set(vd, la, -ga.transpose());
    set(vd, lb, gb.transpose());
    set(vd, lc, eye.clone());
    set(s, s, &eye * w.eta);
    set(s, le, -d(&model.h));

    // feasibility
    set(la, z, d(&model.i_ld));
    set(la, td, -&eye);
    set(la, vd, -&ga);
    set(lb, z, d(&model.i_lq));
    set(lb, tq, -&eye);
    set(lb, vd, gb.clone());
    set(lc, vd, eye.clone());
    set(lc, td, d(&model.r_t));
    set(lc, tq, -d(&lt_w0));
    set(lc, ud, -&eye);
    set(ld, td, -d(&lt_w0));
    set(ld, tq, -d(&model.r_t));
    set(ld, uq, eye.clone());
    set(le, z, -&eye);
    set(le, s, -d(&model.h));

    r.rows_mut(z * n, n).copy_from(&(model.pi_u.component_mul(&il2) * w.alpha));
    r.rows_mut(vd * n, n).copy_from(&(&model.v_ref * w.epsilon));
    r.rows_mut(le * n, n).copy_from(&-p_bar);
    Ok((a, r))
}

/// Welfare objective: six weighted quadratic terms.
pub fn objective(model: &HpsModel, x: &Primal) -> f64 {
    let w = &model.params.weights;
    let il2 = model.load_magnitude_sq();
    let mut f = 0.0;
    for i in 0..model.n() {
        f += w.alpha * model.pi_u[i] * il2[i] * (1.0 - x.z_l[i]).powi(2);
        f += w.beta * model.pi_c[i] * x.i_td[i].powi(2);
        f += w.gamma * x.u_d[i].powi(2);
        f += w.delta * x.u_q[i].powi(2);
        f += w.epsilon * (x.v_d[i] - model.v_ref[i]).powi(2);
        f += w.eta * x.s[i].powi(2);
    }
    0.5 * f
}

/// `max_{i,j} |π_ci I_tdi - π_cj I_tdj|`.
pub fn current_sharing_error(i_td: &[f64], pi_c: &[f64]) -> f64 {
    let weighted: Vec<f64> = i_td.iter().zip(pi_c).map(|(i, p)| i * p).collect();
    let max = weighted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = weighted.iter().copied().fold(f64::INFINITY, f64::min);
    if weighted.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Minimum of the Lagrangian over the primal variables at fixed multipliers.
///
/// `I_tq*` carries no cost, so the minimum is finite only when its linear
/// coefficient vanishes; the coefficient is returned alongside so the caller
/// can judge that.
pub fn dual_function(model: &HpsModel, dual: &DVector<f64>, p_bar: &DVector<f64>) -> Result<(f64, f64)> {
    let n = model.n();
    let (a, r) = assemble_kkt(model, p_bar)?;
    // Lagrangian = ½xᵀQx - fᵀx + F₀ + λᵀ(Gx - g), with [Q Gᵀ; G 0] [x; λ] = [f; g]
    let q = a.view((0, 0), (7 * n, 7 * n)).into_owned();
    let g = a.view((7 * n, 0), (5 * n, 7 * n)).into_owned();
    let f = r.rows(0, 7 * n).into_owned();
    let rhs_g = r.rows(7 * n, 5 * n).into_owned();
    let linear = &f - g.tr_mul(dual);
    let w = &model.params.weights;
    let il2 = model.load_magnitude_sq();
    let f0: f64 = 0.5
        * (0..n)
            .map(|i| w.alpha * model.pi_u[i] * il2[i] + w.epsilon * model.v_ref[i].powi(2))
            .sum::<f64>();
    let mut value = f0 - dual.dot(&rhs_g);
    let mut unbounded = 0.0_f64;
    for k in 0..7 * n {
        let qk = q[(k, k)];
        if qk > 0.0 {
            value -= 0.5 * linear[k] * linear[k] / qk;
        } else {
            unbounded = unbounded.max(linear[k].abs());
        }
    }
    Ok((value, unbounded))
}

/// Solves the KKT system by LU and reports residuals and strong duality.
pub fn solve_kkt(model: &HpsModel, p_bar: &DVector<f64>) -> Result<KktSolution> {
    let n = model.n();
    let (a, r) = assemble_kkt(model, p_bar)?;
    let condition = linalg::condition_number(&a);
    if !condition.is_finite() {
        return Err(HpsError::Singular {
            context: "KKT system".into(),
            condition,
        });
    }
    let mut x = linalg::solve(&a, &r, "KKT system")?;
    let res = &a * &x - &r;
    if let Some(dx) = a.clone().lu().solve(&res) {
        x -= dx;
    }
    let res = &a * &x - &r;
    let stationarity_residual = res.rows(0, 7 * n).norm();
    let feasibility_residual = res.rows(7 * n, 5 * n).norm();

    let blocks: Vec<DVector<f64>> = (0..12).map(|k| x.rows(k * n, n).into_owned()).collect();
    let primal = Primal::from_blocks(&blocks[..7]);
    let v = |k: usize| blocks[k].as_slice().to_vec();
    let dual = Dual {
        lambda_a: v(7),
        lambda_b: v(8),
        lambda_c: v(9),
        lambda_d: v(10),
        lambda_e: v(11),
    };
    let objective_value = objective(model, &primal);
    let (dual_value, _) = dual_function(model, &dual.to_vector(), p_bar)?;
    let current_sharing_error = current_sharing_error(&primal.i_td, model.pi_c.as_slice());
    Ok(KktSolution {
        primal,
        dual,
        objective_value,
        stationarity_residual,
        feasibility_residual,
        dual_value,
        current_sharing_error,
        condition_number: condition,
    })
}

/// KKT residual of a controller state after adding the port injections to the
/// `u_d*`, `u_q*` and `s*` stationarity rows, relative to `‖r‖`.
///
/// A closed-loop equilibrium zeroes this quantity rather than the plain KKT
/// residual, because the interconnection ports act as constant forcing on those
/// three gradients.
pub fn port_shifted_residual(model: &HpsModel, x: &ControllerState, ports: &ControllerPorts) -> Result<f64> {
    let n = model.n();
    let (a, r) = assemble_kkt(model, &model.p_bar)?;
    let c = DVector::from_iterator(12 * n, x.blocks().into_iter().flat_map(|b| b.iter().copied()));
    let mut res = &a * &c - &r;
    for (block, port) in [(3, &ports.p_a), (4, &ports.p_b), (6, &ports.p_c)] {
        if port.len() != n {
            return Err(HpsError::Dimension(format!("port has {} entries, expected {n}", port.len())));
        }
        let mut rows = res.rows_mut(block * n, n);
        rows += port;
    }
    Ok(res.amax() / r.amax().max(f64::MIN_POSITIVE))
}

/// Orthonormal basis of the feasible directions `{d : G d = 0}`.
pub fn feasible_directions(model: &HpsModel) -> Result<DMatrix<f64>> {
    let n = model.n();
    let (a, _) = assemble_kkt(model, &model.p_bar)?;
    let g = a.view((7 * n, 0), (5 * n, 7 * n)).into_owned();
    // right singular vectors beyond the rank of G span its null space
    let gtg = g.tr_mul(&g);
    let eig = gtg.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<DVector<f64>> = (0..7 * n)
        .filter(|&k| eig.eigenvalues[k].abs() <= 1e-10 * scale)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        return Ok(DMatrix::zeros(7 * n, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Smallest objective increase `F(x̄ + d) - F(x̄)` over the given feasible
/// perturbations. Non-negative at a minimizer.
pub fn probe_optimality(model: &HpsModel, sol: &KktSolution, coefficients: &[DVector<f64>]) -> Result<f64> {
    let n = model.n();
    let basis = feasible_directions(model)?;
    let base = sol.primal.to_vector();
    let f0 = objective(model, &sol.primal);
    let mut worst = f64::INFINITY;
    for c in coefficients {
        if c.len() != basis.ncols() {
            return Err(HpsError::Dimension(format!(
                "probe needs {} coefficients, got {}",
                basis.ncols(),
                c.len()
            )));
        }
        let x = &base + &basis * c;
        worst = worst.min(objective(model, &Primal::from_vector(n, &x)) - f0);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::paper_table2;

    fn model() -> HpsModel {
        HpsModel::new(paper_table2()).unwrap()
    }

    #[test]
    fn matrix_is_symmetric_and_sized() {
        let m = model();
        let (a, r) = assemble_kkt(&m, &m.p_bar).unwrap();
        assert_eq!(a.shape(), (48, 48));
        assert_eq!(r.len(), 48);
        assert_eq!((&a - a.transpose()).amax(), 0.0);
    }

    #[test]
    fn input_voltage_row_has_two_blocks() {
        let m = model();
        let (a, _) = assemble_kkt(&m, &m.p_bar).unwrap();
        let row = a.rows(12, 4);
        let nonzero_blocks: Vec<usize> = (0..12).filter(|&k| row.columns(4 * k, 4).amax() != 0.0).collect();
        assert_eq!(nonzero_blocks, vec![3, 9]);
        assert_eq!(a[(12, 12)], m.params.weights.gamma);
        assert_eq!(a[(12, 36)], -1.0);
    }

    #[test]
    fn solution_has_small_residuals_and_no_duality_gap() {
        let m = model();
        let sol = solve_kkt(&m, &m.p_bar).unwrap();
        let scale = 1.0 + sol.to_vector().norm();
        assert!(sol.stationarity_residual < 1e-9 * scale);
        assert!(sol.feasibility_residual < 1e-9 * scale);
        assert!((sol.objective_value - sol.dual_value).abs() <= 1e-8 * sol.objective_value.abs().max(1.0));
    }

    #[test]
    fn objective_vanishes_at_ideal_point() {
        let m = model();
        let x = Primal {
            z_l: vec![1.0; 4],
            i_td: vec![0.0; 4],
            i_tq: vec![3.0; 4],
            u_d: vec![0.0; 4],
            u_q: vec![0.0; 4],
            v_d: m.v_ref.as_slice().to_vec(),
            s: vec![0.0; 4],
        };
        assert_eq!(objective(&m, &x), 0.0);
    }

    #[test]
    fn alpha_scales_only_first_term() {
        let m = model();
        let mut params = m.params.clone();
        params.weights.alpha *= 2.0;
        let m2 = HpsModel::new(params).unwrap();
        let sol = solve_kkt(&m, &m.p_bar).unwrap();
        let mut only_z = sol.primal.clone();
        for b in [&mut only_z.i_td, &mut only_z.u_d, &mut only_z.u_q, &mut only_z.s] {
            b.fill(0.0);
        }
        only_z.v_d = m.v_ref.as_slice().to_vec();
        let first = objective(&m, &only_z);
        assert!((objective(&m2, &sol.primal) - objective(&m, &sol.primal) - first).abs() < 1e-9 * first);
    }

    #[test]
    fn sharing_error_examples() {
        assert_eq!(current_sharing_error(&[3.0, 3.0], &[1.0, 1.0]), 0.0);
        assert_eq!(current_sharing_error(&[1.0, 2.0, 4.0], &[2.0, 1.0, 1.0]), 2.0);
    }

    #[test]
    fn feasible_directions_do_not_improve() {
        let m = model();
        let sol = solve_kkt(&m, &m.p_bar).unwrap();
        let basis = feasible_directions(&m).unwrap();
        assert_eq!(basis.ncols(), 2 * 4);
        let coeffs: Vec<DVector<f64>> = (0..50)
            .map(|k| DVector::from_fn(basis.ncols(), |i, _| ((k * 7 + i * 3) as f64).sin()))
            .collect();
        assert!(probe_optimality(&m, &sol, &coeffs).unwrap() >= -1e-9);
    }

    #[test]
    fn closed_loop_equilibrium_solves_port_shifted_system() {
        use crate::dynamics::{assemble_closed_loop, equilibrium, interconnect, split_state};
        let m = model();
        let p1 = m.default_p1().unwrap();
        let sys = assemble_closed_loop(&m, &p1).unwrap();
        let x = equilibrium(&sys).unwrap();
        let (xs, xc) = split_state(&sys.layout, &x).unwrap();
        let ports = interconnect(&m, &xs, &xc, &p1).unwrap().controller_ports();
        let shifted = port_shifted_residual(&m, &xc, &ports).unwrap();
        let plain = port_shifted_residual(&m, &xc, &ControllerPorts::zeros(4)).unwrap();
        assert!(shifted < 1e-9, "{shifted:e}");
        // without the injections the same point is clearly not a KKT point
        assert!(plain > 1e3 * shifted.max(1e-15), "{plain:e} vs {shifted:e}");
    }
}
