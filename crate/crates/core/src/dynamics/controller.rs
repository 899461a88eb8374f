use nalgebra::DVector;

use crate::dynamics::state::ControllerState;
use crate::error::{HpsError, Result};
use crate::model::HpsModel;

/// External inputs of the controller: measured generated currents and the
/// incentive port.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerPorts {
    pub p_a: DVector<f64>,
    pub p_b: DVector<f64>,
    pub p_c: DVector<f64>,
}

impl ControllerPorts {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_a: DVector::zeros(n),
            p_b: DVector::zeros(n),
            p_c: DVector::zeros(n),
        }
    }
}

/// Primal-dual vector field: gradient descent of the Lagrangian on the seven
/// primal blocks, ascent on the five multipliers, each scaled by `1/τ`.
///
/// The behavior multiplier enters the `z_l*` gradient as `-λ_e`, which is the
/// derivative of `λ_eᵀ(p̄ - z_l* - H s*)`.
pub fn controller_rhs(
    model: &HpsModel,
    x: &ControllerState,
    ports: &ControllerPorts,
    p_bar: &DVector<f64>,
) -> Result<ControllerState> {
    let n = model.n();
    x.check_dims(n)?;
    for (name, v) in [("p_A", &ports.p_a), ("p_B", &ports.p_b), ("p_C", &ports.p_c), ("p_bar", p_bar)] {
        if v.len() != n {
            return Err(HpsError::Dimension(format!("{name} has {} entries, expected {n}", v.len())));
        }
    }
    let w = &model.params.weights;
    let g = &model.params.gains;
    let w0 = model.omega0;
    let ga = model.active_coupling();
    let gb = model.reactive_coupling();
    let il2 = model.load_magnitude_sq();

    // constraint residuals, shared by the multiplier rows
    let ga_v = &ga * &x.v_d;
    let gb_v = &gb * &x.v_d;
    // transposed couplings in the V_d* gradient
    let ga_t_la = ga.tr_mul(&x.lambda_a);
    let gb_t_lb = gb.tr_mul(&x.lambda_b);

    let mut dx = ControllerState::zeros(n);
    for i in 0..n {
        let (rt, lt) = (model.r_t[i], model.l_t[i]);
        let (la, lb, lc, ld, le) = (x.lambda_a[i], x.lambda_b[i], x.lambda_c[i], x.lambda_d[i], x.lambda_e[i]);

        let grad_z = -w.alpha * model.pi_u[i] * il2[i] * (1.0 - x.z_l[i]) + model.i_ld[i] * la + model.i_lq[i] * lb - le;
        let grad_td = w.beta * model.pi_c[i] * x.i_td[i] - la + rt * lc - w0 * lt * ld;
        let grad_tq = -lb - w0 * lt * lc - rt * ld;
        let grad_ud = w.gamma * x.u_d[i] - lc + ports.p_a[i];
        let grad_uq = w.delta * x.u_q[i] + ld + ports.p_b[i];
        let grad_v = w.epsilon * (x.v_d[i] - model.v_ref[i]) - ga_t_la[i] + gb_t_lb[i] + lc;
        let grad_s = w.eta * x.s[i] - model.h[i] * le + ports.p_c[i];

        dx.z_l[i] = -grad_z / g.tau_z[i];
        dx.i_td[i] = -grad_td / g.tau_td[i];
        dx.i_tq[i] = -grad_tq / g.tau_tq[i];
        dx.u_d[i] = -grad_ud / g.tau_ud[i];
        dx.u_q[i] = -grad_uq / g.tau_uq[i];
        dx.v_d[i] = -grad_v / g.tau_v[i];
        dx.s[i] = -grad_s / g.tau_s[i];

        dx.lambda_a[i] = (model.i_ld[i] * x.z_l[i] - x.i_td[i] - ga_v[i]) / g.tau_a[i];
        dx.lambda_b[i] = (model.i_lq[i] * x.z_l[i] - x.i_tq[i] + gb_v[i]) / g.tau_b[i];
        dx.lambda_c[i] = (x.v_d[i] + rt * x.i_td[i] - w0 * lt * x.i_tq[i] - x.u_d[i]) / g.tau_c[i];
        dx.lambda_d[i] = (-w0 * lt * x.i_td[i] - rt * x.i_tq[i] + x.u_q[i]) / g.tau_d[i];
        dx.lambda_e[i] = (p_bar[i] - x.z_l[i] - model.h[i] * x.s[i]) / g.tau_e[i];
    }
    Ok(dx)
}
