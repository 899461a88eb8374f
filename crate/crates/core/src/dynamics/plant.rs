use nalgebra::DVector;

use crate::dynamics::state::PlantState;
use crate::error::{HpsError, Result};
use crate::model::{HpsModel, SocialCase};

/// Time derivative of the open-loop human-physical system.
///
/// Written node by node and line by line so that it stays independent of the
/// matrix assembly in [`crate::dynamics::assemble_closed_loop`].
pub fn plant_rhs(
    model: &HpsModel,
    x: &PlantState,
    u_d: &DVector<f64>,
    u_q: &DVector<f64>,
    s: &DVector<f64>,
) -> Result<PlantState> {
    let n = model.n();
    let e = model.e();
    x.check_dims(n, e)?;
    for (name, v) in [("u_d", u_d), ("u_q", u_q), ("s", s)] {
        if v.len() != n {
            return Err(HpsError::Dimension(format!("{name} has {} entries, expected {n}", v.len())));
        }
    }
    let w0 = model.omega0;
    let inc = &model.incidence;
    let mut dx = PlantState::zeros(n, e);

    for i in 0..n {
        let (mut line_d, mut line_q) = (0.0, 0.0);
        for k in 0..e {
            line_d += inc[(i, k)] * x.i_d[k];
            line_q += inc[(i, k)] * x.i_q[k];
        }
        let ct = model.c_t[i];
        let g = 1.0 / model.r_load[i];
        dx.v_d[i] = (-g * x.v_d[i] + w0 * ct * x.v_q[i] + x.i_td[i] + line_d - model.i_ld[i] * x.z_l[i]) / ct;
        dx.v_q[i] = (-w0 * ct * x.v_d[i] - g * x.v_q[i] + x.i_tq[i] + line_q - model.i_lq[i] * x.z_l[i]) / ct;

        let lt = model.l_t[i];
        let rt = model.r_t[i];
        dx.i_td[i] = (-x.v_d[i] - rt * x.i_td[i] + w0 * lt * x.i_tq[i] + u_d[i]) / lt;
        dx.i_tq[i] = (-x.v_q[i] - w0 * lt * x.i_td[i] - rt * x.i_tq[i] + u_q[i]) / lt;

        dx.z_l[i] = model.a[i] * (x.p[i] - x.z_l[i] - model.h[i] * s[i]);
        let mut dp = model.c[i] * (model.p_ego[i] - x.p[i]) + model.d[i] * (model.p_bio[i] - x.p[i]);
        if model.social_case() == SocialCase::CaseII {
            let w = &model.params.topology.social_weights;
            for j in 0..n {
                dp += w[(i, j)] * (x.p[j] - x.p[i]);
            }
        }
        dx.p[i] = dp;
    }

    for k in 0..e {
        let (mut vd, mut vq) = (0.0, 0.0);
        for i in 0..n {
            vd += inc[(i, k)] * x.v_d[i];
            vq += inc[(i, k)] * x.v_q[i];
        }
        let l = model.line_l[k];
        let r = model.line_r[k];
        dx.i_d[k] = (-vd - r * x.i_d[k] + w0 * l * x.i_q[k]) / l;
        dx.i_q[k] = (-vq - w0 * l * x.i_d[k] - r * x.i_q[k]) / l;
    }
    Ok(dx)
}
