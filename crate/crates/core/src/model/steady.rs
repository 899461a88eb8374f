use nalgebra::{DMatrix, DVector};

use crate::error::{HpsError, Result};
use crate::linalg;
use crate::model::params::{HumanParams, SocialCase};
use crate::model::HpsModel;

/// Steady personal norms `p̄ = (C + D [+ L])⁻¹ (C p_ego + D p_bio)`.
pub fn steady_norms(human: &HumanParams, laplacian: &DMatrix<f64>, case: SocialCase) -> Result<DVector<f64>> {
    let n = human.c.len();
    if human.d.len() != n || human.p_ego.len() != n || human.p_bio.len() != n {
        return Err(HpsError::Dimension("human parameter vectors differ in length".into()));
    }
    let c = DVector::from_column_slice(&human.c);
    let d = DVector::from_column_slice(&human.d);
    let rhs = c.component_mul(&DVector::from_column_slice(&human.p_ego))
        + d.component_mul(&DVector::from_column_slice(&human.p_bio));

    let p = match case {
        SocialCase::CaseI => {
            let mut p = rhs;
            for i in 0..n {
                let s = c[i] + d[i];
                if s <= 0.0 {
                    return Err(HpsError::Singular {
                        context: format!("steady norms: c[{i}] + d[{i}] = 0"),
                        condition: f64::INFINITY,
                    });
                }
                p[i] /= s;
            }
            for i in 0..n {
                let lo = human.p_ego[i].min(human.p_bio[i]);
                let hi = human.p_ego[i].max(human.p_bio[i]);
                debug_assert!(p[i] >= lo - 1e-12 && p[i] <= hi + 1e-12);
            }
            p
        }
        SocialCase::CaseII => {
            if laplacian.nrows() != n || laplacian.ncols() != n {
                return Err(HpsError::Dimension(format!(
                    "laplacian is {}x{}, expected {n}x{n}",
                    laplacian.nrows(),
                    laplacian.ncols()
                )));
            }
            let m = DMatrix::from_diagonal(&(&c + &d)) + laplacian;
            let p = linalg::solve(&m, &rhs, "steady norms (C + D + L)")?;
            let lo = human.p_ego.iter().chain(&human.p_bio).copied().fold(f64::INFINITY, f64::min);
            let hi = human.p_ego.iter().chain(&human.p_bio).copied().fold(f64::NEG_INFINITY, f64::max);
            if p.iter().any(|&v| v < lo - 1e-12 || v > hi + 1e-12) {
                log::warn!("steady norms {p:?} leave the value range [{lo}, {hi}]");
            }
            p
        }
    };
    Ok(p)
}

/// Forced steady state of the grid for constant behavior and converter inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSteadyState {
    pub v_d: DVector<f64>,
    pub v_q: DVector<f64>,
    pub i_td: DVector<f64>,
    pub i_tq: DVector<f64>,
    pub i_d: DVector<f64>,
    pub i_q: DVector<f64>,
}

fn check_len(what: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(HpsError::Dimension(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

/// Unique steady state of the grid dynamics for constant `(z_l, u_d, u_q)`.
///
/// Lines are eliminated through the dq admittances `I_d = J V_d - K V_q`,
/// `I_q = K V_d + J V_q`, leaving a 4N system in `(V_d, V_q, I_td, I_tq)`.
/// `V_q` vanishes exactly when `u_q` is the one returned by
/// [`regulated_steady_grid`] for the same `(z_l, u_d)`.
pub fn steady_grid(
    model: &HpsModel,
    z_l: &DVector<f64>,
    u_d: &DVector<f64>,
    u_q: &DVector<f64>,
) -> Result<GridSteadyState> {
    let n = model.n();
    check_len("z_l", z_l, n)?;
    check_len("u_d", u_d, n)?;
    check_len("u_q", u_q, n)?;
    let w0 = model.omega0;
    let bj = &model.incidence * &model.lines.j;
    let bk = &model.incidence * &model.lines.k;

    let mut a = DMatrix::zeros(4 * n, 4 * n);
    let mut rhs = DVector::zeros(4 * n);
    let (vd, vq, td, tq) = (0, n, 2 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            a[(i, vd + j)] = bj[(i, j)];
            a[(i, vq + j)] = -bk[(i, j)];
            a[(n + i, vd + j)] = bk[(i, j)];
            a[(n + i, vq + j)] = bj[(i, j)];
        }
        let g = 1.0 / model.r_load[i];
        let wc = w0 * model.c_t[i];
        a[(i, vd + i)] -= g;
        a[(i, vq + i)] += wc;
        a[(i, td + i)] = 1.0;
        rhs[i] = model.i_ld[i] * z_l[i];

        a[(n + i, vd + i)] -= wc;
        a[(n + i, vq + i)] -= g;
        a[(n + i, tq + i)] = 1.0;
        rhs[n + i] = model.i_lq[i] * z_l[i];

        a[(2 * n + i, vd + i)] = -1.0;
        a[(2 * n + i, td + i)] = -model.r_t[i];
        a[(2 * n + i, tq + i)] = w0 * model.l_t[i];
        rhs[2 * n + i] = -u_d[i];

        a[(3 * n + i, vq + i)] = -1.0;
        a[(3 * n + i, td + i)] = -w0 * model.l_t[i];
        a[(3 * n + i, tq + i)] = -model.r_t[i];
        rhs[3 * n + i] = -u_q[i];
    }
    let x = linalg::solve(&a, &rhs, "grid steady state")?;
    let v_d = x.rows(vd, n).into_owned();
    let v_q = x.rows(vq, n).into_owned();
    let i_d = &model.lines.j * &v_d - &model.lines.k * &v_q;
    let i_q = &model.lines.k * &v_d + &model.lines.j * &v_q;
    Ok(GridSteadyState {
        i_td: x.rows(td, n).into_owned(),
        i_tq: x.rows(tq, n).into_owned(),
        v_d,
        v_q,
        i_d,
        i_q,
    })
}

/// Steady state with `V_q = 0` imposed: solves the reduced maps for
/// `(V_d, I_td, I_tq)` given `(z_l, u_d)` and returns the `u_q` that
/// keeps the quadrature voltage at zero.
pub fn regulated_steady_grid(
    model: &HpsModel,
    z_l: &DVector<f64>,
    u_d: &DVector<f64>,
) -> Result<(GridSteadyState, DVector<f64>)> {
    let n = model.n();
    check_len("z_l", z_l, n)?;
    check_len("u_d", u_d, n)?;
    let w0 = model.omega0;
    let g_a = model.active_coupling();
    let g_b = -model.reactive_coupling();
    let load_d = model.i_ld.component_mul(z_l);
    let load_q = model.i_lq.component_mul(z_l);

    // V_d = -R_t I_td + ω₀ L_t I_tq + u_d with I_td = I_Ld z - G_a V_d, I_tq = I_Lq z - G_b V_d
    let r_t = DMatrix::from_diagonal(&model.r_t);
    let wl_t = DMatrix::from_diagonal(&model.l_t) * w0;
    let lhs = DMatrix::identity(n, n) - &r_t * &g_a + &wl_t * &g_b;
    let rhs = u_d - &r_t * &load_d + &wl_t * &load_q;
    let v_d = linalg::solve(&lhs, &rhs, "regulated grid steady state")?;
    let i_td = &load_d - &g_a * &v_d;
    let i_tq = &load_q - &g_b * &v_d;
    let u_q = &wl_t * &i_td + &r_t * &i_tq;
    let i_d = &model.lines.j * &v_d;
    let i_q = &model.lines.k * &v_d;
    Ok((
        GridSteadyState {
            v_q: DVector::zeros(n),
            v_d,
            i_td,
            i_tq,
            i_d,
            i_q,
        },
        u_q,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::paper_table2;

    fn human(c: &[f64], d: &[f64]) -> HumanParams {
        let n = c.len();
        HumanParams {
            a: vec![0.5; n],
            c: c.to_vec(),
            d: d.to_vec(),
            p_ego: vec![0.9; n],
            p_bio: vec![0.6; n],
            h: None,
        }
    }

    #[test]
    fn case_i_norms_match_reported_values() {
        let h = human(&[0.08, 0.08, 0.12, 0.12], &[0.12, 0.12, 0.08, 0.08]);
        let p = steady_norms(&h, &DMatrix::zeros(4, 4), SocialCase::CaseI).unwrap();
        for (got, want) in p.iter().zip([0.72, 0.72, 0.78, 0.78]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn equal_weights_average_values() {
        let mut h = human(&[0.3, 0.1], &[0.3, 0.1]);
        h.p_ego = vec![0.2, 1.0];
        h.p_bio = vec![0.8, 0.0];
        let p = steady_norms(&h, &DMatrix::zeros(2, 2), SocialCase::CaseI).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn case_ii_norms_closer_together() {
        let model = HpsModel::new(paper_table2()).unwrap();
        let p2 = steady_norms(&model.params.human, &model.laplacian, SocialCase::CaseII).unwrap();
        // independent check of the linear solve by substitution
        let m = model.norm_matrix_for(SocialCase::CaseII);
        let rhs = model.c.component_mul(&model.p_ego) + model.d.component_mul(&model.p_bio);
        assert!((m * &p2 - rhs).amax() < 1e-14);
        let spread = p2.max() - p2.min();
        assert!(spread < 0.06, "spread {spread}");
    }

    #[test]
    fn unforced_grid_rests_at_zero() {
        let mut params = paper_table2();
        for node in &mut params.nodes {
            node.i_ld = 1.0;
            node.i_lq = 0.0;
            node.r_load = crate::model::params::OPEN_CIRCUIT_LOAD;
        }
        let mut model = HpsModel::new(params).unwrap();
        model.i_ld.fill(0.0);
        let zero = DVector::zeros(4);
        let ss = steady_grid(&model, &zero, &zero, &zero).unwrap();
        for v in [&ss.v_d, &ss.v_q, &ss.i_td, &ss.i_tq, &ss.i_d, &ss.i_q] {
            assert!(v.amax() == 0.0);
        }
    }

    #[test]
    fn regulated_and_full_routes_agree() {
        let model = HpsModel::new(paper_table2()).unwrap();
        let z = DVector::from_column_slice(&[0.53, 0.57, 0.53, 0.58]);
        let u_d = DVector::from_element(4, 175.0);
        let (reg, u_q) = regulated_steady_grid(&model, &z, &u_d).unwrap();
        let full = steady_grid(&model, &z, &u_d, &u_q).unwrap();
        assert!(full.v_q.amax() < 1e-9);
        for (a, b) in [(&reg.v_d, &full.v_d), (&reg.i_td, &full.i_td), (&reg.i_tq, &full.i_tq), (&reg.i_d, &full.i_d), (&reg.i_q, &full.i_q)] {
            assert!((a - b).amax() < 1e-9 * (1.0 + a.amax()));
        }
    }
}
