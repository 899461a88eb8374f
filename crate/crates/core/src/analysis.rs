//! Storage functions used as runtime monitors, the dissipation check and the
//! welfare metrics at an equilibrium.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{split_state, ClosedLoopSystem, ControllerState, PlantState};
use crate::error::{HpsError, Result, ValidationReport};
use crate::integrator::Trajectory;
use crate::kkt::current_sharing_error;
use crate::model::{lyapunov_solve, ControllerGains, HpsModel};

/// Monitor weights: `Q₁`, `Q₂` (diagonals) and the two Young-inequality margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(rename = "q_1")]
    pub q1: Vec<f64>,
    #[serde(rename = "q_2")]
    pub q2: Vec<f64>,
    pub zeta_2: f64,
    pub zeta_3: f64,
}

impl MonitorConfig {
    pub fn check(&self, n: usize, report: &mut ValidationReport) {
        for (name, q) in [("q_1", &self.q1), ("q_2", &self.q2)] {
            if q.len() != n {
                report.push(format!("monitor.{name}"), format!("expected {n} entries, got {}", q.len()));
            }
            for (i, &v) in q.iter().enumerate() {
                if !(v > 0.0 && v.is_finite()) {
                    report.push(format!("monitor.{name}[{i}]"), format!("must be positive, got {v}"));
                }
            }
        }
        for (name, v) in [("zeta_2", self.zeta_2), ("zeta_3", self.zeta_3)] {
            if !(v > 0.0 && v.is_finite()) {
                report.push(format!("monitor.{name}"), format!("must be positive, got {v}"));
            }
        }
    }

    pub fn uniform(n: usize, q1: f64, q2: f64, zeta_2: f64, zeta_3: f64) -> Self {
        Self {
            q1: vec![q1; n],
            q2: vec![q2; n],
            zeta_2,
            zeta_3,
        }
    }

    /// Weights that satisfy all four sufficiency lines with a 25% margin.
    ///
    /// With diagonal `A` the Lyapunov solution is `P₁ = Q₁(2A)⁻¹`, so `P₁A = Q₁/2`
    /// and the third line reduces to `Q₁(1 - 1/(2ζ₁)) ≥ ζ₂I_Ld/2 - ζ₃I_Lq/2`.
    /// Taking `ζ₁ = 1` gives `Q₁ ≥ ζ₂I_Ld - ζ₃I_Lq` and `Q₂ ≥ Q₁/2`.
    pub fn sufficient(model: &HpsModel) -> Self {
        let n = model.n();
        let zeta_2 = 1.1 * (0..n).map(|i| model.i_ld[i] * model.r_load[i] / 2.0).fold(1e-9, f64::max);
        let zeta_3 = 1.1 * (0..n).map(|i| -model.i_lq[i] * model.r_load[i] / 2.0).fold(1e-9, f64::max);
        let need = (0..n)
            .map(|i| zeta_2 * model.i_ld[i] - zeta_3 * model.i_lq[i])
            .fold(1.0, f64::max);
        let q1 = 1.25 * need;
        Self::uniform(n, q1, 1.25 * q1, zeta_2, zeta_3)
    }

    pub fn q1_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.q1))
    }

    pub fn q2_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.q2))
    }

    /// `P₁` solving `-AᵀP₁ - P₁A + Q₁ = 0`.
    pub fn p1(&self, model: &HpsModel) -> Result<DMatrix<f64>> {
        lyapunov_solve(&DMatrix::from_diagonal(&model.a), &self.q1_matrix())
    }

    /// `P₂` for the norm-error dynamics of the scenario's social case.
    pub fn p2(&self, model: &HpsModel) -> Result<DMatrix<f64>> {
        lyapunov_solve(&model.norm_matrix(), &self.q2_matrix())
    }
}

/// `½ Σ (C_t V̇² + L_t İ_t² + L İ_line²)` over both axes.
pub fn storage_physical(model: &HpsModel, dx: &PlantState) -> f64 {
    let quad = |w: &DVector<f64>, v: &DVector<f64>| w.iter().zip(v.iter()).map(|(w, v)| w * v * v).sum::<f64>();
    0.5 * (quad(&model.c_t, &dx.v_d)
        + quad(&model.c_t, &dx.v_q)
        + quad(&model.l_t, &dx.i_td)
        + quad(&model.l_t, &dx.i_tq)
        + quad(&model.line_l, &dx.i_d)
        + quad(&model.line_l, &dx.i_q))
}

/// `żᵀP₁ż + ṗ̃ᵀP₂ṗ̃`.
pub fn storage_human(p1: &DMatrix<f64>, p2: &DMatrix<f64>, dz: &DVector<f64>, dp_tilde: &DVector<f64>) -> f64 {
    dz.dot(&(p1 * dz)) + dp_tilde.dot(&(p2 * dp_tilde))
}

/// `½ Σ τ ẋ_c²` over all twelve controller blocks.
pub fn storage_controller(gains: &ControllerGains, dx: &ControllerState) -> f64 {
    0.5 * gains
        .blocks()
        .iter()
        .zip(dx.blocks())
        .map(|(tau, v)| tau.iter().zip(v.iter()).map(|(t, v)| t * v * v).sum::<f64>())
        .sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyLine {
    pub name: &'static str,
    /// Smallest eigenvalue of the line's matrix; non-negative when it holds.
    pub min_eigenvalue: f64,
    pub holds: bool,
}

/// The four matrix inequalities that make the plant storage nonincreasing.
#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyReport {
    pub zeta_1: Option<f64>,
    pub lines: Vec<SufficiencyLine>,
}

impl SufficiencyReport {
    pub fn holds(&self) -> bool {
        self.lines.iter().all(|l| l.holds)
    }

    pub fn first_violation(&self) -> Option<&'static str> {
        self.lines.iter().find(|l| !l.holds).map(|l| l.name)
    }
}

pub const LINE_NAMES: [&str; 4] = ["V_d", "V_q", "z_l", "p"];

fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

pub fn sufficiency(model: &HpsModel, monitor: &MonitorConfig) -> Result<SufficiencyReport> {
    let n = model.n();
    let p1a = monitor.p1(model)? * DMatrix::from_diagonal(&model.a);
    let p1a = (&p1a + p1a.transpose()) * 0.5;
    let (z2, z3) = (monitor.zeta_2, monitor.zeta_3);

    let line1 = (0..n)
        .map(|i| 1.0 / model.r_load[i] - model.i_ld[i] / (2.0 * z2))
        .fold(f64::INFINITY, f64::min);
    let line2 = (0..n)
        .map(|i| 1.0 / model.r_load[i] + model.i_lq[i] / (2.0 * z3))
        .fold(f64::INFINITY, f64::min);
    let base3 = monitor.q1_matrix() - DMatrix::from_diagonal(&(&model.i_ld * (z2 / 2.0) - &model.i_lq * (z3 / 2.0)));
    let line3 = |zeta_1: f64| min_sym_eig(&(&base3 - &p1a / zeta_1));
    let line4 = |zeta_1: f64| min_sym_eig(&(monitor.q2_matrix() - &p1a * zeta_1));

    // line 3 improves and line 4 worsens as ζ₁ grows: take the smallest ζ₁
    // that satisfies line 3, found by bisection on log ζ₁
    let (mut lo, mut hi) = (-12.0_f64, 12.0_f64);
    let zeta_1 = if line3(10f64.powf(hi)) < 0.0 {
        None
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if line3(10f64.powf(mid)) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(10f64.powf(hi))
    };
    let (v3, v4) = match zeta_1 {
        Some(z1) => (line3(z1), line4(z1)),
        None => (line3(10f64.powf(12.0)), f64::NEG_INFINITY),
    };
    let tol = 1e-9;
    let lines = [line1, line2, v3, v4]
        .into_iter()
        .zip(LINE_NAMES)
        .map(|(v, name)| SufficiencyLine {
            name,
            min_eigenvalue: v,
            holds: v >= -tol * v.abs().max(1.0),
        })
        .collect();
    Ok(SufficiencyReport { zeta_1, lines })
}

/// Block-diagonal weight `W` with `S = ½ ẋᵀ W ẋ`.
pub fn storage_weight(model: &HpsModel, sys: &ClosedLoopSystem, monitor: &MonitorConfig) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    let mut w = DMatrix::zeros(n, n);
    let l = &sys.layout;
    let mut put_diag = |name: &str, d: &DVector<f64>| {
        let r = l.range(name);
        for (k, i) in r.enumerate() {
            w[(i, i)] = d[k];
        }
    };
    put_diag("V_d", &model.c_t);
    put_diag("V_q", &model.c_t);
    put_diag("I_td", &model.l_t);
    put_diag("I_tq", &model.l_t);
    put_diag("I_d", &model.line_l);
    put_diag("I_q", &model.line_l);
    for (name, tau) in crate::dynamics::state::CONTROLLER_BLOCKS.iter().zip(model.params.gains.blocks()) {
        put_diag(name, &DVector::from_column_slice(tau));
    }
    let p1 = monitor.p1(model)? * 2.0;
    let p2 = monitor.p2(model)? * 2.0;
    for (name, p) in [("z_l", &p1), ("p", &p2)] {
        let r = l.range(name);
        w.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(p);
    }
    Ok(w)
}

/// Largest eigenvalue of `D (W M + Mᵀ W) D`, `D = diag(W)^{-½}`: nonpositive
/// exactly when the storage decreases along every trajectory.
pub fn dissipation_margin(model: &HpsModel, sys: &ClosedLoopSystem, monitor: &MonitorConfig) -> Result<f64> {
    let w = storage_weight(model, sys, monitor)?;
    let g = &w * &sys.m + sys.m.transpose() * &w;
    let d = DVector::from_fn(sys.dim(), |i, _| 1.0 / w[(i, i)].sqrt());
    let scaled = DMatrix::from_fn(sys.dim(), sys.dim(), |i, j| g[(i, j)] * d[i] * d[j]);
    Ok(scaled.symmetric_eigenvalues().max())
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    pub samples: usize,
    pub max_storage: f64,
    pub min_storage: f64,
    pub max_increment: f64,
    pub tolerance: f64,
    pub nonnegative: bool,
    pub passed: bool,
    pub sufficiency: SufficiencyReport,
    /// Sufficiency line reported when either the trajectory or Step 1 fails.
    pub violated_line: Option<&'static str>,
    #[serde(skip)]
    pub storage: Vec<f64>,
}

/// Evaluates `S = S_p + S_h + S_c` at every sample and checks it never grows.
///
/// The trajectory must come from a closed loop assembled with the monitor's `P₁`,
/// since the incentive port and `S_h` share it.
pub fn dissipation_check(
    trajectory: &Trajectory,
    model: &HpsModel,
    sys: &ClosedLoopSystem,
    monitor: &MonitorConfig,
) -> Result<DissipationReport> {
    let p1 = monitor.p1(model)?;
    if (&p1 - &sys.p1).amax() > 1e-9 * p1.amax() {
        return Err(HpsError::Config(
            "closed loop was assembled with a P1 that differs from the monitor's".into(),
        ));
    }
    let p2 = monitor.p2(model)?;
    let sufficiency = sufficiency(model, monitor)?;
    let mut storage = Vec::with_capacity(trajectory.len());
    for x in &trajectory.states {
        let dx = sys.rhs(x);
        let (dxs, dxc) = split_state(&sys.layout, &dx)?;
        let dp_tilde = -&dxs.p;
        let s = storage_physical(model, &dxs)
            + storage_human(&p1, &p2, &dxs.z_l, &dp_tilde)
            + storage_controller(&model.params.gains, &dxc);
        storage.push(s);
    }
    let max_storage = storage.iter().copied().fold(0.0, f64::max);
    let min_storage = storage.iter().copied().fold(f64::INFINITY, f64::min);
    let max_increment = storage.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let tolerance = 1e-9 * (1.0 + max_storage);
    let nonnegative = storage.iter().all(|s| *s >= 0.0);
    let passed = nonnegative && max_increment <= tolerance;
    let violated_line = if passed && sufficiency.holds() {
        None
    } else {
        sufficiency.first_violation().or(if passed { None } else { Some("combined") })
    };
    Ok(DissipationReport {
        samples: storage.len(),
        max_storage,
        min_storage: if storage.is_empty() { 0.0 } else { min_storage },
        max_increment,
        tolerance,
        nonnegative,
        passed,
        sufficiency,
        violated_line,
        storage,
    })
}

/// `(1ᵀ I_Ld (1 - z̄_l), percentage of 1ᵀ I_Ld)`.
pub fn consumption_reduction(i_ld: &[f64], z: &[f64]) -> (f64, f64) {
    let total: f64 = i_ld.iter().sum();
    let amps: f64 = i_ld.iter().zip(z).map(|(i, z)| i * (1.0 - z)).sum();
    (amps, 100.0 * amps / total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub consumption_reduction_amps: f64,
    pub consumption_reduction_percent: f64,
    pub current_sharing_error: f64,
    pub voltage_rmse: f64,
    pub max_abs_v_q: f64,
    /// `|Σ(I_Ld z̄_l + V̄_d / R_L) - 1ᵀ Ī_td|` in amperes.
    pub current_matching_residual: f64,
}

pub fn metrics(model: &HpsModel, x: &PlantState) -> MetricReport {
    let n = model.n();
    let (amps, percent) = consumption_reduction(model.i_ld.as_slice(), x.z_l.as_slice());
    let demand: f64 = (0..n).map(|i| model.i_ld[i] * x.z_l[i] + x.v_d[i] / model.r_load[i]).sum();
    MetricReport {
        consumption_reduction_amps: amps,
        consumption_reduction_percent: percent,
        current_sharing_error: current_sharing_error(x.i_td.as_slice(), model.pi_c.as_slice()),
        voltage_rmse: (&x.v_d - &model.v_ref).norm() / (n as f64).sqrt(),
        max_abs_v_q: x.v_q.amax(),
        current_matching_residual: (demand - x.i_td.sum()).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{assemble_closed_loop, equilibrium, initial_state};
    use crate::integrator::{simulate, SimConfig};
    use crate::model::SocialCase;
    use crate::scenario::{paper_table2, reference_values as rv};

    #[test]
    fn reported_reductions() {
        let i_ld = [30.0, 25.0, 30.0, 26.0];
        let (a, p) = consumption_reduction(&i_ld, &rv::Z_L_CASE_I);
        assert!((a - 49.87).abs() < 0.01 && (p - 44.93).abs() < 0.01, "{a} {p}");
        let (a, p) = consumption_reduction(&i_ld, &rv::Z_L_CASE_II);
        assert!((a - 50.15).abs() < 0.01 && (p - 45.18).abs() < 0.01, "{a} {p}");
        assert_eq!(consumption_reduction(&i_ld, &[1.0; 4]), (0.0, 0.0));
    }

    #[test]
    fn storage_is_quadratic() {
        let model = HpsModel::new(paper_table2()).unwrap();
        let dx = PlantState::from_slice(4, 4, &(0..32).map(|i| i as f64 - 7.0).collect::<Vec<_>>()).unwrap();
        let s1 = storage_physical(&model, &dx);
        let mut dx2 = dx.clone();
        for b in [&mut dx2.v_d, &mut dx2.v_q, &mut dx2.i_td, &mut dx2.i_tq, &mut dx2.i_d, &mut dx2.i_q] {
            *b *= 2.0;
        }
        assert!((storage_physical(&model, &dx2) - 4.0 * s1).abs() < 1e-12 * s1);
        assert_eq!(storage_physical(&model, &PlantState::zeros(4, 4)), 0.0);
        let c = ControllerState::zeros(4);
        assert_eq!(storage_controller(&model.params.gains, &c), 0.0);
    }

    #[test]
    fn sufficient_monitor_satisfies_all_lines() {
        let model = HpsModel::new(paper_table2()).unwrap();
        let mon = MonitorConfig::sufficient(&model);
        let rep = sufficiency(&model, &mon).unwrap();
        assert!(rep.holds(), "{rep:?}");
        let tiny = MonitorConfig::uniform(4, 1.0, 1.0, mon.zeta_2, mon.zeta_3);
        let rep = sufficiency(&model, &tiny).unwrap();
        assert_eq!(rep.first_violation(), Some("z_l"));
    }

    #[test]
    fn storage_decreases_along_bundled_run() {
        let model = HpsModel::new(paper_table2()).unwrap();
        let mon = MonitorConfig::sufficient(&model);
        let sys = assemble_closed_loop(&model, &mon.p1(&model).unwrap()).unwrap();
        assert!(dissipation_margin(&model, &sys, &mon).unwrap() <= 1e-8);
        let x0 = initial_state(&sys.layout, &rv::P_INITIAL).unwrap();
        let cfg = SimConfig {
            t_final: 5.0,
            output_step: 1e-3,
            ..SimConfig::default()
        };
        let traj = simulate(&sys, &x0, &cfg).unwrap();
        let rep = dissipation_check(&traj, &model, &sys, &mon).unwrap();
        assert!(rep.passed, "max increment {} tol {}", rep.max_increment, rep.tolerance);
    }

    #[test]
    fn equilibrium_metrics() {
        for case in [SocialCase::CaseI, SocialCase::CaseII] {
            let mut p = paper_table2();
            p.social_case = case;
            let model = HpsModel::new(p).unwrap();
            let sys = assemble_closed_loop(&model, &model.default_p1().unwrap()).unwrap();
            let x = equilibrium(&sys).unwrap();
            let (xs, _) = split_state(&sys.layout, &x).unwrap();
            let m = metrics(&model, &xs);
            assert!(m.current_matching_residual < 1e-8);
            assert!(m.max_abs_v_q < 1e-8);
        }
    }
}
