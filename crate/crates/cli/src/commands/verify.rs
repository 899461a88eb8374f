//! The check suite. Every check is independent and read-only, so they run on a
//! small scoped thread pool and are reported in a fixed order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hps_core::analysis::{dissipation_check, metrics, MonitorConfig};
use hps_core::dynamics::{
    assemble_closed_loop, closed_loop_rhs, equilibrium, initial_state, interconnect, spectrum, split_state,
    ClosedLoopSystem,
};
use hps_core::integrator::{simulate, SimConfig};
use hps_core::kkt::{assemble_kkt, port_shifted_residual, solve_kkt};
use hps_core::HpsModel;
use nalgebra::DVector;

use crate::args::CommonArgs;
use crate::commands::{load, thread_cap};
use crate::error::CliError;
use crate::output::{CheckOutcome, Staged};

pub const ASSEMBLY_TOL: f64 = 1e-12;
pub const SPECTRUM_TOL: f64 = 1e-9;
pub const AGREEMENT_TOL: f64 = 1e-6;
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
pub const KKT_TOL: f64 = 1e-9;

struct Shared {
    model: HpsModel,
    sys: ClosedLoopSystem,
    equilibrium: DVector<f64>,
    t_final: f64,
}

type Check = fn(&Shared) -> Result<CheckOutcome, CliError>;

fn assembly_exactness(s: &Shared) -> Result<CheckOutcome, CliError> {
    let dim = s.sys.dim();
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let x = DVector::from_fn(dim, |i, _| (1.3 * i as f64 + 0.7 * k as f64).sin() * (1.0 + (i % 7) as f64));
        let blockwise = closed_loop_rhs(&s.model, &s.sys.p1, &x)?;
        let assembled = s.sys.rhs(&x);
        let scale = s.sys.m.norm() * x.norm() + s.sys.b.norm();
        worst = worst.max((blockwise - assembled).norm() / scale);
    }
    Ok(CheckOutcome::new(
        "assembly_exactness",
        worst <= ASSEMBLY_TOL,
        format!("max relative gap between block-wise and assembled field {worst:.2e} over 50 states"),
    ))
}

fn spectrum_check(s: &Shared) -> Result<CheckOutcome, CliError> {
    let rep = spectrum(&s.sys.m);
    Ok(CheckOutcome::new(
        "spectrum",
        rep.is_stable(SPECTRUM_TOL),
        format!(
            "max Re λ = {:.4e}, min |Re λ| = {:.4e}, {} eigenvalues on the imaginary axis",
            rep.max_real,
            rep.min_abs_real,
            rep.axis_clusters.len()
        ),
    ))
}

fn equilibrium_vs_kkt(s: &Shared) -> Result<CheckOutcome, CliError> {
    let kkt = solve_kkt(&s.model, &s.model.p_bar)?.to_vector();
    let np = s.sys.layout.plant_dim();
    let xc = s.equilibrium.rows(np, s.equilibrium.len() - np).into_owned();
    let gap = (&xc - &kkt).norm() / kkt.norm();
    Ok(CheckOutcome::new(
        "equilibrium_vs_kkt",
        gap <= AGREEMENT_TOL,
        format!("relative gap between controller equilibrium and KKT solution {gap:.3e}"),
    ))
}

fn port_shifted_kkt(s: &Shared) -> Result<CheckOutcome, CliError> {
    let (xs, xc) = split_state(&s.sys.layout, &s.equilibrium)?;
    let ports = interconnect(&s.model, &xs, &xc, &s.sys.p1)?.controller_ports();
    let r = port_shifted_residual(&s.model, &xc, &ports)?;
    Ok(CheckOutcome::new(
        "port_shifted_kkt",
        r <= KKT_TOL,
        format!("KKT residual with port injections at the equilibrium {r:.3e}"),
    ))
}

fn dissipation(s: &Shared) -> Result<CheckOutcome, CliError> {
    let monitor = s
        .model
        .params
        .monitor
        .clone()
        .unwrap_or_else(|| MonitorConfig::sufficient(&s.model));
    let sys = assemble_closed_loop(&s.model, &monitor.p1(&s.model)?)?;
    let x0 = initial_state(&sys.layout, &vec![0.8; s.model.n()])?;
    let cfg = SimConfig {
        t_final: s.t_final,
        ..SimConfig::default()
    };
    let traj = simulate(&sys, &x0, &cfg)?;
    let rep = dissipation_check(&traj, &s.model, &sys, &monitor)?;
    let passed = rep.passed && rep.sufficiency.holds();
    let mut detail = format!(
        "max storage increment {:.3e} (tolerance {:.3e}) over {} samples",
        rep.max_increment, rep.tolerance, rep.samples
    );
    if let Some(line) = rep.violated_line {
        detail.push_str(&format!("; violated: {line}"));
    }
    Ok(CheckOutcome::new("dissipation", passed, detail))
}

fn current_matching(s: &Shared) -> Result<CheckOutcome, CliError> {
    let (xs, _) = split_state(&s.sys.layout, &s.equilibrium)?;
    let m = metrics(&s.model, &xs);
    Ok(CheckOutcome::new(
        "current_matching",
        m.current_matching_residual < EQUILIBRIUM_TOL,
        format!("|Σ(I_Ld z_l + V_d/R_L) - Σ I_td| = {:.3e} A", m.current_matching_residual),
    ))
}

fn quadrature_voltage(s: &Shared) -> Result<CheckOutcome, CliError> {
    let (xs, _) = split_state(&s.sys.layout, &s.equilibrium)?;
    let vq = xs.v_q.amax();
    Ok(CheckOutcome::new("v_q_zero", vq < EQUILIBRIUM_TOL, format!("max |V_q| = {vq:.3e} V")))
}

fn kkt_residuals(s: &Shared) -> Result<CheckOutcome, CliError> {
    let sol = solve_kkt(&s.model, &s.model.p_bar)?;
    let (_, rhs) = assemble_kkt(&s.model, &s.model.p_bar)?;
    let r = sol.stationarity_residual.max(sol.feasibility_residual) / (1.0 + rhs.norm());
    let gap = (sol.objective_value - sol.dual_value).abs() / (1.0 + sol.objective_value.abs());
    Ok(CheckOutcome::new(
        "kkt_residuals",
        r < KKT_TOL && gap < 1e-8,
        format!(
            "relative residual {r:.3e}, duality gap {gap:.3e}, Ī_td = {:.3?}",
            sol.primal.i_td
        ),
    ))
}

const CHECKS: [(&str, Check); 8] = [
    ("assembly_exactness", assembly_exactness),
    ("spectrum", spectrum_check),
    ("equilibrium_vs_kkt", equilibrium_vs_kkt),
    ("port_shifted_kkt", port_shifted_kkt),
    ("dissipation", dissipation),
    ("current_matching", current_matching),
    ("v_q_zero", quadrature_voltage),
    ("kkt_residuals", kkt_residuals),
];

fn run_all(shared: &Shared, threads: usize) -> Vec<CheckOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CheckOutcome>>> = Mutex::new(vec![None; CHECKS.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(CHECKS.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((name, check)) = CHECKS.get(k) else {
                    break;
                };
                let outcome = check(shared).unwrap_or_else(|e| CheckOutcome::new(name, false, format!("error: {e}")));
                slots.lock().expect("no check panics while holding the lock")[k] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("threads joined")
        .into_iter()
        .map(|o| o.expect("every check ran"))
        .collect()
}

pub fn run(common: &CommonArgs) -> Result<(), CliError> {
    let threads = thread_cap()?;
    let loaded = load(common)?;
    let mut run = loaded.run("verify", common, None);
    let model = loaded.model()?;
    let sys = assemble_closed_loop(&model, &model.default_p1()?)?;
    let equilibrium = equilibrium(&sys)?;
    let shared = Shared {
        model,
        sys,
        equilibrium,
        t_final: common.t_final.unwrap_or(SimConfig::default().t_final),
    };
    let outcomes = run_all(&shared, threads);
    for o in &outcomes {
        println!("{:<20} {}  {}", o.name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.clone()).collect();
    run.manifest.checks = outcomes;
    let mut staged = Staged::new();
    staged.add_json("verify.json", &run.manifest.checks)?;
    run.finish(staged, &[])?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}
