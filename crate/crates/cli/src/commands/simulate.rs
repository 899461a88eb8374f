use std::path::PathBuf;

use hps_core::analysis::{dissipation_check, metrics, MetricReport, MonitorConfig};
use hps_core::dynamics::{assemble_closed_loop, export_files, initial_state, split_state};
use hps_core::integrator::{simulate, Method, SimConfig};
use serde::Serialize;

use crate::args::{CommonArgs, MethodArg, SimulateArgs};
use crate::commands::load;
use crate::error::CliError;
use crate::output::{CheckOutcome, Staged};

pub const DEFAULT_OUTPUT: &str = "hps-out";

#[derive(Serialize)]
struct Summary {
    converged: bool,
    final_time: f64,
    final_residual: f64,
    convergence_tol: f64,
    samples: usize,
    z_l: Vec<f64>,
    p: Vec<f64>,
    s: Vec<f64>,
    i_td: Vec<f64>,
    metrics: MetricReport,
}

pub fn run(common: &CommonArgs, args: &SimulateArgs) -> Result<(), CliError> {
    let loaded = load(common)?;
    let config = SimConfig {
        t_final: common.t_final.unwrap_or(SimConfig::default().t_final),
        output_step: args.output_step,
        method: match args.method {
            MethodArg::Exact => Method::ExactExp,
            MethodArg::Rk4 => Method::Rk4,
        },
        rk4_step: args.rk4_step,
        convergence_tol: args.tol,
    };
    config.check()?;
    if !(0.0..=1.0).contains(&args.p0) {
        return Err(CliError::Input(format!("--p0 must lie in [0, 1], got {}", args.p0)));
    }
    let run = loaded.run("simulate", common, Some(PathBuf::from(DEFAULT_OUTPUT)));
    let model = loaded.model()?;
    let p1 = model.default_p1()?;
    let sys = assemble_closed_loop(&model, &p1)?;
    let x0 = initial_state(&sys.layout, &vec![args.p0; model.n()])?;
    let traj = simulate(&sys, &x0, &config)?;

    let mut extra = Vec::new();
    if args.monitors {
        // Q₁ must be the one behind the P₁ used for the incentive port.
        let monitor = model
            .params
            .monitor
            .clone()
            .unwrap_or_else(|| MonitorConfig::uniform(model.n(), 1.0, 1.0, 1.0, 1.0));
        let report = dissipation_check(&traj, &model, &sys, &monitor)?;
        extra.push(("storage".to_string(), report.storage));
    }
    let csv = traj.to_csv(&sys.layout.coordinate_names(), &extra)?;

    let (xs, xc) = split_state(&sys.layout, traj.last_state())?;
    let summary = Summary {
        converged: traj.converged,
        final_time: traj.final_time(),
        final_residual: *traj.residuals.last().unwrap_or(&f64::NAN),
        convergence_tol: traj.convergence_tol,
        samples: traj.len(),
        z_l: xs.z_l.iter().copied().collect(),
        p: xs.p.iter().copied().collect(),
        s: xc.s.iter().copied().collect(),
        i_td: xs.i_td.iter().copied().collect(),
        metrics: metrics(&model, &xs),
    };

    let mut staged = Staged::new();
    staged.add("trajectory.csv", csv);
    staged.add_json("summary.json", &summary)?;
    if args.export_system {
        for (name, text) in export_files(&sys)? {
            staged.add(name, text);
        }
    }
    let mut run = run;
    run.manifest.checks.push(CheckOutcome::new(
        "converged",
        traj.converged,
        format!(
            "‖Mx+b‖ = {:.3e} at t = {} s (tolerance {:.3e})",
            summary.final_residual, summary.final_time, summary.convergence_tol
        ),
    ));
    let manifest = run.finish(staged, &[])?;
    println!(
        "{} after {:.2} s, terminal z_l = {:.4?}; wrote {} to {}",
        if summary.converged { "converged" } else { "not converged" },
        summary.final_time,
        summary.z_l,
        manifest.outputs.join(", "),
        manifest.output_dir
    );
    if summary.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "‖Mx+b‖ = {:.3e} is still above {:.3e} at t_final = {} s",
            summary.final_residual, summary.convergence_tol, summary.final_time
        )))
    }
}
