use hps_core::kkt::{solve_kkt, KktSolution};
use serde::Serialize;

use crate::args::CommonArgs;
use crate::commands::{case_name, load};
use crate::error::CliError;
use crate::output::{CheckOutcome, Staged};

/// Residuals below this fraction of `1 + ‖rhs‖` count as solved.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Serialize)]
struct KktReport<'a> {
    social_case: &'static str,
    p_bar: Vec<f64>,
    #[serde(flatten)]
    solution: &'a KktSolution,
}

pub fn run(common: &CommonArgs) -> Result<(), CliError> {
    let loaded = load(common)?;
    let mut run = loaded.run("kkt", common, None);
    let model = loaded.model()?;
    let sol = solve_kkt(&model, &model.p_bar)?;
    let report = KktReport {
        social_case: case_name(model.social_case()),
        p_bar: model.p_bar.iter().copied().collect(),
        solution: &sol,
    };
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");

    let (_, rhs) = hps_core::kkt::assemble_kkt(&model, &model.p_bar)?;
    let scale = 1.0 + rhs.norm();
    let residual = sol.stationarity_residual.max(sol.feasibility_residual) / scale;
    run.manifest.checks.push(CheckOutcome::new(
        "kkt_residuals",
        residual < RESIDUAL_TOL,
        format!("relative residual {residual:.3e}"),
    ));
    let mut staged = Staged::new();
    staged.add("kkt.json", text + "\n");
    run.finish(staged, &[])?;
    if residual < RESIDUAL_TOL {
        Ok(())
    } else {
        Err(CliError::Verification(format!("KKT residual {residual:.3e} exceeds {RESIDUAL_TOL:e}")))
    }
}
