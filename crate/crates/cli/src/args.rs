use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hps_core::model::SocialCase;

#[derive(Debug, Parser)]
#[command(
    name = "hps-sim",
    version,
    about = "Simulate, optimize and verify human-physical microgrid scenarios",
    after_help = "Exit codes: 0 success, 1 input error, 2 non-convergence, 3 verification failure.\n\
                  HPS_SIM_THREADS caps the number of threads used by `verify`."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario JSON file. Defaults to the bundled four-prosumer scenario.
    #[arg(long, global = true, value_name = "PATH")]
    pub scenario: Option<PathBuf>,

    /// Social case, overriding the one in the scenario file.
    #[arg(long, global = true, value_name = "i|ii")]
    pub case: Option<SocialCase>,

    /// Simulation horizon in seconds.
    #[arg(long = "t-final", global = true, value_name = "S")]
    pub t_final: Option<f64>,

    /// Output directory. `simulate` defaults to `hps-out`; the other
    /// commands only write files when this is given.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,

    /// Override a scenario value by dotted path, e.g. `nodes.3.pi_c=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the closed loop and write the trajectory as CSV.
    Simulate(SimulateArgs),
    /// Solve the welfare problem directly and print the KKT solution as JSON.
    Kkt,
    /// Run the check suite; exit code 3 names the failing checks.
    Verify,
    /// Run both social cases and compare against the reference steady values.
    Reproduce,
    /// Fit the welfare weights to the reference steady values.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    Rk4,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    pub method: MethodArg,

    /// Sampling interval of the exported trajectory (s).
    #[arg(long = "output-step", default_value_t = 0.01)]
    pub output_step: f64,

    /// Internal RK4 step (s); only used with `--method rk4`.
    #[arg(long = "rk4-step", default_value_t = 1e-7)]
    pub rk4_step: f64,

    /// Stop once ‖Mx+b‖ drops below this. Default: 1e-8 (1 + ‖b‖).
    #[arg(long)]
    pub tol: Option<f64>,

    /// Initial personal norm and behavior for every prosumer.
    #[arg(long, default_value_t = 0.8)]
    pub p0: f64,

    /// Append the combined storage function as a monitor column.
    #[arg(long)]
    pub monitors: bool,

    /// Also write M.mtx, b.vec and index_map.json.
    #[arg(long = "export-system")]
    pub export_system: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Lower end of the search box, log10 units.
    #[arg(long, default_value_t = hps_core::calibrate::LOG_LO, allow_negative_numbers = true)]
    pub lo: f64,

    /// Upper end of the search box, log10 units.
    #[arg(long, default_value_t = hps_core::calibrate::LOG_HI, allow_negative_numbers = true)]
    pub hi: f64,

    /// Grid points per weight.
    #[arg(long, default_value_t = hps_core::calibrate::GRID_POINTS)]
    pub points: usize,

    /// Write the scenario with the fitted weights to this file.
    #[arg(long = "write-scenario", value_name = "PATH")]
    pub write_scenario: Option<PathBuf>,
}
