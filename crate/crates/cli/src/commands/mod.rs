//! One module per subcommand, plus the scenario loading they share.

pub mod calibrate;
pub mod kkt;
pub mod reproduce;
pub mod simulate;
pub mod verify;

use std::path::PathBuf;
use std::time::Instant;

use hps_core::model::{ScenarioParams, SocialCase};
use hps_core::scenario::{load_scenario_str, parse_override, read_scenario_text, PAPER_TABLE2_JSON};
use hps_core::HpsModel;

use crate::args::CommonArgs;
use crate::error::CliError;
use crate::output::{Run, RunManifest};

pub const BUNDLED_LABEL: &str = "<bundled>";

/// A parsed, overridden and validated scenario.
pub struct Loaded {
    pub label: String,
    pub params: ScenarioParams,
    pub overrides: Vec<String>,
}

impl Loaded {
    pub fn model(&self) -> Result<HpsModel, CliError> {
        Ok(HpsModel::new(self.params.clone())?)
    }

    /// Starts the clock. `default_output` applies when `--output` is absent.
    pub fn run(&self, command: &str, common: &CommonArgs, default_output: Option<PathBuf>) -> Run {
        let output = common.output.clone().or(default_output);
        Run {
            started: Instant::now(),
            manifest: RunManifest {
                scenario_path: self.label.clone(),
                command: command.to_string(),
                social_case: case_name(self.params.social_case).to_string(),
                overrides: self.overrides.clone(),
                output_dir: output.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                duration_s: 0.0,
                checks: Vec::new(),
                outputs: Vec::new(),
            },
            output,
        }
    }
}

pub fn case_name(case: SocialCase) -> &'static str {
    match case {
        SocialCase::CaseI => "i",
        SocialCase::CaseII => "ii",
    }
}

/// Reads the scenario (or the bundled one), applies `--set` overrides and `--case`, then validates.
pub fn load(common: &CommonArgs) -> Result<Loaded, CliError> {
    let (label, text) = match &common.scenario {
        Some(path) => (
            path.display().to_string(),
            read_scenario_text(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        ),
        None => (BUNDLED_LABEL.to_string(), PAPER_TABLE2_JSON.to_string()),
    };
    let overrides = common
        .set
        .iter()
        .map(|raw| parse_override(raw))
        .collect::<Result<Vec<_>, _>>()?;
    let params = load_scenario_str(&text, &overrides, common.case)
        .map_err(|e| CliError::Input(format!("{label}: {e}")))?;
    if let Some(t) = common.t_final {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Input(format!("--t-final must be positive, got {t}")));
        }
    }
    Ok(Loaded {
        label,
        params,
        overrides: common.set.clone(),
    })
}

/// `HPS_SIM_THREADS`, or the available parallelism when unset.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("HPS_SIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Input(format!("HPS_SIM_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
