use hps_core::calibrate::calibrate;

use crate::args::{CalibrateArgs, CommonArgs};
use crate::commands::load;
use crate::error::CliError;
use crate::output::Staged;

pub fn run(common: &CommonArgs, args: &CalibrateArgs) -> Result<(), CliError> {
    if !(args.lo < args.hi) || !args.lo.is_finite() || !args.hi.is_finite() {
        return Err(CliError::Input(format!("need --lo < --hi, got {} and {}", args.lo, args.hi)));
    }
    if args.points < 2 {
        return Err(CliError::Input("--points must be at least 2".into()));
    }
    let loaded = load(common)?;
    let run = loaded.run("calibrate", common, None);
    let result = calibrate(&loaded.params, args.lo, args.hi, args.points)?;
    let text = serde_json::to_string_pretty(&result)?;
    println!("{text}");

    if let Some(path) = &args.write_scenario {
        let mut params = loaded.params.clone();
        params.weights = result.weights;
        let mut scenario = serde_json::to_string_pretty(&params)?;
        scenario.push('\n');
        std::fs::write(path, scenario).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    let mut staged = Staged::new();
    staged.add("calibration.json", text + "\n");
    run.finish(staged, &[])?;
    Ok(())
}
