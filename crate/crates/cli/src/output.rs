//! Staged output files and the run manifest.
//!
//! Commands stage their files in memory and only touch the disk once every
//! computation has succeeded, so an input error never leaves partial output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What ran, on which inputs, and what it produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub scenario_path: String,
    pub command: String,
    pub social_case: String,
    pub overrides: Vec<String>,
    pub output_dir: String,
    /// Wall-clock seconds; the only nondeterministic field of any output.
    pub duration_s: f64,
    pub checks: Vec<CheckOutcome>,
    pub outputs: Vec<String>,
}

pub struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Creates `dir` and writes every staged file into it.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", dir.display())))?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents)
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Common bookkeeping for one command invocation.
pub struct Run {
    pub started: Instant,
    pub manifest: RunManifest,
    pub output: Option<PathBuf>,
}

impl Run {
    /// Writes the staged files plus `manifest.json` when an output directory is set.
    pub fn finish(mut self, mut staged: Staged, extra_outputs: &[&str]) -> Result<RunManifest, CliError> {
        self.manifest.duration_s = self.started.elapsed().as_secs_f64();
        if let Some(dir) = &self.output {
            let mut outputs = staged.names();
            outputs.extend(extra_outputs.iter().map(|s| s.to_string()));
            outputs.push("manifest.json".into());
            self.manifest.outputs = outputs;
            let manifest = self.manifest.clone();
            staged.add_json("manifest.json", &manifest)?;
            staged.write(dir)?;
        }
        Ok(self.manifest)
    }
}
