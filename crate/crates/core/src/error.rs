use std::fmt;

use nalgebra::Complex;

/// One violated scenario invariant, located by a dotted path such as `nodes[0].R_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

/// Every invariant violation found in a scenario, not just the first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// True when some issue path starts with `prefix`.
    pub fn mentions(&self, prefix: &str) -> bool {
        self.issues.iter().any(|i| i.path.starts_with(prefix))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "  {}: {}", issue.path, issue.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HpsError {
    #[error("scenario failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative social weight b[{i}][{j}] = {value}")]
    NegativeWeight { i: usize, j: usize, value: f64 },

    #[error("singular system in {context} (condition number {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("matrix is not Hurwitz in {context}: eigenvalue {eigenvalue}")]
    NotHurwitz {
        context: String,
        eigenvalue: Complex<f64>,
    },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("RK4 step {step:e} s is outside the stability region for eigenvalue {eigenvalue}")]
    Rk4Unstable { step: f64, eigenvalue: Complex<f64> },

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("scenario override `{0}`: {1}")]
    Override(String, String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HpsError> = std::result::Result<T, E>;
