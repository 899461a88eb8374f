//! Human-physical microgrid model: an AC grid in the dq-frame coupled to
//! behavior and personal-norm dynamics, the welfare problem that trades
//! comfort against incentives and grid objectives, its KKT oracle, the
//! primal-dual controller, exact LTI simulation and stability monitors.

pub mod analysis;
pub mod calibrate;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod kkt;
pub mod linalg;
pub mod model;
pub mod scenario;

pub use error::{HpsError, Result};
pub use model::HpsModel;
