//! Open-loop plant, primal-dual controller and their interconnection, both as
//! block-wise vector fields and as one assembled LTI pair `(M, b)`.

pub mod closed_loop;
pub mod controller;
pub mod plant;
pub mod state;

pub use closed_loop::{
    assemble_closed_loop, closed_loop_rhs, equilibrium, export_files, export_system, initial_state, interconnect, spectrum,
    ClosedLoopSystem, EigenCluster, PortValues, SpectrumReport,
};
pub use controller::{controller_rhs, ControllerPorts};
pub use plant::plant_rhs;
pub use state::{join_state, split_state, ControllerState, PlantState, StateBlock, StateLayout};
