//! Multi-stage model predictive control with a NARX surrogate as the
//! internal model. The tree branches once at the first prediction step into
//! upper, middle and lower successors; every branch then propagates with the
//! mean model under one shared input sequence.

pub mod config;
pub mod controller;
pub mod model;
pub mod solver;
pub mod state;
pub mod tree;

pub use config::{InputBounds, MpcConfig, SolverConfig, UncertaintyMode};
pub use controller::{shift, solve, solve_horizon, Controller, MpcSolution, StepRecord, STEP_LOG_HEADER};
pub use model::{LinearNarx, NarxModel};
pub use solver::{minimize_box, SolveStatus, SolverOutcome};
pub use state::NarxState;
pub use tree::{Branch, Problem, ScenarioTree, N_DECISION};
