//! First-principles slug flow crystallizer model.

pub mod hydro;
pub mod kinetics;
pub mod params;
pub mod plant;
pub mod population;
pub mod tempering;
pub mod trajectory;

pub use hydro::{Inputs, VelocityProfile};
pub use params::{GridIntegrator, PlantParams, SimConfig, TemperatureUnit};
pub use plant::{advance, measure_outlet, Measurement, Physics, SimState, Simulator, StepReport};
pub use population::{SizeQuantiles, Slug};
pub use tempering::TemperingGrid;
pub use trajectory::{Trajectory, TrajectoryRow, TRAJECTORY_HEADER};
