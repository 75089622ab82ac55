//! Dynamic urban-mobility model with private cars (HV), a shared autonomous
//! vehicle fleet (SAV) and rail.
//!
//! The crate runs yearly forecasts, analyses the feedback structure of the
//! linearised model with signal-flow graphs, and searches SAV introduction
//! schedules that minimise operator cost under a cumulative CO2 cap.

pub mod backcast;
pub mod error;
pub mod flowgraph;
pub mod impacts;
pub mod infrastructure;
pub mod mode_choice;
pub mod network;
pub mod output;
pub mod params;
pub mod scenario;
pub mod service;
pub mod simulator;
pub mod stocks;

pub use error::{Error, Result};
pub use params::ParamSet;
pub use simulator::{EquilibriumPoint, Forecast, Model, SystemState, TrajectoryRecord};
pub use scenario::{load_scenario, Scenario, ScenarioPaths};
