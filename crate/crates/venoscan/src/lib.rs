//! Deterministic simulation of a robot-assisted venous compression
//! ultrasound exam.
//!
//! The library covers the full pipeline: coarse-to-fine scan-path planning
//! over a synthetic arm phantom, arc-length 6D path fitting, hybrid
//! force/motion control with barrier-shaped force feedback and soft probe
//! landing, a path virtual fixture for replayed operator interaction, and a
//! fixed-timestep plant that ties everything together and emits per-tick
//! traces for analysis.

pub mod config;
pub mod controller;
pub mod fileio;
pub mod geomath;
pub mod metrics;
pub mod pathfit;
pub mod planner;
pub mod simworld;
pub mod vfixture;

use thiserror::Error;

/// Crate-level error with the CLI exit-code mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Parse(#[from] fileio::ParseError),
    #[error(transparent)]
    Geomath(#[from] geomath::GeomathError),
    #[error(transparent)]
    Path(#[from] pathfit::PathFitError),
    #[error(transparent)]
    Control(#[from] controller::ControlError),
    #[error(transparent)]
    Planner(#[from] planner::PlannerError),
    #[error(transparent)]
    Sim(#[from] simworld::SimError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// 2 config error, 3 simulation fault, 4 schema/parse error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Parse(_) | Error::Metrics(_) => 4,
            Error::Sim(_) | Error::Control(_) => 3,
            Error::Geomath(_) | Error::Path(_) | Error::Planner(_) => 3,
        }
    }
}
