//! Deterministic plant: phantom geometry with an embedded vessel, spring
//! contact, simplified 7-DOF dynamics, virtual ultrasound imaging, and the
//! scenario loops (sweep scan and replayed operator session).

mod loops;
mod phantom;
mod profile;
mod rng;
mod robot;
mod trace;

pub use loops::{run_phri, run_sweep, ControllerLaw, NoiseParams, ScanScenario, SweepOutcome};
pub use phantom::{lumen_area, Phantom, PhantomSpec, VesselSegmentProps, VesselTube};
pub use profile::{OperatorProfile, ProfileRow};
pub use rng::Rng;
pub use robot::{DhRow, RobotModel};
pub use trace::{read_trace_csv, write_trace_csv, TraceRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("joint {joint} value {value:.4} rad outside [{lo:.4}, {hi:.4}]")]
    JointLimit {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("probe driven {penetration_mm:.1} mm into the phantom (limit 25 mm)")]
    PlantFault { penetration_mm: f64 },
    #[error("simulation diverged; last valid tick at t = {t_last:.3} s")]
    Diverged { t_last: f64 },
    #[error("contact not established within {timeout:.1} s")]
    ContactTimeout { timeout: f64 },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Control(#[from] crate::controller::ControlError),
    #[error(transparent)]
    Path(#[from] crate::pathfit::PathFitError),
    #[error(transparent)]
    Planner(#[from] crate::planner::PlannerError),
}
