//! Scenario loops: soft-landing sweep scan and replayed operator session.
//!
//! Single-threaded, tick-ordered (control -> plant -> imaging ->
//! interaction at their divisors); identical inputs produce bit-identical
//! traces.

use crate::controller::{
    baseline_force_law, blend_velocity, force_law, hfmc_torque, measured_axial_force,
    ControllerGains, ForceLawParams, ForceTrackingTarget, RobotState, SoftLandingState, Vec7,
};
use crate::geomath::{FrameTransform, Vec3, Wrench};
use crate::pathfit::{FitParams, FittedPath};
use crate::planner::{Mask, SweepRow, UsFrameGeometry};
use crate::vfixture::{fixture_target, vf_step, InteractionForce, InteractionParams, VfState};

use super::phantom::Phantom;
use super::profile::OperatorProfile;
use super::rng::Rng;
use super::robot::RobotModel;
use super::trace::TraceRecord;
use super::SimError;

/// Force law selection for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerLaw {
    Proposed,
    /// Linear feedback `v' = -k e_f`.
    Fundamental {
        k: f64,
    },
}

#[derive(Debug, Clone)]
pub struct NoiseParams {
    pub enabled: bool,
    /// Std-dev of the axial force measurement noise (N).
    pub force_std: f64,
    /// Std-dev added to each operator interaction channel (N).
    pub interaction_std: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            enabled: false,
            force_std: 0.0,
            interaction_std: 0.0,
            seed: 1,
        }
    }
}

/// Fully assembled scenario: plant, controller, and rates.
#[derive(Debug, Clone)]
pub struct ScanScenario {
    pub phantom: Phantom,
    pub robot: RobotModel,
    pub gains: ControllerGains,
    pub force_params: ForceLawParams,
    /// Soft-landing template; `alpha` restarts at zero per run.
    pub landing: SoftLandingState,
    pub interaction: InteractionParams,
    pub imaging: UsFrameGeometry,
    pub fit: FitParams,
    pub q_home: Vec7,
    pub law: ControllerLaw,
    pub control_dt: f64,
    pub imaging_divisor: u64,
    pub interaction_divisor: u64,
    pub approach_timeout: f64,
    pub noise: NoiseParams,
}

pub struct SweepOutcome {
    pub trace: Vec<TraceRecord>,
    pub sweep: Vec<SweepRow>,
    pub saturated_ticks: usize,
}

/// Shared per-tick machinery of both loops.
struct SimCore<'a> {
    sc: &'a ScanScenario,
    rs: RobotState,
    landing: SoftLandingState,
    tgt: ForceTrackingTarget,
    rng: Rng,
    /// Consecutive settled ticks while waiting for establishment.
    settle_run: u32,
    established: bool,
    mask: Mask,
    frame_count: usize,
    saturated_ticks: usize,
}

struct TickResult {
    f: f64,
    e_f: f64,
    alpha: f64,
}

impl<'a> SimCore<'a> {
    fn new(sc: &'a ScanScenario, path: &FittedPath, f_d: f64) -> Result<Self, SimError> {
        let rs = sc.robot.state_from(sc.q_home, Vec7::zeros())?;
        let start = path.eval(0.0).pose;
        let mut tgt = ForceTrackingTarget::new(f_d, start.position, start.orientation, sc.q_home);
        tgt.anchor(&rs);
        Ok(Self {
            sc,
            rs,
            landing: SoftLandingState {
                alpha: 0.0,
                ..sc.landing.clone()
            },
            tgt,
            rng: Rng::new(sc.noise.seed),
            settle_run: 0,
            established: false,
            mask: Mask::new(sc.imaging.width_px, sc.imaging.height_px),
            frame_count: 0,
            saturated_ticks: 0,
        })
    }

    /// Runs the controller and plant for one tick; `operator` is the
    /// operator force in the probe channels (x, y, pressing).
    fn step(&mut self, t: f64, operator: Vec3) -> Result<TickResult, SimError> {
        let sc = self.sc;
        let contact = sc.phantom.contact_force(&self.rs.ee_pose)?;
        // The calibrated sensor reports the wrench the probe applies.
        let applied = Wrench::new(-contact.force, -contact.torque);
        let t_tw = FrameTransform::from_pose(&self.rs.ee_pose).twist_transform();
        let n_z = self.rs.pressing_axis();
        let mut f = measured_axial_force(&applied, &t_tw, &n_z);
        if sc.noise.enabled && sc.noise.force_std > 0.0 {
            f += sc.noise.force_std * self.rng.gauss();
        }
        let alpha = crate::controller::soft_landing_update(&mut self.landing, f, sc.control_dt);
        let e_f = f - self.tgt.f_d;

        if !self.established {
            if alpha >= 0.5 && e_f.abs() < 0.3 {
                self.settle_run += 1;
                let needed = (0.2 / sc.control_dt).round() as u32;
                if self.settle_run >= needed {
                    self.established = true;
                }
            } else {
                self.settle_run = 0;
            }
            if t > sc.approach_timeout {
                return Err(SimError::ContactTimeout {
                    timeout: sc.approach_timeout,
                });
            }
        }

        let v_f_prime = match sc.law {
            ControllerLaw::Proposed => force_law(e_f, &sc.force_params),
            ControllerLaw::Fundamental { k } => baseline_force_law(e_f, k),
        };
        let v_f = blend_velocity(alpha, v_f_prime, self.landing.v0);
        let tau = hfmc_torque(&self.rs, &mut self.tgt, v_f, &sc.gains, sc.control_dt)?;

        let r_p = self.rs.ee_pose.orientation.rotation_matrix();
        let operator_base = r_p * Vec3::new(operator.x, operator.y, -operator.z);
        let w_ext = Wrench::new(r_p * contact.force + operator_base, Vec3::zeros());
        let (next, saturated) = sc.robot.step(&self.rs, &tau, &w_ext, sc.control_dt)?;
        if saturated {
            self.saturated_ticks += 1;
        }
        self.rs = next;
        Ok(TickResult { f, e_f, alpha })
    }

    /// Lateral deviation of the probe from the path at `s`: the component
    /// of the offset along the path-frame binormal, i.e. perpendicular to
    /// both the travel direction and the pressing axis (which carries the
    /// commanded penetration).
    fn lateral_dev_mm(&self, path: &FittedPath, s: f64) -> f64 {
        let binormal = path.orientation(s).rotation_matrix().column(1).into_owned();
        let d = self.rs.ee_pose.position - path.position(s);
        binormal.dot(&d).abs() * 1e3
    }

    /// Captures a virtual ultrasound frame; returns the sweep row and the
    /// centroid deviation from the image center column in millimeters.
    fn capture_frame(&mut self, s: f64, f: f64) -> (SweepRow, f64) {
        let centroid =
            self.sc
                .phantom
                .render_us_frame(&self.rs.ee_pose, &self.sc.imaging, f, &mut self.mask);
        let row = SweepRow {
            frame_id: self.frame_count,
            s,
            pose: self.rs.ee_pose,
            centroid: centroid.map(|(_, w)| w),
        };
        self.frame_count += 1;
        let dev = centroid
            .map(|((col, _), _)| {
                (col - self.sc.imaging.width_px as f64 / 2.0).abs()
                    * self.sc.imaging.lateral_scale()
                    * 1e3
            })
            .unwrap_or(f64::NAN);
        (row, dev)
    }

    fn record(
        &self,
        t: f64,
        tick: &TickResult,
        s: f64,
        path: &FittedPath,
        centroid_dev_mm: f64,
        pedal: bool,
    ) -> TraceRecord {
        TraceRecord {
            t,
            q: self.rs.q,
            ee_pose: self.rs.ee_pose,
            f: tick.f,
            f_d: self.tgt.f_d,
            e_f: tick.e_f,
            alpha: tick.alpha,
            s,
            lateral_dev_mm: self.lateral_dev_mm(path, s),
            centroid_dev_mm,
            lumen_mm2: self
                .sc
                .phantom
                .lumen_area_at(&self.rs.ee_pose.position, tick.f),
            pedal,
        }
    }
}

/// Sweep scan: soft approach onto the path start, then constant-speed
/// traversal `s <- s + v_s / s_N dt` under force regulation at `f_d`,
/// capturing a virtual ultrasound frame per imaging tick.
pub fn run_sweep(
    sc: &ScanScenario,
    path: &FittedPath,
    f_d: f64,
    v_s: f64,
) -> Result<SweepOutcome, SimError> {
    if v_s <= 0.0 {
        return Err(SimError::Scenario(format!(
            "scan velocity {v_s} must be positive"
        )));
    }
    let mut core = SimCore::new(sc, path, f_d)?;
    let mut trace = Vec::new();
    let mut sweep = Vec::new();
    let mut s = 0.0_f64;
    let max_ticks =
        ((sc.approach_timeout + 1.5 * path.total_length() / v_s + 30.0) / sc.control_dt) as u64;
    for tick in 0..max_ticks {
        let t = tick as f64 * sc.control_dt;
        if core.established {
            s = (s + v_s / path.total_length() * sc.control_dt).min(1.0);
        }
        let target = path.eval(s).pose;
        core.tgt.x_d = target.position;
        core.tgt.q_d = target.orientation;
        let result = core.step(t, Vec3::zeros())?;
        let mut centroid_dev = f64::NAN;
        if core.established && tick % sc.imaging_divisor == 0 {
            let (row, dev) = core.capture_frame(s, result.f);
            sweep.push(row);
            centroid_dev = dev;
        }
        trace.push(core.record(t, &result, s, path, centroid_dev, false));
        if core.established && s >= 1.0 {
            return Ok(SweepOutcome {
                trace,
                sweep,
                saturated_ticks: core.saturated_ticks,
            });
        }
    }
    Err(SimError::Scenario(
        "sweep did not reach the end of the path".into(),
    ))
}

/// Replayed operator session: the virtual fixture maps the profile's
/// interaction forces into arc-length motion or desired-force changes at
/// the interaction rate, while the controller tracks the fixture target at
/// the control rate. The operator wrench also acts on the plant.
pub fn run_phri(
    sc: &ScanScenario,
    path: &FittedPath,
    profile: &OperatorProfile,
    f_d_initial: f64,
) -> Result<Vec<TraceRecord>, SimError> {
    let mut core = SimCore::new(sc, path, f_d_initial)?;
    let mut vf = VfState::new(0.0, f_d_initial);
    validate_interaction(&sc.interaction)?;
    let mut trace = Vec::new();
    let end_t = profile.duration() + 1.0;
    let ticks = (end_t / sc.control_dt).ceil() as u64;
    let vf_dt = sc.control_dt * sc.interaction_divisor as f64;
    for tick in 0..ticks {
        let t = tick as f64 * sc.control_dt;
        let row = profile.sample(t);
        // Interaction loop at its divisor; pedal transitions latch here.
        if core.established && tick % sc.interaction_divisor == 0 {
            vf.pedal = row.pedal;
            let mut fi = InteractionForce {
                fx: row.fx,
                fz: row.fz,
            };
            if sc.noise.enabled && sc.noise.interaction_std > 0.0 {
                fi.fx += sc.noise.interaction_std * core.rng.gauss();
                fi.fz += sc.noise.interaction_std * core.rng.gauss();
            }
            vf = vf_step(&vf, &fi, &sc.interaction, vf_dt);
            let (pose, f_d) = fixture_target(path, &vf);
            core.tgt.x_d = pose.position;
            core.tgt.q_d = pose.orientation;
            core.tgt.f_d = f_d;
        }
        // The operator pushes on the physical probe only after contact;
        // during the approach the hands are off.
        let operator = if core.established {
            Vec3::new(row.fx, row.fy, row.fz)
        } else {
            Vec3::zeros()
        };
        let result = core.step(t, operator)?;
        let mut centroid_dev = f64::NAN;
        if core.established && tick % sc.imaging_divisor == 0 {
            let (_, dev) = core.capture_frame(vf.s, result.f);
            centroid_dev = dev;
        }
        trace.push(core.record(t, &result, vf.s, path, centroid_dev, vf.pedal));
    }
    Ok(trace)
}

fn validate_interaction(p: &InteractionParams) -> Result<(), SimError> {
    p.validate().map_err(|e| SimError::Scenario(e.to_string()))
}
