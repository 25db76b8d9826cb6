//! Path virtual fixture and operator interaction mapping.
//!
//! The fixture exposes a single arc-length coordinate `s` to the operator:
//! pushing along the probe x-axis advances or retracts the target pose along
//! the fitted path, while the foot pedal reroutes pushes along the pressing
//! axis into desired-force changes. Pose and lateral position stay locked to
//! the path; only the axial force channel is handed to the operator.

use crate::controller::lim;
use crate::geomath::Pose;
use crate::pathfit::FittedPath;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VfError {
    #[error("interaction parameter bounds are inconsistent: {0}")]
    InvalidParams(String),
}

/// Admittance and limiting parameters of the interaction laws.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionParams {
    /// Motion admittance divisor (N s): ds/dt = Dzone(f)/k_pi.
    pub k_pi: f64,
    /// Force admittance divisor (s): df_d/dt = Dzone(f)/k_fi.
    pub k_fi: f64,
    /// Dead zone along the path direction (N).
    pub d_x: f64,
    /// Dead zone along the force direction (N).
    pub d_z: f64,
    pub f_ix_lo: f64,
    pub f_ix_hi: f64,
    pub f_iz_lo: f64,
    pub f_iz_hi: f64,
    /// Desired-force bounds (N); `f_max` stays within the 15 N system limit.
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        Self {
            k_pi: 50.0,
            k_fi: 2.0,
            d_x: 1.0,
            d_z: 1.0,
            f_ix_lo: -8.0,
            f_ix_hi: 8.0,
            f_iz_lo: -8.0,
            f_iz_hi: 8.0,
            f_min: 0.0,
            f_max: 15.0,
        }
    }
}

impl InteractionParams {
    pub fn validate(&self) -> Result<(), VfError> {
        let bad = |msg: &str| Err(VfError::InvalidParams(msg.to_string()));
        if self.d_x < 0.0 || self.d_z < 0.0 {
            return bad("dead zones must be non-negative");
        }
        if self.f_ix_lo >= self.f_ix_hi || self.f_iz_lo >= self.f_iz_hi {
            return bad("interaction force bounds must satisfy lo < hi");
        }
        if self.f_min < 0.0 || self.f_min >= self.f_max {
            return bad("desired-force bounds must satisfy 0 <= f_min < f_max");
        }
        if self.f_max > 15.0 {
            return bad("f_max exceeds the 15 N system limit");
        }
        if self.k_pi <= 0.0 || self.k_fi <= 0.0 {
            return bad("admittance divisors must be positive");
        }
        Ok(())
    }
}

/// Fixture state: arc-length coordinate, desired force, and pedal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VfState {
    pub s: f64,
    pub f_d: f64,
    pub pedal: bool,
}

impl VfState {
    pub fn new(s: f64, f_d: f64) -> Self {
        Self {
            s,
            f_d,
            pedal: false,
        }
    }
}

/// Operator force channels in the probe frame: `fx` along the probe x-axis
/// (path direction), `fz` along the pressing axis (positive pushes deeper).
#[derive(Debug, Clone, Copy, Default)]
pub struct InteractionForce {
    pub fx: f64,
    pub fz: f64,
}

/// Dead-zone operator: zero inside `|f| <= d`, shifted toward zero outside;
/// continuous everywhere.
pub fn dead_zone(f: f64, d: f64) -> f64 {
    if f.abs() <= d {
        0.0
    } else if f > d {
        f - d
    } else {
        f + d
    }
}

/// One interaction tick. Pedal released: the limited, dead-zoned `fx`
/// drives `s` (clamped to [0, 1]) and `f_d` is untouched. Pedal pressed:
/// the `fz` channel drives `f_d` (clamped to [f_min, f_max]) and `s` is
/// frozen. Exactly one of the two coordinates changes per step.
pub fn vf_step(st: &VfState, fi: &InteractionForce, p: &InteractionParams, dt: f64) -> VfState {
    let mut out = *st;
    if st.pedal {
        let fd_dot = dead_zone(lim(fi.fz, p.f_iz_lo, p.f_iz_hi), p.d_z) / p.k_fi;
        out.f_d = lim(st.f_d + fd_dot * dt, p.f_min, p.f_max);
    } else {
        let s_dot = dead_zone(lim(fi.fx, p.f_ix_lo, p.f_ix_hi), p.d_x) / p.k_pi;
        out.s = lim(st.s + s_dot * dt, 0.0, 1.0);
    }
    out
}

/// The complete 6D fixture constraint: pose locked to the path at `s`,
/// axial force target handed to the operator.
pub fn fixture_target(path: &FittedPath, st: &VfState) -> (Pose, f64) {
    (path.eval(st.s).pose, st.f_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomath::Vec3;
    use crate::pathfit::{fit_scan_path, FitParams, WaypointSet};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> InteractionParams {
        InteractionParams::default()
    }

    fn straight_path() -> FittedPath {
        let set = WaypointSet::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(0.1, 0.0, 0.0),
                Vec3::new(0.2, 0.0, 0.0),
            ],
            vec![Vec3::z(); 3],
        )
        .unwrap();
        fit_scan_path(&set, &FitParams::default()).unwrap()
    }

    #[test]
    fn dead_zone_cases() {
        assert_eq!(dead_zone(0.5, 1.0), 0.0);
        assert_eq!(dead_zone(2.0, 1.0), 1.0);
        assert_eq!(dead_zone(-3.0, 1.0), -2.0);
    }

    #[test]
    fn dead_zone_is_continuous_at_the_boundary() {
        let d = 1.0;
        let mut f = d - 0.001;
        let mut prev = dead_zone(f, d);
        while f < d + 0.001 {
            f += 1e-6;
            let cur = dead_zone(f, d);
            assert!((cur - prev).abs() <= 1.5e-6);
            prev = cur;
        }
        assert!(dead_zone(d + 1e-12, d).abs() < 1e-11);
    }

    #[test]
    fn forces_inside_dead_zone_do_not_move_s() {
        let st = VfState::new(0.3, 6.0);
        let fi = InteractionForce { fx: 0.9, fz: 0.0 };
        let out = vf_step(&st, &fi, &params(), 0.02);
        assert_eq!(out.s, st.s);
        assert_eq!(out.f_d, st.f_d);
    }

    #[test]
    fn s_clamps_at_the_upper_end() {
        let st = VfState::new(1.0, 6.0);
        let fi = InteractionForce { fx: 20.0, fz: 0.0 };
        let out = vf_step(&st, &fi, &params(), 0.02);
        assert_eq!(out.s, 1.0);
    }

    #[test]
    fn pedal_pressed_integrates_desired_force() {
        // Constant fz above the dead zone for T seconds raises f_d by
        // (Lim(fz) - d_z) / k_fi * T, clamped at f_max.
        let p = params();
        let mut st = VfState {
            s: 0.5,
            f_d: 4.0,
            pedal: true,
        };
        let fi = InteractionForce { fx: 0.0, fz: 5.0 };
        let dt = 0.02;
        let steps = 150; // 3 s
        for _ in 0..steps {
            st = vf_step(&st, &fi, &p, dt);
        }
        let expect = 4.0 + (5.0 - p.d_z) / p.k_fi * (steps as f64 * dt);
        assert_relative_eq!(st.f_d, expect.min(p.f_max), epsilon = 1e-9);
        assert_eq!(st.s, 0.5);

        // Long enough to hit the clamp.
        for _ in 0..2000 {
            st = vf_step(&st, &fi, &p, dt);
        }
        assert_eq!(st.f_d, p.f_max);
    }

    #[test]
    fn pedal_routing_is_exclusive() {
        let p = params();
        let fi = InteractionForce { fx: 5.0, fz: 5.0 };
        let released = vf_step(
            &VfState {
                s: 0.2,
                f_d: 6.0,
                pedal: false,
            },
            &fi,
            &p,
            0.02,
        );
        assert!(released.s > 0.2);
        assert_eq!(released.f_d, 6.0);
        let pressed = vf_step(
            &VfState {
                s: 0.2,
                f_d: 6.0,
                pedal: true,
            },
            &fi,
            &p,
            0.02,
        );
        assert_eq!(pressed.s, 0.2);
        assert!(pressed.f_d > 6.0);
    }

    #[test]
    fn fixture_target_delegates_to_the_path() {
        let path = straight_path();
        let (pose0, fd0) = fixture_target(&path, &VfState::new(0.0, 6.0));
        assert!((pose0.position - path.start_position()).norm() < 1e-9);
        assert_eq!(fd0, 6.0);
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let (pose, _) = fixture_target(&path, &VfState::new(s, 6.0));
            assert!((pose.position - path.position(s)).norm() < 1e-12);
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let p = params();
        let run = || {
            let mut st = VfState::new(0.0, 3.0);
            let mut log = Vec::new();
            for k in 0..500 {
                let fi = InteractionForce {
                    fx: (k as f64 * 0.1).sin() * 6.0,
                    fz: (k as f64 * 0.07).cos() * 6.0,
                };
                st.pedal = k % 100 >= 50;
                st = vf_step(&st, &fi, &p, 0.02);
                log.push((st.s.to_bits(), st.f_d.to_bits()));
            }
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn validate_rejects_excessive_force_limit() {
        let p = InteractionParams {
            f_max: 20.0,
            ..params()
        };
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
    }

    proptest! {
        #[test]
        fn s_and_fd_stay_bounded(
            s0 in 0.0f64..1.0, fd0 in 0.0f64..15.0,
            pushes in proptest::collection::vec((-30.0f64..30.0, -30.0f64..30.0, any::<bool>()), 1..200)
        ) {
            let p = params();
            let mut st = VfState::new(s0, fd0.min(p.f_max));
            for (fx, fz, pedal) in pushes {
                st.pedal = pedal;
                let prev = st;
                st = vf_step(&st, &InteractionForce { fx, fz }, &p, 0.02);
                prop_assert!((0.0..=1.0).contains(&st.s));
                prop_assert!((p.f_min..=p.f_max).contains(&st.f_d));
                // Exclusive routing and monotone response to the push sign.
                if pedal {
                    prop_assert_eq!(st.s, prev.s);
                } else {
                    prop_assert_eq!(st.f_d, prev.f_d);
                    let dz = dead_zone(lim(fx, p.f_ix_lo, p.f_ix_hi), p.d_x);
                    if dz > 0.0 {
                        prop_assert!(st.s >= prev.s);
                    } else if dz < 0.0 {
                        prop_assert!(st.s <= prev.s);
                    } else {
                        prop_assert_eq!(st.s, prev.s);
                    }
                }
            }
        }
    }
}
