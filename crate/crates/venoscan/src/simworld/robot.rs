//! Seven-joint serial arm with simplified rigid dynamics.
//!
//! Classic DH chain (`A_i = Rz(theta) Tz(d) Tx(a) Rx(alpha)`) terminated by
//! a fixed probe mount whose frame carries the ultrasound probe tip. Gravity,
//! Coriolis, and friction are absent by construction — the plant realizes
//! exactly the regime the controller assumes — leaving `M qdd = tau + J^T w`.

use crate::controller::{Jacobian, RobotState, Vec7};
use crate::geomath::{FrameTransform, Mat3, Pose, UnitQuaternion, Vec3, Wrench};
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

/// Kinematic and dynamic description of the arm plus probe mount.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub dh: [DhRow; 7],
    /// Probe mount: probe-tip frame expressed in the flange frame.
    pub probe_mount: FrameTransform,
    /// Diagonal joint-space inertia (kg m^2).
    pub inertia: Vec7,
    pub joint_limits: [(f64, f64); 7],
    pub torque_limits: Vec7,
}

impl RobotModel {
    /// Anthropomorphic S-R-S arm with the probe mounted so that the probe
    /// frame z-axis points back along the approach direction (outward
    /// normal of the scanned surface) and joint 7 rolls the probe about
    /// its own axis.
    pub fn default_table() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let row = |a: f64, alpha: f64, d: f64| DhRow {
            a,
            alpha,
            d,
            theta_offset: 0.0,
        };
        let mount_rot = UnitQuaternion::from_axis_angle(&Vec3::y(), PI).rotation_matrix();
        Self {
            dh: [
                row(0.0, -FRAC_PI_2, 0.340),
                row(0.0, FRAC_PI_2, 0.0),
                row(0.0, FRAC_PI_2, 0.400),
                row(0.0, -FRAC_PI_2, 0.0),
                row(0.0, -FRAC_PI_2, 0.400),
                row(0.0, FRAC_PI_2, 0.0),
                row(0.0, 0.0, 0.126),
            ],
            probe_mount: FrameTransform::new(mount_rot, Vec3::new(0.0, 0.0, 0.110))
                .expect("probe mount rotation is orthonormal"),
            inertia: Vec7::from_column_slice(&[1.2, 1.2, 0.7, 0.7, 0.35, 0.15, 0.08]),
            joint_limits: [
                (-2.96, 2.96),
                (-2.09, 2.09),
                (-2.96, 2.96),
                (-2.09, 2.09),
                (-2.96, 2.96),
                (-2.09, 2.09),
                (-3.30, 3.30),
            ],
            torque_limits: Vec7::from_column_slice(&[
                320.0, 320.0, 176.0, 176.0, 110.0, 40.0, 40.0,
            ]),
        }
    }

    fn check_limits(&self, q: &Vec7) -> Result<(), SimError> {
        for (i, (&qi, (lo, hi))) in q.iter().zip(self.joint_limits).enumerate() {
            if qi < lo || qi > hi {
                return Err(SimError::JointLimit {
                    joint: i,
                    value: qi,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Forward kinematics of the probe frame and its geometric Jacobian.
    pub fn kinematics(&self, q: &Vec7) -> Result<(Pose, Jacobian), SimError> {
        self.check_limits(q)?;
        // Joint axes and origins accumulated along the chain.
        let mut t = FrameTransform::identity();
        let mut axes = [Vec3::z(); 7];
        let mut origins = [Vec3::zeros(); 7];
        for i in 0..7 {
            axes[i] = *t.rotation() * Vec3::z();
            origins[i] = *t.translation();
            t = t.compose(&dh_transform(&self.dh[i], q[i]));
        }
        let probe = t.compose(&self.probe_mount);
        let tip = *probe.translation();
        let mut j = Jacobian::zeros();
        for i in 0..7 {
            let lin = axes[i].cross(&(tip - origins[i]));
            for r in 0..3 {
                j[(r, i)] = lin[r];
                j[(3 + r, i)] = axes[i][r];
            }
        }
        let pose = Pose::new(tip, UnitQuaternion::from_rotation_matrix(probe.rotation()));
        Ok((pose, j))
    }

    /// Assembles a full controller-facing state from joint values.
    pub fn state_from(&self, q: Vec7, qdot: Vec7) -> Result<RobotState, SimError> {
        let (ee_pose, jacobian) = self.kinematics(&q)?;
        let xdot = jacobian * qdot;
        Ok(RobotState {
            q,
            qdot,
            ee_pose,
            xdot,
            jacobian,
        })
    }

    /// One semi-implicit Euler step of `M qdd = tau + J^T w_ext`; torques
    /// are saturated to the actuator limits and the event is flagged.
    /// `w_ext` is the external wrench on the probe in the base frame.
    pub fn step(
        &self,
        state: &RobotState,
        tau: &Vec7,
        w_ext: &Wrench,
        dt: f64,
    ) -> Result<(RobotState, bool), SimError> {
        assert!(dt > 0.0);
        let mut saturated = false;
        let mut tau_sat = *tau;
        for i in 0..7 {
            let limit = self.torque_limits[i];
            if tau_sat[i].abs() > limit {
                tau_sat[i] = tau_sat[i].clamp(-limit, limit);
                saturated = true;
            }
        }
        let mut w6 = nalgebra::SVector::<f64, 6>::zeros();
        w6.fixed_rows_mut::<3>(0).copy_from(&w_ext.force);
        w6.fixed_rows_mut::<3>(3).copy_from(&w_ext.torque);
        let joint_force = state.jacobian.transpose() * w6;
        let qddot = (tau_sat + joint_force).component_div(&self.inertia);
        let qdot = state.qdot + qddot * dt;
        let q = state.q + qdot * dt;
        if q.iter().any(|v| !v.is_finite()) || qdot.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged { t_last: f64::NAN });
        }
        Ok((self.state_from(q, qdot)?, saturated))
    }
}

fn dh_transform(row: &DhRow, q: f64) -> FrameTransform {
    let theta = q + row.theta_offset;
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    let rotation = Mat3::new(
        ct,
        -st * ca,
        st * sa, //
        st,
        ct * ca,
        -ct * sa, //
        0.0,
        sa,
        ca,
    );
    let translation = Vec3::new(row.a * ct, row.a * st, row.d);
    FrameTransform::new(rotation, translation).expect("DH rotation is orthonormal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn home_pose_matches_hand_computed_chain() {
        // All joints zero: links stack along z, the probe mount flips the
        // frame about y. Chain product computed by hand:
        //   z = 0.340 + 0.400 + 0.400 + 0.126 + 0.110, R = Ry(pi).
        let m = RobotModel::default_table();
        let (pose, _) = m.kinematics(&Vec7::zeros()).unwrap();
        assert_relative_eq!(pose.position.z, 1.376, epsilon = 1e-12);
        assert!(pose.position.xy().norm() < 1e-12);
        let expect = UnitQuaternion::from_axis_angle(&Vec3::y(), std::f64::consts::PI);
        assert!(pose.orientation.angle_to(&expect) < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = RobotModel::default_table();
        let q = Vec7::from_column_slice(&[0.1, 0.6, -0.2, -1.2, 0.3, 1.3, 0.5]);
        let (pose, j) = m.kinematics(&q).unwrap();
        let h = 1e-7;
        for i in 0..7 {
            let mut qp = q;
            qp[i] += h;
            let (pose_p, _) = m.kinematics(&qp).unwrap();
            let dp = (pose_p.position - pose.position) / h;
            for r in 0..3 {
                assert!((j[(r, i)] - dp[r]).abs() < 1e-5, "joint {i} row {r}");
            }
            // Rotational part against the quaternion difference.
            let dq = pose_p.orientation.mul(&pose.orientation.conjugate());
            let omega = 2.0 * crate::geomath::quat_log(&dq) / h;
            for r in 0..3 {
                assert!((j[(3 + r, i)] - omega[r]).abs() < 1e-5, "joint {i} rot {r}");
            }
        }
    }

    #[test]
    fn wrist_roll_leaves_tip_fixed() {
        let m = RobotModel::default_table();
        let mut q = Vec7::from_column_slice(&[0.0, 0.5, 0.0, -1.0, 0.0, 1.0, 0.0]);
        let (pose0, _) = m.kinematics(&q).unwrap();
        for k in 1..8 {
            q[6] = k as f64 * 0.4;
            let (pose, _) = m.kinematics(&q).unwrap();
            assert!((pose.position - pose0.position).norm() < 1e-12);
        }
    }

    #[test]
    fn out_of_limit_joint_is_rejected() {
        let m = RobotModel::default_table();
        let mut q = Vec7::zeros();
        q[1] = 3.0;
        assert!(matches!(
            m.kinematics(&q),
            Err(SimError::JointLimit { joint: 1, .. })
        ));
    }

    #[test]
    fn free_robot_at_rest_stays_at_rest() {
        let m = RobotModel::default_table();
        let st = m.state_from(Vec7::zeros(), Vec7::zeros()).unwrap();
        let (next, saturated) = m.step(&st, &Vec7::zeros(), &Wrench::zero(), 1e-3).unwrap();
        assert!(!saturated);
        assert_eq!(next.q, st.q);
        assert_eq!(next.qdot, st.qdot);
    }

    #[test]
    fn constant_torque_integrates_like_a_double_integrator() {
        let m = RobotModel::default_table();
        let mut st = m.state_from(Vec7::zeros(), Vec7::zeros()).unwrap();
        let mut tau = Vec7::zeros();
        tau[2] = 0.3;
        let dt = 1e-3;
        let steps = 500;
        for _ in 0..steps {
            st = m.step(&st, &tau, &Wrench::zero(), dt).unwrap().0;
        }
        let t = steps as f64 * dt;
        let expect_qdot = tau[2] / m.inertia[2] * t;
        assert_relative_eq!(st.qdot[2], expect_qdot, epsilon = 1e-9);
        // Semi-implicit Euler position: tau/I * dt^2 * n(n+1)/2.
        let n = steps as f64;
        let expect_q = tau[2] / m.inertia[2] * dt * dt * n * (n + 1.0) / 2.0;
        assert_relative_eq!(st.q[2], expect_q, epsilon = 1e-9);
    }

    #[test]
    fn torque_saturation_is_flagged() {
        let m = RobotModel::default_table();
        let st = m.state_from(Vec7::zeros(), Vec7::zeros()).unwrap();
        let mut tau = Vec7::zeros();
        tau[5] = 1e4;
        let (_, saturated) = m.step(&st, &tau, &Wrench::zero(), 1e-3).unwrap();
        assert!(saturated);
    }

    #[test]
    fn damped_stiffness_control_dissipates_energy() {
        // Pure joint-space spring-damper, no contact: the discrete energy
        // (kinetic + spring) must not grow.
        let m = RobotModel::default_table();
        let q_target = Vec7::from_column_slice(&[0.1, 0.5, -0.1, -1.0, 0.2, 1.1, 0.4]);
        let kp = 50.0;
        let kd = 12.0;
        let mut st = m
            .state_from(
                Vec7::from_column_slice(&[0.0, 0.3, 0.0, -0.8, 0.0, 0.9, 0.0]),
                Vec7::zeros(),
            )
            .unwrap();
        let dt = 1e-3;
        let energy = |st: &RobotState| {
            let kinetic: f64 = (0..7)
                .map(|i| 0.5 * m.inertia[i] * st.qdot[i] * st.qdot[i])
                .sum();
            let spring: f64 = (0..7)
                .map(|i| 0.5 * kp * (st.q[i] - q_target[i]).powi(2))
                .sum();
            kinetic + spring
        };
        let mut prev = energy(&st);
        for _ in 0..4000 {
            let tau = (q_target - st.q) * kp - st.qdot * kd;
            st = m.step(&st, &tau, &Wrench::zero(), dt).unwrap().0;
            let now = energy(&st);
            assert!(now <= prev * (1.0 + 1e-9), "energy grew: {prev} -> {now}");
            prev = now;
        }
        assert!((st.q - q_target).norm() < 1e-3);
    }
}
