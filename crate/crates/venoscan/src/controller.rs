//! Hybrid force/motion control stack.
//!
//! The probe pose is regulated by a Cartesian impedance law in torque space
//! with a null-space posture term; the contact force along the probe axis is
//! regulated by adapting the desired position through an integrated velocity
//! command. The force error is shaped by a bounded barrier transformation
//! that stiffens feedback near the error constraint `±k_c` yet stays finite
//! (slope one) beyond it, and a first-order contact detector blends the
//! force law with a constant approach velocity for soft landing.
//!
//! Sign conventions: the probe frame z-axis is the outward surface normal,
//! so the pressing direction is `n_z = -R.column(2)`. Contact force `f` is
//! the axial force the probe exerts on the tissue (positive in compression);
//! positive `v_f` advances the force-control setpoint deeper into the
//! tissue.

use crate::geomath::{orientation_error, Mat6, Pose, UnitQuaternion, Vec3, Vec6, Wrench};
use nalgebra::{SMatrix, SVector};
use thiserror::Error;

pub type Vec7 = SVector<f64, 7>;
pub type Jacobian = SMatrix<f64, 6, 7>;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("shape parameter k_s = {k_s} is invalid: 3 k_s must exceed sqrt(4 - 3 k_s^2)")]
    InvalidShapeParameter { k_s: f64 },
    #[error("constraint k_c = {k_c} must be positive")]
    InvalidConstraint { k_c: f64 },
    #[error("Jacobian is rank deficient (rank {rank} < 6); configuration is singular")]
    SingularConfiguration { rank: usize },
}

/// Clamp to a closed interval, `Lim(x, lo, hi)`.
pub fn lim(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

/// Derives the barrier constants `(zeta, k_h, k_n)` from the shape
/// parameter `k_s` and the error constraint `k_c`:
///
/// `zeta  = sqrt((3 k_s - sqrt(4 - 3 k_s^2)) / (2 k_s))`
/// `k_h   = ln(sqrt((1 + zeta) / (1 - zeta)))`
/// `k_n   = 1 / (T(zeta) zeta)`
pub fn derive_constants(k_s: f64, k_c: f64) -> Result<(f64, f64, f64), ControlError> {
    if !(0.0 < k_s && k_s < 1.0) {
        return Err(ControlError::InvalidShapeParameter { k_s });
    }
    if k_c <= 0.0 {
        return Err(ControlError::InvalidConstraint { k_c });
    }
    let radicand = 3.0 * k_s - (4.0 - 3.0 * k_s * k_s).sqrt();
    if radicand <= 0.0 {
        return Err(ControlError::InvalidShapeParameter { k_s });
    }
    let zeta = (radicand / (2.0 * k_s)).sqrt();
    let k_h = ((1.0 + zeta) / (1.0 - zeta)).sqrt().ln();
    let k_n = 1.0 / (t_shape(zeta, k_h, k_s, k_c) * zeta);
    Ok((zeta, k_h, k_n))
}

/// `T(z) = (k_h k_s^2 / k_c) (1 - z^2) / (1 - k_s^2 z^2)^2`.
fn t_shape(z: f64, k_h: f64, k_s: f64, k_c: f64) -> f64 {
    let z2 = z * z;
    let ks2 = k_s * k_s;
    (k_h * ks2 / k_c) * (1.0 - z2) / ((1.0 - ks2 * z2) * (1.0 - ks2 * z2))
}

/// Parameters of the transformed force law `v_f' = -k_mf e_f~ - k_f e_f`.
#[derive(Debug, Clone)]
pub struct ForceLawParams {
    pub k_c: f64,
    pub k_s: f64,
    pub zeta: f64,
    pub k_h: f64,
    pub k_n: f64,
    pub k_mf: f64,
    pub k_f: f64,
}

impl ForceLawParams {
    pub fn new(k_s: f64, k_c: f64, k_mf: f64, k_f: f64) -> Result<Self, ControlError> {
        let (zeta, k_h, k_n) = derive_constants(k_s, k_c)?;
        Ok(Self {
            k_c,
            k_s,
            zeta,
            k_h,
            k_n,
            k_mf,
            k_f,
        })
    }
}

impl Default for ForceLawParams {
    fn default() -> Self {
        Self::new(0.99, 0.4, 0.008, 0.0065).expect("default force-law parameters are valid")
    }
}

/// Bounded barrier error transformation
/// `eps_f = |e_f| k_n T(z) z`, `z = tanh(k_h Lim(e_f, -k_c, k_c) / k_c)`.
///
/// Odd, continuous, equal to `e_f` at and beyond `±k_c`, finite for any
/// input — the clamp inside `tanh` keeps the map total where a log-type
/// barrier would blow up.
pub fn transform_error(e_f: f64, p: &ForceLawParams) -> f64 {
    let z = (p.k_h * lim(e_f, -p.k_c, p.k_c) / p.k_c).tanh();
    e_f.abs() * p.k_n * t_shape(z, p.k_h, p.k_s, p.k_c) * z
}

/// Velocity force law in the contact space, `v_f' = -k_mf eps_f - k_f e_f`.
pub fn force_law(e_f: f64, p: &ForceLawParams) -> f64 {
    -p.k_mf * transform_error(e_f, p) - p.k_f * e_f
}

/// Linear comparison law `v' = -k e_f`.
pub fn baseline_force_law(e_f: f64, k: f64) -> f64 {
    -k * e_f
}

/// Contact-establishment detector: a saturated first-order filter from
/// measured force to the blend signal `alpha` in [0, 1].
#[derive(Debug, Clone)]
pub struct SoftLandingState {
    pub alpha: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub k_alpha: f64,
    pub v0: f64,
}

impl Default for SoftLandingState {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            f_lo: 1.0,
            f_hi: 2.0,
            k_alpha: 10.0,
            v0: 0.015,
        }
    }
}

/// `Clamp(f, lo, hi)`: 0 below `lo`, `f` inside, `hi` above.
pub fn contact_clamp(f: f64, f_lo: f64, f_hi: f64) -> f64 {
    if f < f_lo {
        0.0
    } else if f > f_hi {
        f_hi
    } else {
        f
    }
}

/// One explicit-Euler step of `alpha' = k_alpha (Clamp(f) - f_hi alpha)`.
///
/// Stable for `dt < 2 / (f_hi k_alpha)` (0.1 s at the defaults, two orders
/// above the 1 ms control step). Returns the updated alpha.
pub fn soft_landing_update(st: &mut SoftLandingState, f: f64, dt: f64) -> f64 {
    let clamp = contact_clamp(f, st.f_lo, st.f_hi);
    st.alpha += st.k_alpha * (clamp - st.f_hi * st.alpha) * dt;
    st.alpha = st.alpha.clamp(0.0, 1.0);
    st.alpha
}

/// `v_f = alpha v_f' + (1 - alpha) v0` — approach velocity in free space,
/// force law once contact is established.
pub fn blend_velocity(alpha: f64, v_f_prime: f64, v0: f64) -> f64 {
    alpha * v_f_prime + (1.0 - alpha) * v0
}

/// Axial contact force: `f = n_s^T T_tw w` with `n_s = [n_z^T, 0, 0, 0]^T`.
///
/// `w` is the calibrated wrench the probe applies to the environment,
/// expressed in the probe frame; `t_tw` carries it to the base frame, and
/// `n_s` selects the force component along the pressing axis while
/// filtering out torques. Positive in compression.
pub fn measured_axial_force(w: &Wrench, t_tw: &Mat6, n_z: &Vec3) -> f64 {
    let f_base = crate::geomath::wrench_transform(t_tw, w);
    n_z.dot(&f_base.force)
}

/// Stiffness/damping configuration for the Cartesian and null-space loops.
///
/// The Cartesian damping matrix realizes the selected damping ratio on the
/// actual task-space inertia via double diagonalization,
/// `K_d = 2 zeta A (A^-1 K_p A^-1)^(1/2) A` with `A = Lambda^(1/2)`,
/// recomputed per tick from the Jacobian. Null-space damping uses the
/// joint-inertia-weighted diagonal rule.
#[derive(Debug, Clone)]
pub struct ControllerGains {
    pub kp_c: Vec6,
    pub kp_q: Vec7,
    pub kd_q: Vec7,
    pub damping_ratio: f64,
    /// Controller-side joint inertia model; exact under the resolved-
    /// dynamics assumption.
    pub joint_inertia: Vec7,
}

/// Default joint-space inertia diagonal shared with the plant model.
pub const DEFAULT_JOINT_INERTIA: [f64; 7] = [1.2, 1.2, 0.7, 0.7, 0.35, 0.15, 0.08];

impl ControllerGains {
    pub fn new(
        kp_trans: f64,
        kp_rot: f64,
        kp_q: f64,
        damping_ratio: f64,
        joint_inertia: Vec7,
    ) -> Self {
        let kp_c = Vec6::new(kp_trans, kp_trans, kp_trans, kp_rot, kp_rot, kp_rot);
        let kp_q_v = Vec7::repeat(kp_q);
        let kd_q = Vec7::from_fn(|i, _| 2.0 * damping_ratio * (kp_q * joint_inertia[i]).sqrt());
        Self {
            kp_c,
            kp_q: kp_q_v,
            kd_q,
            damping_ratio,
            joint_inertia,
        }
    }
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self::new(
            1200.0,
            90.0,
            1e-3,
            0.8,
            Vec7::from_column_slice(&DEFAULT_JOINT_INERTIA),
        )
    }
}

/// Symmetric square root of an SPD 6x6 matrix.
fn sqrtm_spd(m: &SMatrix<f64, 6, 6>) -> SMatrix<f64, 6, 6> {
    let eig = m.symmetric_eigen();
    let mut d = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..6 {
        d[(i, i)] = eig.eigenvalues[i].max(0.0).sqrt();
    }
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Robot state as seen by the controller.
#[derive(Debug, Clone)]
pub struct RobotState {
    pub q: Vec7,
    pub qdot: Vec7,
    /// Probe frame pose in the base frame.
    pub ee_pose: Pose,
    /// Probe-frame spatial velocity `[v; omega]` in the base frame.
    pub xdot: Vec6,
    /// Geometric Jacobian of the probe frame.
    pub jacobian: Jacobian,
}

impl RobotState {
    /// Pressing direction: the probe points along the negative z-axis of
    /// its own frame (the frame z is the outward surface normal).
    pub fn pressing_axis(&self) -> Vec3 {
        -self.ee_pose.orientation.rotation_matrix().column(2)
    }
}

/// Pose/force target of the hybrid controller.
#[derive(Debug, Clone)]
pub struct ForceTrackingTarget {
    /// Desired axial contact force in newtons.
    pub f_d: f64,
    /// Desired position from the path (before axial filtering).
    pub x_d: Vec3,
    /// Desired orientation from the path.
    pub q_d: UnitQuaternion,
    /// Null-space posture.
    pub q_posture: Vec7,
    /// Accumulated axial offset of the position setpoint from the path
    /// point, along the pressing axis. Driven only by `v_f`.
    pub fz_integral: f64,
}

impl ForceTrackingTarget {
    pub fn new(f_d: f64, x_d: Vec3, q_d: UnitQuaternion, q_posture: Vec7) -> Self {
        Self {
            f_d,
            x_d,
            q_d,
            q_posture,
            fz_integral: 0.0,
        }
    }

    /// Anchors the axial integrator at the probe's current offset from the
    /// desired position along the pressing axis, so activating the
    /// controller (or swapping the path) produces no setpoint jump.
    pub fn anchor(&mut self, rs: &RobotState) {
        self.fz_integral = rs.pressing_axis().dot(&(rs.ee_pose.position - self.x_d));
    }
}

/// Hybrid force/motion torque law.
///
/// Advances the axial integrator by `v_f dt` and forms the pose error
/// against the desired position filtered through `P_m = I - n_z n_z^T`
/// with the axial channel replaced by the integrator: evaluated with the
/// origin at the current path point, `P_m x_d + n_z (n_z^T x_d +
/// fz_integral) = x_d + n_z fz_integral`, which keeps the decomposition
/// independent of the base-frame origin while the force loop owns the
/// axial coordinate. Returns
/// `tau = J^T (-Kp_c x_e - Kd_c xdot) + N (-Kp_q q_e - Kd_q qdot)`
/// with `N = I - J^T (J^T)^+` projecting the posture torques into the null
/// space of the Cartesian task.
pub fn hfmc_torque(
    rs: &RobotState,
    tgt: &mut ForceTrackingTarget,
    v_f: f64,
    g: &ControllerGains,
    dt: f64,
) -> Result<Vec7, ControlError> {
    let j = &rs.jacobian;
    let jjt = j * j.transpose();
    // Rank check on J J^T: a singular configuration collapses the task.
    let svd = jjt.svd(false, false);
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > max_sv * 1e-12 && s > 1e-14)
        .count();
    if rank < 6 {
        return Err(ControlError::SingularConfiguration { rank });
    }
    let jjt_inv = jjt
        .try_inverse()
        .ok_or(ControlError::SingularConfiguration { rank })?;

    tgt.fz_integral += v_f * dt;
    let n_z = rs.pressing_axis();
    let r = rs.ee_pose.orientation.rotation_matrix();
    let x_d_filtered = tgt.x_d + n_z * tgt.fz_integral;
    let e_pos = rs.ee_pose.position - x_d_filtered;
    let e_ort = orientation_error(&rs.ee_pose.orientation, &tgt.q_d, &r);
    let x_e = Vec6::new(e_pos.x, e_pos.y, e_pos.z, e_ort.x, e_ort.y, e_ort.z);

    // Task-space inertia and the double-diagonalization damping matrix
    // realizing the selected damping ratio on every Cartesian mode.
    let m_inv_jt = SMatrix::<f64, 7, 6>::from_fn(|r_i, c| j[(c, r_i)] / g.joint_inertia[r_i]);
    let lambda = (j * m_inv_jt)
        .try_inverse()
        .ok_or(ControlError::SingularConfiguration { rank })?;
    let a = sqrtm_spd(&lambda);
    let a_inv = a
        .try_inverse()
        .ok_or(ControlError::SingularConfiguration { rank })?;
    let kp_mat = SMatrix::<f64, 6, 6>::from_diagonal(&g.kp_c);
    let kd_c = a * sqrtm_spd(&(a_inv * kp_mat * a_inv)) * a * (2.0 * g.damping_ratio);

    let cart = j.transpose() * (-g.kp_c.component_mul(&x_e) - kd_c * rs.xdot);

    // N = I - J^T (J J^T)^-1 J
    let nullspace = SMatrix::<f64, 7, 7>::identity() - j.transpose() * jjt_inv * j;
    let q_e = rs.q - tgt.q_posture;
    let posture = nullspace * (-g.kp_q.component_mul(&q_e) - g.kd_q.component_mul(&rs.qdot));

    Ok(cart + posture)
}
