//! Quaternion, pose, and wrench algebra shared by every other module.
//!
//! Conventions: column vectors, transforms act on the left, `^A_B T` maps
//! B-frame coordinates into A. Unit quaternions are canonicalized to a
//! non-negative real part at construction, which resolves the double cover
//! once and makes orientation errors continuous.

use nalgebra::{Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = Matrix6<f64>;

/// Below this imaginary-part norm a quaternion is treated as the identity
/// rotation in the log map (and symmetrically in exp).
const AXIS_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeomathError {
    #[error("rotation matrix is not orthonormal (residual {residual:.3e})")]
    NonOrthonormal { residual: f64 },
    #[error("rotation matrix is a reflection (det = {det:.6})")]
    Reflection { det: f64 },
    #[error("slerp endpoints are a half turn apart; shortest arc is ambiguous")]
    DegenerateSlerp,
}

/// Unit quaternion `eta + eps_x i + eps_y j + eps_z k` with `eta >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    eta: f64,
    eps: Vec3,
}

impl UnitQuaternion {
    /// Builds a unit quaternion from raw parts, normalizing and
    /// canonicalizing the sign. A zero input yields the identity.
    pub fn new(eta: f64, eps: Vec3) -> Self {
        let norm = (eta * eta + eps.norm_squared()).sqrt();
        if norm < AXIS_EPS {
            return Self::identity();
        }
        Self::canonicalize(eta / norm, eps / norm)
    }

    fn canonicalize(eta: f64, eps: Vec3) -> Self {
        let flip = eta < 0.0
            || (eta == 0.0 && {
                let first = if eps.x != 0.0 {
                    eps.x
                } else if eps.y != 0.0 {
                    eps.y
                } else {
                    eps.z
                };
                first < 0.0
            });
        if flip {
            Self {
                eta: -eta,
                eps: -eps,
            }
        } else {
            Self { eta, eps }
        }
    }

    pub fn identity() -> Self {
        Self {
            eta: 1.0,
            eps: Vec3::zeros(),
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n < AXIS_EPS {
            return Self::identity();
        }
        let half = 0.5 * angle;
        Self::new(half.cos(), axis * (half.sin() / n))
    }

    /// Real (scalar) part.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Imaginary (vector) part.
    pub fn eps(&self) -> Vec3 {
        self.eps
    }

    pub fn conjugate(&self) -> Self {
        // eta >= 0 is preserved, no re-canonicalization needed.
        Self {
            eta: self.eta,
            eps: -self.eps,
        }
    }

    /// Hamilton product, canonicalized.
    pub fn mul(&self, rhs: &Self) -> Self {
        let eta = self.eta * rhs.eta - self.eps.dot(&rhs.eps);
        let eps = rhs.eps * self.eta + self.eps * rhs.eta + self.eps.cross(&rhs.eps);
        Self::canonicalize(eta, eps)
    }

    /// Four-vector dot product of the canonical representatives.
    pub fn dot4(&self, rhs: &Self) -> f64 {
        self.eta * rhs.eta + self.eps.dot(&rhs.eps)
    }

    /// Rotation angle in [0, pi] separating two orientations.
    pub fn angle_to(&self, rhs: &Self) -> f64 {
        2.0 * quat_log(&self.conjugate().mul(rhs)).norm()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let t = 2.0 * self.eps.cross(v);
        v + t * self.eta + self.eps.cross(&t)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.eta, self.eps.x, self.eps.y, self.eps.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Shepperd's method; the input is assumed orthonormal.
    pub fn from_rotation_matrix(r: &Mat3) -> Self {
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let (eta, eps);
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            eta = 0.25 * s;
            eps = Vec3::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            );
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            eta = (r[(2, 1)] - r[(1, 2)]) / s;
            eps = Vec3::new(
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            );
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            eta = (r[(0, 2)] - r[(2, 0)]) / s;
            eps = Vec3::new(
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            );
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            eta = (r[(1, 0)] - r[(0, 1)]) / s;
            eps = Vec3::new(
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            );
        }
        Self::new(eta, eps)
    }
}

/// Logarithmic map: `arccos(eta) * eps / |eps|`, zero for the identity.
///
/// Computed as `atan2(|eps|, eta)` — identical on unit quaternions and
/// numerically stable where arccos degrades near the identity. Canonical
/// quaternions have `eta >= 0`, so the result norm is at most pi/2 (a
/// half-angle representation of rotations up to a half turn).
pub fn quat_log(q: &UnitQuaternion) -> Vec3 {
    let n = q.eps().norm();
    if n < AXIS_EPS {
        return Vec3::zeros();
    }
    q.eps() * (n.atan2(q.eta()) / n)
}

/// Exponential map: `[cos|r|, sin|r| r/|r|]`, identity for `r = 0`.
pub fn quat_exp(r: &Vec3) -> UnitQuaternion {
    let n = r.norm();
    if n < AXIS_EPS {
        return UnitQuaternion::identity();
    }
    UnitQuaternion::new(n.cos(), r * (n.sin() / n))
}

/// Orientation error `e_o = -R * vec(conj(Q) * Q_d)`.
///
/// Zero iff `Q` and `Q_d` represent the same rotation; the canonical
/// product keeps the vector part on the shorter arc.
pub fn orientation_error(q: &UnitQuaternion, q_d: &UnitQuaternion, r: &Mat3) -> Vec3 {
    -(r * q.conjugate().mul(q_d).eps())
}

/// Geodesic interpolation on the shorter arc, `t` in [0, 1].
pub fn slerp(
    q0: &UnitQuaternion,
    q1: &UnitQuaternion,
    t: f64,
) -> Result<UnitQuaternion, GeomathError> {
    let mut dot = q0.dot4(q1);
    // A half-turn separation leaves the interpolation axis undefined.
    if dot.abs() < 1e-9 {
        return Err(GeomathError::DegenerateSlerp);
    }
    let mut sign = 1.0;
    if dot < 0.0 {
        sign = -1.0;
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        return Ok(*q0);
    }
    let omega = dot.clamp(-1.0, 1.0).acos();
    let sin_omega = omega.sin();
    let a = ((1.0 - t) * omega).sin() / sin_omega;
    let b = (t * omega).sin() / sin_omega * sign;
    Ok(UnitQuaternion::new(
        a * q0.eta() + b * q1.eta(),
        a * q0.eps() + b * q1.eps(),
    ))
}

/// Position plus orientation of a frame, expressed in a parent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), UnitQuaternion::identity())
    }
}

/// Force/torque pair in newtons and newton-meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn new(force: Vec3, torque: Vec3) -> Self {
        Self { force, torque }
    }

    pub fn zero() -> Self {
        Self::new(Vec3::zeros(), Vec3::zeros())
    }
}

/// Rigid transform with a validated rotation block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl FrameTransform {
    /// Rejects rotation blocks that are not proper rotations (orthonormal,
    /// determinant +1, both within 1e-9).
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeomathError> {
        let residual = (rotation * rotation.transpose() - Mat3::identity())
            .abs()
            .max();
        if residual > 1e-9 {
            return Err(GeomathError::NonOrthonormal { residual });
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(GeomathError::Reflection { det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_pose(pose: &Pose) -> Self {
        Self {
            rotation: pose.orientation.rotation_matrix(),
            translation: pose.position,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `^A_C T = ^A_B T * ^B_C T`.
    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// 6x6 wrench transform `[R, 0; [p]x R, R]` acting on stacked
    /// `[force; torque]` vectors.
    pub fn twist_transform(&self) -> Mat6 {
        let mut t = Mat6::zeros();
        let px = skew(&self.translation);
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        t.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(px * self.rotation));
        t.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        t
    }
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Re-expresses a wrench through a 6x6 twist transform. A pure force picks
/// up the lever-arm torque `p x (R f)`; the force magnitude is preserved.
pub fn wrench_transform(t_tw: &Mat6, w: &Wrench) -> Wrench {
    let stacked = Vec6::new(
        w.force.x, w.force.y, w.force.z, w.torque.x, w.torque.y, w.torque.z,
    );
    let out: SMatrix<f64, 6, 1> = t_tw * stacked;
    Wrench::new(
        Vec3::new(out[0], out[1], out[2]),
        Vec3::new(out[3], out[4], out[5]),
    )
}
