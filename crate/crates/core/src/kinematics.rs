//! Planar two-link leg kinematics and joint-space PD control.
//!
//! Each leg has a hip-pitch joint `q1` and a knee joint `q2` acting in the
//! sagittal (x–z) plane of the hip; abduction is a rigid strut of length
//! `hip_offset_y`. Angles follow this convention:
//!
//! ```text
//! x = -l_thigh sin(q1) - l_calf sin(q1 - q2)
//! z = -l_thigh cos(q1) - l_calf cos(q1 - q2)
//! ```
//!
//! so `q = (0, 0)` is the leg hanging straight down, positive `q1` swings the
//! foot backward, and positive knee flexion `q2 ∈ (0, pi)` puts the knee
//! behind the hip–foot line.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{JOINT_COUNT, LEG_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    pub thigh_length: f64,
    pub calf_length: f64,
    /// Lateral distance from the hip joint to the leg plane (m), applied
    /// outward on each side.
    pub hip_offset_y: f64,
    /// Hip joint positions relative to the trunk center of mass (m).
    pub hip_positions: [[f64; 3]; LEG_COUNT],
}

impl Default for LegGeometry {
    fn default() -> Self {
        let (hx, hy) = (0.1881, 0.04675);
        Self {
            thigh_length: 0.213,
            calf_length: 0.213,
            hip_offset_y: 0.08,
            hip_positions: [
                [hx, -hy, 0.0],
                [hx, hy, 0.0],
                [-hx, -hy, 0.0],
                [-hx, hy, 0.0],
            ],
        }
    }
}

impl LegGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.thigh_length > 0.0 && self.calf_length > 0.0) {
            return Err(Error::InvalidArgument(
                "link lengths must be positive".into(),
            ));
        }
        if !(self.hip_offset_y.is_finite()
            && self.hip_positions.iter().flatten().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("leg geometry"));
        }
        Ok(())
    }

    pub fn max_reach(&self) -> f64 {
        self.thigh_length + self.calf_length
    }

    pub fn min_reach(&self) -> f64 {
        (self.thigh_length - self.calf_length).abs()
    }

    /// Lateral foot position of `leg` relative to the trunk center (m).
    pub fn foot_y(&self, leg: usize) -> f64 {
        let hip_y = self.hip_positions[leg][1];
        hip_y + self.hip_offset_y.copysign(hip_y)
    }
}

/// Joint angles and velocities, ordered `[hip_0, knee_0, hip_1, knee_1, ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: [f64; JOINT_COUNT],
    pub qdot: [f64; JOINT_COUNT],
}

impl JointState {
    pub fn leg_angles(&self, leg: usize) -> (f64, f64) {
        (self.q[2 * leg], self.q[2 * leg + 1])
    }

    pub fn leg_velocities(&self, leg: usize) -> (f64, f64) {
        (self.qdot[2 * leg], self.qdot[2 * leg + 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for JointGains {
    fn default() -> Self {
        Self { kp: 70.0, kd: 1.3 }
    }
}

/// Foot position `(x, z)` in the hip frame for joint angles `(hip, knee)`.
pub fn forward_kinematics(q: (f64, f64), geom: &LegGeometry) -> (f64, f64) {
    let (q1, q2) = q;
    let (l1, l2) = (geom.thigh_length, geom.calf_length);
    let x = -l1 * q1.sin() - l2 * (q1 - q2).sin();
    let z = -l1 * q1.cos() - l2 * (q1 - q2).cos();
    (x, z)
}

/// Knee-backward inverse kinematics of a sagittal foot target.
pub fn inverse_kinematics(x: f64, z: f64, geom: &LegGeometry) -> Result<(f64, f64)> {
    if !(x.is_finite() && z.is_finite()) {
        return Err(Error::NonFinite("foot target"));
    }
    let (l1, l2) = (geom.thigh_length, geom.calf_length);
    let d2 = x * x + z * z;
    let d = d2.sqrt();
    let tol = 1e-12 * geom.max_reach();
    if d > geom.max_reach() + tol || d < geom.min_reach() - tol || d == 0.0 {
        return Err(Error::OutOfWorkspace { x, z });
    }
    let cos_knee = ((d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let knee = cos_knee.acos();
    let direction = (-x).atan2(-z);
    let thigh_offset = (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
    Ok((direction + thigh_offset, knee))
}

/// Pulls a target radially into the reachable annulus, leaving `margin` (m)
/// inside each boundary.
pub fn clamp_to_workspace(x: f64, z: f64, geom: &LegGeometry, margin: f64) -> (f64, f64) {
    let d = x.hypot(z);
    let lo = geom.min_reach() + margin;
    let hi = geom.max_reach() - margin;
    if d == 0.0 {
        return (0.0, -lo.max(margin));
    }
    let scale = d.clamp(lo, hi) / d;
    (x * scale, z * scale)
}

/// Jacobian `d(x, z) / d(hip, knee)`.
pub fn foot_jacobian(q: (f64, f64), geom: &LegGeometry) -> Matrix2<f64> {
    let (q1, q2) = q;
    let (l1, l2) = (geom.thigh_length, geom.calf_length);
    let (s1, c1) = q1.sin_cos();
    let (s12, c12) = (q1 - q2).sin_cos();
    Matrix2::new(-l1 * c1 - l2 * c12, l2 * c12, l1 * s1 + l2 * s12, -l2 * s12)
}

/// `tau = kp (q_ref - q) + kd (qdot_ref - qdot)`.
pub fn pd_torque(
    state: &JointState,
    q_ref: &[f64; JOINT_COUNT],
    qdot_ref: &[f64; JOINT_COUNT],
    gains: &JointGains,
) -> [f64; JOINT_COUNT] {
    std::array::from_fn(|j| {
        gains.kp * (q_ref[j] - state.q[j]) + gains.kd * (qdot_ref[j] - state.qdot[j])
    })
}
