//! Virtual model control of the trunk attitude.
//!
//! A virtual spring-damper per rotation axis produces a corrective trunk
//! moment. The moment is distributed as weighted least-norm sagittal ground
//! reaction forces over the stance feet and mapped to joint torques through
//! the leg Jacobian transpose.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{JOINT_COUNT, LEG_COUNT};

/// Normal force above which a foot counts as stance (N).
pub const STANCE_FORCE_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmcGains {
    /// Yaw (direction) stiffness (N·m/rad).
    pub yaw: f64,
    /// Roll stiffness (N·m/rad).
    pub roll: f64,
    /// Pitch stiffness (N·m/rad).
    pub pitch: f64,
    /// Damping per axis as a fraction of that axis' stiffness (s).
    pub damping_ratio: f64,
    /// Relative cost of horizontal over vertical foot force in the
    /// distribution; 1 gives the plain least-norm split.
    pub horizontal_force_cost: f64,
}

impl Default for VmcGains {
    fn default() -> Self {
        Self {
            yaw: 300.0,
            roll: 150.0,
            pitch: 160.0,
            damping_ratio: 0.1,
            horizontal_force_cost: 3.0,
        }
    }
}

/// Trunk orientation as roll/pitch/yaw (ZYX) angles plus body angular rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrunkAttitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Corrective trunk moment `[roll, pitch, yaw]` in N·m about the trunk axes.
pub fn vmc_wrench(attitude: &TrunkAttitude, target: &TrunkAttitude, gains: &VmcGains) -> [f64; 3] {
    let axis = |k: f64, target: f64, actual: f64, rate: f64| {
        k * wrap_angle(target - actual) - gains.damping_ratio * k * rate
    };
    [
        axis(gains.roll, target.roll, attitude.roll, attitude.roll_rate),
        axis(
            gains.pitch,
            target.pitch,
            attitude.pitch,
            attitude.pitch_rate,
        ),
        axis(gains.yaw, target.yaw, attitude.yaw, attitude.yaw_rate),
    ]
}

/// A foot available for force distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StanceFoot {
    /// Foot position relative to the trunk center of mass, trunk frame (m).
    pub position: [f64; 3],
    pub in_stance: bool,
}

/// Sagittal ground reaction forces `(F_x, F_z)` per leg whose moments about
/// the center of mass best match `wrench`, minimizing
/// `sum (w F_x)^2 + F_z^2` with `w = horizontal_cost`. Swing legs get zero.
pub fn distribute_wrench(
    wrench: &[f64; 3],
    feet: &[StanceFoot; LEG_COUNT],
    horizontal_cost: f64,
) -> [[f64; 2]; LEG_COUNT] {
    let mut forces = [[0.0; 2]; LEG_COUNT];
    let stance: Vec<usize> = (0..LEG_COUNT).filter(|&i| feet[i].in_stance).collect();
    if stance.is_empty() {
        return forces;
    }
    // moment of (F_x, 0, F_z) at p is (p_y F_z, p_z F_x - p_x F_z, -p_y F_x)
    let columns = |i: usize| {
        let [px, py, pz] = feet[i].position;
        (Vector3::new(0.0, pz, -py), Vector3::new(py, -px, 0.0))
    };
    let inv_w2 = 1.0 / (horizontal_cost * horizontal_cost);
    let mut gram = Matrix3::zeros();
    for &i in &stance {
        let (cx, cz) = columns(i);
        gram += cx * cx.transpose() * inv_w2 + cz * cz.transpose();
    }
    let target = Vector3::from(*wrench);
    let lambda = match gram.pseudo_inverse(1e-12) {
        Ok(pinv) => pinv * target,
        Err(_) => return forces,
    };
    for &i in &stance {
        let (cx, cz) = columns(i);
        forces[i] = [cx.dot(&lambda) * inv_w2, cz.dot(&lambda)];
    }
    forces
}

/// Moment produced by sagittal forces at the given feet.
pub fn moment_of(forces: &[[f64; 2]; LEG_COUNT], feet: &[StanceFoot; LEG_COUNT]) -> [f64; 3] {
    let mut m = Vector3::zeros();
    for i in 0..LEG_COUNT {
        let p = Vector3::from(feet[i].position);
        let f = Vector3::new(forces[i][0], 0.0, forces[i][1]);
        m += p.cross(&f);
    }
    m.into()
}

/// Joint torques realizing `wrench` through the stance legs.
///
/// The distributed forces are ground reactions on the feet; the joints must
/// push the ground with the opposite force, hence `tau = -J^T F`.
pub fn vmc_joint_torques(
    wrench: &[f64; 3],
    feet: &[StanceFoot; LEG_COUNT],
    jacobians: &[Matrix2<f64>; LEG_COUNT],
    horizontal_cost: f64,
) -> [f64; JOINT_COUNT] {
    let forces = distribute_wrench(wrench, feet, horizontal_cost);
    let mut tau = [0.0; JOINT_COUNT];
    for leg in 0..LEG_COUNT {
        if !feet[leg].in_stance {
            continue;
        }
        let t = -(jacobians[leg].transpose() * Vector2::from(forces[leg]));
        tau[2 * leg] = t[0];
        tau[2 * leg + 1] = t[1];
    }
    tau
}
