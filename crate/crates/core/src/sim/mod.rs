//! Desk-scale quadruped dynamics.
//!
//! A single rigid trunk carries four massless planar legs. Each joint has a
//! reflected rotor inertia and viscous damping; feet touch an inclined plane
//! through penalty contacts. Ground reactions act on the trunk at the foot
//! points and on the joints through the leg Jacobian transpose.
//!
//! Integration is semi-implicit Euler over a fixed number of substeps per
//! control step. Uniform gravity is integrated exactly in the trunk position
//! update and the trunk angular momentum is carried in the world frame, which
//! keeps ballistic flight energy-consistent.

mod contact;

pub use contact::{contact_force, ContactForce};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    foot_jacobian, forward_kinematics, inverse_kinematics, JointState, LegGeometry,
};
use crate::vmc::TrunkAttitude;
use crate::{JOINT_COUNT, LEG_COUNT};

/// Trunk height above the terrain below which a trial counts as a fall (m).
pub const FALL_HEIGHT: f64 = 0.05;

/// Trunk up-axis alignment with the terrain normal below which the robot has
/// tipped over.
pub const FALL_TILT_COSINE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotModel {
    /// Nominal trunk mass including the legs (kg).
    pub trunk_mass: f64,
    /// Added payload at the center of mass (kg).
    pub payload_mass: f64,
    /// Nominal trunk inertia about the center of mass, trunk frame (kg·m²).
    pub trunk_inertia: [[f64; 3]; 3],
    pub gravity: f64,
    /// Rotor inertia reflected to each joint (kg·m²).
    pub joint_reflected_inertia: f64,
    /// Viscous joint friction (N·m·s/rad).
    pub joint_damping: f64,
    /// Symmetric clamp on every joint torque (N·m).
    pub torque_limit: f64,
    /// Knee flexion range (rad).
    pub knee_limits: [f64; 2],
    pub geometry: LegGeometry,
    /// Integration substeps per control step.
    pub substeps: usize,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            trunk_mass: 12.0,
            payload_mass: 0.0,
            // solid 0.38 x 0.20 x 0.10 m box of 12 kg
            trunk_inertia: [[0.05, 0.0, 0.0], [0.0, 0.1544, 0.0], [0.0, 0.0, 0.1844]],
            gravity: 9.81,
            joint_reflected_inertia: 0.02,
            joint_damping: 0.01,
            torque_limit: 35.0,
            knee_limits: [0.05, 2.7],
            geometry: LegGeometry::default(),
            substeps: 4,
        }
    }
}

impl RobotModel {
    pub fn total_mass(&self) -> f64 {
        self.trunk_mass + self.payload_mass
    }

    /// Trunk inertia scaled with the payload, which shares the trunk's shape.
    pub fn inertia(&self) -> Matrix3<f64> {
        let i = Matrix3::from_fn(|r, c| self.trunk_inertia[r][c]);
        i * (self.total_mass() / self.trunk_mass)
    }

    /// Copy with the payload replaced by `payload` kg.
    pub fn with_payload(&self, payload: f64) -> Result<Self> {
        if !(payload.is_finite() && payload >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "payload must be non-negative, got {payload}"
            )));
        }
        Ok(Self {
            payload_mass: payload,
            ..self.clone()
        })
    }

    pub fn clamp_torques(&self, tau: &[f64; JOINT_COUNT]) -> [f64; JOINT_COUNT] {
        tau.map(|t| t.clamp(-self.torque_limit, self.torque_limit))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let positive = self.trunk_mass > 0.0
            && self.gravity > 0.0
            && self.joint_reflected_inertia > 0.0
            && self.joint_damping >= 0.0
            && self.torque_limit > 0.0
            && self.payload_mass >= 0.0
            && self.substeps >= 1;
        if !positive {
            return Err(Error::InvalidArgument(
                "robot model constants out of range".into(),
            ));
        }
        if !(self.knee_limits[0] >= 0.0
            && self.knee_limits[0] < self.knee_limits[1]
            && self.knee_limits[1] <= std::f64::consts::PI)
        {
            return Err(Error::InvalidArgument(
                "knee limits must lie in [0, pi]".into(),
            ));
        }
        if self.inertia().cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "trunk inertia must be positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// Inclined ground plane through the world origin, rising along +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Terrain {
    /// Rotation of the plane about the world y axis (rad); positive is uphill
    /// in the walking direction.
    pub slope_angle: f64,
    pub friction_coefficient: f64,
    /// Normal penalty stiffness (N/m).
    pub contact_stiffness: f64,
    /// Normal penalty damping (N·s/m).
    pub contact_damping: f64,
    /// Viscous stiction coefficient below the friction cone (N·s/m).
    pub tangential_damping: f64,
}

impl Default for Terrain {
    fn default() -> Self {
        Self {
            slope_angle: 0.0,
            friction_coefficient: 0.9,
            contact_stiffness: 1.0e4,
            contact_damping: 300.0,
            tangential_damping: 600.0,
        }
    }
}

impl Terrain {
    /// Upward unit normal of the plane.
    pub fn normal(&self) -> Vector3<f64> {
        let (s, c) = self.slope_angle.sin_cos();
        Vector3::new(-s, 0.0, c)
    }

    /// Unit vector along the surface pointing uphill (+x side).
    pub fn uphill(&self) -> Vector3<f64> {
        let (s, c) = self.slope_angle.sin_cos();
        Vector3::new(c, 0.0, s)
    }

    /// Signed height of a point above the plane.
    pub fn height_of(&self, p: &Vector3<f64>) -> f64 {
        p.dot(&self.normal())
    }

    /// Decomposes the weight of `mass` into (along-surface downhill, into-surface) magnitudes.
    pub fn weight_components(&self, mass: f64, gravity: f64) -> (f64, f64) {
        let w = Vector3::new(0.0, 0.0, -mass * gravity);
        (-w.dot(&self.uphill()), -w.dot(&self.normal()))
    }

    /// Copy with new friction and slope.
    pub fn with_surface(&self, friction: f64, slope_angle: f64) -> Result<Self> {
        if !(friction.is_finite() && friction >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "friction must be non-negative, got {friction}"
            )));
        }
        if !(slope_angle.is_finite() && slope_angle.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!(
                "slope out of range: {slope_angle}"
            )));
        }
        Ok(Self {
            friction_coefficient: friction,
            slope_angle,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.friction_coefficient >= 0.0
            && self.contact_stiffness > 0.0
            && self.contact_damping >= 0.0
            && self.tangential_damping > 0.0
            && self.slope_angle.abs() < std::f64::consts::FRAC_PI_2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "terrain constants out of range".into(),
            ))
        }
    }
}

/// Applies payload and terrain updates together.
pub fn configure(
    model: &RobotModel,
    terrain: &Terrain,
    friction: f64,
    slope_angle: f64,
    payload: f64,
) -> Result<(RobotModel, Terrain)> {
    Ok((
        model.with_payload(payload)?,
        terrain.with_surface(friction, slope_angle)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Trunk center of mass, world frame (m).
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// World-frame linear velocity (m/s).
    pub linear_velocity: Vector3<f64>,
    /// World-frame angular velocity (rad/s).
    pub angular_velocity: Vector3<f64>,
    pub joints: JointState,
    /// Normal force per foot averaged over the last control step (N).
    pub normal_forces: [f64; LEG_COUNT],
    /// Accumulated tangential travel of feet while in contact (m).
    pub slip_distance: f64,
    pub time: f64,
}

/// Per-leg kinematic quantities at one instant.
#[derive(Debug, Clone, Copy)]
pub struct FootKinematics {
    /// Foot relative to the center of mass, trunk frame.
    pub body_position: Vector3<f64>,
    pub world_position: Vector3<f64>,
    pub world_velocity: Vector3<f64>,
    pub jacobian: nalgebra::Matrix2<f64>,
}

impl SimState {
    /// Robot at rest with every foot at `(foot_x, -height)` below its hip,
    /// trunk aligned with the terrain and the feet just touching it.
    pub fn standing(
        model: &RobotModel,
        terrain: &Terrain,
        foot_x: f64,
        height: f64,
        along_slope: f64,
    ) -> Result<Self> {
        let geom = &model.geometry;
        let (hip, knee) = inverse_kinematics(foot_x, -height, geom)?;
        let mut q = [0.0; JOINT_COUNT];
        for leg in 0..LEG_COUNT {
            q[2 * leg] = hip;
            q[2 * leg + 1] = knee;
        }
        let orientation = UnitQuaternion::from_euler_angles(0.0, -terrain.slope_angle, 0.0);
        let hip_z = geom.hip_positions.iter().map(|h| h[2]).sum::<f64>() / LEG_COUNT as f64;
        let position = terrain.uphill() * along_slope + terrain.normal() * (height - hip_z);
        Ok(Self {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            joints: JointState {
                q,
                qdot: [0.0; JOINT_COUNT],
            },
            normal_forces: [0.0; LEG_COUNT],
            slip_distance: 0.0,
            time: 0.0,
        })
    }

    pub fn attitude(&self) -> TrunkAttitude {
        let (roll, pitch, yaw) = self.orientation.euler_angles();
        let body_rate = self
            .orientation
            .inverse_transform_vector(&self.angular_velocity);
        TrunkAttitude {
            roll,
            pitch,
            yaw,
            roll_rate: body_rate.x,
            pitch_rate: body_rate.y,
            yaw_rate: body_rate.z,
        }
    }

    /// Horizontal velocity in the yaw-aligned heading frame `(forward, lateral)`.
    pub fn heading_velocity(&self) -> [f64; 2] {
        let yaw = self.attitude().yaw;
        let (s, c) = yaw.sin_cos();
        let v = &self.linear_velocity;
        [c * v.x + s * v.y, -s * v.x + c * v.y]
    }

    pub fn foot_kinematics(&self, geom: &LegGeometry) -> [FootKinematics; LEG_COUNT] {
        let rot = self.orientation.to_rotation_matrix();
        std::array::from_fn(|leg| {
            let q = self.joints.leg_angles(leg);
            let qd = self.joints.leg_velocities(leg);
            let (x, z) = forward_kinematics(q, geom);
            let hip = geom.hip_positions[leg];
            let body_position = Vector3::new(hip[0] + x, geom.foot_y(leg), hip[2] + z);
            let jacobian = foot_jacobian(q, geom);
            let rel = jacobian * Vector2::new(qd.0, qd.1);
            let r = rot * body_position;
            FootKinematics {
                body_position,
                world_position: self.position + r,
                world_velocity: self.linear_velocity
                    + self.angular_velocity.cross(&r)
                    + rot * Vector3::new(rel[0], 0.0, rel[1]),
                jacobian,
            }
        })
    }

    /// Height of the center of mass above the terrain plane.
    pub fn trunk_height(&self, terrain: &Terrain) -> f64 {
        terrain.height_of(&self.position)
    }

    pub fn has_fallen(&self, terrain: &Terrain) -> bool {
        let up = self.orientation * Vector3::z();
        self.trunk_height(terrain) < FALL_HEIGHT || up.dot(&terrain.normal()) < FALL_TILT_COSINE
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self
                .joints
                .q
                .iter()
                .chain(self.joints.qdot.iter())
                .all(|v| v.is_finite())
            && self.normal_forces.iter().all(|v| v.is_finite())
    }

    /// Trunk kinetic plus gravitational potential energy (J), potential
    /// measured from world z = 0.
    pub fn trunk_energy(&self, model: &RobotModel) -> f64 {
        let m = model.total_mass();
        let rot = self.orientation.to_rotation_matrix();
        let inertia_world = rot.matrix() * model.inertia() * rot.matrix().transpose();
        0.5 * m * self.linear_velocity.norm_squared()
            + 0.5
                * self
                    .angular_velocity
                    .dot(&(inertia_world * self.angular_velocity))
            + m * model.gravity * self.position.z
    }
}

/// Advances the simulation by one control step of length `dt` under constant
/// joint torques `tau_cmd` (clamped to the torque limit).
pub fn step(
    state: &SimState,
    tau_cmd: &[f64; JOINT_COUNT],
    model: &RobotModel,
    terrain: &Terrain,
    dt: f64,
) -> Result<SimState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let tau = model.clamp_torques(tau_cmd);
    if tau.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("joint torques"));
    }

    let h = dt / model.substeps as f64;
    let mass = model.total_mass();
    let inertia_body = model.inertia();
    let inertia_body_inv = inertia_body
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular trunk inertia".into()))?;
    let gravity = Vector3::new(0.0, 0.0, -model.gravity);

    let mut s = state.clone();
    let mut normal_sum = [0.0; LEG_COUNT];

    for _ in 0..model.substeps {
        let feet = s.foot_kinematics(&model.geometry);
        let rot = s.orientation.to_rotation_matrix();

        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        let mut qddot = [0.0; JOINT_COUNT];
        for (leg, foot) in feet.iter().enumerate() {
            let c = contact_force(&foot.world_position, &foot.world_velocity, terrain);
            let f_world = c.total(terrain);
            normal_sum[leg] += c.normal;
            if c.normal > 0.0 {
                s.slip_distance += c.slip_speed * h;
            }
            force += f_world;
            moment += (foot.world_position - s.position).cross(&f_world);

            let f_body = rot.inverse_transform_vector(&f_world);
            let tau_contact = foot.jacobian.transpose() * Vector2::new(f_body.x, f_body.z);
            for k in 0..2 {
                let j = 2 * leg + k;
                qddot[j] = (tau[j] + tau_contact[k] - model.joint_damping * s.joints.qdot[j])
                    / model.joint_reflected_inertia;
            }
        }

        // trunk translation: semi-implicit in the contact force, exact in gravity
        s.linear_velocity += h * (force / mass + gravity);
        s.position += h * s.linear_velocity - 0.5 * h * h * gravity;

        // trunk rotation: world-frame angular momentum
        let inertia_world = |r: &Rotation3<f64>| r.matrix() * inertia_body * r.matrix().transpose();
        let inertia_world_inv =
            |r: &Rotation3<f64>| r.matrix() * inertia_body_inv * r.matrix().transpose();
        let momentum = inertia_world(&rot) * s.angular_velocity + h * moment;
        let omega_mid = inertia_world_inv(&rot) * momentum;
        let new_orientation = UnitQuaternion::from_scaled_axis(omega_mid * h) * s.orientation;
        s.orientation = UnitQuaternion::new_normalize(new_orientation.into_inner());
        s.angular_velocity = inertia_world_inv(&s.orientation.to_rotation_matrix()) * momentum;

        for j in 0..JOINT_COUNT {
            s.joints.qdot[j] += h * qddot[j];
            s.joints.q[j] += h * s.joints.qdot[j];
        }
        for leg in 0..LEG_COUNT {
            let j = 2 * leg + 1;
            let [lo, hi] = model.knee_limits;
            if s.joints.q[j] < lo {
                s.joints.q[j] = lo;
                s.joints.qdot[j] = s.joints.qdot[j].max(0.0);
            } else if s.joints.q[j] > hi {
                s.joints.q[j] = hi;
                s.joints.qdot[j] = s.joints.qdot[j].min(0.0);
            }
        }
        s.time += h;
    }

    s.normal_forces = normal_sum.map(|n| n / model.substeps as f64);
    s.time = state.time + dt;
    if !s.is_finite() {
        return Err(Error::Diverged { time: s.time });
    }
    Ok(s)
}
