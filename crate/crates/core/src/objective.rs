//! Trial objective, cost of transport, context estimation and normalization.

use serde::{Deserialize, Serialize};

use crate::cpg::{CpgParams, OPTIMIZED_DIM};
use crate::{JOINT_COUNT, LEG_COUNT};

/// Number of context dimensions (load, slope).
pub const CONTEXT_DIM: usize = 2;

/// Objective constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    /// Weight of the velocity reward.
    pub velocity_weight: f64,
    /// Weight of the cost of transport penalty.
    pub cot_weight: f64,
    /// Sample period (s).
    pub dt: f64,
    /// Samples per steady-state window.
    pub steps: usize,
    /// Cap on the per-sample velocity reward.
    pub reward_cap: f64,
    /// Denominator of the squared velocity error inside the exponential.
    pub velocity_bandwidth: f64,
    /// Cost of transport assigned when the robot barely moved.
    pub cot_cap: f64,
    /// Distance below which the robot counts as stationary (m).
    pub min_distance: f64,
    /// Objective of an aborted trial.
    pub abort_objective: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            velocity_weight: 1.0,
            cot_weight: 0.5,
            dt: 0.001,
            steps: 3000,
            reward_cap: 0.85,
            velocity_bandwidth: 0.05,
            cot_cap: 10.0,
            min_distance: 0.01,
            abort_objective: -1.0,
        }
    }
}

impl ObjectiveConfig {
    /// Largest attainable velocity term.
    pub fn max_velocity_term(&self) -> f64 {
        self.velocity_weight * self.dt * self.steps as f64 * self.reward_cap
    }
}

/// Environment context estimated from one trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    /// Mean normal force per foot (N).
    pub load: f64,
    /// Mean trunk pitch (rad).
    pub slope: f64,
}

impl ContextVector {
    pub fn to_array(&self) -> [f64; CONTEXT_DIM] {
        [self.load, self.slope]
    }
}

/// Steady-state measurements and outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub params: CpgParams,
    /// Heading-frame trunk velocity `(forward, lateral)` per sample (m/s).
    pub velocity: Vec<[f64; 2]>,
    /// Applied joint torques per sample (N·m).
    pub torque: Vec<[f64; JOINT_COUNT]>,
    /// Joint velocities per sample (rad/s).
    pub joint_velocity: Vec<[f64; JOINT_COUNT]>,
    /// Foot normal forces per sample (N).
    pub normal_force: Vec<[f64; LEG_COUNT]>,
    /// Trunk pitch per sample (rad).
    pub pitch: Vec<f64>,
    /// Displacement over the window, in the terrain plane (m).
    pub distance: f64,
    /// Robot plus payload mass (kg).
    pub total_mass: f64,
    pub gravity: f64,
    /// Sample period (s).
    pub dt: f64,
    /// Target forward velocity the stored objective refers to (m/s).
    pub target_velocity: f64,
    pub objective: f64,
    pub context: ContextVector,
    pub aborted: bool,
}

impl TrialRecord {
    pub fn empty(params: CpgParams, total_mass: f64, gravity: f64, dt: f64) -> Self {
        Self {
            params,
            velocity: Vec::new(),
            torque: Vec::new(),
            joint_velocity: Vec::new(),
            normal_force: Vec::new(),
            pitch: Vec::new(),
            distance: 0.0,
            total_mass,
            gravity,
            dt,
            target_velocity: 0.0,
            objective: 0.0,
            context: ContextVector::default(),
            aborted: false,
        }
    }

    pub fn len(&self) -> usize {
        self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity.is_empty()
    }

    pub fn push_sample(
        &mut self,
        velocity: [f64; 2],
        torque: [f64; JOINT_COUNT],
        joint_velocity: [f64; JOINT_COUNT],
        normal_force: [f64; LEG_COUNT],
        pitch: f64,
    ) {
        self.velocity.push(velocity);
        self.torque.push(torque);
        self.joint_velocity.push(joint_velocity);
        self.normal_force.push(normal_force);
        self.pitch.push(pitch);
    }

    pub fn mean_forward_velocity(&self) -> f64 {
        if self.velocity.is_empty() {
            return 0.0;
        }
        self.velocity.iter().map(|v| v[0]).sum::<f64>() / self.velocity.len() as f64
    }

    /// Recomputes objective and context from the stored samples for `target_velocity`.
    pub fn finalize(&mut self, target_velocity: f64, cfg: &ObjectiveConfig) {
        self.target_velocity = target_velocity;
        if !self.is_empty() {
            self.context = estimate_context(self);
        }
        self.objective = objective_value(self, target_velocity, cfg);
    }
}

/// Mechanical cost of transport `sum <|tau|, |qdot|> dt / (m g d)`.
///
/// Returns `cfg.cot_cap` when the distance is below `cfg.min_distance`.
pub fn cost_of_transport(record: &TrialRecord, cfg: &ObjectiveConfig) -> f64 {
    if !(record.distance >= cfg.min_distance) {
        return cfg.cot_cap;
    }
    let work: f64 = record
        .torque
        .iter()
        .zip(&record.joint_velocity)
        .map(|(tau, qd)| {
            tau.iter()
                .zip(qd)
                .map(|(t, w)| t.abs() * w.abs())
                .sum::<f64>()
        })
        .sum();
    work * record.dt / (record.total_mass * record.gravity * record.distance)
}

/// Per-sample capped velocity reward.
pub fn velocity_reward(velocity: &[f64; 2], target_velocity: f64, cfg: &ObjectiveConfig) -> f64 {
    let ex = velocity[0] - target_velocity;
    let ey = velocity[1];
    (-(ex * ex + ey * ey) / cfg.velocity_bandwidth)
        .exp()
        .min(cfg.reward_cap)
}

/// Trial objective: capped velocity tracking reward minus weighted cost of transport.
pub fn objective_value(record: &TrialRecord, target_velocity: f64, cfg: &ObjectiveConfig) -> f64 {
    if record.aborted {
        return cfg.abort_objective;
    }
    let reward: f64 = record
        .velocity
        .iter()
        .map(|v| velocity_reward(v, target_velocity, cfg))
        .sum();
    cfg.velocity_weight * cfg.dt * reward - cfg.cot_weight * cost_of_transport(record, cfg)
}

/// Mean normal force per foot and mean pitch over the stored samples.
pub fn estimate_context(record: &TrialRecord) -> ContextVector {
    let samples = record.normal_force.len();
    if samples == 0 {
        return ContextVector::default();
    }
    let force_sum: f64 = record.normal_force.iter().flatten().sum();
    let pitch_sum: f64 = record.pitch.iter().sum();
    ContextVector {
        load: force_sum / (LEG_COUNT * samples) as f64,
        slope: pitch_sum / record.pitch.len() as f64,
    }
}

/// Closed interval used for unit-cube normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.lo + u.clamp(0.0, 1.0) * (self.hi - self.lo)
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Normalization ranges of the optimized parameters and the context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRanges {
    pub params: [Range; OPTIMIZED_DIM],
    pub context: [Range; CONTEXT_DIM],
}

impl Default for NormalizationRanges {
    fn default() -> Self {
        Self {
            params: [
                Range::new(0.06, 0.10),
                Range::new(0.005, 0.015),
                Range::new(16.0, 23.0),
                Range::new(10.0, 15.0),
                Range::new(0.9, 1.7),
                Range::new(-0.06, -0.01),
                Range::new(-0.06, -0.01),
                Range::new(0.05, 0.30),
            ],
            context: [Range::new(15.0, 55.0), Range::new(-0.4, 0.1)],
        }
    }
}

impl NormalizationRanges {
    pub fn validate(&self) -> bool {
        self.params
            .iter()
            .chain(self.context.iter())
            .all(|r| r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi)
    }

    pub fn normalize_params(&self, params: &CpgParams) -> [f64; OPTIMIZED_DIM] {
        let v = params.to_vector();
        std::array::from_fn(|i| self.params[i].normalize(v[i]))
    }

    pub fn denormalize_params(&self, u: &[f64; OPTIMIZED_DIM]) -> [f64; OPTIMIZED_DIM] {
        std::array::from_fn(|i| self.params[i].denormalize(u[i]))
    }

    pub fn normalize_context(&self, c: &ContextVector) -> [f64; CONTEXT_DIM] {
        let v = c.to_array();
        std::array::from_fn(|i| self.context[i].normalize(v[i]))
    }

    pub fn denormalize_context(&self, u: &[f64; CONTEXT_DIM]) -> ContextVector {
        ContextVector {
            load: self.context[0].denormalize(u[0]),
            slope: self.context[1].denormalize(u[1]),
        }
    }

    /// Clamps every optimized field of `params` into its range.
    pub fn clamp_params(&self, params: &CpgParams) -> CpgParams {
        let v = params.to_vector();
        params.with_vector(&std::array::from_fn(|i| self.params[i].clamp(v[i])))
    }

    pub fn contains(&self, params: &CpgParams) -> bool {
        params
            .to_vector()
            .iter()
            .zip(&self.params)
            .all(|(v, r)| *v >= r.lo && *v <= r.hi)
    }
}
