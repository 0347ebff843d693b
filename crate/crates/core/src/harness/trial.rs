use nalgebra::Vector3;

use super::{Controller, ControllerVariant, TrialProtocol};
use crate::cpg::{CpgParams, OPTIMIZED_DIM};
use crate::error::Result;
use crate::kinematics::JointGains;
use crate::objective::{ContextVector, ObjectiveConfig, TrialRecord};
use crate::sim::{self, RobotModel, SimState, Terrain};
use crate::vmc::VmcGains;
use crate::{JOINT_COUNT, LEG_COUNT};

/// Blends the optimized fields of `old` and `new`; fixed fields come from `new`.
pub fn interpolate_params(old: &CpgParams, new: &CpgParams, t: f64) -> CpgParams {
    let t = t.clamp(0.0, 1.0);
    if t == 1.0 {
        return *new;
    }
    let (a, b) = (old.to_vector(), new.to_vector());
    let blended: [f64; OPTIMIZED_DIM] = std::array::from_fn(|i| a[i] + t * (b[i] - a[i]));
    new.with_vector(&blended)
}

/// Measurements of one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickSample {
    pub velocity: [f64; 2],
    pub torque: [f64; JOINT_COUNT],
    pub joint_velocity: [f64; JOINT_COUNT],
    pub normal_force: [f64; LEG_COUNT],
    pub pitch: f64,
    pub position: [f64; 3],
}

impl TickSample {
    fn capture(state: &SimState, torque: [f64; JOINT_COUNT]) -> Self {
        Self {
            velocity: state.heading_velocity(),
            torque,
            joint_velocity: state.joints.qdot,
            normal_force: state.normal_forces,
            pitch: state.attitude().pitch,
            position: state.position.into(),
        }
    }
}

/// Builds the trial record from the samples after `steady_start`; the
/// transition samples are ignored. `origin` is the trunk position when the
/// measured window began.
#[allow(clippy::too_many_arguments)]
pub fn summarize_trial(
    params: &CpgParams,
    samples: &[TickSample],
    steady_start: usize,
    origin: [f64; 3],
    terrain: &Terrain,
    model: &RobotModel,
    target_velocity: f64,
    cfg: &ObjectiveConfig,
) -> TrialRecord {
    let mut record = TrialRecord::empty(*params, model.total_mass(), model.gravity, cfg.dt);
    let steady = &samples[steady_start.min(samples.len())..];
    for s in steady {
        record.push_sample(
            s.velocity,
            s.torque,
            s.joint_velocity,
            s.normal_force,
            s.pitch,
        );
    }
    if let Some(last) = steady.last() {
        let n = terrain.normal();
        let d = Vector3::from(last.position) - Vector3::from(origin);
        record.distance = (d - n * d.dot(&n)).norm();
    }
    record.finalize(target_velocity, cfg);
    record
}

/// Simulator, controller and the parameters of the previous trial. Trials
/// chain: each continues from the state the previous one ended in.
#[derive(Debug, Clone)]
pub struct TrialSession {
    pub model: RobotModel,
    pub terrain: Terrain,
    pub state: SimState,
    pub controller: Controller,
    pub previous_params: CpgParams,
    pub protocol: TrialProtocol,
    pub objective: ObjectiveConfig,
}

impl TrialSession {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: RobotModel,
        terrain: Terrain,
        variant: ControllerVariant,
        joint_gains: JointGains,
        vmc_gains: VmcGains,
        protocol: TrialProtocol,
        objective: ObjectiveConfig,
        initial_params: CpgParams,
    ) -> Result<Self> {
        model.validate()?;
        terrain.validate()?;
        protocol.validate()?;
        let state = standing_pose(&model, &terrain, &initial_params, 0.0)?;
        Ok(Self {
            model,
            terrain,
            state,
            controller: Controller::new(variant, joint_gains, vmc_gains),
            previous_params: initial_params,
            protocol,
            objective,
        })
    }

    /// Puts the robot back on its feet at rest where it currently is.
    pub fn reset(&mut self) -> Result<()> {
        let along = self.state.position.dot(&self.terrain.uphill());
        let along = if along.is_finite() { along } else { 0.0 };
        self.state = standing_pose(&self.model, &self.terrain, &self.previous_params, along)?;
        self.controller.reset();
        Ok(())
    }

    /// Runs the transition and steady phases with `params`. A fall or a
    /// numerical failure aborts the trial: the record gets the floor objective
    /// and `fallback_context`, and the robot is reset.
    pub fn run_trial(
        &mut self,
        params: &CpgParams,
        target_velocity: f64,
        fallback_context: ContextVector,
    ) -> Result<TrialRecord> {
        params.validate()?;
        let transition = self.protocol.transition_steps();
        let steady = self.protocol.steady_steps();
        let dt = self.protocol.dt();
        let mut samples = Vec::with_capacity(transition + steady);
        let mut origin = [0.0; 3];
        let mut failed = false;

        for k in 0..transition + steady {
            if k == transition {
                origin = self.state.position.into();
            }
            let current = if k < transition {
                interpolate_params(
                    &self.previous_params,
                    params,
                    (k + 1) as f64 / transition as f64,
                )
            } else {
                *params
            };
            match self.advance(&current, dt) {
                Ok(tau) => samples.push(TickSample::capture(&self.state, tau)),
                Err(e) => {
                    log::debug!("trial aborted at tick {k}: {e}");
                    failed = true;
                    break;
                }
            }
            if self.state.has_fallen(&self.terrain) {
                log::debug!("trial aborted at tick {k}: fall");
                failed = true;
                break;
            }
        }

        self.previous_params = *params;
        if failed {
            let mut record = TrialRecord::empty(
                *params,
                self.model.total_mass(),
                self.model.gravity,
                self.objective.dt,
            );
            record.aborted = true;
            record.context = fallback_context;
            record.finalize(target_velocity, &self.objective);
            self.reset()?;
            return Ok(record);
        }
        Ok(summarize_trial(
            params,
            &samples,
            transition,
            origin,
            &self.terrain,
            &self.model,
            target_velocity,
            &self.objective,
        ))
    }

    fn advance(&mut self, params: &CpgParams, dt: f64) -> Result<[f64; JOINT_COUNT]> {
        let out = self.controller.tick(&self.state, params, &self.model, dt)?;
        let tau = self.model.clamp_torques(&out.tau);
        self.state = sim::step(&self.state, &tau, &self.model, &self.terrain, dt)?;
        Ok(tau)
    }
}

fn standing_pose(
    model: &RobotModel,
    terrain: &Terrain,
    params: &CpgParams,
    along_slope: f64,
) -> Result<SimState> {
    let foot_x = 0.5 * (params.x_offset_front + params.x_offset_hind);
    SimState::standing(model, terrain, foot_x, params.body_height, along_slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_endpoints() {
        let old = CpgParams::default();
        let new = CpgParams {
            swing_frequency: 20.0,
            ..CpgParams::default()
        };
        let old = CpgParams {
            swing_frequency: 16.0,
            ..old
        };
        assert_eq!(interpolate_params(&old, &new, 0.0), old);
        assert_eq!(interpolate_params(&old, &new, 1.0), new);
        assert_eq!(interpolate_params(&old, &new, 0.5).swing_frequency, 18.0);
    }

    #[test]
    fn transition_samples_do_not_matter() {
        let model = RobotModel::default();
        let terrain = Terrain::default();
        let cfg = ObjectiveConfig::default();
        let clean: Vec<TickSample> = (0..50)
            .map(|k| TickSample {
                velocity: [0.4 + 0.001 * k as f64, 0.01],
                torque: [3.0; 8],
                joint_velocity: [1.5; 8],
                normal_force: [30.0; 4],
                pitch: -0.01,
                position: [0.01 * k as f64, 0.0, 0.3],
            })
            .collect();
        let garbage = TickSample {
            velocity: [f64::NAN, 1e9],
            torque: [f64::INFINITY; 8],
            joint_velocity: [-7.0; 8],
            normal_force: [1e6; 4],
            pitch: 3.0,
            position: [f64::NAN; 3],
        };
        let params = CpgParams::default();
        let a = summarize_trial(
            &params,
            &clean[10..],
            0,
            [0.1, 0.0, 0.3],
            &terrain,
            &model,
            0.5,
            &cfg,
        );
        let mut dirty = vec![garbage; 10];
        dirty.extend_from_slice(&clean[10..]);
        let b = summarize_trial(
            &params,
            &dirty,
            10,
            [0.1, 0.0, 0.3],
            &terrain,
            &model,
            0.5,
            &cfg,
        );
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
    }

    fn session(variant: ControllerVariant) -> TrialSession {
        let protocol = TrialProtocol {
            transition_duration: 0.2,
            steady_duration: 0.5,
            control_rate: 1000.0,
        };
        let objective = ObjectiveConfig {
            steps: protocol.steady_steps(),
            ..ObjectiveConfig::default()
        };
        TrialSession::new(
            RobotModel::default(),
            Terrain::default(),
            variant,
            JointGains::default(),
            VmcGains::default(),
            protocol,
            objective,
            CpgParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn sample_count_matches_protocol() {
        let mut s = session(ControllerVariant::VmcTegotae);
        let r = s
            .run_trial(&CpgParams::default(), 0.5, ContextVector::default())
            .unwrap();
        assert!(!r.aborted);
        assert_eq!(r.len(), 500);
    }

    #[test]
    fn trials_are_deterministic() {
        let mut a = session(ControllerVariant::Tegotae);
        let mut b = session(ControllerVariant::Tegotae);
        let p = CpgParams::default();
        let ra = a.run_trial(&p, 0.5, ContextVector::default()).unwrap();
        let rb = b.run_trial(&p, 0.5, ContextVector::default()).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn trials_chain() {
        let mut s = session(ControllerVariant::OpenLoop);
        let p = CpgParams::default();
        s.run_trial(&p, 0.5, ContextVector::default()).unwrap();
        let end = s.state.clone();
        let mut fresh = s.clone();
        let r = s.run_trial(&p, 0.5, ContextVector::default()).unwrap();
        assert!(!r.aborted);
        assert!(s.state.time > end.time);
        // the second trial starts exactly where the first ended
        fresh.state = end;
        let r2 = fresh.run_trial(&p, 0.5, ContextVector::default()).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn open_loop_never_uses_posture_control() {
        let s = session(ControllerVariant::OpenLoop);
        let mut c = s.controller.clone();
        let out = c
            .tick(&s.state, &CpgParams::default(), &s.model, 0.001)
            .unwrap();
        assert_eq!(out.tau_vmc, [0.0; 8]);
    }
}
