use serde::{Deserialize, Serialize};

use super::ControllerVariant;
use crate::cpg::{foot_targets, step_network, CpgParams, OscillatorNetworkState};
use crate::error::Result;
use crate::kinematics::{clamp_to_workspace, inverse_kinematics, pd_torque, JointGains};
use crate::sim::{RobotModel, SimState};
use crate::vmc::{
    vmc_joint_torques, vmc_wrench, StanceFoot, TrunkAttitude, VmcGains, STANCE_FORCE_THRESHOLD,
};
use crate::{JOINT_COUNT, LEG_COUNT};

/// Margin kept from the reach limits when clamping foot targets (m).
const WORKSPACE_MARGIN: f64 = 1e-3;

/// CPG, inverse kinematics, joint PD and optional posture control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub variant: ControllerVariant,
    pub joint_gains: JointGains,
    pub vmc_gains: VmcGains,
    pub network: OscillatorNetworkState,
    /// Desired trunk attitude for posture control.
    pub target_attitude: TrunkAttitude,
    previous_q_ref: Option<[f64; JOINT_COUNT]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Total commanded torque.
    pub tau: [f64; JOINT_COUNT],
    /// Posture-control share of `tau`.
    pub tau_vmc: [f64; JOINT_COUNT],
    pub q_ref: [f64; JOINT_COUNT],
}

impl Controller {
    pub fn new(variant: ControllerVariant, joint_gains: JointGains, vmc_gains: VmcGains) -> Self {
        Self {
            variant,
            joint_gains,
            vmc_gains,
            network: OscillatorNetworkState::trot_start(),
            target_attitude: TrunkAttitude::default(),
            previous_q_ref: None,
        }
    }

    /// Restarts the oscillators and forgets the previous reference.
    pub fn reset(&mut self) {
        self.network = OscillatorNetworkState::trot_start();
        self.previous_q_ref = None;
    }

    /// One control tick: advances the oscillators and returns joint torques.
    pub fn tick(
        &mut self,
        state: &SimState,
        params: &CpgParams,
        model: &RobotModel,
        dt: f64,
    ) -> Result<ControlOutput> {
        let mut cpg = *params;
        if !self.variant.uses_feedback() {
            cpg.feedback_gain = 0.0;
        }
        self.network = step_network(&self.network, &cpg, &state.normal_forces, dt)?;

        let geom = &model.geometry;
        let mut q_ref = [0.0; JOINT_COUNT];
        for target in foot_targets(&self.network, &cpg) {
            let (x, z) = clamp_to_workspace(target.x, target.z, geom, WORKSPACE_MARGIN);
            let (hip, knee) = inverse_kinematics(x, z, geom)?;
            q_ref[2 * target.leg_index] = hip;
            q_ref[2 * target.leg_index + 1] = knee;
        }
        let qdot_ref = match self.previous_q_ref {
            Some(prev) => std::array::from_fn(|j| (q_ref[j] - prev[j]) / dt),
            None => [0.0; JOINT_COUNT],
        };
        self.previous_q_ref = Some(q_ref);

        let mut tau = pd_torque(&state.joints, &q_ref, &qdot_ref, &self.joint_gains);
        let mut tau_vmc = [0.0; JOINT_COUNT];
        if self.variant.uses_vmc() {
            let feet_kin = state.foot_kinematics(geom);
            let feet: [StanceFoot; LEG_COUNT] = std::array::from_fn(|leg| StanceFoot {
                position: feet_kin[leg].body_position.into(),
                in_stance: state.normal_forces[leg] > STANCE_FORCE_THRESHOLD,
            });
            let jacobians = feet_kin.map(|f| f.jacobian);
            let wrench = vmc_wrench(&state.attitude(), &self.target_attitude, &self.vmc_gains);
            tau_vmc = vmc_joint_torques(
                &wrench,
                &feet,
                &jacobians,
                self.vmc_gains.horizontal_force_cost,
            );
            for j in 0..JOINT_COUNT {
                tau[j] += tau_vmc[j];
            }
        }
        Ok(ControlOutput {
            tau,
            tau_vmc,
            q_ref,
        })
    }
}
