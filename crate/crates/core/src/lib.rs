//! Online optimization of CPG-based quadruped gaits.
//!
//! The crate is organized bottom-up:
//!
//! - [`cpg`]: four coupled amplitude/phase oscillators with optional ground
//!   force feedback, mapped to Cartesian foot targets.
//! - [`kinematics`]: planar two-link leg kinematics and joint PD control.
//! - [`vmc`]: virtual-model posture control of the trunk attitude.
//! - [`sim`]: a rigid-trunk quadruped with penalty contacts, slopes, friction
//!   and payloads.
//! - [`objective`]: trial objective, cost of transport, context estimation and
//!   unit-cube normalization.
//! - [`gp`]: Gaussian-process regression with a product Matérn kernel.
//! - [`cbo`]: contextual Bayesian optimization (UCB with decaying exploration,
//!   context sharing, data reuse).
//! - [`harness`]: trial protocol, scenario runner, logs and exports.

pub mod cbo;
pub mod cpg;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kinematics;
pub mod objective;
pub mod sim;
pub mod vmc;

pub use cbo::{BetaSchedule, ContextSharingConfig, OptimizerHistory};
pub use cpg::{CpgParams, FootTarget, OscillatorNetworkState};
pub use error::{Error, Result};
pub use gp::{GpModel, KernelConfig};
pub use harness::{ControllerVariant, RunReport, ScenarioConfig, TrialProtocol};
pub use kinematics::{JointGains, JointState, LegGeometry};
pub use objective::{ContextVector, NormalizationRanges, ObjectiveConfig, TrialRecord};
pub use sim::{RobotModel, SimState, Terrain};
pub use vmc::{TrunkAttitude, VmcGains};

/// Number of legs, in the order front-right, front-left, rear-right, rear-left.
pub const LEG_COUNT: usize = 4;

/// Number of actuated joints (hip pitch and knee per leg).
pub const JOINT_COUNT: usize = 2 * LEG_COUNT;
