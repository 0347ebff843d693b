use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::export::RunLog;
use super::{ControllerVariant, TrialProtocol, TrialSession};
use crate::cbo::{
    active_mask, propose_next, BetaSchedule, ContextSharingConfig, OptimizerHistory,
    ProposalSettings,
};
use crate::cpg::{CpgParams, OPTIMIZED_DIM};
use crate::error::{Error, Result};
use crate::kinematics::JointGains;
use crate::objective::{
    cost_of_transport, ContextVector, NormalizationRanges, ObjectiveConfig, TrialRecord,
};
use crate::sim::{RobotModel, Terrain};
use crate::vmc::VmcGains;
use crate::LEG_COUNT;

/// Exploration factor used in inference mode.
pub const INFERENCE_BETA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityEvent {
    pub trial: usize,
    /// Target forward velocity (m/s).
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainEvent {
    pub trial: usize,
    pub friction: f64,
    /// Incline in degrees, positive uphill.
    #[serde(default)]
    pub slope_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadEvent {
    pub trial: usize,
    /// Payload carried from this trial on (kg).
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub beta: BetaSchedule,
    pub sharing: ContextSharingConfig,
    pub proposal: ProposalSettings,
    pub ranges: NormalizationRanges,
}

/// A scripted optimization session, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub variant: ControllerVariant,
    pub budget: usize,
    pub seed: u64,
    /// Pins the exploration factor to [`INFERENCE_BETA`].
    pub inference: bool,
    pub velocity: Vec<VelocityEvent>,
    pub terrain: Vec<TerrainEvent>,
    pub payload: Vec<PayloadEvent>,
    pub robot: RobotModel,
    /// Contact constants of the ground; friction and slope come from `terrain`.
    pub ground: Terrain,
    /// Fixed CPG constants and the parameters before the first trial.
    pub cpg: CpgParams,
    pub optimizer: OptimizerConfig,
    pub protocol: TrialProtocol,
    pub gains: JointGains,
    pub vmc: VmcGains,
    pub objective: ObjectiveConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "flat".into(),
            variant: ControllerVariant::VmcTegotae,
            budget: 40,
            seed: 0,
            inference: false,
            velocity: vec![VelocityEvent {
                trial: 0,
                target: 0.5,
            }],
            terrain: vec![TerrainEvent {
                trial: 0,
                friction: 0.9,
                slope_deg: 0.0,
            }],
            payload: Vec::new(),
            robot: RobotModel::default(),
            ground: Terrain::default(),
            cpg: CpgParams::default(),
            optimizer: OptimizerConfig::default(),
            protocol: TrialProtocol::default(),
            gains: JointGains::default(),
            vmc: VmcGains::default(),
            objective: ObjectiveConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidScenario(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        match self.velocity.first() {
            Some(e) if e.trial == 0 => {}
            _ => return bad("the velocity schedule must start at trial 0".into()),
        }
        check_sorted("velocity", self.velocity.iter().map(|e| e.trial))?;
        check_sorted("terrain", self.terrain.iter().map(|e| e.trial))?;
        check_sorted("payload", self.payload.iter().map(|e| e.trial))?;
        if let Some(e) = self
            .velocity
            .iter()
            .find(|e| !(e.target.is_finite() && e.target >= 0.0))
        {
            return bad(format!(
                "target velocity at trial {} must be a non-negative number",
                e.trial
            ));
        }
        for e in &self.terrain {
            if !(e.friction.is_finite()
                && e.friction >= 0.0
                && e.slope_deg.is_finite()
                && e.slope_deg.abs() < 45.0)
            {
                return bad(format!(
                    "terrain event at trial {} is out of range",
                    e.trial
                ));
            }
        }
        if let Some(e) = self
            .payload
            .iter()
            .find(|e| !(e.mass.is_finite() && e.mass >= 0.0))
        {
            return bad(format!("payload at trial {} must be non-negative", e.trial));
        }
        self.robot
            .validate()
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        self.ground
            .validate()
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        self.cpg
            .validate()
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        self.protocol.validate()?;
        if self.objective.steps != self.protocol.steady_steps()
            || self.objective.dt != self.protocol.dt()
        {
            return bad("objective sample count and period must match the protocol".into());
        }
        if !self.optimizer.ranges.validate() {
            return bad("normalization ranges must be finite with lo < hi".into());
        }
        if !self.optimizer.beta.is_valid() {
            return bad("beta schedule must be positive with decay in (0, 1)".into());
        }
        let kernel = &self.optimizer.proposal.kernel;
        if !kernel.is_valid()
            || kernel.param_dims() != OPTIMIZED_DIM
            || kernel.context_dims != crate::objective::CONTEXT_DIM
        {
            return bad("kernel must cover 8 parameters and 2 context dimensions".into());
        }
        Ok(())
    }

    /// Environment and target in effect at `trial` (events applied up to it).
    pub fn conditions_at(&self, trial: usize) -> Conditions {
        let latest =
            |trials: &mut dyn Iterator<Item = usize>| trials.filter(|&t| t <= trial).count();
        let v = latest(&mut self.velocity.iter().map(|e| e.trial));
        let t = latest(&mut self.terrain.iter().map(|e| e.trial));
        let p = latest(&mut self.payload.iter().map(|e| e.trial));
        Conditions {
            target_velocity: self.velocity[v - 1].target,
            friction: t
                .checked_sub(1)
                .map_or(self.ground.friction_coefficient, |i| {
                    self.terrain[i].friction
                }),
            slope: t.checked_sub(1).map_or(self.ground.slope_angle, |i| {
                self.terrain[i].slope_deg.to_radians()
            }),
            payload: p
                .checked_sub(1)
                .map_or(self.robot.payload_mass, |i| self.payload[i].mass),
        }
    }

    fn session(&self) -> Result<TrialSession> {
        let c = self.conditions_at(0);
        let (model, terrain) =
            crate::sim::configure(&self.robot, &self.ground, c.friction, c.slope, c.payload)?;
        TrialSession::new(
            model,
            terrain,
            self.variant,
            self.gains,
            self.vmc,
            self.protocol,
            self.objective,
            self.cpg,
        )
    }

    fn apply(&self, session: &mut TrialSession, c: &Conditions) -> Result<()> {
        let (model, terrain) =
            crate::sim::configure(&self.robot, &self.ground, c.friction, c.slope, c.payload)?;
        session.model = model;
        session.terrain = terrain;
        Ok(())
    }
}

fn check_sorted(name: &str, trials: impl Iterator<Item = usize>) -> Result<()> {
    let v: Vec<usize> = trials.collect();
    if v.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Error::InvalidScenario(format!(
            "{name} schedule must be strictly increasing in trial index"
        )))
    }
}

/// Target and environment at one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub target_velocity: f64,
    pub friction: f64,
    /// Incline (rad).
    pub slope: f64,
    pub payload: f64,
}

/// One executed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial: usize,
    pub params: [f64; OPTIMIZED_DIM],
    pub context: ContextVector,
    pub mean_velocity: f64,
    pub cot: f64,
    /// Objective under the target velocity in effect during the trial.
    pub objective: f64,
    pub beta: f64,
    pub aborted: bool,
    pub target_velocity: f64,
    /// The proposal was a random sample.
    pub random: bool,
    pub context_change: bool,
}

/// Means over the last five non-aborted rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub mean_velocity: f64,
    pub cot: f64,
    pub objective: f64,
}

impl Summary {
    pub const WINDOW: usize = 5;

    pub fn of(rows: &[ReportRow]) -> Option<Self> {
        let last: Vec<&ReportRow> = rows
            .iter()
            .rev()
            .filter(|r| !r.aborted)
            .take(Self::WINDOW)
            .collect();
        if last.is_empty() {
            return None;
        }
        let n = last.len() as f64;
        let mean = |f: fn(&ReportRow) -> f64| last.iter().map(|r| f(r)).sum::<f64>() / n;
        Some(Self {
            rows: last.len(),
            mean_velocity: mean(|r| r.mean_velocity),
            cot: mean(|r| r.cot),
            objective: mean(|r| r.objective),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub variant: ControllerVariant,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    pub summary: Option<Summary>,
}

impl RunReport {
    pub fn new(name: &str, variant: ControllerVariant, seed: u64) -> Self {
        Self {
            name: name.into(),
            variant,
            seed,
            rows: Vec::new(),
            summary: None,
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
        self.summary = Summary::of(&self.rows);
    }

    /// Mean objective of rows `range`, aborted rows included.
    pub fn mean_objective(&self, range: std::ops::Range<usize>) -> f64 {
        let rows = &self.rows[range.start.min(self.rows.len())..range.end.min(self.rows.len())];
        rows.iter().map(|r| r.objective).sum::<f64>() / rows.len() as f64
    }
}

fn nominal_context(session: &TrialSession) -> ContextVector {
    ContextVector {
        load: session.model.total_mass() * session.model.gravity / LEG_COUNT as f64,
        slope: -session.terrain.slope_angle,
    }
}

fn report_row(
    trial: usize,
    record: &TrialRecord,
    cfg: &ObjectiveConfig,
    beta: f64,
    random: bool,
    context_change: bool,
) -> ReportRow {
    ReportRow {
        trial,
        params: record.params.to_vector(),
        context: record.context,
        mean_velocity: record.mean_forward_velocity(),
        cot: cost_of_transport(record, cfg),
        objective: record.objective,
        beta,
        aborted: record.aborted,
        target_velocity: record.target_velocity,
        random,
        context_change,
    }
}

/// Runs the optimization loop and returns the per-trial report.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    Ok(run_scenario_with_log(config)?.report)
}

/// Runs the optimization loop and returns the full log, traces included.
pub fn run_scenario_with_log(config: &ScenarioConfig) -> Result<RunLog> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut session = config.session()?;
    let opt = &config.optimizer;
    let active = active_mask(config.variant.uses_feedback());
    let mut history = OptimizerHistory::new(config.conditions_at(0).target_velocity);
    let mut report = RunReport::new(&config.name, config.variant, config.seed);

    for trial in 0..config.budget {
        let conditions = config.conditions_at(trial);
        config.apply(&mut session, &conditions)?;
        if conditions.target_velocity != history.target_velocity {
            history.reuse(conditions.target_velocity, &config.objective);
        }

        let update = history.update_beta(&opt.beta, &opt.sharing);
        let beta = if config.inference {
            INFERENCE_BETA
        } else {
            update.beta
        };
        let context = history
            .latest_context()
            .unwrap_or_else(|| nominal_context(&session));
        let (params, proposal) = propose_next(
            &history,
            trial,
            &context,
            beta,
            &opt.ranges,
            &active,
            &config.cpg,
            &opt.proposal,
            &mut rng,
        );

        let record = session.run_trial(&params, conditions.target_velocity, context)?;
        log::info!(
            "{} trial {trial}: J = {:.4}, v = {:.3}, beta = {beta:.4}{}",
            config.name,
            record.objective,
            record.mean_forward_velocity(),
            if record.aborted { " (aborted)" } else { "" }
        );
        report.push(report_row(
            trial,
            &record,
            &config.objective,
            beta,
            proposal.random,
            update.change_detected,
        ));
        history.push(record);
    }
    Ok(RunLog::new(config.clone(), report, history))
}

/// Runs `trials` trials of the scenario with `params` held fixed.
pub fn evaluate_frozen(
    config: &ScenarioConfig,
    params: &CpgParams,
    trials: usize,
) -> Result<RunReport> {
    config.validate()?;
    params.validate()?;
    let mut session = config.session()?;
    let mut report = RunReport::new(&config.name, config.variant, config.seed);
    let mut previous: Option<ContextVector> = None;
    for trial in 0..trials {
        let conditions = config.conditions_at(trial);
        config.apply(&mut session, &conditions)?;
        let fallback = previous.unwrap_or_else(|| nominal_context(&session));
        let record = session.run_trial(params, conditions.target_velocity, fallback)?;
        previous = Some(record.context);
        report.push(report_row(
            trial,
            &record,
            &config.objective,
            0.0,
            false,
            false,
        ));
    }
    Ok(report)
}
