//! Contextual Bayesian optimization of the CPG parameters.
//!
//! The surrogate is a [`GpModel`] over `(normalized parameters, normalized
//! context)`. Proposals maximize the upper confidence bound
//! `mean + beta * std` with the context fixed to the latest estimate. The
//! first few proposals of a session are uniform random samples.

pub mod synthetic;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpg::{CpgParams, FEEDBACK_GAIN_INDEX, OPTIMIZED_DIM};
use crate::gp::{FitOptions, GpModel, KernelConfig};
use crate::objective::{
    objective_value, ContextVector, NormalizationRanges, ObjectiveConfig, TrialRecord, CONTEXT_DIM,
};

/// Exploration factor schedule `beta = beta0 * gamma^max(n - n0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaSchedule {
    pub initial: f64,
    /// Initial value once a context change has been detected.
    pub initial_after_change: f64,
    pub decay: f64,
    /// Trial count at which decay starts.
    pub decay_start: usize,
    pub decay_start_after_change: usize,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            initial: 5.0,
            initial_after_change: 1.5,
            decay: 0.7,
            decay_start: 10,
            decay_start_after_change: 3,
        }
    }
}

impl BetaSchedule {
    /// Exploration factor after `n` trials in the current context.
    pub fn beta(&self, n: usize, context_changed: bool) -> f64 {
        let (initial, start) = if context_changed {
            (self.initial_after_change, self.decay_start_after_change)
        } else {
            (self.initial, self.decay_start)
        };
        initial * self.decay.powi(n.saturating_sub(start) as i32)
    }

    pub fn is_valid(&self) -> bool {
        self.initial > 0.0
            && self.initial_after_change > 0.0
            && self.decay > 0.0
            && self.decay < 1.0
    }
}

/// Thresholds deciding whether two trials share a context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextSharingConfig {
    pub load_threshold: f64,
    pub slope_threshold: f64,
    /// Span of the load context (N).
    pub load_range: f64,
    /// Span of the slope context (rad).
    pub slope_range: f64,
    /// Number of preceding trials inspected for a context change.
    pub change_window: usize,
}

impl Default for ContextSharingConfig {
    fn default() -> Self {
        Self {
            load_threshold: 0.2,
            slope_threshold: 0.1,
            load_range: 40.0,
            slope_range: 0.5,
            change_window: 5,
        }
    }
}

impl ContextSharingConfig {
    pub fn load_band(&self) -> f64 {
        self.load_threshold * self.load_range
    }

    pub fn slope_band(&self) -> f64 {
        self.slope_threshold * self.slope_range
    }

    pub fn same_context(&self, a: &ContextVector, current: &ContextVector) -> bool {
        let (bl, bs) = (self.load_band(), self.slope_band());
        current.load - bl <= a.load
            && a.load <= current.load + bl
            && current.slope - bs <= a.slope
            && a.slope <= current.slope + bs
    }
}

/// Number of contexts in `history` that share `current`'s context.
pub fn count_same_context<'a>(
    history: impl IntoIterator<Item = &'a ContextVector>,
    current: &ContextVector,
    cfg: &ContextSharingConfig,
) -> usize {
    history
        .into_iter()
        .filter(|c| cfg.same_context(c, current))
        .count()
}

/// Ordered trial history of one optimization session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHistory {
    pub records: Vec<TrialRecord>,
    pub target_velocity: f64,
    /// Set once a context change has been detected in this session.
    pub context_changed: bool,
}

/// Exploration state for the next proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaUpdate {
    pub beta: f64,
    /// Trials sharing the latest context, the latest included.
    pub trials_in_context: usize,
    pub change_detected: bool,
}

impl OptimizerHistory {
    pub fn new(target_velocity: f64) -> Self {
        Self {
            records: Vec::new(),
            target_velocity,
            context_changed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: TrialRecord) {
        self.records.push(record);
    }

    pub fn latest_context(&self) -> Option<ContextVector> {
        self.records.last().map(|r| r.context)
    }

    /// Recomputes every stored objective for a new target velocity.
    pub fn reuse(&mut self, new_target: f64, cfg: &ObjectiveConfig) {
        reuse_history(self, new_target, cfg);
    }

    /// Detects a context change at the latest trial and returns the
    /// exploration factor for the next proposal.
    pub fn update_beta(
        &mut self,
        schedule: &BetaSchedule,
        sharing: &ContextSharingConfig,
    ) -> BetaUpdate {
        let Some((latest, previous)) = self.records.split_last() else {
            return BetaUpdate {
                beta: schedule.beta(0, self.context_changed),
                trials_in_context: 0,
                change_detected: false,
            };
        };
        let current = latest.context;
        let window = previous.len().saturating_sub(sharing.change_window);
        let recent = previous[window..].iter().map(|r| &r.context);
        let change_detected =
            !previous.is_empty() && count_same_context(recent, &current, sharing) == 0;
        if change_detected {
            self.context_changed = true;
        }
        let n = count_same_context(self.records.iter().map(|r| &r.context), &current, sharing);
        BetaUpdate {
            beta: schedule.beta(n, self.context_changed),
            trials_in_context: n,
            change_detected,
        }
    }
}

/// Data reuse: re-scores every stored trial for `new_target`. Parameters,
/// contexts and traces are untouched; aborted trials keep the floor value.
pub fn reuse_history(history: &mut OptimizerHistory, new_target: f64, cfg: &ObjectiveConfig) {
    history.target_velocity = new_target;
    for record in &mut history.records {
        record.objective = objective_value(record, new_target, cfg);
        record.target_velocity = new_target;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Uniform random candidates.
    pub candidates: usize,
    /// Best candidates refined by coordinate search.
    pub refine_starts: usize,
    /// Coordinate moves per refined start.
    pub refine_steps: usize,
    /// Initial coordinate step in normalized units.
    pub initial_step: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            candidates: 1024,
            refine_starts: 8,
            refine_steps: 128,
            initial_step: 0.1,
        }
    }
}

/// Outcome of an acquisition maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult {
    /// Maximizer over the parameter block, normalized.
    pub point: Vec<f64>,
    pub value: f64,
    /// Best UCB among the raw random candidates.
    pub best_candidate_value: f64,
}

/// Upper confidence bound at `(x, context)`.
pub fn ucb(model: &GpModel, x: &[f64], context: &[f64], beta: f64) -> f64 {
    let mut input = Vec::with_capacity(x.len() + context.len());
    input.extend_from_slice(x);
    input.extend_from_slice(context);
    let (mean, std) = model.posterior(&input);
    mean + beta * std
}

/// Maximizes the UCB over the active coordinates of the unit cube; inactive
/// coordinates are held at `fixed`.
pub fn maximize_ucb(
    model: &GpModel,
    context: &[f64],
    beta: f64,
    active: &[bool],
    fixed: &[f64],
    cfg: &AcquisitionConfig,
    rng: &mut impl Rng,
) -> AcquisitionResult {
    let dim = active.len();
    let sample = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..dim)
            .map(|d| {
                if active[d] {
                    rng.random::<f64>()
                } else {
                    fixed[d]
                }
            })
            .collect()
    };
    let candidates: Vec<Vec<f64>> = (0..cfg.candidates.max(1)).map(|_| sample(rng)).collect();
    let values: Vec<f64> = candidates
        .par_iter()
        .map(|x| ucb(model, x, context, beta))
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let best_candidate_value = values[order[0]];

    let active_dims: Vec<usize> = (0..dim).filter(|&d| active[d]).collect();
    let refined: Vec<(Vec<f64>, f64)> = order
        .iter()
        .take(cfg.refine_starts.max(1))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| {
            coordinate_refine(
                model,
                context,
                beta,
                candidates[i].clone(),
                values[i],
                &active_dims,
                cfg,
            )
        })
        .collect();

    let (point, value) = refined
        .into_iter()
        .fold(None::<(Vec<f64>, f64)>, |best, (x, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((x, v)),
        })
        .expect("at least one refined start");
    AcquisitionResult {
        point,
        value,
        best_candidate_value,
    }
}

fn coordinate_refine(
    model: &GpModel,
    context: &[f64],
    beta: f64,
    mut x: Vec<f64>,
    mut value: f64,
    active_dims: &[usize],
    cfg: &AcquisitionConfig,
) -> (Vec<f64>, f64) {
    if active_dims.is_empty() {
        return (x, value);
    }
    let mut step = cfg.initial_step;
    let mut improved_in_sweep = false;
    for s in 0..cfg.refine_steps {
        let d = active_dims[s % active_dims.len()];
        let original = x[d];
        let mut best = (original, value);
        for candidate in [original + step, original - step] {
            let c = candidate.clamp(0.0, 1.0);
            if c == original {
                continue;
            }
            x[d] = c;
            let v = ucb(model, &x, context, beta);
            if v > best.1 {
                best = (c, v);
            }
        }
        x[d] = best.0;
        if best.1 > value {
            value = best.1;
            improved_in_sweep = true;
        }
        if (s + 1) % active_dims.len() == 0 {
            if !improved_in_sweep {
                step *= 0.5;
            }
            improved_in_sweep = false;
        }
    }
    (x, value)
}

/// Surrogate and acquisition settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalSettings {
    /// Proposals with an index below this are uniform random samples.
    pub random_trials: usize,
    /// Surrogate targets are raised to this floor, so that no gait is modeled
    /// as worse than an aborted trial.
    pub target_floor: Option<f64>,
    pub kernel: KernelConfig,
    pub fit: FitOptions,
    pub acquisition: AcquisitionConfig,
}

impl Default for ProposalSettings {
    fn default() -> Self {
        Self {
            random_trials: 3,
            target_floor: Some(-1.0),
            kernel: KernelConfig::new(OPTIMIZED_DIM, CONTEXT_DIM),
            fit: FitOptions::default(),
            acquisition: AcquisitionConfig::default(),
        }
    }
}

/// A proposed parameter vector in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub random: bool,
    /// UCB of the proposal when it came from the acquisition.
    pub acquisition_value: Option<f64>,
}

/// Generic proposal step over normalized observations `(x ++ context, y)`.
#[allow(clippy::too_many_arguments)]
pub fn propose_normalized(
    inputs: &[Vec<f64>],
    targets: &[f64],
    trial_index: usize,
    context: &[f64],
    beta: f64,
    active: &[bool],
    fixed: &[f64],
    settings: &ProposalSettings,
    rng: &mut impl Rng,
) -> Proposal {
    let random = |rng: &mut dyn rand::RngCore| Proposal {
        point: (0..active.len())
            .map(|d| {
                if active[d] {
                    rng.random::<f64>()
                } else {
                    fixed[d]
                }
            })
            .collect(),
        random: true,
        acquisition_value: None,
    };
    if trial_index < settings.random_trials || inputs.is_empty() {
        return random(rng);
    }
    match GpModel::fit(
        inputs.to_vec(),
        targets.to_vec(),
        &settings.kernel,
        &settings.fit,
        rng,
    ) {
        Ok(model) => {
            let result = maximize_ucb(
                &model,
                context,
                beta,
                active,
                fixed,
                &settings.acquisition,
                rng,
            );
            Proposal {
                point: result.point,
                random: false,
                acquisition_value: Some(result.value),
            }
        }
        Err(e) => {
            log::warn!("surrogate fit failed ({e}); falling back to a random proposal");
            random(rng)
        }
    }
}

/// Which optimized parameters are searched. The force-feedback gain is only
/// meaningful when feedback is active.
pub fn active_mask(feedback_enabled: bool) -> [bool; OPTIMIZED_DIM] {
    let mut mask = [true; OPTIMIZED_DIM];
    mask[FEEDBACK_GAIN_INDEX] = feedback_enabled;
    mask
}

/// Surrogate input of a trial: normalized parameters then normalized context.
pub fn surrogate_input(
    params: &CpgParams,
    context: &ContextVector,
    ranges: &NormalizationRanges,
    active: &[bool; OPTIMIZED_DIM],
) -> Vec<f64> {
    let mut x = ranges.normalize_params(params);
    for (d, v) in x.iter_mut().enumerate() {
        if !active[d] {
            *v = 0.0;
        }
    }
    let mut input = x.to_vec();
    input.extend_from_slice(&ranges.normalize_context(context));
    input
}

/// Proposes the parameters of trial `trial_index` from the session history.
///
/// Inactive parameters are pinned to their lower bound.
#[allow(clippy::too_many_arguments)]
pub fn propose_next(
    history: &OptimizerHistory,
    trial_index: usize,
    context: &ContextVector,
    beta: f64,
    ranges: &NormalizationRanges,
    active: &[bool; OPTIMIZED_DIM],
    template: &CpgParams,
    settings: &ProposalSettings,
    rng: &mut impl Rng,
) -> (CpgParams, Proposal) {
    let inputs: Vec<Vec<f64>> = history
        .records
        .iter()
        .map(|r| surrogate_input(&r.params, &r.context, ranges, active))
        .collect();
    let floor = settings.target_floor.unwrap_or(f64::NEG_INFINITY);
    let targets: Vec<f64> = history
        .records
        .iter()
        .map(|r| r.objective.max(floor))
        .collect();
    let fixed = [0.0; OPTIMIZED_DIM];
    let proposal = propose_normalized(
        &inputs,
        &targets,
        trial_index,
        &ranges.normalize_context(context),
        beta,
        active,
        &fixed,
        settings,
        rng,
    );
    let u: [f64; OPTIMIZED_DIM] = std::array::from_fn(|d| proposal.point[d]);
    let params = ranges.clamp_params(&template.with_vector(&ranges.denormalize_params(&u)));
    (params, proposal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn beta_examples() {
        let s = BetaSchedule::default();
        assert_eq!(s.beta(10, false), 5.0);
        assert!((s.beta(12, false) - 2.45).abs() < 1e-12);
        assert_eq!(s.beta(3, true), 1.5);
        assert!((s.beta(4, true) - 1.05).abs() < 1e-12);
    }

    #[test]
    fn beta_non_increasing() {
        let s = BetaSchedule::default();
        for flag in [false, true] {
            for n in 0..60 {
                assert!(s.beta(n + 1, flag) <= s.beta(n, flag));
            }
        }
    }

    #[test]
    fn context_sharing_basics() {
        let cfg = ContextSharingConfig::default();
        let c = ContextVector {
            load: 30.0,
            slope: -0.05,
        };
        assert_eq!(count_same_context(std::iter::empty(), &c, &cfg), 0);
        assert_eq!(count_same_context([c].iter(), &c, &cfg), 1);
        let edge = ContextVector {
            load: 38.0,
            slope: 0.0,
        };
        assert_eq!(count_same_context([edge].iter(), &c, &cfg), 1);
        let outside = ContextVector {
            load: 38.5,
            slope: -0.05,
        };
        assert_eq!(count_same_context([outside].iter(), &c, &cfg), 0);
    }

    fn record(objective: f64, context: ContextVector) -> TrialRecord {
        let mut r = TrialRecord::empty(CpgParams::default(), 12.0, 9.81, 0.001);
        r.objective = objective;
        r.context = context;
        r
    }

    #[test]
    fn change_detection_switches_schedule() {
        let mut h = OptimizerHistory::new(0.5);
        let flat = ContextVector {
            load: 29.0,
            slope: 0.0,
        };
        let loaded = ContextVector {
            load: 48.0,
            slope: 0.0,
        };
        for _ in 0..12 {
            h.push(record(1.0, flat));
        }
        let u = h.update_beta(&BetaSchedule::default(), &ContextSharingConfig::default());
        assert!(!u.change_detected);
        assert_eq!(u.trials_in_context, 12);
        assert!((u.beta - 2.45).abs() < 1e-12);

        h.push(record(0.5, loaded));
        let u = h.update_beta(&BetaSchedule::default(), &ContextSharingConfig::default());
        assert!(u.change_detected);
        assert_eq!(u.trials_in_context, 1);
        assert_eq!(u.beta, 1.5);
        for _ in 0..4 {
            h.push(record(0.5, loaded));
        }
        let u = h.update_beta(&BetaSchedule::default(), &ContextSharingConfig::default());
        assert!(!u.change_detected);
        assert_eq!(u.trials_in_context, 5);
        assert!((u.beta - 1.5 * 0.49).abs() < 1e-12);
    }

    #[test]
    fn reuse_with_same_target_is_identity() {
        let mut r = TrialRecord::empty(CpgParams::default(), 12.0, 9.81, 0.001);
        for k in 0..300 {
            let v = 0.4 + 0.001 * k as f64;
            r.push_sample([v, 0.01], [1.0; 8], [2.0; 8], [30.0; 4], 0.0);
        }
        r.distance = 0.2;
        let cfg = ObjectiveConfig::default();
        r.finalize(0.5, &cfg);
        let mut h = OptimizerHistory::new(0.5);
        h.push(r);
        let before = h.clone();
        h.reuse(0.5, &cfg);
        assert_eq!(
            h.records[0].objective.to_bits(),
            before.records[0].objective.to_bits()
        );
    }

    #[test]
    fn reuse_rewards_matching_velocity() {
        let cfg = ObjectiveConfig::default();
        let mut r = TrialRecord::empty(CpgParams::default(), 12.0, 9.81, 0.001);
        for _ in 0..300 {
            r.push_sample([0.3, 0.0], [1.0; 8], [1.0; 8], [30.0; 4], 0.0);
        }
        r.distance = 0.09;
        r.finalize(0.8, &cfg);
        let old = r.objective;
        let mut h = OptimizerHistory::new(0.8);
        h.push(r);
        h.reuse(0.3, &cfg);
        assert!(h.records[0].objective > old);
        assert_eq!(h.records[0].target_velocity, 0.3);
    }

    #[test]
    fn first_proposals_are_random_in_box() {
        let ranges = NormalizationRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = OptimizerHistory::new(0.5);
        for i in 0..3 {
            let (p, prop) = propose_next(
                &h,
                i,
                &ContextVector::default(),
                5.0,
                &ranges,
                &active_mask(true),
                &CpgParams::default(),
                &ProposalSettings::default(),
                &mut rng,
            );
            assert!(prop.random);
            assert!(ranges.contains(&p));
        }
    }

    #[test]
    fn refinement_never_regresses() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| -(x[0] - 0.3).powi(2) - (x[1] - 0.6).powi(2))
            .collect();
        let model = GpModel::condition(xs, ys, KernelConfig::new(2, 1)).unwrap();
        for beta in [0.0, 1.0, 5.0] {
            let r = maximize_ucb(
                &model,
                &[0.5],
                beta,
                &[true, true],
                &[0.0, 0.0],
                &AcquisitionConfig::default(),
                &mut rng,
            );
            assert!(r.value >= r.best_candidate_value);
            assert!(r.point.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_beta_maximizes_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<Vec<f64>> = (0..15)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| -(x[0] - 0.3).powi(2) - (x[1] - 0.6).powi(2))
            .collect();
        let model = GpModel::condition(xs, ys, KernelConfig::new(2, 1)).unwrap();
        let r = maximize_ucb(
            &model,
            &[0.5],
            0.0,
            &[true, true],
            &[0.0, 0.0],
            &AcquisitionConfig::default(),
            &mut rng,
        );
        let (mean, _) = model.posterior(&[r.point[0], r.point[1], 0.5]);
        assert!((r.value - mean).abs() < 1e-12);
    }

    #[test]
    fn inactive_dimensions_stay_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let model = GpModel::condition(xs, ys, KernelConfig::new(2, 1)).unwrap();
        let r = maximize_ucb(
            &model,
            &[0.2],
            2.0,
            &[true, false],
            &[0.0, 0.25],
            &AcquisitionConfig::default(),
            &mut rng,
        );
        assert_eq!(r.point[1], 0.25);
    }
}
