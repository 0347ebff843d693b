use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{run_scenario, RunReport, ScenarioConfig, Summary};
use super::ControllerVariant;
use crate::error::Result;

/// Median over seeds of the last-window summaries of one variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: ControllerVariant,
    pub runs: usize,
    pub mean_velocity: f64,
    pub cot: f64,
    pub objective: f64,
    /// Aborted trials summed over all runs.
    pub aborted: usize,
}

/// Runs `config` for every variant and seed. Each run stays on one thread;
/// runs execute in parallel. Reports are ordered by variant, then seed.
pub fn run_ablation(
    config: &ScenarioConfig,
    variants: &[ControllerVariant],
    seeds: &[u64],
) -> Result<Vec<RunReport>> {
    config.validate()?;
    let jobs: Vec<(ControllerVariant, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    jobs.par_iter()
        .map(|&(variant, seed)| {
            let cfg = ScenarioConfig {
                variant,
                seed,
                ..config.clone()
            };
            run_scenario(&cfg)
        })
        .collect()
}

/// Median of a non-empty sample; NaN for an empty one.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One row per variant present in `reports`, in first-seen order. Runs
/// without a summary (every trial aborted) are excluded from the medians.
pub fn summarize_ablation(reports: &[RunReport]) -> Vec<AblationRow> {
    let mut variants: Vec<ControllerVariant> = Vec::new();
    for r in reports {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    variants
        .into_iter()
        .map(|variant| {
            let runs: Vec<&RunReport> = reports.iter().filter(|r| r.variant == variant).collect();
            let summaries: Vec<_> = runs.iter().filter_map(|r| r.summary).collect();
            let pick =
                |f: fn(&Summary) -> f64| median(&summaries.iter().map(f).collect::<Vec<_>>());
            AblationRow {
                variant,
                runs: runs.len(),
                mean_velocity: pick(|s| s.mean_velocity),
                cot: pick(|s| s.cot),
                objective: pick(|s| s.objective),
                aborted: runs
                    .iter()
                    .map(|r| r.rows.iter().filter(|row| row.aborted).count())
                    .sum(),
            }
        })
        .collect()
}
