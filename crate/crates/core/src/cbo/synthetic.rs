//! Synthetic contextual benchmark with a known optimum per context.
//!
//! `f(x, c) = exp(-|x - a(c)|^2 / width)` on the unit square, with the peak
//! location `a(c)` moving linearly with the scalar context `c`. The maximum is
//! exactly 1 for every context.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{propose_normalized, BetaSchedule, ProposalSettings};
use crate::gp::{FitOptions, KernelConfig};

pub const PEAK_WIDTH: f64 = 0.03;

/// Peak location for context `c`.
pub fn peak(c: f64) -> [f64; 2] {
    [0.2 + 0.6 * c, 0.8 - 0.5 * c]
}

pub fn synthetic_objective(x: &[f64], c: f64) -> f64 {
    let a = peak(c);
    let d2 = (x[0] - a[0]).powi(2) + (x[1] - a[1]).powi(2);
    (-d2 / PEAK_WIDTH).exp()
}

/// Maximum of the synthetic objective over the unit square for any context.
pub const SYNTHETIC_OPTIMUM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBenchmark {
    /// Context of each block of trials, in order.
    pub contexts: Vec<f64>,
    pub trials_per_context: usize,
    pub schedule: BetaSchedule,
    /// Hyperparameter bounds. The function is noiseless and its peak narrow,
    /// so these are wider than the defaults used for gait trials.
    pub fit: FitOptions,
}

impl Default for SyntheticBenchmark {
    fn default() -> Self {
        Self {
            contexts: vec![0.2, 0.8],
            trials_per_context: 20,
            schedule: BetaSchedule::default(),
            fit: FitOptions {
                lengthscale_bounds: (0.05, 10.0),
                context_lengthscale_bounds: (0.05, 10.0),
                noise_variance_bounds: (1e-6, 0.5),
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    /// Simple regret over the final context block.
    pub cbo_regret: f64,
    pub random_regret: f64,
}

impl SyntheticBenchmark {
    fn settings(&self) -> ProposalSettings {
        ProposalSettings {
            kernel: KernelConfig::new(2, 1),
            fit: self.fit,
            ..ProposalSettings::default()
        }
    }

    /// Runs the optimizer and a random-search baseline with the same budget.
    pub fn run(&self, seed: u64) -> BenchmarkOutcome {
        let settings = self.settings();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs: Vec<Vec<f64>> = Vec::new();
        let mut targets = Vec::new();
        let mut best_final = f64::NEG_INFINITY;
        let last_block = self.contexts.len().saturating_sub(1);
        let mut trial = 0;
        for (block, &c) in self.contexts.iter().enumerate() {
            for k in 0..self.trials_per_context {
                let beta = self.schedule.beta(k, block > 0);
                let p = propose_normalized(
                    &inputs,
                    &targets,
                    trial,
                    &[c],
                    beta,
                    &[true, true],
                    &[0.0, 0.0],
                    &settings,
                    &mut rng,
                );
                let y = synthetic_objective(&p.point, c);
                if block == last_block {
                    best_final = best_final.max(y);
                }
                inputs.push(vec![p.point[0], p.point[1], c]);
                targets.push(y);
                trial += 1;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5eed);
        let c = self.contexts[last_block];
        let random_best = (0..self.trials_per_context)
            .map(|_| synthetic_objective(&[rng.random::<f64>(), rng.random::<f64>()], c))
            .fold(f64::NEG_INFINITY, f64::max);

        BenchmarkOutcome {
            cbo_regret: SYNTHETIC_OPTIMUM - best_final,
            random_regret: SYNTHETIC_OPTIMUM - random_best,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_is_attained_at_peak() {
        for c in [0.0, 0.3, 1.0] {
            assert_eq!(synthetic_objective(&peak(c), c), SYNTHETIC_OPTIMUM);
            let a = peak(c);
            assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn grid_never_exceeds_optimum() {
        for i in 0..=50 {
            for j in 0..=50 {
                let x = [i as f64 / 50.0, j as f64 / 50.0];
                assert!(synthetic_objective(&x, 0.8) <= SYNTHETIC_OPTIMUM);
            }
        }
    }
}
