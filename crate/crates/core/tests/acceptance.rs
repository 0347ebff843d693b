//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line; the
//! process exits non-zero if any fails.

mod common;

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use common::{brute_force_count, rel_err, DenseOracle};
use gaitopt_core::cbo::count_same_context;
use gaitopt_core::cbo::synthetic::SyntheticBenchmark;
use gaitopt_core::cpg::{step_network, trot_coupling, wrap_phase};
use gaitopt_core::harness::{
    evaluate_frozen, median, read_log, replay, run_ablation, run_scenario, run_scenario_with_log,
    summarize_ablation, write_log, PayloadEvent, VelocityEvent,
};
use gaitopt_core::objective::objective_value;
use gaitopt_core::{
    BetaSchedule, ContextSharingConfig, ContextVector, ControllerVariant, CpgParams, GpModel,
    KernelConfig, ObjectiveConfig, OptimizerHistory, OscillatorNetworkState, RunReport,
    ScenarioConfig, TrialRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs shared by several criteria.
#[derive(Default)]
struct Runs {
    reports: Vec<RunReport>,
}

impl Runs {
    fn of(&self, variant: ControllerVariant) -> Vec<&RunReport> {
        self.reports
            .iter()
            .filter(|r| r.variant == variant && r.name == "flat")
            .collect()
    }
}

fn limit_cycle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for mu in [0.9, 1.3, 1.7] {
        let p = CpgParams {
            intrinsic_amplitude: mu,
            convergence_rate: 50.0,
            feedback_gain: 0.0,
            ..CpgParams::default()
        };
        let mut s = OscillatorNetworkState::new([0.1; 4], [0.0, PI, PI, 0.0]);
        for _ in 0..500 {
            s = step_network(&s, &p, &[0.0; 4], 1e-3).unwrap();
        }
        worst = s.amplitude.iter().fold(worst, |w, r| w.max((r - mu).abs()));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-3 && elapsed < Duration::from_secs(1),
        format!("max |r - mu| at 0.5 s = {worst:.2e}, runtime {elapsed:.2?}"),
    )
}

/// Largest deviation from the lag matrix over `pairs` during the last second
/// of a 10 s open-loop run from random phases.
fn lock_error(params: &CpgParams, rng: &mut ChaCha8Rng, pairs: &[(usize, usize)]) -> f64 {
    let phi = trot_coupling();
    let phase: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let mut s = OscillatorNetworkState::new([params.intrinsic_amplitude; 4], phase);
    let mut worst = 0.0f64;
    for k in 0..10_000 {
        s = step_network(&s, params, &[0.0; 4], 1e-3).unwrap();
        if k >= 9_000 {
            for &(i, j) in pairs {
                let d = wrap_phase(s.phase[j] - s.phase[i] - phi[i][j]);
                worst = worst.max(d.min(TAU - d));
            }
        }
    }
    worst
}

fn phase_locking() -> Outcome {
    const ALL: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    const DIAGONAL: [(usize, usize); 2] = [(0, 3), (1, 2)];
    let open = CpgParams {
        feedback_gain: 0.0,
        ..CpgParams::default()
    };
    let equal = CpgParams {
        swing_frequency: 16.0,
        stance_frequency: 16.0,
        intrinsic_amplitude: 1.0,
        ..open
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let errors: Vec<f64> = (0..100)
        .map(|_| lock_error(&equal, &mut rng, &ALL))
        .collect();
    let diagonal: Vec<f64> = (0..100)
        .map(|_| lock_error(&open, &mut rng, &DIAGONAL))
        .collect();
    let lateral = lock_error(&open, &mut rng, &ALL);
    let locked = errors.iter().filter(|e| **e < 1e-2).count();
    let locked_diag = diagonal.iter().filter(|e| **e < 1e-2).count();
    outcome(
        locked == 100 && locked_diag == 100,
        format!(
            "equal frequencies: {locked}/100 locked (worst {:.1e} rad); default frequencies: diagonal pairs {locked_diag}/100 (worst {:.1e} rad), all pairs swing within {lateral:.2} rad",
            errors.iter().fold(0.0f64, |a, b| a.max(*b)),
            diagonal.iter().fold(0.0f64, |a, b| a.max(*b)),
        ),
    )
}

fn gp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(1..=20);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..10).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.5)).collect();
        let mut cfg = KernelConfig::new(8, 2);
        cfg.lengthscales = (0..10).map(|_| rng.random_range(0.2..3.0)).collect();
        cfg.signal_variance = rng.random_range(0.3..3.0);
        cfg.noise_variance = 10f64.powf(rng.random_range(-3.0..-1.0));
        let model = GpModel::condition(x.clone(), y.clone(), cfg.clone()).unwrap();
        let oracle = DenseOracle::new(&x, &y, &cfg, model.jitter());
        for q in x
            .iter()
            .cloned()
            .chain((0..10).map(|_| (0..10).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
        {
            let (m, s) = model.posterior(&q);
            let (om, os) = oracle.posterior(&q);
            worst_mean = worst_mean.max(rel_err(m, om));
            worst_std = worst_std.max(rel_err(s, os));
        }
    }
    outcome(
        worst_mean < 1e-8 && worst_std < 1e-8,
        format!("worst relative error: mean {worst_mean:.1e}, std {worst_std:.1e}"),
    )
}

fn beta_schedule() -> Outcome {
    let (schedule, sharing) = (BetaSchedule::default(), ContextSharingConfig::default());
    let trace = |contexts: &[ContextVector]| -> Vec<f64> {
        let mut h = OptimizerHistory::new(0.5);
        contexts
            .iter()
            .map(|c| {
                let mut r = TrialRecord::empty(CpgParams::default(), 12.0, 9.81, 1e-3);
                r.context = *c;
                h.push(r);
                h.update_beta(&schedule, &sharing).beta
            })
            .collect()
    };
    let a = ContextVector {
        load: 30.0,
        slope: 0.0,
    };
    let b = ContextVector {
        load: 45.0,
        slope: -0.2,
    };
    let normal = trace(&[a; 14]);
    let mut switched = vec![a; 12];
    switched.extend([b; 7]);
    let after = trace(&switched)[12..].to_vec();

    // decimal sequences; each value is the previous times 0.7
    let expected_normal = [
        5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 3.5, 2.45, 1.715, 1.2005,
    ];
    let expected_after = [1.5, 1.5, 1.5, 1.05, 0.735, 0.5145, 0.36015];
    let same = |got: &[f64], want: &[f64]| {
        got.len() == want.len()
            && got
                .iter()
                .zip(want)
                .all(|(g, w)| (g - w).abs() <= 1e-15 * w)
    };
    outcome(
        same(&normal, &expected_normal) && same(&after, &expected_after),
        format!("n = 1..14: {normal:?}; after change: {after:?}"),
    )
}

fn context_sharing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = ContextSharingConfig::default();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let current = ContextVector {
            load: rng.random_range(15.0..55.0),
            slope: rng.random_range(-0.4..0.1),
        };
        let history: Vec<ContextVector> = (0..rng.random_range(0..60))
            .map(|_| match rng.random_range(0..4) {
                0 => ContextVector {
                    load: current.load + if rng.random() { 8.0 } else { -8.0 },
                    slope: current.slope + if rng.random() { 0.05 } else { -0.05 },
                },
                1 => current,
                _ => ContextVector {
                    load: current.load + rng.random_range(-16.0..16.0),
                    slope: current.slope + rng.random_range(-0.1..0.1),
                },
            })
            .collect();
        if count_same_context(&history, &current, &cfg) != brute_force_count(&history, &current) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches in 1000 histories"),
    )
}

fn data_reuse(runs: &mut Runs) -> Outcome {
    let cfg = ScenarioConfig {
        name: "velocity".into(),
        budget: 60,
        seed: 5,
        velocity: vec![
            VelocityEvent {
                trial: 0,
                target: 0.5,
            },
            VelocityEvent {
                trial: 20,
                target: 0.3,
            },
            VelocityEvent {
                trial: 40,
                target: 0.6,
            },
        ],
        ..ScenarioConfig::default()
    };
    let log = run_scenario_with_log(&cfg).unwrap();
    let v = log.history.target_velocity;
    let equal = log
        .history
        .records
        .iter()
        .filter(|r| objective_value(r, v, &cfg.objective).to_bits() == r.objective.to_bits())
        .count();
    runs.reports.push(log.report);
    let n = log.history.records.len();
    outcome(
        equal == n && n == 60 && v == 0.6,
        format!("{equal}/{n} stored objectives bitwise equal to fresh evaluation at v* = {v}"),
    )
}

fn objective_bound(runs: &Runs) -> Outcome {
    let cfg = ObjectiveConfig::default();
    let bound = |cot: f64| cfg.max_velocity_term() - cfg.cot_weight * cot;
    let rows: Vec<_> = runs
        .reports
        .iter()
        .flat_map(|r| r.rows.iter())
        .filter(|r| !r.aborted)
        .collect();
    let violations = rows
        .iter()
        .filter(|r| r.objective > bound(r.cot) + 1e-12)
        .count();
    let reference = 2.175 <= bound(0.510);
    outcome(
        violations == 0 && reference && !rows.is_empty(),
        format!(
            "{violations} violations in {} evaluated trials; reference pair J 2.175 <= {:.3}",
            rows.len(),
            bound(0.510)
        ),
    )
}

fn end_to_end(runs: &mut Runs) -> Outcome {
    let mut velocities = Vec::new();
    let mut improved = 0;
    let mut slowest = Duration::ZERO;
    for seed in SEEDS {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let start = Instant::now();
        let report = run_scenario(&cfg).unwrap();
        slowest = slowest.max(start.elapsed());
        velocities.push(
            report.rows[35..]
                .iter()
                .map(|r| r.mean_velocity)
                .sum::<f64>()
                / 5.0,
        );
        if report.mean_objective(35..40) > report.mean_objective(0..5) {
            improved += 1;
        }
        runs.reports.push(report);
    }
    let v = median(&velocities);
    outcome(
        (v - 0.5).abs() <= 0.15 && improved == SEEDS.len() && slowest < Duration::from_secs(300),
        format!("median last-5 velocity {v:.3} m/s, {improved}/5 runs improved, slowest run {slowest:.2?}"),
    )
}

fn adaptation(runs: &mut Runs) -> Outcome {
    let mut adapted = Vec::new();
    let mut frozen = Vec::new();
    for seed in SEEDS {
        let cfg = ScenarioConfig {
            name: "payload".into(),
            seed,
            budget: 60,
            payload: vec![PayloadEvent {
                trial: 40,
                mass: 15.0,
            }],
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg).unwrap();
        let flat = cfg.cpg.with_vector(&report.rows[39].params);
        let loaded = ScenarioConfig {
            payload: vec![PayloadEvent {
                trial: 0,
                mass: 15.0,
            }],
            ..cfg.clone()
        };
        let fixed = evaluate_frozen(&loaded, &flat, 5).unwrap();
        adapted.push(report.mean_objective(55..60));
        frozen.push(fixed.mean_objective(0..5));
        runs.reports.push(report);
        runs.reports.push(fixed);
    }
    let (a, f) = (median(&adapted), median(&frozen));
    outcome(
        a > f,
        format!("median mean objective with 15 kg: adapted {a:.3}, frozen flat parameters {f:.3}"),
    )
}

fn ablation(runs: &mut Runs) -> Outcome {
    let cfg = ScenarioConfig::default();
    let others = [
        ControllerVariant::OpenLoop,
        ControllerVariant::Vmc,
        ControllerVariant::Tegotae,
    ];
    runs.reports
        .extend(run_ablation(&cfg, &others, &SEEDS).unwrap());
    let flat: Vec<RunReport> = ControllerVariant::ALL
        .iter()
        .flat_map(|&v| runs.of(v))
        .cloned()
        .collect();
    let rows = summarize_ablation(&flat);
    let get = |v: ControllerVariant| rows.iter().find(|r| r.variant == v).unwrap();
    let (ol, vmc, teg, both) = (
        get(ControllerVariant::OpenLoop),
        get(ControllerVariant::Vmc),
        get(ControllerVariant::Tegotae),
        get(ControllerVariant::VmcTegotae),
    );
    let cot_order = teg.cot < ol.cot && both.cot < vmc.cot;
    let best = rows
        .iter()
        .max_by(|a, b| a.objective.total_cmp(&b.objective))
        .unwrap()
        .variant;
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{} J {:.3} CoT {:.3}", r.variant, r.objective, r.cot))
        .collect();
    outcome(
        cot_order
            && best == ControllerVariant::VmcTegotae
            && rows.iter().all(|r| r.runs == SEEDS.len()),
        format!(
            "CoT ordering {}; highest median J: {best}; [{}]",
            if cot_order { "holds" } else { "violated" },
            table.join(", ")
        ),
    )
}

fn cbo_sanity() -> Outcome {
    let bench = SyntheticBenchmark::default();
    let outcomes: Vec<_> = SEEDS.iter().map(|&s| bench.run(s)).collect();
    let wins = outcomes
        .iter()
        .filter(|o| o.cbo_regret < o.random_regret)
        .count();
    let mean = outcomes.iter().map(|o| o.cbo_regret).sum::<f64>() / outcomes.len() as f64;
    outcome(
        wins >= 4,
        format!("optimizer beats random search on {wins}/5 seeds (mean regret {mean:.4})"),
    )
}

fn determinism() -> Outcome {
    let cfg = ScenarioConfig {
        seed: 17,
        ..ScenarioConfig::default()
    };
    let log = run_scenario_with_log(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run_log.json");
    write_log(&path, &log).unwrap();
    let stored = read_log(&path).unwrap();
    let outcome_ = replay(&stored).unwrap();
    outcome(
        outcome_.identical && outcome_.first_mismatch.is_none() && stored.report.rows.len() == 40,
        format!(
            "40-trial log replayed: bitwise identical = {}, first mismatch = {:?}",
            outcome_.identical, outcome_.first_mismatch
        ),
    )
}

fn main() {
    let mut runs = Runs::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut check = |name: &'static str, f: &mut dyn FnMut(&mut Runs) -> Outcome| {
        let start = Instant::now();
        let o = f(&mut runs);
        println!(
            "{} {name}: {} ({:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed()
        );
        results.push((name, o));
    };
    check("oscillator limit cycle", &mut |_| limit_cycle());
    check("trot phase locking", &mut |_| phase_locking());
    check("GP oracle equivalence", &mut |_| gp_oracle());
    check("beta schedule", &mut |_| beta_schedule());
    check("context sharing", &mut |_| context_sharing());
    check("data reuse exactness", &mut data_reuse);
    check("end-to-end learning", &mut end_to_end);
    check("adaptation ordering", &mut adaptation);
    check("ablation ordering", &mut ablation);
    check("objective bound", &mut |r| objective_bound(r));
    check("CBO sanity", &mut |_| cbo_sanity());
    check("determinism", &mut |_| determinism());

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "{}/{} acceptance criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
