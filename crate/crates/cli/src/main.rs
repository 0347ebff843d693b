use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gaitopt_core::harness::{
    export_results, read_log, replay, run_ablation, run_scenario_with_log, summarize_ablation,
    AblationRow, RunLog,
};
use gaitopt_core::{ControllerVariant, RunReport, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "gaitopt",
    version,
    about = "Online CPG gait optimization in a simulated quadruped"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization loop for one scenario.
    Optimize {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Re-execute a run log and check it reproduces bit for bit.
    Replay {
        log: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run every controller variant over several seeds and print the summary table.
    Ablate {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Number of seeds, counted up from the base seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Write learning-curve series from a run log.
    PlotData {
        log: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunFlags {
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the trial budget from the config.
    #[arg(long)]
    budget: Option<usize>,
    /// Pin exploration to zero (inference mode).
    #[arg(long)]
    inference: bool,
}

impl RunFlags {
    fn config(&self, path: &Path) -> Result<ScenarioConfig> {
        let mut cfg =
            ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(budget) = self.budget {
            cfg.budget = budget;
        }
        cfg.inference |= self.inference;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Optimize { config, run } => {
            let cfg = run.config(&config)?;
            let log = run_scenario_with_log(&cfg)?;
            export_results(&log.report, Some(&log), &run.out_dir)?;
            print_report(&log.report);
            println!("wrote {}", run.out_dir.display());
        }
        Command::Replay { log, out_dir } => {
            let stored = read_log(&log).with_context(|| format!("reading {}", log.display()))?;
            let outcome = replay(&stored)?;
            if let Some(dir) = out_dir {
                export_results(&outcome.replayed.report, Some(&outcome.replayed), dir)?;
            }
            println!("trials: {}", stored.report.rows.len());
            println!(
                "stored objectives consistent: {}",
                outcome.objectives_consistent
            );
            match outcome.first_mismatch {
                Some(t) => println!("first differing trial: {t}"),
                None => println!("all trial rows match"),
            }
            println!("bitwise identical: {}", outcome.identical);
            if !(outcome.identical && outcome.objectives_consistent) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Ablate { config, run, seeds } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let cfg = run.config(&config)?;
            let seed_list: Vec<u64> = (0..seeds).map(|k| cfg.seed.wrapping_add(k)).collect();
            let reports = run_ablation(&cfg, &ControllerVariant::ALL, &seed_list)?;
            for r in &reports {
                export_results(
                    r,
                    None,
                    run.out_dir.join(format!("{}-seed{}", r.variant, r.seed)),
                )?;
            }
            let rows = summarize_ablation(&reports);
            write_ablation_csv(&rows, &run.out_dir.join("ablation.csv"))?;
            print_ablation(&rows);
        }
        Command::PlotData { log, out_dir } => {
            let stored: RunLog =
                read_log(&log).with_context(|| format!("reading {}", log.display()))?;
            let written = export_results(&stored.report, None, &out_dir)?;
            for p in written {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_report(report: &RunReport) {
    println!(
        "{:>5} {:>9} {:>8} {:>8} {:>8}",
        "trial", "objective", "v_x", "cot", "beta"
    );
    for r in &report.rows {
        let flag = if r.aborted { " aborted" } else { "" };
        println!(
            "{:>5} {:>9.4} {:>8.3} {:>8.3} {:>8.4}{flag}",
            r.trial, r.objective, r.mean_velocity, r.cot, r.beta
        );
    }
    match report.summary {
        Some(s) => println!(
            "last {}: objective {:.4}, v_x {:.3}, cot {:.3}",
            s.rows, s.objective, s.mean_velocity, s.cot
        ),
        None => println!("no completed trials"),
    }
}

fn print_ablation(rows: &[AblationRow]) {
    println!("median of last-5 means over seeds");
    println!(
        "{:<12} {:>4} {:>8} {:>8} {:>9} {:>7}",
        "controller", "runs", "v_x", "cot", "objective", "aborted"
    );
    for r in rows {
        println!(
            "{:<12} {:>4} {:>8.3} {:>8.3} {:>9.4} {:>7}",
            r.variant.name(),
            r.runs,
            r.mean_velocity,
            r.cot,
            r.objective,
            r.aborted
        );
    }
}

fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut text = String::from("controller,runs,mean_vx,cot,objective,aborted\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant, r.runs, r.mean_velocity, r.cot, r.objective, r.aborted
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}
