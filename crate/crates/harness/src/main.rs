//! Command-line front end. Results go to stdout; progress goes to stderr;
//! failures print one machine-readable JSON object to stderr and exit
//! nonzero (1 for runtime errors, 2 for usage errors).

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tactix::checkpoint::Checkpoint;
use tactix::compare::{compare_table, RunSummary};
use tactix::config::ExperimentConfig;
use tactix::report::{MarathonSummary, SeedGoals};
use tactix::runner::{run_eval, run_training};
use tactix::trialset::TrialSet;
use tactix::{HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "tactix",
    version,
    about = "Train, evaluate, and compare sensing-reduction policies"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train from a JSON experiment config, writing a run directory.
    Train {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint on a stored trial set; prints a JSON summary.
    Eval {
        checkpoint: PathBuf,
        trialset: PathBuf,
    },
    /// Print a finished run's sensor-importance table.
    ReportImportance {
        /// Run directory (containing importance.csv).
        run: PathBuf,
    },
    /// Replay the same trials at several control rates.
    RateSweep {
        checkpoint: PathBuf,
        /// Comma-separated control rates in Hz (each must divide the sim rate).
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Episode length per trial, in simulated seconds.
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long uninterrupted goal-chasing run, one episode per seed.
    Marathon {
        checkpoint: PathBuf,
        /// Simulated seconds per episode.
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5])]
        seeds: Vec<u64>,
    },
    /// Compare finished runs; the first is the baseline for deltas.
    Compare {
        /// Run directories (or their report.json files).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let msg = serde_json::json!({ "kind": "usage", "message": e.to_string() });
            eprintln!("{msg}");
            std::process::exit(2);
        }
        // Help and version output belong on stdout with a zero exit.
        Err(e) => {
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(err) = run(cli.cmd) {
        let msg = serde_json::json!({ "kind": err.kind(), "message": err.to_string() });
        eprintln!("{msg}");
        std::process::exit(1);
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train { config, quiet } => {
            let cfg = ExperimentConfig::load(&config)?;
            let arts = run_training(&cfg, quiet)?;
            println!(
                "run {}: final_success {:.3} on {} trials, {:.1} goals/{}s marathon; artifacts in {}",
                arts.report.name,
                arts.report.final_eval_success_rate,
                arts.report.final_eval_trials,
                arts.report.consecutive_success.mean_goals,
                arts.report.consecutive_success.duration_s,
                arts.dir.display()
            );
            Ok(())
        }
        Cmd::Eval {
            checkpoint,
            trialset,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let set = TrialSet::load(&trialset)?;
            let summary = run_eval(&ckpt, &set)?;
            let text = serde_json::to_string_pretty(&summary)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
        Cmd::ReportImportance { run } => {
            let path = run.join("importance.csv");
            // Validate before echoing so a corrupt file errors, not prints.
            tactix::metrics::read_importance_csv(&path)?;
            print!("{}", tactix::read_to_string(&path)?);
            Ok(())
        }
        Cmd::RateSweep {
            checkpoint,
            rates,
            trials,
            seconds,
            seed,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let points = ckpt.rate_sweep(&rates, trials, seconds, seed)?;
            let mut csv = String::from(
                "rate_hz,control_every,successes,n_trials,angle_rmse,tracking_rmse,per_joint_tracking_rmse\n",
            );
            for p in &points {
                let per_joint: Vec<String> =
                    p.per_joint_tracking_rmse.iter().map(f64::to_string).collect();
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    p.rate_hz,
                    p.control_every,
                    p.successes,
                    p.n_trials,
                    p.angle_rmse,
                    p.tracking_rmse,
                    per_joint.join(";")
                ));
            }
            if let Some(path) = out {
                tactix::write_string(&path, &csv)?;
            }
            print!("{csv}");
            Ok(())
        }
        Cmd::Marathon {
            checkpoint,
            duration,
            seeds,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let mut per_seed = Vec::with_capacity(seeds.len());
            for seed in seeds {
                let m = ckpt.marathon(duration, seed)?;
                per_seed.push(SeedGoals {
                    seed,
                    goals: m.goals_reached,
                });
            }
            let summary = MarathonSummary::new(duration, per_seed);
            let text = serde_json::to_string_pretty(&summary)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
        Cmd::Compare { runs } => {
            let summaries: Vec<RunSummary> = runs
                .iter()
                .map(|p| RunSummary::load(p))
                .collect::<Result<_>>()?;
            print!("{}", compare_table(&summaries));
            Ok(())
        }
    }
}
