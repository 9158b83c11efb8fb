//! Training orchestration: turn an [`ExperimentConfig`] into a run directory
//! containing the trial set, per-epoch metrics, event log, importance
//! report, checkpoint, and final report.
//!
//! The final evaluation goes through the saved checkpoint's own evaluation
//! path — not the live trainer — so `report.json` proves the stored file
//! reproduces the trained policy.

use std::path::PathBuf;
use std::time::Instant;

use tactix_core::trainer::Trainer;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::report::{ArtifactPaths, MarathonSummary, RunReport, SeedGoals, SEED_PANEL};
use crate::trialset::TrialSet;
use crate::{metrics, HarnessError, Result};

/// Marathon duration used in every run report.
pub const MARATHON_SECONDS: f64 = 30.0;

/// A finished run: where it lives and what it reported.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub report: RunReport,
}

/// Train from a config and write the full artifact set into the run
/// directory. With `quiet` the progress line per epoch chunk is suppressed.
pub fn run_training(cfg: &ExperimentConfig, quiet: bool) -> Result<RunArtifacts> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let paths = ArtifactPaths::standard();

    let trainer_cfg = cfg.resolve()?;
    let trialset = TrialSet::generate(&trainer_cfg.env, cfg.trial_count, cfg.master_seed);
    trialset.save(&dir.join(&paths.trialset))?;

    let started = Instant::now();
    let mut trainer = Trainer::new(trainer_cfg)?;
    let progress_every = (cfg.epochs / 10).max(1);
    let mut progress = |s: &tactix_core::trainer::EpochStats| {
        if !quiet && (s.epoch % progress_every == 0 || s.epoch == cfg.epochs) {
            let ema = s.ema_reward.map(|e| format!("{e:.1}")).unwrap_or_default();
            eprintln!(
                "[{}] epoch {}/{} ema_reward={} active={} step={}",
                cfg.name, s.epoch, cfg.epochs, ema, s.active_feature_count, s.curriculum_step
            );
        }
    };
    trainer.run(cfg.epochs, Some(&mut progress))?;
    let wall_s = started.elapsed().as_secs_f64();

    write_run_files(&dir, &paths, &trainer)?;

    let ckpt = Checkpoint::from_trainer(&cfg.name, &trainer);
    ckpt.save(&dir.join(&paths.checkpoint))?;

    // Evaluate through the stored artifacts' own code path.
    let eval = ckpt.evaluate(&trialset.trials)?;
    let mut per_seed = Vec::with_capacity(SEED_PANEL.len());
    for seed in SEED_PANEL {
        let m = ckpt.marathon(MARATHON_SECONDS, seed)?;
        per_seed.push(SeedGoals {
            seed,
            goals: m.goals_reached,
        });
    }

    let report = RunReport {
        name: cfg.name.clone(),
        preset: cfg.preset.clone(),
        master_seed: cfg.master_seed,
        epochs: trainer.epoch(),
        final_eval_success_rate: eval.success_rate,
        final_eval_successes: eval.successes,
        final_eval_trials: eval.n_trials,
        trialset_hash: trialset.content_hash(),
        consecutive_success: MarathonSummary::new(MARATHON_SECONDS, per_seed),
        reductions: trainer.reductions().to_vec(),
        paths,
        config: cfg.clone(),
        wall_s,
    };
    report.save(&dir.join("report.json"))?;

    Ok(RunArtifacts { dir, report })
}

fn write_run_files(dir: &std::path::Path, paths: &ArtifactPaths, trainer: &Trainer) -> Result<()> {
    metrics::write_metrics_csv(&dir.join(&paths.metrics_csv), trainer.history())?;
    metrics::write_events_jsonl(&dir.join(&paths.events_jsonl), trainer.reductions())?;

    let schema = trainer.config().env.schema()?;
    let (tactile_start, _) = schema.reducible_range();
    let csv = metrics::importance_csv(
        &trainer.ledger().scores_or_zeros(),
        tactile_start,
        |abs| schema.feature_name(abs),
    );
    crate::write_string(&dir.join(&paths.importance_csv), &csv)
}

/// What `eval` prints: a deterministic summary of one checkpoint on one
/// trial set.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalSummary {
    pub checkpoint: String,
    pub preset: String,
    pub epoch: u64,
    pub trialset_hash: String,
    pub n_trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_final_abs_error: f64,
}

/// Evaluate a stored checkpoint on a stored trial set.
pub fn run_eval(ckpt: &Checkpoint, trialset: &TrialSet) -> Result<EvalSummary> {
    let eval = ckpt.evaluate(&trialset.trials)?;
    Ok(EvalSummary {
        checkpoint: ckpt.name.clone(),
        preset: ckpt.preset.clone(),
        epoch: ckpt.epoch,
        trialset_hash: trialset.content_hash(),
        n_trials: eval.n_trials,
        successes: eval.successes,
        success_rate: eval.success_rate,
        mean_final_abs_error: eval.mean_final_abs_error,
    })
}
