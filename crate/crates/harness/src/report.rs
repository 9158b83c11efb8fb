//! The per-run report: final evaluation on the stored trial set, the
//! consecutive-goal marathon over the fixed seed panel, the reduction events,
//! and pointers to the flat-file artifacts. The report is the one artifact
//! allowed to mention wall-clock time; everything it points at is
//! deterministic.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tactix_core::trainer::ReductionRecord;

use crate::config::ExperimentConfig;
use crate::{HarnessError, Result};

/// Seeds used for multi-seed summaries (marathon panel).
pub const SEED_PANEL: [u64; 5] = [1, 2, 3, 4, 5];

/// Goals reached by one marathon seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGoals {
    pub seed: u64,
    pub goals: usize,
}

/// Consecutive-goal marathon results across the seed panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarathonSummary {
    pub duration_s: f64,
    pub per_seed: Vec<SeedGoals>,
    pub mean_goals: f64,
}

impl MarathonSummary {
    pub fn new(duration_s: f64, per_seed: Vec<SeedGoals>) -> Self {
        let mean_goals = if per_seed.is_empty() {
            0.0
        } else {
            per_seed.iter().map(|s| s.goals as f64).sum::<f64>() / per_seed.len() as f64
        };
        MarathonSummary {
            duration_s,
            per_seed,
            mean_goals,
        }
    }
}

/// Relative locations (within the run directory) of the run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub metrics_csv: PathBuf,
    pub events_jsonl: PathBuf,
    pub importance_csv: PathBuf,
    pub checkpoint: PathBuf,
    pub trialset: PathBuf,
}

impl ArtifactPaths {
    /// The fixed layout every run uses.
    pub fn standard() -> Self {
        ArtifactPaths {
            metrics_csv: PathBuf::from("metrics.csv"),
            events_jsonl: PathBuf::from("events.jsonl"),
            importance_csv: PathBuf::from("importance.csv"),
            checkpoint: PathBuf::from("checkpoint.json"),
            trialset: PathBuf::from("trialset.json"),
        }
    }
}

/// Everything worth knowing about a finished training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub preset: String,
    pub master_seed: u64,
    /// Epochs actually trained.
    pub epochs: u64,
    /// Final evaluation on the stored trial set.
    pub final_eval_success_rate: f64,
    pub final_eval_successes: usize,
    pub final_eval_trials: usize,
    /// Content hash of the trial set the final evaluation used.
    pub trialset_hash: String,
    pub consecutive_success: MarathonSummary,
    /// Curriculum reductions, in order.
    pub reductions: Vec<ReductionRecord>,
    pub paths: ArtifactPaths,
    /// The config this run was started from.
    pub config: ExperimentConfig,
    /// Wall-clock training time. The only nondeterministic field.
    pub wall_s: f64,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        text.push('\n');
        crate::write_string(path, &text)
    }

    /// Epoch of the first curriculum reduction, if any fired.
    pub fn first_trigger_epoch(&self) -> Option<u64> {
        self.reductions.first().map(|r| r.event.epoch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marathon_summary_averages_goals() {
        let s = MarathonSummary::new(
            30.0,
            vec![
                SeedGoals { seed: 1, goals: 4 },
                SeedGoals { seed: 2, goals: 6 },
            ],
        );
        assert_eq!(s.mean_goals, 5.0);
        assert_eq!(MarathonSummary::new(30.0, Vec::new()).mean_goals, 0.0);
    }

    #[test]
    fn reports_round_trip_through_json() {
        let report = RunReport {
            name: "x".into(),
            preset: "full_obs".into(),
            master_seed: 1,
            epochs: 10,
            final_eval_success_rate: 0.5,
            final_eval_successes: 5,
            final_eval_trials: 10,
            trialset_hash: "ab".repeat(32),
            consecutive_success: MarathonSummary::new(30.0, vec![SeedGoals { seed: 1, goals: 2 }]),
            reductions: Vec::new(),
            paths: ArtifactPaths::standard(),
            config: ExperimentConfig::new("x", "toy", "full_obs", 1, 10),
            wall_s: 1.25,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        let back = RunReport::load(&path).unwrap();
        assert_eq!(back.name, "x");
        assert_eq!(back.final_eval_successes, 5);
        assert_eq!(back.consecutive_success, report.consecutive_success);
        assert_eq!(back.first_trigger_epoch(), None);
    }
}
