//! Cross-run comparison: final success, time-to-first-trigger, and the
//! smoothed-reward dip/recovery around each curriculum step, with deltas
//! against the first run given. Comparing a run against itself yields zero
//! deltas by construction — a cheap self-test of the whole artifact chain.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tactix_core::trainer::EpochStats;

use crate::metrics::read_metrics_csv;
use crate::report::RunReport;
use crate::{HarnessError, Result};

/// How far past a curriculum step we look for the reward to recover.
pub const RECOVERY_WINDOW: u64 = 300;
/// A step "recovered" when the smoothed reward regains this fraction of its
/// pre-step value.
pub const RECOVERY_FRACTION: f64 = 0.95;

/// Smoothed-reward dip and recovery around one curriculum step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDip {
    /// Epoch the reduction fired.
    pub epoch: u64,
    /// Smoothed reward at the trigger (the value that crossed the threshold).
    pub pre_ema: f64,
    /// Lowest smoothed reward inside the window after the step.
    pub dip_ema: f64,
    /// Epochs after the step until the smoothed reward first regained
    /// [`RECOVERY_FRACTION`] of `pre_ema`; `None` if it never did in window.
    pub recovery_epochs: Option<u64>,
}

/// Measure the dip/recovery window after a curriculum step. Returns `None`
/// when the history carries no smoothed reward at or before the event (e.g.
/// a preset that reduces before the first epoch).
pub fn dip_recovery(
    history: &[EpochStats],
    event_epoch: u64,
    window: u64,
    frac: f64,
) -> Option<StepDip> {
    let pre_ema = history
        .iter()
        .filter(|s| s.epoch <= event_epoch)
        .filter_map(|s| s.ema_reward)
        .next_back()?;
    let mut dip_ema = pre_ema;
    let mut recovery_epochs = None;
    for s in history {
        if s.epoch <= event_epoch || s.epoch > event_epoch + window {
            continue;
        }
        let Some(ema) = s.ema_reward else { continue };
        if ema < dip_ema {
            dip_ema = ema;
        }
        if recovery_epochs.is_none() && ema >= frac * pre_ema {
            recovery_epochs = Some(s.epoch - event_epoch);
        }
    }
    Some(StepDip {
        epoch: event_epoch,
        pre_ema,
        dip_ema,
        recovery_epochs,
    })
}

/// One run distilled for comparison.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    pub preset: String,
    pub seed: u64,
    pub final_success: f64,
    pub first_trigger_epoch: Option<u64>,
    pub steps: Vec<StepDip>,
}

impl RunSummary {
    /// Load a run directory (or its `report.json`) and distill it.
    pub fn load(path: &Path) -> Result<Self> {
        let dir: PathBuf = if path.is_dir() {
            path.to_path_buf()
        } else {
            path.parent()
                .map(Path::to_path_buf)
                .ok_or_else(|| HarnessError::Config(format!("{} has no parent", path.display())))?
        };
        let report = RunReport::load(&dir.join("report.json"))?;
        let history = read_metrics_csv(&dir.join(&report.paths.metrics_csv))?;
        Ok(RunSummary::distill(&report, &history))
    }

    pub fn distill(report: &RunReport, history: &[EpochStats]) -> Self {
        let steps = report
            .reductions
            .iter()
            .filter_map(|r| {
                dip_recovery(history, r.event.epoch, RECOVERY_WINDOW, RECOVERY_FRACTION)
            })
            .collect();
        RunSummary {
            name: report.name.clone(),
            preset: report.preset.clone(),
            seed: report.master_seed,
            final_success: report.final_eval_success_rate,
            first_trigger_epoch: report.first_trigger_epoch(),
            steps,
        }
    }
}

fn fmt_opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn fmt_delta_opt(a: Option<u64>, b: Option<u64>) -> String {
    match (a, b) {
        (Some(a), Some(b)) => format!("{:+}", a as i64 - b as i64),
        (None, None) => "+0".into(),
        _ => "n/a".into(),
    }
}

/// Render the comparison as an aligned text table, with delta lines against
/// the first run.
pub fn compare_table(runs: &[RunSummary]) -> String {
    let mut out = String::new();
    let name_w = runs
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(4)
        .max("run".len());
    let _ = writeln!(
        out,
        "{:<name_w$}  {:<10}  {:>4}  {:>13}  {:>13}",
        "run", "preset", "seed", "final_success", "first_trigger"
    );
    for r in runs {
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<10}  {:>4}  {:>13.3}  {:>13}",
            r.name,
            r.preset,
            r.seed,
            r.final_success,
            fmt_opt(r.first_trigger_epoch),
        );
        for (i, s) in r.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:name_w$}  step {}: epoch {}, ema {:.1} -> dip {:.1}, recovery {}",
                "",
                i + 1,
                s.epoch,
                s.pre_ema,
                s.dip_ema,
                s.recovery_epochs
                    .map(|e| format!("{e} epochs"))
                    .unwrap_or_else(|| "none in window".into()),
            );
        }
    }
    if runs.len() > 1 {
        let base = &runs[0];
        let _ = writeln!(out, "\ndeltas vs {}:", base.name);
        for r in &runs[1..] {
            let mut line = format!(
                "{:<name_w$}  final_success {:+.3}  first_trigger {}",
                r.name,
                r.final_success - base.final_success,
                fmt_delta_opt(r.first_trigger_epoch, base.first_trigger_epoch),
            );
            for (i, (s, bs)) in r.steps.iter().zip(&base.steps).enumerate() {
                let _ = write!(
                    line,
                    "  step{} recovery {}",
                    i + 1,
                    fmt_delta_opt(s.recovery_epochs, bs.recovery_epochs)
                );
            }
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history_with_dip() -> Vec<EpochStats> {
        // EMA ramps to 100 by epoch 10, dips to 40 at 12, recovers by 20.
        (1..=30)
            .map(|epoch| {
                let ema = match epoch {
                    1..=10 => 10.0 * epoch as f64,
                    11 => 70.0,
                    12 => 40.0,
                    13..=19 => 40.0 + 8.0 * (epoch - 12) as f64,
                    _ => 100.0,
                };
                EpochStats {
                    epoch,
                    mean_episode_reward: Some(ema),
                    ema_reward: Some(ema),
                    eval_success_rate: None,
                    active_feature_count: 22,
                    curriculum_step: 0,
                    actor_loss: 0.0,
                    critic_loss: 0.0,
                    entropy: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn dip_and_recovery_are_measured_from_the_event_epoch() {
        let h = history_with_dip();
        let d = dip_recovery(&h, 10, 300, 0.95).unwrap();
        assert_eq!(d.pre_ema, 100.0);
        assert_eq!(d.dip_ema, 40.0);
        // 95% of 100 is first reached at epoch 19 (96.0): 9 epochs later.
        assert_eq!(d.recovery_epochs, Some(9));

        // A tighter window misses the recovery but still sees the dip.
        let tight = dip_recovery(&h, 10, 5, 0.95).unwrap();
        assert_eq!(tight.dip_ema, 40.0);
        assert_eq!(tight.recovery_epochs, None);

        // An event before any smoothed reward exists yields nothing.
        assert!(dip_recovery(&h[..0], 0, 300, 0.95).is_none());
    }

    #[test]
    fn self_comparison_prints_zero_deltas() {
        let run = RunSummary {
            name: "a".into(),
            preset: "csr2_drg".into(),
            seed: 1,
            final_success: 0.97,
            first_trigger_epoch: Some(61),
            steps: vec![StepDip {
                epoch: 61,
                pre_ema: 120.0,
                dip_ema: 50.0,
                recovery_epochs: Some(40),
            }],
        };
        let table = compare_table(&[run.clone(), run]);
        assert!(table.contains("final_success +0.000"));
        assert!(table.contains("first_trigger +0"));
        assert!(table.contains("step1 recovery +0"));
    }

    #[test]
    fn missing_trigger_renders_as_dash() {
        let run = RunSummary {
            name: "full".into(),
            preset: "full_obs".into(),
            seed: 1,
            final_success: 1.0,
            first_trigger_epoch: None,
            steps: Vec::new(),
        };
        let table = compare_table(&[run]);
        assert!(table.lines().nth(1).unwrap().trim_end().ends_with('-'));
    }
}
