//! Flat-file training artifacts: the per-epoch metrics CSV, the reduction
//! event log (one JSON object per line), and the importance-score CSV.
//!
//! Every column is a deterministic function of the experiment config — no
//! wall-clock values — so re-running a config reproduces these files byte
//! for byte. Floats are printed with Rust's shortest-round-trip formatting,
//! which parses back to the identical bits.

use std::path::Path;

use tactix_core::trainer::{EpochStats, ReductionRecord};

use crate::{HarnessError, Result};

pub const METRICS_HEADER: &str = "epoch,mean_episode_reward,ema_reward,eval_success_rate,\
active_feature_count,curriculum_step,actor_loss,critic_loss,entropy";

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render training history as CSV text (header + one row per epoch).
pub fn metrics_csv(history: &[EpochStats]) -> String {
    let mut out = String::with_capacity(64 * (history.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for s in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.epoch,
            opt_cell(s.mean_episode_reward),
            opt_cell(s.ema_reward),
            opt_cell(s.eval_success_rate),
            s.active_feature_count,
            s.curriculum_step,
            s.actor_loss,
            s.critic_loss,
            s.entropy,
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    crate::write_string(path, &metrics_csv(history))
}

/// Parse a metrics CSV back into per-epoch records.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochStats>> {
    let text = crate::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(HarnessError::format(
                path,
                format!("unexpected metrics header {other:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(HarnessError::format(
                path,
                format!("row {} has {} cells, expected 9", i + 2, cells.len()),
            ));
        }
        let bad = |what: &str| HarnessError::format(path, format!("row {}: bad {what}", i + 2));
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        rows.push(EpochStats {
            epoch: cells[0].parse().map_err(|_| bad("epoch"))?,
            mean_episode_reward: opt(cells[1], "mean_episode_reward")?,
            ema_reward: opt(cells[2], "ema_reward")?,
            eval_success_rate: opt(cells[3], "eval_success_rate")?,
            active_feature_count: cells[4].parse().map_err(|_| bad("active_feature_count"))?,
            curriculum_step: cells[5].parse().map_err(|_| bad("curriculum_step"))?,
            actor_loss: cells[6].parse().map_err(|_| bad("actor_loss"))?,
            critic_loss: cells[7].parse().map_err(|_| bad("critic_loss"))?,
            entropy: cells[8].parse().map_err(|_| bad("entropy"))?,
        });
    }
    Ok(rows)
}

/// Render reduction events as JSON Lines (one record per line).
pub fn events_jsonl(reductions: &[ReductionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in reductions {
        let line =
            serde_json::to_string(r).map_err(|e| HarnessError::Config(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_events_jsonl(path: &Path, reductions: &[ReductionRecord]) -> Result<()> {
    crate::write_string(path, &events_jsonl(reductions)?)
}

pub fn read_events_jsonl(path: &Path) -> Result<Vec<ReductionRecord>> {
    let text = crate::read_to_string(path)?;
    text.lines()
        .map(|line| serde_json::from_str(line).map_err(|e| HarnessError::format(path, e)))
        .collect()
}

/// One scored sensor in the importance report.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    /// 1 = least important (next to be reduced).
    pub rank: usize,
    /// Index within the reducible bank.
    pub rel_index: usize,
    /// Absolute observation index.
    pub abs_index: usize,
    pub feature: String,
    pub score: f64,
}

/// Render current importance scores, least important first.
///
/// `scores` are `(rel_index, score)` pairs as produced by the ledger;
/// `tactile_start` maps them to absolute observation indices and
/// `feature_name` labels them.
pub fn importance_csv(
    scores: &[(usize, f64)],
    tactile_start: usize,
    feature_name: impl Fn(usize) -> String,
) -> String {
    let mut ranked: Vec<(usize, f64)> = scores.to_vec();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut out = String::from("rank,rel_index,abs_index,feature,score\n");
    for (rank, (rel, score)) in ranked.iter().enumerate() {
        let abs = tactile_start + rel;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rank + 1,
            rel,
            abs,
            feature_name(abs),
            score
        ));
    }
    out
}

pub fn read_importance_csv(path: &Path) -> Result<Vec<ImportanceRow>> {
    let text = crate::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("rank,rel_index,abs_index,feature,score") => {}
        other => {
            return Err(HarnessError::format(
                path,
                format!("unexpected importance header {other:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(HarnessError::format(
                path,
                format!("row {} has {} cells, expected 5", i + 2, cells.len()),
            ));
        }
        let bad = |what: &str| HarnessError::format(path, format!("row {}: bad {what}", i + 2));
        rows.push(ImportanceRow {
            rank: cells[0].parse().map_err(|_| bad("rank"))?,
            rel_index: cells[1].parse().map_err(|_| bad("rel_index"))?,
            abs_index: cells[2].parse().map_err(|_| bad("abs_index"))?,
            feature: cells[3].to_string(),
            score: cells[4].parse().map_err(|_| bad("score"))?,
        });
    }
    Ok(rows)
}
