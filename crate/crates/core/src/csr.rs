//! Curriculum-based sensing reduction: importance ledger and schedule.
//!
//! While the policy trains, a ledger counts how often each reducible sensor
//! is active (reading magnitude above a small threshold). The per-feature
//! importance score is the activation frequency `g = count / steps`. When the
//! smoothed training reward clears a trigger threshold — and a cooldown has
//! elapsed since the previous reduction — the curriculum drops the least
//! important sensors: the next planned batch of features with the lowest
//! scores, ties broken toward the lowest index. Each reduction resets the
//! ledger so later steps score only the surviving sensors on fresh data.
//!
//! Reward smoothing uses an exponential moving average parameterized by its
//! half-life in epochs, so the trigger is insensitive to single-epoch spikes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Activation-count importance tracker over the reducible feature block.
/// Indices are relative to that block.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImportanceLedger {
    counts: Vec<u64>,
    steps: u64,
    threshold: f64,
    reduced: Vec<usize>,
}

impl ImportanceLedger {
    pub fn new(n_features: usize, threshold: f64) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidConfig("ledger needs n_features >= 1".into()));
        }
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidConfig("activation threshold invalid".into()));
        }
        Ok(ImportanceLedger {
            counts: vec![0; n_features],
            steps: 0,
            threshold,
            reduced: Vec::new(),
        })
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn steps_observed(&self) -> u64 {
        self.steps
    }

    /// Already-reduced relative indices, sorted ascending.
    pub fn reduced(&self) -> &[usize] {
        &self.reduced
    }

    pub fn n_remaining(&self) -> usize {
        self.counts.len() - self.reduced.len()
    }

    /// Count one step of raw readings: a feature is active when its
    /// magnitude strictly exceeds the threshold.
    pub fn record(&mut self, readings: &[f64]) -> Result<()> {
        if readings.len() != self.counts.len() {
            return Err(Error::Shape {
                what: "ledger readings",
                expected: self.counts.len(),
                got: readings.len(),
            });
        }
        for (c, r) in self.counts.iter_mut().zip(readings) {
            if r.abs() > self.threshold {
                *c += 1;
            }
        }
        self.steps += 1;
        Ok(())
    }

    /// Importance scores `(index, count/steps)` for surviving features only.
    pub fn scores(&self) -> Result<Vec<(usize, f64)>> {
        if self.steps == 0 {
            return Err(Error::EmptyLedger);
        }
        Ok(self.scores_unchecked())
    }

    /// Like [`scores`](Self::scores), but an empty ledger reports zeros
    /// (used by the immediate-trigger schedule that fires before any data).
    pub fn scores_or_zeros(&self) -> Vec<(usize, f64)> {
        if self.steps == 0 {
            return (0..self.counts.len())
                .filter(|i| !self.reduced.contains(i))
                .map(|i| (i, 0.0))
                .collect();
        }
        self.scores_unchecked()
    }

    fn scores_unchecked(&self) -> Vec<(usize, f64)> {
        let steps = self.steps as f64;
        self.counts
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.reduced.contains(i))
            .map(|(i, &c)| (i, c as f64 / steps))
            .collect()
    }

    /// Pick the `count` least-important surviving features; ties break toward
    /// the lowest index. Returned indices are sorted ascending.
    pub fn select_reduction(&self, count: usize) -> Result<Vec<usize>> {
        let mut scored = self.scores()?;
        if count > scored.len() {
            return Err(Error::InvalidConfig(format!(
                "cannot reduce {count} of {} remaining features",
                scored.len()
            )));
        }
        scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let mut picked: Vec<usize> = scored[..count].iter().map(|(i, _)| *i).collect();
        picked.sort_unstable();
        Ok(picked)
    }

    /// Selection from a zero-filled ledger (immediate trigger): the lowest
    /// `count` surviving indices.
    fn select_without_data(&self, count: usize) -> Result<Vec<usize>> {
        let remaining: Vec<usize> = (0..self.counts.len())
            .filter(|i| !self.reduced.contains(i))
            .collect();
        if count > remaining.len() {
            return Err(Error::InvalidConfig(format!(
                "cannot reduce {count} of {} remaining features",
                remaining.len()
            )));
        }
        Ok(remaining[..count].to_vec())
    }

    /// Mark features reduced and wipe the counts so the next scoring window
    /// starts fresh.
    pub fn mark_reduced_and_reset(&mut self, indices: &[usize]) -> Result<()> {
        for &i in indices {
            if i >= self.counts.len() {
                return Err(Error::Shape {
                    what: "reduced index",
                    expected: self.counts.len(),
                    got: i,
                });
            }
            if !self.reduced.contains(&i) {
                self.reduced.push(i);
            }
        }
        self.reduced.sort_unstable();
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.steps = 0;
        Ok(())
    }
}

/// Reduction schedule and trigger parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurriculumPlan {
    /// Features to drop at each curriculum step, in order.
    pub step_counts: Vec<usize>,
    /// Smoothed mean-episode-reward threshold that arms a reduction.
    pub tau: f64,
    /// Minimum epochs between reductions.
    pub cooldown_epochs: u64,
    /// Half-life (in epochs) of the reward moving average.
    pub ema_halflife: f64,
    /// Fire the first step unconditionally at the first check (used by the
    /// blind-from-birth baseline).
    pub trigger_at_epoch0: bool,
}

impl CurriculumPlan {
    pub fn new(step_counts: Vec<usize>, tau: f64) -> Self {
        CurriculumPlan {
            step_counts,
            tau,
            cooldown_epochs: 50,
            ema_halflife: 20.0,
            trigger_at_epoch0: false,
        }
    }

    pub fn validate(&self, n_reducible: usize) -> Result<()> {
        if self.step_counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("curriculum step of zero features".into()));
        }
        let total: usize = self.step_counts.iter().sum();
        if total > n_reducible {
            return Err(Error::InvalidConfig(format!(
                "plan reduces {total} features but only {n_reducible} are reducible"
            )));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidConfig("tau must be finite".into()));
        }
        if !(self.ema_halflife > 0.0) {
            return Err(Error::InvalidConfig("ema_halflife must be positive".into()));
        }
        Ok(())
    }

    /// Per-epoch EMA retention factor: `0.5^(1/halflife)`.
    pub fn ema_decay(&self) -> f64 {
        crate::math::powf(0.5, 1.0 / self.ema_halflife)
    }
}

/// One fired reduction, for event logs and audits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReductionEvent {
    pub epoch: u64,
    /// Zero-based curriculum step that fired.
    pub step_index: usize,
    /// Relative indices dropped this step, sorted ascending.
    pub reduced: Vec<usize>,
    /// Score snapshot (surviving features) taken just before the reset.
    pub scores: Vec<(usize, f64)>,
    /// Smoothed reward at the trigger (zero for an immediate trigger).
    pub ema_reward: f64,
    /// Reducible features still observed after this step.
    pub remaining_after: usize,
}

/// Curriculum driver: owns the plan, the reward EMA, and the step pointer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Curriculum {
    plan: CurriculumPlan,
    next_step: usize,
    last_trigger: Option<u64>,
    ema: Option<f64>,
}

impl Curriculum {
    pub fn new(plan: CurriculumPlan, n_reducible: usize) -> Result<Self> {
        plan.validate(n_reducible)?;
        Ok(Curriculum {
            plan,
            next_step: 0,
            last_trigger: None,
            ema: None,
        })
    }

    pub fn plan(&self) -> &CurriculumPlan {
        &self.plan
    }

    /// Steps fired so far.
    pub fn steps_done(&self) -> usize {
        self.next_step
    }

    pub fn is_exhausted(&self) -> bool {
        self.next_step >= self.plan.step_counts.len()
    }

    pub fn ema_reward(&self) -> Option<f64> {
        self.ema
    }

    /// Fold one epoch's mean episode reward into the moving average.
    pub fn observe_reward(&mut self, mean_episode_reward: f64) {
        let d = self.plan.ema_decay();
        self.ema = Some(match self.ema {
            None => mean_episode_reward,
            Some(prev) => d * prev + (1.0 - d) * mean_episode_reward,
        });
    }

    /// Check the trigger, and if it fires select + mark the reduction in the
    /// ledger (which also resets its counts). Returns the event when a step
    /// fired.
    pub fn maybe_advance(
        &mut self,
        epoch: u64,
        ledger: &mut ImportanceLedger,
    ) -> Result<Option<ReductionEvent>> {
        if self.is_exhausted() {
            return Ok(None);
        }
        let count = self.plan.step_counts[self.next_step];

        let immediate = self.plan.trigger_at_epoch0 && self.next_step == 0;
        if !immediate {
            let armed = match self.ema {
                Some(e) => e > self.plan.tau,
                None => false,
            };
            if !armed {
                return Ok(None);
            }
            if let Some(t) = self.last_trigger {
                if epoch.saturating_sub(t) < self.plan.cooldown_epochs {
                    return Ok(None);
                }
            }
        }

        let (reduced, scores, ema_reward) = if immediate && ledger.steps_observed() == 0 {
            (ledger.select_without_data(count)?, ledger.scores_or_zeros(), 0.0)
        } else {
            (
                ledger.select_reduction(count)?,
                ledger.scores()?,
                self.ema.unwrap_or(0.0),
            )
        };
        ledger.mark_reduced_and_reset(&reduced)?;
        let event = ReductionEvent {
            epoch,
            step_index: self.next_step,
            reduced,
            scores,
            ema_reward,
            remaining_after: ledger.n_remaining(),
        };
        self.next_step += 1;
        self.last_trigger = Some(epoch);
        Ok(Some(event))
    }
}

/// Named experiment arms over a reducible bank of `n` sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CurriculumPreset {
    /// Three reductions (4, 4, 3) with random replacement.
    Csr3Drg,
    /// Two reductions (7, 6) with random replacement.
    Csr2Drg,
    /// Two reductions (7, 6) replacing with zeros.
    Csr2Zeros,
    /// All reducible sensors dropped at the first check, zero replacement:
    /// the classic asymmetric baseline whose actor never sees them.
    Aac,
    /// No reduction at all.
    FullObs,
}

impl CurriculumPreset {
    pub const ALL: [CurriculumPreset; 5] = [
        CurriculumPreset::Csr3Drg,
        CurriculumPreset::Csr2Drg,
        CurriculumPreset::Csr2Zeros,
        CurriculumPreset::Aac,
        CurriculumPreset::FullObs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CurriculumPreset::Csr3Drg => "csr3_drg",
            CurriculumPreset::Csr2Drg => "csr2_drg",
            CurriculumPreset::Csr2Zeros => "csr2_zeros",
            CurriculumPreset::Aac => "aac",
            CurriculumPreset::FullObs => "full_obs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == s)
    }

    /// Reduction batch sizes for a bank of `n_reducible` sensors.
    pub fn step_counts(&self, n_reducible: usize) -> Vec<usize> {
        match self {
            CurriculumPreset::Csr3Drg => vec![4, 4, 3],
            CurriculumPreset::Csr2Drg | CurriculumPreset::Csr2Zeros => vec![7, 6],
            CurriculumPreset::Aac => vec![n_reducible],
            CurriculumPreset::FullObs => Vec::new(),
        }
    }

    /// Whether replaced features read zero instead of random draws.
    pub fn zeros_replacement(&self) -> bool {
        matches!(self, CurriculumPreset::Csr2Zeros | CurriculumPreset::Aac)
    }

    /// Whether the first step fires before any training.
    pub fn trigger_at_epoch0(&self) -> bool {
        matches!(self, CurriculumPreset::Aac)
    }

    /// Build a plan with the given trigger threshold and defaults for the
    /// remaining knobs.
    pub fn plan(&self, n_reducible: usize, tau: f64) -> CurriculumPlan {
        let mut plan = CurriculumPlan::new(self.step_counts(n_reducible), tau);
        plan.trigger_at_epoch0 = self.trigger_at_epoch0();
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn activation_counting_is_frequency() {
        let mut ledger = ImportanceLedger::new(2, 0.05).unwrap();
        for step in 0..10 {
            // Feature 0 always active; feature 1 active on even steps.
            let f1 = if step % 2 == 0 { 0.5 } else { 0.0 };
            ledger.record(&[0.9, f1]).unwrap();
        }
        let scores = ledger.scores().unwrap();
        assert_eq!(scores, vec![(0, 1.0), (1, 0.5)]);
        assert_eq!(ledger.steps_observed(), 10);
    }

    #[test]
    fn threshold_is_strict_and_uses_magnitude() {
        let mut ledger = ImportanceLedger::new(3, 0.05).unwrap();
        ledger.record(&[0.05, -0.06, 0.0500001]).unwrap();
        let scores = ledger.scores().unwrap();
        assert_eq!(scores[0].1, 0.0, "exactly at threshold is inactive");
        assert_eq!(scores[1].1, 1.0, "negative readings count by magnitude");
        assert_eq!(scores[2].1, 1.0);
    }

    #[test]
    fn empty_ledger_refuses_to_score() {
        let ledger = ImportanceLedger::new(4, 0.05).unwrap();
        assert!(matches!(ledger.scores(), Err(Error::EmptyLedger)));
        assert!(ledger.select_reduction(1).is_err());
        assert_eq!(ledger.scores_or_zeros().len(), 4);
    }

    #[test]
    fn selection_takes_least_important() {
        let mut ledger = ImportanceLedger::new(5, 0.05).unwrap();
        // Build counts [5, 1, 3, 2, 9] over 10 steps.
        let targets = [5u64, 1, 3, 2, 9];
        for step in 0..10u64 {
            let readings: alloc::vec::Vec<f64> = targets
                .iter()
                .map(|&t| if step < t { 1.0 } else { 0.0 })
                .collect();
            ledger.record(&readings).unwrap();
        }
        assert_eq!(ledger.select_reduction(2).unwrap(), vec![1, 3]);
        assert_eq!(ledger.select_reduction(0).unwrap(), Vec::<usize>::new());
        assert!(ledger.select_reduction(6).is_err());
    }

    #[test]
    fn ties_break_toward_lowest_index() {
        let mut ledger = ImportanceLedger::new(4, 0.05).unwrap();
        // Counts [3, 0, 0, 5].
        for step in 0..5 {
            ledger
                .record(&[
                    if step < 3 { 1.0 } else { 0.0 },
                    0.0,
                    0.0,
                    1.0,
                ])
                .unwrap();
        }
        assert_eq!(ledger.select_reduction(1).unwrap(), vec![1]);
        assert_eq!(ledger.select_reduction(2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn reduction_resets_counts_and_hides_features() {
        let mut ledger = ImportanceLedger::new(3, 0.05).unwrap();
        ledger.record(&[1.0, 0.0, 1.0]).unwrap();
        ledger.mark_reduced_and_reset(&[1]).unwrap();
        assert_eq!(ledger.steps_observed(), 0);
        assert_eq!(ledger.reduced(), &[1]);
        assert_eq!(ledger.n_remaining(), 2);
        ledger.record(&[1.0, 1.0, 0.0]).unwrap();
        let scores = ledger.scores().unwrap();
        // Feature 1 is gone; fresh window only.
        assert_eq!(scores, vec![(0, 1.0), (2, 0.0)]);
    }

    #[test]
    fn ema_half_life_is_exact() {
        let plan = CurriculumPlan::new(vec![1], 100.0);
        let mut cur = Curriculum::new(plan, 4).unwrap();
        cur.observe_reward(0.0);
        for _ in 0..20 {
            cur.observe_reward(1.0);
        }
        // ema_k = 1 - 0.5^(k/20); at k = 20 exactly one half-life has passed.
        let ema = cur.ema_reward().unwrap();
        assert!((ema - 0.5).abs() < 1e-12, "ema = {ema}");
    }

    #[test]
    fn trigger_requires_threshold_and_cooldown() {
        let mut plan = CurriculumPlan::new(vec![1, 1], 10.0);
        plan.cooldown_epochs = 5;
        let mut cur = Curriculum::new(plan, 4).unwrap();
        let mut ledger = ImportanceLedger::new(4, 0.05).unwrap();
        ledger.record(&[1.0, 0.0, 1.0, 1.0]).unwrap();

        // No EMA yet: never fires.
        assert!(cur.maybe_advance(1, &mut ledger).unwrap().is_none());
        // Below threshold: no fire.
        cur.observe_reward(5.0);
        assert!(cur.maybe_advance(2, &mut ledger).unwrap().is_none());
        // Push the EMA over tau.
        for _ in 0..200 {
            cur.observe_reward(50.0);
        }
        let ev = cur.maybe_advance(10, &mut ledger).unwrap().unwrap();
        assert_eq!(ev.step_index, 0);
        assert_eq!(ev.reduced, vec![1]);
        assert_eq!(ev.remaining_after, 3);
        assert!(ev.ema_reward > 10.0);
        // Ledger was reset: next check inside cooldown does nothing, and even
        // after cooldown it needs fresh data to score.
        ledger.record(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(cur.maybe_advance(12, &mut ledger).unwrap().is_none(), "cooldown");
        let ev2 = cur.maybe_advance(15, &mut ledger).unwrap().unwrap();
        assert_eq!(ev2.step_index, 1);
        assert_eq!(ev2.reduced, vec![2]);
        assert!(cur.is_exhausted());
        assert!(cur.maybe_advance(100, &mut ledger).unwrap().is_none());
    }

    #[test]
    fn immediate_trigger_reduces_everything_before_data() {
        let mut plan = CurriculumPlan::new(vec![4], -1.0);
        plan.trigger_at_epoch0 = true;
        let mut cur = Curriculum::new(plan, 4).unwrap();
        let mut ledger = ImportanceLedger::new(4, 0.05).unwrap();
        let ev = cur.maybe_advance(0, &mut ledger).unwrap().unwrap();
        assert_eq!(ev.reduced, vec![0, 1, 2, 3]);
        assert_eq!(ev.ema_reward, 0.0);
        assert_eq!(ev.remaining_after, 0);
        assert!(ev.scores.iter().all(|&(_, s)| s == 0.0));
    }

    #[test]
    fn plan_validation_checks_budget() {
        assert!(CurriculumPlan::new(vec![7, 6], 0.0).validate(13).is_ok());
        assert!(CurriculumPlan::new(vec![7, 6], 0.0).validate(12).is_err());
        assert!(CurriculumPlan::new(vec![0], 0.0).validate(4).is_err());
        assert!(CurriculumPlan::new(vec![], 0.0).validate(0).is_ok());
    }

    #[test]
    fn presets_shapes_and_flags() {
        assert_eq!(CurriculumPreset::Csr3Drg.step_counts(13), vec![4, 4, 3]);
        assert_eq!(CurriculumPreset::Csr2Drg.step_counts(13), vec![7, 6]);
        assert_eq!(CurriculumPreset::Aac.step_counts(13), vec![13]);
        assert!(CurriculumPreset::FullObs.step_counts(13).is_empty());
        assert!(CurriculumPreset::Csr2Zeros.zeros_replacement());
        assert!(CurriculumPreset::Aac.zeros_replacement());
        assert!(!CurriculumPreset::Csr2Drg.zeros_replacement());
        assert!(CurriculumPreset::Aac.trigger_at_epoch0());
        for p in CurriculumPreset::ALL {
            assert_eq!(CurriculumPreset::parse(p.name()), Some(p));
        }
        assert_eq!(CurriculumPreset::parse("nope"), None);
        // The wide bank supports both multi-step presets: 13 reducible of 75.
        let plan = CurriculumPreset::Csr2Drg.plan(13, 2500.0);
        assert!(plan.validate(13).is_ok());
        assert_eq!(plan.tau, 2500.0);
    }

    proptest! {
        #[test]
        fn prop_selection_is_disjoint_and_sized(
            counts in proptest::collection::vec(0u64..50, 3..12),
            take in 1usize..4,
        ) {
            let n = counts.len();
            prop_assume!(take < n);
            let mut ledger = ImportanceLedger::new(n, 0.05).unwrap();
            let max = *counts.iter().max().unwrap();
            for step in 0..max.max(1) {
                let readings: alloc::vec::Vec<f64> = counts
                    .iter()
                    .map(|&c| if step < c { 1.0 } else { 0.0 })
                    .collect();
                ledger.record(&readings).unwrap();
            }
            let first = ledger.select_reduction(take).unwrap();
            prop_assert_eq!(first.len(), take);
            ledger.mark_reduced_and_reset(&first).unwrap();
            ledger.record(&alloc::vec![1.0; n]).unwrap();
            let second = ledger.select_reduction(take.min(ledger.n_remaining())).unwrap();
            for i in &second {
                prop_assert!(!first.contains(i), "reduced feature reselected");
            }
            prop_assert!(ledger.n_remaining() == n - take);
        }
    }
}
