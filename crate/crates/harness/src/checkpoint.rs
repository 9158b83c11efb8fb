//! Checkpoint files: everything needed to rebuild the deployed controller —
//! the env it was trained for, the actor/critic parameters, and the
//! generator state (which sensors are replaced). Loading re-validates all
//! shapes against the env's schema, so a checkpoint either reconstructs the
//! exact policy or fails loudly.
//!
//! The scripted PD controller gets the same treatment via a second snapshot
//! kind, so rate sweeps and marathons run through one code path whether the
//! actions come from a trained net or the hand-written reference.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tactix_core::drg::{DrgConfig, DrgState};
use tactix_core::env::EnvConfig;
use tactix_core::eval::{
    self, ActionSource, EvalReport, MarathonReport, MeanPolicy, RatePoint, ScriptedController,
    TrialSpec,
};
use tactix_core::nn::{GaussianPolicyHead, MlpParams};
use tactix_core::rng::ChaCha8Rng;
use tactix_core::trainer::Trainer;

use crate::{HarnessError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// The action-producing half of a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySnapshot {
    /// A trained Gaussian policy plus the generator state it deploys with.
    Policy {
        actor: GaussianPolicyHead,
        critic: MlpParams,
        drg: DrgState,
        drg_config: DrgConfig,
    },
    /// The scripted PD reference controller.
    Scripted {
        k_p: f64,
        k_d: f64,
        finite_difference: bool,
    },
}

/// A saved, reloadable controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    /// Name of the run that produced it.
    pub name: String,
    /// Curriculum preset name (or `"scripted"`).
    pub preset: String,
    pub master_seed: u64,
    /// Training epochs completed when the snapshot was taken.
    pub epoch: u64,
    pub env: EnvConfig,
    pub policy: PolicySnapshot,
}

/// A reconstructed action source borrowing from a loaded checkpoint.
pub enum PolicySource<'a> {
    Policy(MeanPolicy<'a>),
    Scripted(ScriptedController),
}

impl ActionSource for PolicySource<'_> {
    fn begin_trial(&mut self) {
        match self {
            PolicySource::Policy(p) => p.begin_trial(),
            PolicySource::Scripted(s) => s.begin_trial(),
        }
    }

    fn act(&mut self, obs: &[f64], rng: &mut ChaCha8Rng) -> tactix_core::Result<Vec<f64>> {
        match self {
            PolicySource::Policy(p) => p.act(obs, rng),
            PolicySource::Scripted(s) => s.act(obs, rng),
        }
    }
}

impl Checkpoint {
    /// Snapshot a trainer's current policy.
    pub fn from_trainer(name: &str, trainer: &Trainer) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            name: name.to_string(),
            preset: trainer.config().preset.name().to_string(),
            master_seed: trainer.config().master_seed,
            epoch: trainer.epoch(),
            env: trainer.config().env.clone(),
            policy: PolicySnapshot::Policy {
                actor: trainer.actor().clone(),
                critic: trainer.critic().clone(),
                drg: trainer.drg_state().clone(),
                drg_config: *trainer.drg_config(),
            },
        }
    }

    /// Wrap the scripted PD controller as a pseudo-checkpoint so every CLI
    /// command that takes a checkpoint also accepts the reference controller.
    pub fn scripted(env: EnvConfig, k_p: f64, k_d: f64, finite_difference: bool) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            name: "scripted".to_string(),
            preset: "scripted".to_string(),
            master_seed: 0,
            epoch: 0,
            env,
            policy: PolicySnapshot::Scripted {
                k_p,
                k_d,
                finite_difference,
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))?;
        ckpt.validate().map_err(|e| HarnessError::format(path, e))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate().map_err(HarnessError::Config)?;
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        text.push('\n');
        crate::write_string(path, &text)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.version != CHECKPOINT_VERSION {
            return Err(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            ));
        }
        self.env.validate().map_err(|e| e.to_string())?;
        let schema = self.env.schema().map_err(|e| e.to_string())?;
        let obs_dim = schema.total();
        match &self.policy {
            PolicySnapshot::Policy {
                actor,
                critic,
                drg,
                drg_config,
            } => {
                actor.validate().map_err(|e| e.to_string())?;
                critic.validate().map_err(|e| e.to_string())?;
                drg.validate().map_err(|e| e.to_string())?;
                drg_config.validate().map_err(|e| e.to_string())?;
                let checks = [
                    ("actor input", actor.mean_net.in_dim(), obs_dim),
                    ("actor output", actor.mean_net.out_dim(), self.env.n_fingers),
                    ("critic input", critic.in_dim(), obs_dim),
                    ("critic output", critic.out_dim(), 1),
                    ("generator width", drg.n_features(), obs_dim),
                ];
                for (what, got, expected) in checks {
                    if got != expected {
                        return Err(format!("{what} is {got}, env wants {expected}"));
                    }
                }
            }
            PolicySnapshot::Scripted {
                k_p,
                k_d,
                finite_difference: _,
            } => {
                if !k_p.is_finite() || !k_d.is_finite() {
                    return Err("scripted gains must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Rebuild the action source this checkpoint describes.
    pub fn policy_source(&self) -> Result<PolicySource<'_>> {
        match &self.policy {
            PolicySnapshot::Policy {
                actor,
                drg,
                drg_config,
                ..
            } => Ok(PolicySource::Policy(MeanPolicy {
                actor,
                drg,
                drg_cfg: drg_config,
            })),
            PolicySnapshot::Scripted {
                k_p,
                k_d,
                finite_difference,
            } => Ok(PolicySource::Scripted(ScriptedController::new(
                &self.env,
                *k_p,
                *k_d,
                *finite_difference,
            )?)),
        }
    }

    /// Deterministic evaluation on a stored trial set.
    pub fn evaluate(&self, trials: &[TrialSpec]) -> Result<EvalReport> {
        let mut source = self.policy_source()?;
        Ok(eval::evaluate(&self.env, &mut source, trials)?)
    }

    /// Replay the same trials at several control rates. The scripted
    /// controller is rebuilt per rate (its velocity estimate depends on the
    /// control period); a trained policy is reused as-is.
    pub fn rate_sweep(
        &self,
        rates_hz: &[usize],
        n_trials: usize,
        seconds: f64,
        master_seed: u64,
    ) -> Result<Vec<RatePoint>> {
        match &self.policy {
            PolicySnapshot::Scripted {
                k_p,
                k_d,
                finite_difference,
            } => Ok(eval::rate_sweep(
                &self.env,
                rates_hz,
                *k_p,
                *k_d,
                *finite_difference,
                n_trials,
                seconds,
                master_seed,
            )?),
            PolicySnapshot::Policy { .. } => {
                let mut source = self.policy_source()?;
                Ok(eval::rate_sweep_policy(
                    &self.env,
                    rates_hz,
                    &mut source,
                    n_trials,
                    seconds,
                    master_seed,
                )?)
            }
        }
    }

    /// One long goal-chaining episode.
    pub fn marathon(&self, seconds: f64, seed: u64) -> Result<MarathonReport> {
        let mut source = self.policy_source()?;
        Ok(eval::marathon(&self.env, &mut source, seconds, seed)?)
    }
}
