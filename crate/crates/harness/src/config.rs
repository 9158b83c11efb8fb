//! Experiment configuration files: a small JSON schema that names an env
//! preset, a curriculum preset, a master seed, and an epoch budget, plus
//! optional hyperparameter overrides. Unknown keys are rejected so typos
//! fail loudly instead of silently training with defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tactix_core::csr::CurriculumPreset;
use tactix_core::env::EnvConfig;
use tactix_core::trainer::TrainerConfig;

use crate::{HarnessError, Result};

fn default_tau() -> f64 {
    120.0
}
fn default_cooldown() -> u64 {
    50
}
fn default_halflife() -> f64 {
    5.0
}
fn default_alpha() -> f64 {
    0.9
}
fn default_n_envs() -> usize {
    32
}
fn default_horizon() -> usize {
    64
}
fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_minibatch() -> usize {
    512
}
fn default_update_epochs() -> usize {
    4
}
fn default_lr() -> f64 {
    3e-4
}
fn default_eval_every() -> u64 {
    25
}
fn default_eval_trials() -> usize {
    20
}
fn default_trial_count() -> usize {
    100
}

/// One training experiment, as stored in a JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run name; also the default output directory (`runs/<name>`).
    pub name: String,
    /// Env preset: `toy`, `toy13`, `wide75`, or `rate_probe`.
    pub env: String,
    /// Curriculum preset: `csr3_drg`, `csr2_drg`, `csr2_zeros`, `aac`, `full_obs`.
    pub preset: String,
    pub master_seed: u64,
    /// Training epochs (collection + update rounds).
    pub epochs: u64,

    /// Smoothed-reward threshold that arms curriculum reductions.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_cooldown")]
    pub cooldown_epochs: u64,
    #[serde(default = "default_halflife")]
    pub ema_halflife: f64,
    /// Identity-vs-random mixing weight for the per-epoch input layer.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_n_envs")]
    pub n_envs: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_minibatch")]
    pub minibatch_size: usize,
    #[serde(default = "default_update_epochs")]
    pub update_epochs: usize,
    #[serde(default = "default_lr")]
    pub actor_lr: f64,
    #[serde(default = "default_lr")]
    pub critic_lr: f64,
    /// Periodic evaluation interval in epochs (0 = only the final eval).
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Trials per periodic evaluation during training.
    #[serde(default = "default_eval_trials")]
    pub eval_trials: usize,
    /// Trials in the stored final-evaluation set.
    #[serde(default = "default_trial_count")]
    pub trial_count: usize,
    /// Output directory; relative paths resolve against `TACTIX_OUT_ROOT`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A ready-to-run desk-scale config for the given presets.
    pub fn new(name: &str, env: &str, preset: &str, master_seed: u64, epochs: u64) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            env: env.to_string(),
            preset: preset.to_string(),
            master_seed,
            epochs,
            tau: default_tau(),
            cooldown_epochs: default_cooldown(),
            ema_halflife: default_halflife(),
            alpha: default_alpha(),
            n_envs: default_n_envs(),
            horizon: default_horizon(),
            hidden: default_hidden(),
            minibatch_size: default_minibatch(),
            update_epochs: default_update_epochs(),
            actor_lr: default_lr(),
            critic_lr: default_lr(),
            eval_every: default_eval_every(),
            eval_trials: default_eval_trials(),
            trial_count: default_trial_count(),
            out_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::read_to_string(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        text.push('\n');
        crate::write_string(path, &text)
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        match self.env.as_str() {
            "toy" => Ok(EnvConfig::toy()),
            "toy13" => Ok(EnvConfig::toy13()),
            "wide75" => Ok(EnvConfig::wide75()),
            "rate_probe" => Ok(EnvConfig::rate_probe()),
            other => Err(HarnessError::Config(format!(
                "unknown env preset {other:?}; expected toy, toy13, wide75, or rate_probe"
            ))),
        }
    }

    pub fn curriculum_preset(&self) -> Result<CurriculumPreset> {
        CurriculumPreset::parse(&self.preset).ok_or_else(|| {
            let names: Vec<&str> = CurriculumPreset::ALL.iter().map(|p| p.name()).collect();
            HarnessError::Config(format!(
                "unknown curriculum preset {:?}; expected one of {}",
                self.preset,
                names.join(", ")
            ))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(HarnessError::Config("name must be non-empty".into()));
        }
        if self
            .name
            .chars()
            .any(|c| !(c.is_ascii_alphanumeric() || c == '-' || c == '_'))
        {
            return Err(HarnessError::Config(format!(
                "name {:?} may only contain ASCII letters, digits, '-', '_'",
                self.name
            )));
        }
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be >= 1".into()));
        }
        if self.trial_count == 0 {
            return Err(HarnessError::Config("trial_count must be >= 1".into()));
        }
        self.resolve()?.validate()?;
        Ok(())
    }

    /// Lower this file into the core trainer config it describes.
    pub fn resolve(&self) -> Result<TrainerConfig> {
        let env = self.env_config()?;
        let preset = self.curriculum_preset()?;
        let mut t = TrainerConfig::new(env, preset, self.master_seed);
        t.tau = self.tau;
        t.cooldown_epochs = self.cooldown_epochs;
        t.ema_halflife = self.ema_halflife;
        t.drg.alpha = self.alpha;
        t.n_envs = self.n_envs;
        t.horizon = self.horizon;
        t.hidden = self.hidden.clone();
        t.ppo.minibatch_size = self.minibatch_size;
        t.ppo.update_epochs = self.update_epochs;
        t.actor_lr = self.actor_lr;
        t.critic_lr = self.critic_lr;
        t.eval_every = self.eval_every;
        t.eval_trials = self.eval_trials;
        Ok(t)
    }

    /// Where this run's artifacts land (resolved against the output root).
    pub fn run_dir(&self) -> PathBuf {
        let dir = self
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.name));
        crate::resolve_out_path(&dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_a_valid_trainer_config() {
        let cfg = ExperimentConfig::new("smoke", "toy13", "csr2_drg", 1, 10);
        cfg.validate().unwrap();
        let t = cfg.resolve().unwrap();
        assert_eq!(t.master_seed, 1);
        assert_eq!(t.tau, 120.0);
        assert_eq!(t.drg.alpha, 0.9);
        assert_eq!(t.hidden, vec![32, 32]);
        assert_eq!(t.ppo.minibatch_size, 512);
    }

    #[test]
    fn minimal_json_fills_defaults_and_extra_keys_fail() {
        let minimal = r#"{
            "name": "a", "env": "toy", "preset": "full_obs",
            "master_seed": 7, "epochs": 3
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(cfg.n_envs, 32);
        assert_eq!(cfg.trial_count, 100);
        assert!(cfg.out_dir.is_none());

        let typo = r#"{
            "name": "a", "env": "toy", "preset": "full_obs",
            "master_seed": 7, "epochs": 3, "n_env": 8
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(typo).is_err());
    }

    #[test]
    fn bad_presets_and_bad_names_are_rejected() {
        let mut cfg = ExperimentConfig::new("a b", "toy", "full_obs", 1, 1);
        assert!(cfg.validate().is_err());
        cfg.name = "ok".into();
        cfg.env = "mars".into();
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        cfg.env = "toy".into();
        cfg.preset = "csr9".into();
        assert!(cfg.validate().is_err());
        cfg.preset = "full_obs".into();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        let mut cfg = ExperimentConfig::new("rt", "toy13", "csr3_drg", 42, 100);
        cfg.out_dir = Some(PathBuf::from("custom/out"));
        cfg.save(&path).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(back.name, "rt");
        assert_eq!(back.master_seed, 42);
        assert_eq!(back.out_dir.as_deref(), Some(Path::new("custom/out")));
    }
}
