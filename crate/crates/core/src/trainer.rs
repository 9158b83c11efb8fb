//! The training loop: collection, PPO updates, curriculum checks, and the
//! per-epoch random-layer refresh, in a fixed order.
//!
//! Each epoch (1-based) runs:
//!
//! 1. collect one rollout window (actor on transformed obs, critic on raw,
//!    ledger counting raw tactile activations),
//! 2. GAE + advantage normalization,
//! 3. the PPO update, then re-pin the actor's gated input columns,
//! 4. fold completed-episode returns into the curriculum's reward average,
//! 5. periodic evaluation on a fixed trial set,
//! 6. the curriculum check (which may reduce features and arm the generator),
//! 7. re-sample the generator's random layer for the next epoch.
//!
//! Reduction is structural: besides routing reduced slots through the
//! generator, the trainer zeroes those slots' first-layer actor columns (and
//! keeps them zeroed), so the deployed policy is exactly insensitive to the
//! sensors the curriculum removed rather than merely trained to tolerate
//! noise on them.
//!
//! All randomness is split over dedicated streams of one master seed
//! (initialization, learner shuffles, layer draws, per-env physics lanes,
//! per-env agent lanes, trial generation), so a configuration + seed pair
//! reproduces bit-identically, and lanes never perturb each other.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::csr::{Curriculum, CurriculumPreset, ImportanceLedger, ReductionEvent};
use crate::drg::{DrgConfig, DrgState};
use crate::env::{Env, EnvConfig};
use crate::eval::{self, MeanPolicy, TrialSpec};
use crate::nn::{AdamConfig, AdamState, GaussianPolicyHead, MlpParams};
use crate::ppo::{self, PpoConfig};
use crate::rng::{self, stream_id};
use crate::{Error, Result};

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainerConfig {
    pub env: EnvConfig,
    pub preset: CurriculumPreset,
    /// Smoothed-reward trigger threshold for the curriculum.
    pub tau: f64,
    pub cooldown_epochs: u64,
    pub ema_halflife: f64,
    /// Parallel env instances per collection window.
    pub n_envs: usize,
    /// Control steps collected per env per epoch.
    pub horizon: usize,
    pub ppo: PpoConfig,
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub drg: DrgConfig,
    /// Activation threshold for the importance ledger.
    pub ledger_threshold: f64,
    /// Evaluate every this many epochs (0 = never).
    pub eval_every: u64,
    pub eval_trials: usize,
    pub master_seed: u64,
}

impl TrainerConfig {
    /// Desk-scale defaults for the toy env.
    pub fn new(env: EnvConfig, preset: CurriculumPreset, master_seed: u64) -> Self {
        TrainerConfig {
            env,
            preset,
            tau: 2500.0,
            cooldown_epochs: 50,
            ema_halflife: 20.0,
            n_envs: 64,
            horizon: 64,
            ppo: PpoConfig::default(),
            hidden: alloc::vec![64, 64],
            init_log_std: -0.5,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            drg: DrgConfig::default(),
            ledger_threshold: 0.05,
            eval_every: 0,
            eval_trials: 20,
            master_seed,
        }
    }

    /// The generator config after the preset's replacement mode is applied.
    pub fn resolved_drg(&self) -> DrgConfig {
        let mut d = self.drg;
        if self.preset.zeros_replacement() {
            d.zeros_mode = true;
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.drg.validate()?;
        if self.n_envs == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("n_envs and horizon must be >= 1".into()));
        }
        if self.n_envs as u64 > stream_id::AGENT_BASE - stream_id::ENV_BASE {
            return Err(Error::InvalidConfig("too many envs for the lane layout".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden sizes must be non-empty".into()));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if !(self.ledger_threshold >= 0.0) {
            return Err(Error::InvalidConfig("ledger_threshold must be >= 0".into()));
        }
        if self.eval_every > 0 && self.eval_trials == 0 {
            return Err(Error::InvalidConfig("eval_trials must be >= 1".into()));
        }
        let schema = self.env.schema()?;
        let (_, n_reducible) = schema.reducible_range();
        self.preset.plan(n_reducible, self.tau).validate(n_reducible)?;
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: u64,
    /// Mean return of episodes completed this epoch (None if none finished).
    pub mean_episode_reward: Option<f64>,
    /// Curriculum's smoothed reward after this epoch.
    pub ema_reward: Option<f64>,
    /// Success rate if this epoch evaluated.
    pub eval_success_rate: Option<f64>,
    /// Observation features the actor still sees truthfully.
    pub active_feature_count: usize,
    /// Curriculum steps fired so far.
    pub curriculum_step: usize,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

/// A curriculum reduction with absolute feature indices resolved.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReductionRecord {
    pub event: ReductionEvent,
    /// The reduced features as absolute observation indices.
    pub abs_indices: Vec<usize>,
}

/// Orchestrates one experiment arm.
pub struct Trainer {
    cfg: TrainerConfig,
    drg_cfg: DrgConfig,
    envs: Vec<Env>,
    agent_rngs: Vec<ChaCha8Rng>,
    learner_rng: ChaCha8Rng,
    drg_rng: ChaCha8Rng,
    actor: GaussianPolicyHead,
    critic: MlpParams,
    actor_opt: AdamState,
    critic_opt: AdamState,
    drg: DrgState,
    ledger: ImportanceLedger,
    curriculum: Curriculum,
    eval_set: Vec<TrialSpec>,
    tactile_start: usize,
    epoch: u64,
    history: Vec<EpochStats>,
    reductions: Vec<ReductionRecord>,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let schema = cfg.env.schema()?;
        let obs_dim = schema.total();
        let act_dim = cfg.env.n_fingers;
        let (tactile_start, n_reducible) = schema.reducible_range();

        let mut init_rng = rng::stream(cfg.master_seed, stream_id::INIT);
        let mut sizes = alloc::vec![obs_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(act_dim);
        let actor = GaussianPolicyHead::new(&sizes, cfg.init_log_std, &mut init_rng)?;
        let mut critic_sizes = sizes.clone();
        *critic_sizes.last_mut().unwrap() = 1;
        let critic = MlpParams::new(
            &critic_sizes,
            crate::nn::Activation::Tanh,
            crate::nn::Activation::Identity,
            &mut init_rng,
        )?;
        let actor_opt = AdamState::new(
            actor.param_count(),
            AdamConfig {
                lr: cfg.actor_lr,
                ..AdamConfig::default()
            },
        );
        let critic_opt = AdamState::new(
            critic.param_count(),
            AdamConfig {
                lr: cfg.critic_lr,
                ..AdamConfig::default()
            },
        );

        let envs: Result<Vec<Env>> = (0..cfg.n_envs)
            .map(|e| {
                Env::with_rng(
                    cfg.env.clone(),
                    rng::stream(cfg.master_seed, stream_id::ENV_BASE + e as u64),
                )
            })
            .collect();
        let agent_rngs: Vec<ChaCha8Rng> = (0..cfg.n_envs)
            .map(|e| rng::stream(cfg.master_seed, stream_id::AGENT_BASE + e as u64))
            .collect();

        let ledger = ImportanceLedger::new(n_reducible, cfg.ledger_threshold)?;
        let mut plan = cfg.preset.plan(n_reducible, cfg.tau);
        plan.cooldown_epochs = cfg.cooldown_epochs;
        plan.ema_halflife = cfg.ema_halflife;
        let curriculum = Curriculum::new(plan, n_reducible)?;

        let eval_set = if cfg.eval_every > 0 {
            eval::generate_trials(cfg.eval_trials, cfg.master_seed, cfg.env.min_goal_separation)
        } else {
            Vec::new()
        };

        let drg_cfg = cfg.resolved_drg();
        let mut trainer = Trainer {
            learner_rng: rng::stream(cfg.master_seed, stream_id::LEARNER),
            drg_rng: rng::stream(cfg.master_seed, stream_id::DRG),
            drg: DrgState::new(obs_dim),
            cfg,
            drg_cfg,
            envs: envs?,
            agent_rngs,
            actor,
            critic,
            actor_opt,
            critic_opt,
            ledger,
            curriculum,
            eval_set,
            tactile_start,
            epoch: 0,
            history: Vec::new(),
            reductions: Vec::new(),
        };
        // An immediate-trigger schedule fires before any training so the
        // very first collection already runs reduced.
        trainer.curriculum_check()?;
        Ok(trainer)
    }

    #[inline]
    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    #[inline]
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn actor(&self) -> &GaussianPolicyHead {
        &self.actor
    }

    pub fn critic(&self) -> &MlpParams {
        &self.critic
    }

    pub fn drg_state(&self) -> &DrgState {
        &self.drg
    }

    pub fn drg_config(&self) -> &DrgConfig {
        &self.drg_cfg
    }

    pub fn ledger(&self) -> &ImportanceLedger {
        &self.ledger
    }

    pub fn curriculum(&self) -> &Curriculum {
        &self.curriculum
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    pub fn reductions(&self) -> &[ReductionRecord] {
        &self.reductions
    }

    pub fn eval_set(&self) -> &[TrialSpec] {
        &self.eval_set
    }

    /// Features the actor still observes truthfully.
    pub fn active_feature_count(&self) -> usize {
        self.drg.active_features()
    }

    /// Arm the generator with an explicit mask (absolute indices), outside
    /// the curriculum — for controlled experiments.
    pub fn force_activate_drg(&mut self, abs_indices: &[usize]) -> Result<()> {
        self.drg.activate(abs_indices)?;
        self.drg
            .epoch_reinit(&self.drg_cfg, self.epoch, &mut self.drg_rng)?;
        self.gate_reduced_inputs()
    }

    /// Structurally disconnect reduced slots from the actor by zeroing their
    /// first-layer columns. Policy-gradient noise regrows the columns a
    /// little inside every update (the generated replacement values are
    /// nonzero inputs), so the pin is reapplied after each one; that keeps
    /// the deployed policy exactly independent of the sensors the curriculum
    /// removed. The critic is never gated — it legitimately reads the full
    /// state.
    fn gate_reduced_inputs(&mut self) -> Result<()> {
        if self.drg.is_active() {
            self.actor.mean_net.zero_input_columns(self.drg.mask())?;
        }
        Ok(())
    }

    fn curriculum_check(&mut self) -> Result<()> {
        if let Some(event) = self.curriculum.maybe_advance(self.epoch, &mut self.ledger)? {
            let abs_indices: Vec<usize> = event
                .reduced
                .iter()
                .map(|r| self.tactile_start + r)
                .collect();
            self.drg.activate(&abs_indices)?;
            // The new mask needs a layer before the next collection, even
            // though the regular refresh also runs at the epoch boundary.
            self.drg
                .epoch_reinit(&self.drg_cfg, self.epoch, &mut self.drg_rng)?;
            self.gate_reduced_inputs()?;
            self.reductions.push(ReductionRecord { event, abs_indices });
        }
        Ok(())
    }

    /// Run one training epoch and append its stats to the history.
    pub fn run_epoch(&mut self) -> Result<&EpochStats> {
        self.epoch += 1;

        let batch = ppo::collect_rollouts(
            &mut self.envs,
            &mut self.agent_rngs,
            &self.actor,
            &self.critic,
            &self.drg,
            &self.drg_cfg,
            Some(&mut self.ledger),
            self.cfg.horizon,
        )?;
        let (raw_adv, returns) = ppo::compute_gae(&batch, self.cfg.ppo.gamma, self.cfg.ppo.lam);
        let advantages = if self.cfg.ppo.normalize_advantages {
            ppo::normalize_advantages(&raw_adv)
        } else {
            raw_adv
        };
        let stats = ppo::ppo_update(
            &mut self.actor,
            &mut self.critic,
            &mut self.actor_opt,
            &mut self.critic_opt,
            &batch,
            &advantages,
            &returns,
            &self.cfg.ppo,
            &mut self.learner_rng,
        )?;
        self.gate_reduced_inputs()?;

        let mean_episode_reward = batch.mean_episode_return();
        if let Some(r) = mean_episode_reward {
            self.curriculum.observe_reward(r);
        }

        let eval_success_rate = if self.cfg.eval_every > 0 && self.epoch % self.cfg.eval_every == 0
        {
            Some(self.evaluate()?.success_rate)
        } else {
            None
        };

        self.curriculum_check()?;
        self.drg
            .epoch_reinit(&self.drg_cfg, self.epoch, &mut self.drg_rng)?;

        self.history.push(EpochStats {
            epoch: self.epoch,
            mean_episode_reward,
            ema_reward: self.curriculum.ema_reward(),
            eval_success_rate,
            active_feature_count: self.drg.active_features(),
            curriculum_step: self.curriculum.steps_done(),
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            entropy: stats.entropy,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Train for `epochs` epochs, invoking `on_epoch` after each one.
    pub fn run(
        &mut self,
        epochs: u64,
        mut on_epoch: Option<&mut dyn FnMut(&EpochStats)>,
    ) -> Result<()> {
        for _ in 0..epochs {
            let stats = self.run_epoch()?;
            if let Some(cb) = on_epoch.as_deref_mut() {
                cb(stats);
            }
        }
        Ok(())
    }

    /// Score the current policy (mean actions, eval-mode generator) on the
    /// held-out trial set.
    pub fn evaluate(&self) -> Result<eval::EvalReport> {
        let mut policy = MeanPolicy {
            actor: &self.actor,
            drg: &self.drg,
            drg_cfg: &self.drg_cfg,
        };
        eval::evaluate(&self.cfg.env, &mut policy, &self.eval_set)
    }

    /// Score on an explicit trial set (the experiment harness owns its sets).
    pub fn evaluate_on(&self, trials: &[TrialSpec]) -> Result<eval::EvalReport> {
        let mut policy = MeanPolicy {
            actor: &self.actor,
            drg: &self.drg,
            drg_cfg: &self.drg_cfg,
        };
        eval::evaluate(&self.cfg.env, &mut policy, trials)
    }
}
