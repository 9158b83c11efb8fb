//! Asymmetric-observation PPO with generalized advantage estimation.
//!
//! The actor and the critic see different inputs: the critic always receives
//! the raw observation (it exists only at training time and may use every
//! sensor), while the actor receives the observation after the sensing
//! generator has replaced reduced features and applied its per-epoch layer.
//! Both views are recorded during collection so the update replays exactly
//! what each network saw.
//!
//! The update is the clipped surrogate objective (a plain policy-gradient
//! objective is available for diagnostics), a squared-error value loss, and
//! Adam on both networks. Advantages are estimated with GAE(γ, λ) against
//! the critic's bootstrap values and normalized per batch — returns are
//! formed from the raw advantages before normalization. All shuffling is
//! Fisher-Yates on a caller-provided stream, so updates are deterministic.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::csr::ImportanceLedger;
use crate::drg::{DrgConfig, DrgState};
use crate::env::Env;
use crate::math;
use crate::nn::{gaussian_entropy, gaussian_logprob, AdamState, GaussianPolicyHead, MlpParams};
use crate::{Error, Result};

/// Which policy objective the update optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Objective {
    /// Clipped importance-ratio surrogate.
    Clipped,
    /// `-E[log π(a|s) Â]` without ratios (diagnostic / ablation mode).
    PlainPg,
}

/// Update hyperparameters (collection sizes live with the trainer).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub objective: Objective,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            objective: Objective::Clipped,
            update_epochs: 4,
            minibatch_size: 1024,
            value_coef: 0.5,
            entropy_coef: 0.0,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return Err(Error::InvalidConfig("gamma/lam outside [0, 1]".into()));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::InvalidConfig("clip_eps must be positive".into()));
        }
        if self.update_epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::InvalidConfig(
                "update_epochs and minibatch_size must be >= 1".into(),
            ));
        }
        if !(self.value_coef >= 0.0) || !(self.entropy_coef >= 0.0) {
            return Err(Error::InvalidConfig("loss coefficients must be >= 0".into()));
        }
        Ok(())
    }
}

/// One collection window over `n_envs` parallel env instances. Rows are
/// step-major: sample `t * n_envs + e`.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub n_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// What the actor saw (after replacement/layer), `(T·E) × obs_dim`.
    pub actor_obs: Vec<f64>,
    /// What the critic saw (raw), `(T·E) × obs_dim`.
    pub critic_obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub logps: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Whether the episode ended at this step (before any auto-reset).
    pub dones: Vec<bool>,
    /// Critic values, `(T+1)·E` — the last row is the bootstrap.
    pub values: Vec<f64>,
    /// Returns of episodes that completed inside this window.
    pub episode_returns: Vec<f64>,
}

impl TrajectoryBatch {
    #[inline]
    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn actor_obs_row(&self, i: usize) -> &[f64] {
        &self.actor_obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn critic_obs_row(&self, i: usize) -> &[f64] {
        &self.critic_obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action_row(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    /// Mean return over the episodes completed in this window, if any.
    pub fn mean_episode_return(&self) -> Option<f64> {
        if self.episode_returns.is_empty() {
            None
        } else {
            Some(math::mean(&self.episode_returns))
        }
    }
}

/// Roll the policy for `horizon` control steps in every env.
///
/// Per decision: the actor acts on the generator-transformed observation
/// (replacement draws come from that env's agent stream), the critic values
/// the raw observation, the ledger counts the raw tactile block, and finished
/// episodes auto-reset.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    envs: &mut [Env],
    agent_rngs: &mut [ChaCha8Rng],
    actor: &GaussianPolicyHead,
    critic: &MlpParams,
    drg: &DrgState,
    drg_cfg: &DrgConfig,
    mut ledger: Option<&mut ImportanceLedger>,
    horizon: usize,
) -> Result<TrajectoryBatch> {
    if envs.is_empty() || horizon == 0 {
        return Err(Error::InvalidConfig("need at least one env and step".into()));
    }
    if agent_rngs.len() != envs.len() {
        return Err(Error::Shape {
            what: "agent_rngs",
            expected: envs.len(),
            got: agent_rngs.len(),
        });
    }
    let n_envs = envs.len();
    let obs_dim = envs[0].schema().total();
    let act_dim = envs[0].config().n_fingers;
    let (tac_start, tac_len) = envs[0].schema().reducible_range();
    let n = n_envs * horizon;

    let mut batch = TrajectoryBatch {
        n_envs,
        horizon,
        obs_dim,
        act_dim,
        actor_obs: Vec::with_capacity(n * obs_dim),
        critic_obs: Vec::with_capacity(n * obs_dim),
        actions: Vec::with_capacity(n * act_dim),
        logps: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        dones: Vec::with_capacity(n),
        values: Vec::with_capacity((horizon + 1) * n_envs),
        episode_returns: Vec::new(),
    };

    for _t in 0..horizon {
        for (e, env) in envs.iter_mut().enumerate() {
            let raw = env.obs().to_vec();
            let actor_in = drg.apply(&raw, drg_cfg, &mut agent_rngs[e])?;
            let sample = actor.sample(&actor_in, &mut agent_rngs[e])?;
            let value = critic.output(&raw)?[0];
            if let Some(ledger) = ledger.as_deref_mut() {
                ledger.record(&raw[tac_start..tac_start + tac_len])?;
            }
            let step = env.step(&sample.action)?;
            if step.done {
                batch.episode_returns.push(env.state().episode_return);
                env.reset();
            }
            batch.actor_obs.extend_from_slice(&actor_in);
            batch.critic_obs.extend_from_slice(&raw);
            batch.actions.extend_from_slice(&sample.action);
            batch.logps.push(sample.logp);
            batch.values.push(value);
            batch.rewards.push(step.reward);
            batch.dones.push(step.done);
        }
    }
    // Bootstrap values for the state each env is left in.
    for env in envs.iter() {
        batch.values.push(critic.output(env.obs())?[0]);
    }
    Ok(batch)
}

/// GAE(γ, λ) over a step-major batch. Returns `(advantages, returns)` where
/// returns are formed from the *raw* advantages: `R = Â_raw + V`.
pub fn compute_gae(batch: &TrajectoryBatch, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let (t_max, n_envs) = (batch.horizon, batch.n_envs);
    let mut adv = vec![0.0; t_max * n_envs];
    for e in 0..n_envs {
        let mut gae = 0.0;
        for t in (0..t_max).rev() {
            let i = t * n_envs + e;
            let nonterminal = if batch.dones[i] { 0.0 } else { 1.0 };
            let next_value = batch.values[(t + 1) * n_envs + e];
            let delta = batch.rewards[i] + gamma * next_value * nonterminal - batch.values[i];
            gae = delta + gamma * lam * nonterminal * gae;
            adv[i] = gae;
        }
    }
    let returns: Vec<f64> = adv
        .iter()
        .zip(&batch.values[..t_max * n_envs])
        .map(|(a, v)| a + v)
        .collect();
    (adv, returns)
}

/// Shift/scale to zero mean and unit (population) variance. A near-constant
/// batch maps to zeros rather than amplifying noise.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    if adv.is_empty() {
        return Vec::new();
    }
    let m = math::mean(adv);
    let s = math::std_dev(adv);
    adv.iter().map(|a| (a - m) / (s + 1e-8)).collect()
}

/// Diagnostics from one `ppo_update` call, averaged over all minibatches.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// A minibatch: indices into a batch plus its advantage/return columns.
pub struct BatchView<'a> {
    pub batch: &'a TrajectoryBatch,
    pub indices: &'a [usize],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Mean loss gradients for one minibatch: `(actor_grads, critic_grads,
/// stats)`, with gradients in the networks' flat parameter layouts. Exposed
/// separately from the optimizer step so the analytic gradient can be checked
/// against finite differences of [`batch_loss`].
pub fn batch_gradients(
    actor: &GaussianPolicyHead,
    critic: &MlpParams,
    view: &BatchView<'_>,
    cfg: &PpoConfig,
) -> Result<(Vec<f64>, Vec<f64>, UpdateStats)> {
    let m = view.indices.len();
    if m == 0 {
        return Err(Error::InvalidConfig("empty minibatch".into()));
    }
    let scale = 1.0 / m as f64;
    let mean_params = actor.mean_net.param_count();
    let act_dim = view.batch.act_dim;
    let mut actor_grads = vec![0.0; mean_params + act_dim];
    let mut critic_grads = vec![0.0; critic.param_count()];
    let mut actor_loss = 0.0;
    let mut critic_loss = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let log_std = actor.log_std.to_vec();

    for &i in view.indices {
        let obs = view.batch.actor_obs_row(i);
        let action = view.batch.action_row(i);
        let adv = view.advantages[i];
        let ret = view.returns[i];
        let logp_old = view.batch.logps[i];

        let (mean, cache) = actor.mean_net.forward(obs)?;
        let logp = gaussian_logprob(&mean, &log_std, action);
        kl += logp_old - logp;

        // d(policy loss)/d(logp): the surrogate is -coef·logp locally.
        let coef = match cfg.objective {
            Objective::PlainPg => {
                actor_loss += -logp * adv;
                adv
            }
            Objective::Clipped => {
                let ratio = math::exp(logp - logp_old);
                let surr1 = ratio * adv;
                let surr2 = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
                actor_loss += -surr1.min(surr2);
                if math::abs(ratio - 1.0) > cfg.clip_eps {
                    clipped += 1;
                }
                // Gradient flows only through the unclipped branch when it is
                // the active minimum; otherwise the sample contributes none.
                if surr1 <= surr2 {
                    ratio * adv
                } else {
                    0.0
                }
            }
        };

        // Chain to the mean head: dlogp/dμ_k = (a_k − μ_k)/σ_k².
        let mut grad_mean = Vec::with_capacity(act_dim);
        for k in 0..act_dim {
            let sigma = math::exp(log_std[k]);
            let dlogp_dmu = (action[k] - mean[k]) / (sigma * sigma);
            grad_mean.push(-coef * dlogp_dmu);
        }
        actor
            .mean_net
            .backward_into(&cache, &grad_mean, &mut actor_grads[..mean_params], scale)?;
        // And to log σ: dlogp/dlogσ_k = z_k² − 1, plus the entropy bonus
        // (dH/dlogσ_k = 1).
        for k in 0..act_dim {
            let sigma = math::exp(log_std[k]);
            let z = (action[k] - mean[k]) / sigma;
            let dlogp_dls = z * z - 1.0;
            actor_grads[mean_params + k] +=
                scale * (-coef * dlogp_dls - cfg.entropy_coef);
        }

        // Critic: 0.5·(V − R)² scaled by value_coef.
        let (v_out, v_cache) = critic.forward(view.batch.critic_obs_row(i))?;
        let v = v_out[0];
        critic_loss += 0.5 * (v - ret) * (v - ret);
        critic.backward_into(
            &v_cache,
            &[cfg.value_coef * (v - ret)],
            &mut critic_grads,
            scale,
        )?;
    }

    let entropy = gaussian_entropy(&log_std);
    if cfg.entropy_coef > 0.0 {
        actor_loss -= m as f64 * cfg.entropy_coef * entropy;
    }
    let stats = UpdateStats {
        actor_loss: actor_loss * scale,
        critic_loss: critic_loss * scale,
        entropy,
        approx_kl: kl * scale,
        clip_fraction: clipped as f64 / m as f64,
    };
    Ok((actor_grads, critic_grads, stats))
}

/// Mean total loss of a minibatch for the given parameters (actor flat layout
/// = mean net ++ log_std). Finite-difference counterpart of
/// [`batch_gradients`].
pub fn batch_loss(
    actor_template: &GaussianPolicyHead,
    critic_template: &MlpParams,
    actor_flat: &[f64],
    critic_flat: &[f64],
    view: &BatchView<'_>,
    cfg: &PpoConfig,
) -> Result<f64> {
    let mut actor = actor_template.clone();
    actor.load_flat(actor_flat)?;
    let mut critic = critic_template.clone();
    critic.load_flat(critic_flat)?;
    let log_std = actor.log_std.to_vec();
    let mut total = 0.0;
    for &i in view.indices {
        let mean = actor.mean_net.output(view.batch.actor_obs_row(i))?;
        let logp = gaussian_logprob(&mean, &log_std, view.batch.action_row(i));
        let adv = view.advantages[i];
        total += match cfg.objective {
            Objective::PlainPg => -logp * adv,
            Objective::Clipped => {
                let ratio = math::exp(logp - view.batch.logps[i]);
                let surr1 = ratio * adv;
                let surr2 = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
                -surr1.min(surr2)
            }
        };
        let v = critic.output(view.batch.critic_obs_row(i))?[0];
        total += cfg.value_coef * 0.5 * (v - view.returns[i]) * (v - view.returns[i]);
        total -= cfg.entropy_coef * gaussian_entropy(&log_std);
    }
    Ok(total / view.indices.len() as f64)
}

/// Run the full PPO update: `update_epochs` shuffled passes of minibatch
/// Adam steps over the batch. Returns minibatch-averaged diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    actor: &mut GaussianPolicyHead,
    critic: &mut MlpParams,
    actor_opt: &mut AdamState,
    critic_opt: &mut AdamState,
    batch: &TrajectoryBatch,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    cfg.validate()?;
    let n = batch.len();
    if advantages.len() != n || returns.len() != n {
        return Err(Error::Shape {
            what: "advantages/returns",
            expected: n,
            got: advantages.len().min(returns.len()),
        });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut agg = UpdateStats {
        actor_loss: 0.0,
        critic_loss: 0.0,
        entropy: 0.0,
        approx_kl: 0.0,
        clip_fraction: 0.0,
    };
    let mut n_minibatches = 0usize;

    for _pass in 0..cfg.update_epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch_size) {
            let view = BatchView {
                batch,
                indices: chunk,
                advantages,
                returns,
            };
            let (actor_grads, critic_grads, stats) = batch_gradients(actor, critic, &view, cfg)?;

            let mut actor_flat = actor.flatten();
            actor_opt.step(&mut actor_flat, &actor_grads)?;
            actor.load_flat(&actor_flat)?;
            actor.clamp_log_std();

            let mut critic_flat = critic.flatten();
            critic_opt.step(&mut critic_flat, &critic_grads)?;
            critic.load_flat(&critic_flat)?;

            agg.actor_loss += stats.actor_loss;
            agg.critic_loss += stats.critic_loss;
            agg.entropy += stats.entropy;
            agg.approx_kl += stats.approx_kl;
            agg.clip_fraction += stats.clip_fraction;
            n_minibatches += 1;
        }
    }
    let d = n_minibatches as f64;
    agg.actor_loss /= d;
    agg.critic_loss /= d;
    agg.entropy /= d;
    agg.approx_kl /= d;
    agg.clip_fraction /= d;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drg::DrgConfig;
    use crate::env::EnvConfig;
    use crate::nn::{finite_difference_grad, relative_error, AdamConfig, Activation};
    use crate::rng::stream;

    fn synthetic_batch(n_envs: usize, horizon: usize, obs_dim: usize, act_dim: usize, seed: u64) -> TrajectoryBatch {
        use rand::Rng;
        let mut rng = stream(seed, 0);
        let n = n_envs * horizon;
        TrajectoryBatch {
            n_envs,
            horizon,
            obs_dim,
            act_dim,
            actor_obs: (0..n * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            critic_obs: (0..n * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            actions: (0..n * act_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            logps: (0..n).map(|_| rng.random_range(-3.0..0.0)).collect(),
            rewards: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            dones: vec![false; n],
            values: (0..(horizon + 1) * n_envs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            episode_returns: Vec::new(),
        }
    }

    /// Single-env GAE against hand-computed values:
    /// γ=0.5, λ=1, rewards [1,1], V≡0 → advantages [1.5, 1].
    #[test]
    fn gae_two_step_hand_oracle() {
        let batch = TrajectoryBatch {
            n_envs: 1,
            horizon: 2,
            obs_dim: 1,
            act_dim: 1,
            actor_obs: vec![0.0; 2],
            critic_obs: vec![0.0; 2],
            actions: vec![0.0; 2],
            logps: vec![0.0; 2],
            rewards: vec![1.0, 1.0],
            dones: vec![false, false],
            values: vec![0.0, 0.0, 0.0],
            episode_returns: Vec::new(),
        };
        let (adv, ret) = compute_gae(&batch, 0.5, 1.0);
        assert_eq!(adv, vec![1.5, 1.0]);
        assert_eq!(ret, vec![1.5, 1.0]);
    }

    /// Three steps at the default γ=0.99, λ=0.95 against frozen values.
    #[test]
    fn gae_three_step_frozen_oracle() {
        let mut batch = TrajectoryBatch {
            n_envs: 1,
            horizon: 3,
            obs_dim: 1,
            act_dim: 1,
            actor_obs: vec![0.0; 3],
            critic_obs: vec![0.0; 3],
            actions: vec![0.0; 3],
            logps: vec![0.0; 3],
            rewards: vec![1.0, 2.0, 3.0],
            dones: vec![false, false, false],
            values: vec![0.5, 1.0, 1.5, 2.0],
            episode_returns: Vec::new(),
        };
        let (adv, ret) = compute_gae(&batch, 0.99, 0.95);
        let expect_adv = [6.905342570000001, 5.7579400000000005, 3.4800000000000004];
        let expect_ret = [7.405342570000001, 6.7579400000000005, 4.98];
        for i in 0..3 {
            assert!((adv[i] - expect_adv[i]).abs() < 1e-12, "adv[{i}] = {}", adv[i]);
            assert!((ret[i] - expect_ret[i]).abs() < 1e-12, "ret[{i}] = {}", ret[i]);
        }
        // Terminal at t=1 cuts the recursion: frozen values again.
        batch.dones[1] = true;
        let (adv, _) = compute_gae(&batch, 0.99, 0.95);
        let expect_done = [2.4305, 1.0, 3.4800000000000004];
        for i in 0..3 {
            assert!((adv[i] - expect_done[i]).abs() < 1e-12, "adv[{i}] = {}", adv[i]);
        }
    }

    #[test]
    fn gae_interleaves_envs_independently() {
        // Two envs whose flattened order is interleaved; each must match its
        // single-env result.
        let single = |rewards: [f64; 2], values: [f64; 3]| {
            let batch = TrajectoryBatch {
                n_envs: 1,
                horizon: 2,
                obs_dim: 1,
                act_dim: 1,
                actor_obs: vec![0.0; 2],
                critic_obs: vec![0.0; 2],
                actions: vec![0.0; 2],
                logps: vec![0.0; 2],
                rewards: rewards.to_vec(),
                dones: vec![false, false],
                values: values.to_vec(),
                episode_returns: Vec::new(),
            };
            compute_gae(&batch, 0.9, 0.8).0
        };
        let a = single([1.0, -1.0], [0.2, 0.4, 0.6]);
        let b = single([2.0, 0.5], [0.0, -0.2, 0.1]);

        let batch = TrajectoryBatch {
            n_envs: 2,
            horizon: 2,
            obs_dim: 1,
            act_dim: 1,
            actor_obs: vec![0.0; 4],
            critic_obs: vec![0.0; 4],
            actions: vec![0.0; 4],
            logps: vec![0.0; 4],
            rewards: vec![1.0, 2.0, -1.0, 0.5],
            dones: vec![false; 4],
            values: vec![0.2, 0.0, 0.4, -0.2, 0.6, 0.1],
            episode_returns: Vec::new(),
        };
        let (adv, _) = compute_gae(&batch, 0.9, 0.8);
        assert_eq!(adv, vec![a[0], b[0], a[1], b[1]]);
    }

    #[test]
    fn advantage_normalization_is_standard() {
        let adv = vec![1.0, 2.0, 3.0, 4.0];
        let norm = normalize_advantages(&adv);
        assert!(math::mean(&norm).abs() < 1e-12);
        assert!((math::std_dev(&norm) - 1.0).abs() < 1e-6);
        // Constant batch degrades to zeros instead of exploding.
        let flat = normalize_advantages(&[2.5; 8]);
        assert!(flat.iter().all(|v| v.abs() < 1e-6));
    }

    fn tiny_actor_critic(obs_dim: usize, act_dim: usize, seed: u64) -> (GaussianPolicyHead, MlpParams) {
        let mut rng = stream(seed, 0);
        let actor = GaussianPolicyHead::new(&[obs_dim, 6, act_dim], -0.5, &mut rng).unwrap();
        let critic = MlpParams::new(
            &[obs_dim, 6, 1],
            Activation::Tanh,
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        (actor, critic)
    }

    /// The analytic minibatch gradient matches central finite differences of
    /// `batch_loss` for both objectives (the full acceptance run uses a
    /// tighter sweep; this is the unit-level guard).
    #[test]
    fn batch_gradients_match_finite_differences() {
        let batch = synthetic_batch(2, 4, 3, 2, 41);
        let (advantages, returns) = compute_gae(&batch, 0.99, 0.95);
        let advantages = normalize_advantages(&advantages);
        let indices: Vec<usize> = (0..batch.len()).collect();

        for objective in [Objective::PlainPg, Objective::Clipped] {
            let (mut actor, mut critic) = tiny_actor_critic(3, 2, 42);
            // Perturb away from ratio == 1 so the clipped objective is
            // exercised off its trivial point (ratios stay generic).
            if objective == Objective::Clipped {
                let mut flat = actor.flatten();
                for (i, p) in flat.iter_mut().enumerate() {
                    *p += 0.013 * math::sin(i as f64);
                }
                actor.load_flat(&flat).unwrap();
            }
            let cfg = PpoConfig {
                objective,
                ..PpoConfig::default()
            };
            let view = BatchView {
                batch: &batch,
                indices: &indices,
                advantages: &advantages,
                returns: &returns,
            };
            let (a_grads, c_grads, _) = batch_gradients(&actor, &critic, &view, &cfg).unwrap();

            let actor_flat = actor.flatten();
            let critic_flat = critic.flatten();
            let fd_actor = finite_difference_grad(
                &actor_flat,
                |p| batch_loss(&actor, &critic, p, &critic_flat, &view, &cfg).unwrap(),
                1e-6,
            );
            let fd_critic = finite_difference_grad(
                &critic_flat,
                |p| batch_loss(&actor, &critic, &actor_flat, p, &view, &cfg).unwrap(),
                1e-6,
            );
            for (g, f) in a_grads.iter().zip(&fd_actor) {
                assert!(
                    relative_error(*g, *f) < 1e-5,
                    "{objective:?} actor grad {g} vs fd {f}"
                );
            }
            for (g, f) in c_grads.iter().zip(&fd_critic) {
                assert!(
                    relative_error(*g, *f) < 1e-5,
                    "{objective:?} critic grad {g} vs fd {f}"
                );
            }
            drop(critic_flat);
            let _ = &mut critic;
        }
    }

    #[test]
    fn clipped_gradient_is_zero_outside_trust_region() {
        // Positive advantage with ratio far above 1+ε: the clipped branch is
        // the minimum, so the sample must contribute no policy gradient.
        let mut batch = synthetic_batch(1, 1, 2, 1, 7);
        batch.logps[0] = -50.0; // ratio = exp(logp + 50) >> 1 + eps
        let advantages = vec![1.0];
        let returns = vec![0.0];
        let (actor, critic) = tiny_actor_critic(2, 1, 8);
        let cfg = PpoConfig::default();
        let view = BatchView {
            batch: &batch,
            indices: &[0],
            advantages: &advantages,
            returns: &returns,
        };
        let (a_grads, _, stats) = batch_gradients(&actor, &critic, &view, &cfg).unwrap();
        // Mean-net and log_std gradients all vanish; only the critic learns.
        assert!(a_grads.iter().all(|g| *g == 0.0), "clipped-out sample leaked gradient");
        assert_eq!(stats.clip_fraction, 1.0);
    }

    #[test]
    fn ppo_update_is_deterministic_and_moves_parameters() {
        let run = || {
            let batch = synthetic_batch(4, 8, 3, 2, 50);
            let (adv, ret) = compute_gae(&batch, 0.99, 0.95);
            let adv = normalize_advantages(&adv);
            let (mut actor, mut critic) = tiny_actor_critic(3, 2, 51);
            let mut a_opt = AdamState::new(actor.param_count(), AdamConfig::default());
            let mut c_opt = AdamState::new(critic.param_count(), AdamConfig::default());
            let cfg = PpoConfig {
                minibatch_size: 8,
                update_epochs: 2,
                ..PpoConfig::default()
            };
            let mut rng = stream(52, 1);
            let stats = ppo_update(
                &mut actor, &mut critic, &mut a_opt, &mut c_opt, &batch, &adv, &ret, &cfg, &mut rng,
            )
            .unwrap();
            (actor.flatten(), critic.flatten(), stats)
        };
        let (a1, c1, s1) = run();
        let (a2, c2, s2) = run();
        assert_eq!(a1, a2, "actor params must be bit-identical across reruns");
        assert_eq!(c1, c2);
        assert_eq!(s1, s2);
        // And the update actually changed something.
        let (fresh_actor, fresh_critic) = tiny_actor_critic(3, 2, 51);
        assert_ne!(a1, fresh_actor.flatten());
        assert_ne!(c1, fresh_critic.flatten());
        assert!(s1.actor_loss.is_finite() && s1.critic_loss.is_finite());
        assert!(s1.approx_kl.is_finite() && s1.entropy.is_finite());
    }

    #[test]
    fn value_loss_decreases_on_repeated_updates() {
        // Critic regression sanity: repeated updates on a fixed batch with a
        // learnable (constant) target drive the value loss down.
        let batch = synthetic_batch(4, 8, 3, 2, 60);
        let (adv, _) = compute_gae(&batch, 0.99, 0.95);
        let adv = normalize_advantages(&adv);
        let ret = vec![0.7; batch.len()];
        let (mut actor, mut critic) = tiny_actor_critic(3, 2, 61);
        let mut a_opt = AdamState::new(actor.param_count(), AdamConfig::default());
        let mut c_opt = AdamState::new(
            critic.param_count(),
            AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
        );
        let cfg = PpoConfig {
            minibatch_size: 32,
            update_epochs: 1,
            ..PpoConfig::default()
        };
        let mut rng = stream(62, 1);
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..60 {
            let stats = ppo_update(
                &mut actor, &mut critic, &mut a_opt, &mut c_opt, &batch, &adv, &ret, &cfg, &mut rng,
            )
            .unwrap();
            first.get_or_insert(stats.critic_loss);
            last = stats.critic_loss;
        }
        let first = first.unwrap();
        assert!(
            last < first * 0.5,
            "critic loss did not drop: {first} -> {last}"
        );
    }

    #[test]
    fn collect_rollouts_shapes_and_ledger() {
        let cfg = EnvConfig::toy();
        let mut envs: Vec<Env> = (0..3)
            .map(|e| Env::new(cfg.clone(), 1000 + e as u64).unwrap())
            .collect();
        let mut agent_rngs: Vec<ChaCha8Rng> = (0..3).map(|e| stream(70, 100 + e)).collect();
        let obs_dim = envs[0].schema().total();
        let (mut actor, critic) = tiny_actor_critic(obs_dim, 3, 71);
        actor.clamp_log_std();
        let drg = DrgState::new(obs_dim);
        let drg_cfg = DrgConfig::default();
        let mut ledger = ImportanceLedger::new(8, 0.05).unwrap();
        let horizon = 20;
        let batch = collect_rollouts(
            &mut envs,
            &mut agent_rngs,
            &actor,
            &critic,
            &drg,
            &drg_cfg,
            Some(&mut ledger),
            horizon,
        )
        .unwrap();
        assert_eq!(batch.len(), 60);
        assert_eq!(batch.actor_obs.len(), 60 * obs_dim);
        assert_eq!(batch.values.len(), 63);
        assert_eq!(ledger.steps_observed(), 60);
        // Dormant generator: actor and critic saw the same thing.
        assert_eq!(batch.actor_obs, batch.critic_obs);
        // Logps are consistent with the stored (obs, action) pairs.
        for i in 0..batch.len() {
            let mean = actor.mean_net.output(batch.actor_obs_row(i)).unwrap();
            let lp = gaussian_logprob(&mean, &actor.log_std, batch.action_row(i));
            assert!((lp - batch.logps[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn collect_rollouts_resets_and_reports_episode_returns() {
        let mut cfg = EnvConfig::toy();
        cfg.episode_length_s = 0.2; // 6 control steps
        let mut envs = vec![Env::new(cfg, 80).unwrap()];
        let mut agent_rngs = vec![stream(80, 100)];
        let obs_dim = envs[0].schema().total();
        let (actor, critic) = tiny_actor_critic(obs_dim, 3, 81);
        let drg = DrgState::new(obs_dim);
        let batch = collect_rollouts(
            &mut envs,
            &mut agent_rngs,
            &actor,
            &critic,
            &drg,
            &DrgConfig::default(),
            None,
            20,
        )
        .unwrap();
        // 20 steps of 6-step episodes: 3 completions, env left mid-episode.
        assert_eq!(batch.episode_returns.len(), 3);
        assert_eq!(batch.dones.iter().filter(|d| **d).count(), 3);
        assert!(!envs[0].state().done);
        assert!(batch.mean_episode_return().is_some());
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = PpoConfig::default();
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = PpoConfig::default();
        cfg.minibatch_size = 0;
        assert!(cfg.validate().is_err());
        assert!(PpoConfig::default().validate().is_ok());
    }
}
