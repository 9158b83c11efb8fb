//! Evaluation machinery: trial sets, a scripted reference controller, the
//! control-rate sweep, and the long-horizon marathon run.
//!
//! Trials are explicit `(seed, initial pose, goal)` triples so any policy can
//! be scored on the exact same set, and a stored set replays bit-identically.
//! A trial succeeds when the wrapped angle error dips below the evaluation
//! tolerance at any control step of one episode.
//!
//! The scripted controller is a PD law on the pose features only — it maps
//! the torque request onto whichever fingers push in the right direction. It
//! can estimate the disk velocity by finite-differencing consecutive
//! (possibly noisy) angle measurements, which is what makes the control-rate
//! sweep interesting: differentiating noise punishes fast control, stale
//! corrections punish slow control, and the error is smallest in between.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::drg::{DrgConfig, DrgState};
use crate::env::{Env, EnvConfig, PoseRepr};
use crate::math;
use crate::nn::GaussianPolicyHead;
use crate::rng::{self, stream_id};
use crate::{Error, Result};

/// One reproducible evaluation trial.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialSpec {
    /// Seed for the trial env's private stream (sensor noise, replacements).
    pub seed: u64,
    pub init_theta: f64,
    pub target: f64,
}

/// Draw `n` trials: poses uniform over the circle, goals at least
/// `min_separation` away. Deterministic in `master_seed`.
pub fn generate_trials(n: usize, master_seed: u64, min_separation: f64) -> Vec<TrialSpec> {
    use rand::Rng;
    let mut rng = rng::stream(master_seed, stream_id::TRIALS);
    (0..n)
        .map(|_| {
            let init_theta = rng.random_range(-math::PI..math::PI);
            let target = crate::env::sample_goal(&mut rng, Some((init_theta, min_separation)));
            TrialSpec {
                seed: rng.random::<u64>(),
                init_theta,
                target,
            }
        })
        .collect()
}

/// Anything that can drive an env through a trial.
pub trait ActionSource {
    /// Called once at the start of every trial.
    fn begin_trial(&mut self);
    /// Produce an action for the current observation. `rng` is the trial's
    /// private stream (used e.g. for replacement draws).
    fn act(&mut self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

/// Deterministic mean-action policy, observations routed through the sensing
/// generator's evaluation path.
pub struct MeanPolicy<'a> {
    pub actor: &'a GaussianPolicyHead,
    pub drg: &'a DrgState,
    pub drg_cfg: &'a DrgConfig,
}

impl ActionSource for MeanPolicy<'_> {
    fn begin_trial(&mut self) {}

    fn act(&mut self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let transformed = self.drg.apply_eval(obs, self.drg_cfg, rng)?;
        self.actor.mean(&transformed)
    }
}

/// PD reference controller over the planar pose features.
///
/// `u = k_p·err − k_d·ω̂`; each finger is pressed in proportion to `u` when
/// its tangent direction matches the sign of `u`. With `finite_difference`
/// the velocity estimate comes from consecutive angle measurements instead of
/// the velocity feature.
#[derive(Debug, Clone)]
pub struct ScriptedController {
    pub k_p: f64,
    pub k_d: f64,
    finite_difference: bool,
    dirs: Vec<f64>,
    omega_cap: f64,
    pose_start: usize,
    target_start: usize,
    dt_control: f64,
    prev_theta: Option<f64>,
}

impl ScriptedController {
    pub fn new(cfg: &EnvConfig, k_p: f64, k_d: f64, finite_difference: bool) -> Result<Self> {
        if cfg.pose_repr != PoseRepr::Planar {
            return Err(Error::InvalidConfig(
                "scripted controller reads planar pose features".into(),
            ));
        }
        let schema = cfg.schema()?;
        let pose = schema
            .group("object_pose")
            .ok_or_else(|| Error::InvalidConfig("schema lacks object_pose".into()))?;
        let target = schema
            .group("target_pose")
            .ok_or_else(|| Error::InvalidConfig("schema lacks target_pose".into()))?;
        Ok(ScriptedController {
            k_p,
            k_d,
            finite_difference,
            dirs: cfg.finger_dirs.clone(),
            omega_cap: cfg.omega_cap,
            pose_start: pose.start,
            target_start: target.start,
            dt_control: cfg.sim_dt * cfg.control_every as f64,
            prev_theta: None,
        })
    }

    /// Reasonable default gains for the bundled presets.
    pub fn with_default_gains(cfg: &EnvConfig) -> Result<Self> {
        ScriptedController::new(cfg, 3.0, 1.2, false)
    }
}

impl ActionSource for ScriptedController {
    fn begin_trial(&mut self) {
        self.prev_theta = None;
    }

    fn act(&mut self, obs: &[f64], _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let p = self.pose_start;
        let t = self.target_start;
        let theta = math::atan2(obs[p + 1], obs[p]);
        let target = math::atan2(obs[t + 1], obs[t]);
        let err = math::wrap_angle(target - theta);
        let omega_est = if self.finite_difference {
            match self.prev_theta {
                Some(prev) => math::wrap_angle(theta - prev) / self.dt_control,
                None => 0.0,
            }
        } else {
            obs[p + 2] * self.omega_cap
        };
        self.prev_theta = Some(theta);
        let u = self.k_p * err - self.k_d * omega_est;
        Ok(self
            .dirs
            .iter()
            .map(|d| {
                let press = (u * d).clamp(0.0, 1.0);
                2.0 * press - 1.0
            })
            .collect())
    }
}

/// Outcome of a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialOutcome {
    pub success: bool,
    /// Control step (1-based) at which the tolerance was first met.
    pub steps_to_success: Option<usize>,
    pub final_abs_error: f64,
}

/// Execute one trial: reset to its pose, run one episode, stop early on
/// success at `tol`.
pub fn run_trial(
    env_cfg: &EnvConfig,
    policy: &mut dyn ActionSource,
    trial: &TrialSpec,
    tol: f64,
) -> Result<TrialOutcome> {
    let mut cfg = env_cfg.clone();
    cfg.resample_on_success = false;
    let mut env = Env::with_rng(cfg, rng::stream(trial.seed, 0))?;
    env.reset_to(trial.init_theta, trial.target);
    let mut trial_rng = rng::stream(trial.seed, 1);
    policy.begin_trial();
    let mut last_err = math::abs(math::wrap_angle(trial.target - trial.init_theta));
    let omega_cap = env.config().success_omega_cap;
    for step in 1..=env.config().episode_steps() {
        let action = policy.act(&env.obs().to_vec(), &mut trial_rng)?;
        let r = env.step(&action)?;
        last_err = math::abs(r.info.angle_error);
        if last_err < tol && math::abs(r.info.omega) < omega_cap {
            return Ok(TrialOutcome {
                success: true,
                steps_to_success: Some(step),
                final_abs_error: last_err,
            });
        }
    }
    Ok(TrialOutcome {
        success: false,
        steps_to_success: None,
        final_abs_error: last_err,
    })
}

/// Aggregate evaluation over a trial set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub n_trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_final_abs_error: f64,
    pub outcomes: Vec<TrialOutcome>,
}

/// Score a policy on a trial set at the evaluation tolerance in `env_cfg`.
pub fn evaluate(
    env_cfg: &EnvConfig,
    policy: &mut dyn ActionSource,
    trials: &[TrialSpec],
) -> Result<EvalReport> {
    if trials.is_empty() {
        return Err(Error::InvalidConfig("empty trial set".into()));
    }
    let tol = env_cfg.success_tol_eval;
    let mut outcomes = Vec::with_capacity(trials.len());
    for trial in trials {
        outcomes.push(run_trial(env_cfg, policy, trial, tol)?);
    }
    let successes = outcomes.iter().filter(|o| o.success).count();
    let mean_err = math::mean(
        &outcomes
            .iter()
            .map(|o| o.final_abs_error)
            .collect::<Vec<f64>>(),
    );
    Ok(EvalReport {
        n_trials: trials.len(),
        successes,
        success_rate: successes as f64 / trials.len() as f64,
        mean_final_abs_error: mean_err,
        outcomes,
    })
}

/// Sweep parameters paired with [`EnvConfig::rate_probe`]: a U-shaped
/// following-ability curve with its minimum at the middle rate.
pub const RATE_PROBE_RATES_HZ: [usize; 3] = [30, 10, 5];
/// Scripted-controller proportional gain for the rate probe.
pub const RATE_PROBE_KP: f64 = 3.0;
/// Scripted-controller derivative gain for the rate probe.
pub const RATE_PROBE_KD: f64 = 0.4;

/// One point of the control-rate sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatePoint {
    pub rate_hz: f64,
    pub control_every: usize,
    /// Trials in which the goal tolerance was met at some control step.
    pub successes: usize,
    pub n_trials: usize,
    /// RMS wrapped angle error over all control steps and trials.
    pub angle_rmse: f64,
    /// RMS servo command-vs-actual error over all substeps and joints.
    pub tracking_rmse: f64,
    /// Same RMS split per joint.
    pub per_joint_tracking_rmse: Vec<f64>,
}

/// Resolve each requested rate into an env config running at that rate.
fn rate_configs(env_cfg: &EnvConfig, rates_hz: &[usize], seconds: f64) -> Result<Vec<EnvConfig>> {
    if rates_hz.is_empty() {
        return Err(Error::InvalidConfig("empty rate sweep".into()));
    }
    let sim_rate = (1.0 / env_cfg.sim_dt + 0.5) as usize;
    rates_hz
        .iter()
        .map(|&rate| {
            if rate == 0 || sim_rate % rate != 0 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "control rate {rate} Hz does not divide the {sim_rate} Hz simulation"
                )));
            }
            let mut cfg = env_cfg.clone();
            cfg.control_every = sim_rate / rate;
            cfg.episode_length_s = seconds;
            cfg.resample_on_success = false;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

/// Run every trial at one rate, accumulating tracking and success stats.
/// Episodes run to full length; a trial counts as a success when the wrapped
/// error dips below the evaluation tolerance (with the disk near rest) at any
/// control step.
fn sweep_point(
    cfg: &EnvConfig,
    policy: &mut dyn ActionSource,
    trials: &[TrialSpec],
) -> Result<RatePoint> {
    let rate_hz = 1.0 / (cfg.sim_dt * cfg.control_every as f64);
    let tol = cfg.success_tol_eval;
    let mut angle_sq = 0.0;
    let mut angle_n = 0usize;
    let mut joint_sq = alloc::vec![0.0; cfg.n_fingers];
    let mut joint_n = 0usize;
    let mut successes = 0usize;
    for trial in trials {
        let mut env = Env::with_rng(cfg.clone(), rng::stream(trial.seed, 0))?;
        env.reset_to(trial.init_theta, trial.target);
        let mut trial_rng = rng::stream(trial.seed, 1);
        policy.begin_trial();
        let mut reached = false;
        for _ in 0..cfg.episode_steps() {
            let action = policy.act(&env.obs().to_vec(), &mut trial_rng)?;
            let r = env.step(&action)?;
            angle_sq += r.info.angle_error * r.info.angle_error;
            angle_n += 1;
            for (acc, sq) in joint_sq.iter_mut().zip(&r.info.tracking_sq) {
                *acc += sq;
            }
            joint_n += r.info.substeps;
            if math::abs(r.info.angle_error) < tol
                && math::abs(r.info.omega) < cfg.success_omega_cap
            {
                reached = true;
            }
        }
        if reached {
            successes += 1;
        }
    }
    let per_joint: Vec<f64> = joint_sq
        .iter()
        .map(|&sq| math::sqrt(sq / joint_n as f64))
        .collect();
    let total_sq: f64 = joint_sq.iter().sum();
    Ok(RatePoint {
        rate_hz,
        control_every: cfg.control_every,
        successes,
        n_trials: trials.len(),
        angle_rmse: math::sqrt(angle_sq / angle_n as f64),
        tracking_rmse: math::sqrt(total_sq / (joint_n * cfg.n_fingers) as f64),
        per_joint_tracking_rmse: per_joint,
    })
}

/// Sweep control rates (Hz) with the scripted controller. Each rate must
/// divide the simulation rate. The returned points preserve the input order.
/// `finite_difference` selects the velocity-estimate mode; the U-shaped
/// following-ability curve needs it on (differentiated noise vs staleness).
pub fn rate_sweep(
    env_cfg: &EnvConfig,
    rates_hz: &[usize],
    k_p: f64,
    k_d: f64,
    finite_difference: bool,
    n_trials: usize,
    seconds: f64,
    master_seed: u64,
) -> Result<Vec<RatePoint>> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("empty rate sweep".into()));
    }
    let trials = generate_trials(n_trials, master_seed, env_cfg.min_goal_separation);
    rate_configs(env_cfg, rates_hz, seconds)?
        .iter()
        .map(|cfg| {
            // Rebuilt per rate: its velocity estimate divides by the control
            // period.
            let mut controller = ScriptedController::new(cfg, k_p, k_d, finite_difference)?;
            sweep_point(cfg, &mut controller, &trials)
        })
        .collect()
}

/// Sweep control rates with an arbitrary policy driving the env. The same
/// trials are replayed at every rate; actions hold between commands exactly
/// as in training.
pub fn rate_sweep_policy(
    env_cfg: &EnvConfig,
    rates_hz: &[usize],
    policy: &mut dyn ActionSource,
    n_trials: usize,
    seconds: f64,
    master_seed: u64,
) -> Result<Vec<RatePoint>> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("empty rate sweep".into()));
    }
    let trials = generate_trials(n_trials, master_seed, env_cfg.min_goal_separation);
    rate_configs(env_cfg, rates_hz, seconds)?
        .iter()
        .map(|cfg| sweep_point(cfg, policy, &trials))
        .collect()
}

/// Result of a long uninterrupted run with goal resampling on success.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarathonReport {
    pub seconds: f64,
    pub control_steps: usize,
    /// Goals reached (each reach resamples a fresh goal).
    pub goals_reached: usize,
    pub mean_abs_error: f64,
    pub final_abs_error: f64,
}

/// Run one long episode (`seconds` of sim time) with the success tolerance
/// widened to the evaluation tolerance, counting how many consecutive goals
/// the policy reaches.
pub fn marathon(
    env_cfg: &EnvConfig,
    policy: &mut dyn ActionSource,
    seconds: f64,
    seed: u64,
) -> Result<MarathonReport> {
    let mut cfg = env_cfg.clone();
    cfg.episode_length_s = seconds;
    // Score and resample at the (wider) evaluation tolerance.
    cfg.success_tol_train = cfg.success_tol_eval;
    cfg.resample_on_success = true;
    cfg.validate()?;
    let mut env = Env::with_rng(cfg.clone(), rng::stream(seed, 0))?;
    let mut trial_rng = rng::stream(seed, 1);
    policy.begin_trial();
    let mut goals = 0usize;
    let mut err_sum = 0.0;
    let mut last_err = 0.0;
    let steps = cfg.episode_steps();
    for _ in 0..steps {
        let action = policy.act(&env.obs().to_vec(), &mut trial_rng)?;
        let r = env.step(&action)?;
        last_err = math::abs(r.info.angle_error);
        err_sum += last_err;
        if r.info.success {
            goals += 1;
        }
    }
    Ok(MarathonReport {
        seconds,
        control_steps: steps,
        goals_reached: goals,
        mean_abs_error: err_sum / steps as f64,
        final_abs_error: last_err,
    })
}
