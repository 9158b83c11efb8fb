//! Deterministic toy palm-spin environment.
//!
//! A disk with rotation angle θ sits on a palm. Each finger is a rate-limited
//! goal-seeking servo whose fingertip presses on the rim once its extension
//! passes a contact threshold; a pressing finger applies tangential torque
//! proportional to contact force, with a fixed per-finger tangent direction.
//! The task is to spin the disk to a commanded target angle; on success the
//! target resamples and the episode keeps going until its fixed length.
//!
//! Physics is hand-integrated explicit Euler at `sim_dt`, with the policy
//! acting every `control_every` substeps. All randomness (initial pose, goal
//! draws, sensor noise) comes from one per-env ChaCha stream, so trajectories
//! are bit-reproducible for a given seed.
//!
//! The observation is assembled from named contiguous feature groups; the
//! tactile bank is the only reducible group. Besides true contact sensors the
//! bank can carry duplicates (a source sensor plus read noise) and pure noise
//! channels that fire at a planted rate — the planted-importance diagnostic
//! config is exactly this environment with an all-noise bank.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math;
use crate::rng;
use crate::{Error, Result};

/// How the disk pose and goal appear in the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PoseRepr {
    /// `[cos θ, sin θ, ω]` + `[cos θ*, sin θ*]` (5 features).
    Planar,
    /// Quaternion-style blocks: `[quat(4), angvel(3), target_pos(3),
    /// target_quat(4)]` (14 features) for wide-schema shape parity.
    Quat,
}

/// One sensor in the tactile bank.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum SensorSpec {
    /// Normalized contact force of one finger.
    Contact { finger: usize },
    /// Copy of an earlier sensor plus Gaussian read noise.
    Duplicate { source: usize, noise_std: f64 },
    /// Fires independently each control step with the given probability.
    Noise { rate: f64 },
}

/// A contiguous block of observation features.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Named, contiguous, non-overlapping feature groups covering the full
/// observation. Exactly one group — the tactile bank — is reducible.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSchema {
    groups: Vec<FeatureGroup>,
    total: usize,
}

impl FeatureSchema {
    pub fn from_groups(named_lens: &[(&str, usize)]) -> Result<Self> {
        let mut groups = Vec::with_capacity(named_lens.len());
        let mut start = 0;
        for (name, len) in named_lens {
            groups.push(FeatureGroup {
                name: String::from(*name),
                start,
                len: *len,
            });
            start += len;
        }
        let schema = FeatureSchema {
            groups,
            total: start,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut expected_start = 0;
        for g in &self.groups {
            if g.start != expected_start {
                return Err(Error::InvalidConfig(format!(
                    "feature group {} starts at {} (expected {expected_start})",
                    g.name, g.start
                )));
            }
            expected_start += g.len;
        }
        if expected_start != self.total {
            return Err(Error::Shape {
                what: "schema total",
                expected: expected_start,
                got: self.total,
            });
        }
        let tactile = self.groups.iter().filter(|g| g.name == "tactile").count();
        if tactile != 1 {
            return Err(Error::InvalidConfig(format!(
                "schema must have exactly one tactile group, found {tactile}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&FeatureGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// `(start, len)` of the reducible (tactile) block.
    pub fn reducible_range(&self) -> (usize, usize) {
        let g = self.group("tactile").expect("validated schema has tactile");
        (g.start, g.len)
    }

    /// Human name of an absolute feature index, e.g. `tactile[3]`.
    pub fn feature_name(&self, index: usize) -> String {
        for g in &self.groups {
            if index >= g.start && index < g.start + g.len {
                return format!("{}[{}]", g.name, index - g.start);
            }
        }
        format!("feature[{index}]")
    }
}

/// Full environment configuration. All readings are normalized so the
/// observation lives in `[-1, 1]` per feature.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvConfig {
    pub n_fingers: usize,
    /// Tangent direction (+1 / -1) each finger's contact applies.
    pub finger_dirs: Vec<f64>,
    pub pose_repr: PoseRepr,
    pub tactile: Vec<SensorSpec>,

    pub disk_inertia: f64,
    pub damping: f64,
    /// Servo proportional speed gain (1/s) and speed cap (extension/s).
    pub servo_gain: f64,
    pub servo_v_max: f64,
    /// Fingertip extension past this threshold makes contact.
    pub contact_threshold: f64,
    /// Contact force per unit extension past the threshold.
    pub contact_stiffness: f64,
    /// Tangential torque per unit contact force.
    pub torque_per_force: f64,

    pub sim_dt: f64,
    pub control_every: usize,
    pub episode_length_s: f64,

    pub success_tol_train: f64,
    pub success_tol_eval: f64,
    /// Success additionally requires `|ω|` below this cap — the disk must
    /// arrive at the goal, not merely sweep past it at speed.
    pub success_omega_cap: f64,
    pub resample_on_success: bool,
    pub min_goal_separation: f64,

    pub reward_angle_coef: f64,
    pub reward_success_bonus: f64,

    pub omega_cap: f64,
    pub obs_noise_std: f64,
    pub act_noise_std: f64,
}

impl EnvConfig {
    /// Default 3-finger demo config: 8 tactile sensors
    /// (3 contact, 2 duplicates, 3 noise), 22-dim observation.
    pub fn toy() -> Self {
        EnvConfig {
            n_fingers: 3,
            finger_dirs: vec![1.0, -1.0, 1.0],
            pose_repr: PoseRepr::Planar,
            tactile: vec![
                SensorSpec::Contact { finger: 0 },
                SensorSpec::Contact { finger: 1 },
                SensorSpec::Contact { finger: 2 },
                SensorSpec::Duplicate {
                    source: 0,
                    noise_std: 0.02,
                },
                SensorSpec::Duplicate {
                    source: 1,
                    noise_std: 0.02,
                },
                SensorSpec::Noise { rate: 0.25 },
                SensorSpec::Noise { rate: 0.1 },
                SensorSpec::Noise { rate: 0.05 },
            ],
            disk_inertia: 1.0,
            damping: 2.0,
            servo_gain: 20.0,
            servo_v_max: 4.0,
            contact_threshold: 0.2,
            contact_stiffness: 1.25,
            torque_per_force: 4.0,
            sim_dt: 1.0 / 60.0,
            control_every: 2,
            episode_length_s: 10.0,
            success_tol_train: 0.1,
            success_tol_eval: 0.4,
            success_omega_cap: 1.0,
            resample_on_success: true,
            min_goal_separation: 0.5,
            reward_angle_coef: 1.0 / math::PI,
            reward_success_bonus: 250.0,
            omega_cap: 6.0,
            obs_noise_std: 0.0,
            act_noise_std: 0.0,
        }
    }

    /// 13-sensor toy variant (3 contact, 4 duplicates, 6 noise; 27-dim obs):
    /// the bank size the two- and three-step reduction presets expect.
    pub fn toy13() -> Self {
        let mut cfg = EnvConfig::toy();
        cfg.tactile = vec![
            SensorSpec::Contact { finger: 0 },
            SensorSpec::Contact { finger: 1 },
            SensorSpec::Contact { finger: 2 },
            SensorSpec::Duplicate {
                source: 0,
                noise_std: 0.02,
            },
            SensorSpec::Duplicate {
                source: 1,
                noise_std: 0.02,
            },
            SensorSpec::Duplicate {
                source: 2,
                noise_std: 0.02,
            },
            SensorSpec::Duplicate {
                source: 0,
                noise_std: 0.05,
            },
            SensorSpec::Noise { rate: 0.4 },
            SensorSpec::Noise { rate: 0.25 },
            SensorSpec::Noise { rate: 0.15 },
            SensorSpec::Noise { rate: 0.1 },
            SensorSpec::Noise { rate: 0.05 },
            SensorSpec::Noise { rate: 0.02 },
        ];
        cfg
    }

    /// Wide 75-feature preset: 16 fingers, quaternion-style pose blocks,
    /// 13 tactile sensors. Used for shape tests and feature-count traces
    /// (75 → 68 → 62 under the two-step preset).
    pub fn wide75() -> Self {
        let mut cfg = EnvConfig::toy();
        cfg.n_fingers = 16;
        cfg.finger_dirs = (0..16)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        cfg.pose_repr = PoseRepr::Quat;
        let mut tactile: Vec<SensorSpec> =
            (0..10).map(|finger| SensorSpec::Contact { finger }).collect();
        tactile.push(SensorSpec::Duplicate {
            source: 0,
            noise_std: 0.02,
        });
        tactile.push(SensorSpec::Noise { rate: 0.1 });
        tactile.push(SensorSpec::Noise { rate: 0.05 });
        cfg.tactile = tactile;
        cfg
    }

    /// Planted-importance diagnostic: the tactile bank is pure noise sensors
    /// with the given activation rates, so ground-truth importance is known.
    pub fn diagnostic(rates: &[f64]) -> Self {
        let mut cfg = EnvConfig::toy();
        cfg.tactile = rates.iter().map(|&rate| SensorSpec::Noise { rate }).collect();
        cfg
    }

    /// The planted rates used by the importance-recovery checks.
    pub fn diagnostic_rates() -> Vec<f64> {
        vec![0.9, 0.7, 0.5, 0.3, 0.2, 0.1, 0.05, 0.02]
    }

    /// Rate-probe config for the following-ability sweep: the toy rig with
    /// mild sensor noise so a finite-differenced velocity estimate is noisy
    /// at fast control rates yet stale at slow ones. Pair it with the
    /// scripted controller in finite-difference mode.
    pub fn rate_probe() -> Self {
        let mut cfg = EnvConfig::toy();
        cfg.obs_noise_std = 0.02;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fingers == 0 {
            return Err(Error::InvalidConfig("n_fingers must be >= 1".into()));
        }
        if self.finger_dirs.len() != self.n_fingers {
            return Err(Error::Shape {
                what: "finger_dirs",
                expected: self.n_fingers,
                got: self.finger_dirs.len(),
            });
        }
        if self.finger_dirs.iter().any(|d| !d.is_finite() || math::abs(*d) > 1.0) {
            return Err(Error::InvalidConfig(
                "finger_dirs entries must be finite and in [-1, 1]".into(),
            ));
        }
        if self.tactile.is_empty() {
            return Err(Error::InvalidConfig("tactile bank must be non-empty".into()));
        }
        for (i, s) in self.tactile.iter().enumerate() {
            match *s {
                SensorSpec::Contact { finger } => {
                    if finger >= self.n_fingers {
                        return Err(Error::InvalidConfig(format!(
                            "tactile[{i}] references finger {finger} of {}",
                            self.n_fingers
                        )));
                    }
                }
                SensorSpec::Duplicate { source, noise_std } => {
                    if source >= i {
                        return Err(Error::InvalidConfig(format!(
                            "tactile[{i}] duplicates sensor {source}, which is not earlier"
                        )));
                    }
                    if !(noise_std >= 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "tactile[{i}] has negative noise_std"
                        )));
                    }
                }
                SensorSpec::Noise { rate } => {
                    if !(0.0..=1.0).contains(&rate) {
                        return Err(Error::InvalidConfig(format!(
                            "tactile[{i}] rate {rate} outside [0, 1]"
                        )));
                    }
                }
            }
        }
        if !(self.sim_dt > 0.0) {
            return Err(Error::InvalidConfig("sim_dt must be positive".into()));
        }
        if self.control_every == 0 {
            return Err(Error::InvalidConfig("control_every must be >= 1".into()));
        }
        if !(self.servo_v_max > 0.0) || !(self.servo_gain >= 0.0) {
            return Err(Error::InvalidConfig("servo gains must be positive".into()));
        }
        if !(self.disk_inertia > 0.0) || !(self.damping >= 0.0) {
            return Err(Error::InvalidConfig("disk inertia/damping invalid".into()));
        }
        if !(0.0..1.0).contains(&self.contact_threshold) {
            return Err(Error::InvalidConfig("contact_threshold outside [0, 1)".into()));
        }
        if !(self.contact_stiffness > 0.0) || !(self.torque_per_force >= 0.0) {
            return Err(Error::InvalidConfig("contact parameters invalid".into()));
        }
        if !(self.success_tol_train > 0.0) || self.success_tol_train > self.success_tol_eval {
            return Err(Error::InvalidConfig(
                "require 0 < success_tol_train <= success_tol_eval".into(),
            ));
        }
        if !(self.success_omega_cap > 0.0) {
            return Err(Error::InvalidConfig("success_omega_cap must be positive".into()));
        }
        if !(self.episode_length_s > 0.0) || self.episode_steps() == 0 {
            return Err(Error::InvalidConfig("episode length too short".into()));
        }
        if !(0.0..2.5).contains(&self.min_goal_separation) {
            return Err(Error::InvalidConfig(
                "min_goal_separation outside [0, 2.5)".into(),
            ));
        }
        if !(self.omega_cap > 0.0) {
            return Err(Error::InvalidConfig("omega_cap must be positive".into()));
        }
        if !(self.reward_angle_coef >= 0.0) || !(self.reward_success_bonus >= 0.0) {
            return Err(Error::InvalidConfig("reward coefficients invalid".into()));
        }
        if !(self.obs_noise_std >= 0.0) || !(self.act_noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise stds must be >= 0".into()));
        }
        Ok(())
    }

    /// Control steps per episode.
    pub fn episode_steps(&self) -> usize {
        let per_step = self.sim_dt * self.control_every as f64;
        (self.episode_length_s / per_step + 0.5) as usize
    }

    /// Control decisions per second.
    pub fn control_rate_hz(&self) -> f64 {
        1.0 / (self.sim_dt * self.control_every as f64)
    }

    /// Max contact force a finger can produce (normalization cap).
    pub fn force_cap(&self) -> f64 {
        self.contact_stiffness * (1.0 - self.contact_threshold)
    }

    /// Observation schema implied by this config.
    pub fn schema(&self) -> Result<FeatureSchema> {
        let n = self.n_fingers;
        let k = self.tactile.len();
        match self.pose_repr {
            PoseRepr::Planar => FeatureSchema::from_groups(&[
                ("joint_pos", n),
                ("joint_vel", n),
                ("joint_torque", n),
                ("object_pose", 3),
                ("target_pose", 2),
                ("tactile", k),
            ]),
            PoseRepr::Quat => FeatureSchema::from_groups(&[
                ("joint_pos", n),
                ("joint_vel", n),
                ("joint_torque", n),
                ("object_quat", 4),
                ("object_angvel", 3),
                ("target_pos", 3),
                ("target_quat", 4),
                ("tactile", k),
            ]),
        }
    }
}

/// One servo update: move `q` toward `command` at speed
/// `min(gain·|err|, v_max)`, never overshooting. Returns the new position and
/// the realized velocity.
pub fn actuator_track(q: f64, command: f64, gain: f64, v_max: f64, dt: f64) -> (f64, f64) {
    let err = command - q;
    if err == 0.0 {
        return (q, 0.0);
    }
    let speed = (gain * math::abs(err)).min(v_max);
    let step = (speed * dt).min(math::abs(err));
    let signed = if err > 0.0 { step } else { -step };
    (q + signed, signed / dt)
}

/// Draw a goal uniformly over `[-π, π)`; with an exclusion, rejection-sample
/// until the goal is at least `min_sep` (wrapped) away from `center`.
pub fn sample_goal(rng: &mut impl Rng, exclude: Option<(f64, f64)>) -> f64 {
    loop {
        let g = rng.random_range(-math::PI..math::PI);
        match exclude {
            Some((center, min_sep)) => {
                if math::abs(math::wrap_angle(g - center)) >= min_sep {
                    return g;
                }
            }
            None => return g,
        }
    }
}

/// Mutable simulation state of one env instance.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub theta: f64,
    pub omega: f64,
    pub target: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    /// Latest per-finger contact force (after the last substep).
    pub contact_force: Vec<f64>,
    /// Latest per-finger applied tangential torque.
    pub applied_torque: Vec<f64>,
    /// Latest raw tactile readings (normalized, pre-observation-noise).
    pub tactile: Vec<f64>,
    pub steps: usize,
    pub done: bool,
    pub episode_return: f64,
    rng: ChaCha8Rng,
}

/// Result of one control step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Side-channel facts about the step (not part of the observation contract).
#[derive(Debug, Clone)]
pub struct StepInfo {
    /// Wrapped `target - θ` after the substeps, against the pre-resample goal.
    pub angle_error: f64,
    /// Disk angular velocity after the substeps.
    pub omega: f64,
    /// Whether the training tolerance was met this step.
    pub success: bool,
    /// Raw tactile readings used in the observation.
    pub raw_tactile: Vec<f64>,
    /// Per-finger Σ over substeps of squared command-vs-position error.
    pub tracking_sq: Vec<f64>,
    /// Number of substeps contributing to `tracking_sq`.
    pub substeps: usize,
}

/// A configured environment instance with its own RNG stream.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    schema: FeatureSchema,
    state: EnvState,
    obs: Vec<f64>,
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        Env::with_rng(config, rng::stream(seed, 0))
    }

    /// Construct with an explicit RNG stream (for callers that manage
    /// per-instance stream lanes themselves).
    pub fn with_rng(config: EnvConfig, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let schema = config.schema()?;
        let n = config.n_fingers;
        let state = EnvState {
            theta: 0.0,
            omega: 0.0,
            target: 0.0,
            q: vec![0.0; n],
            qd: vec![0.0; n],
            contact_force: vec![0.0; n],
            applied_torque: vec![0.0; n],
            tactile: vec![0.0; config.tactile.len()],
            steps: 0,
            done: false,
            episode_return: 0.0,
            rng,
        };
        let mut env = Env {
            config,
            schema,
            state,
            obs: Vec::new(),
        };
        env.reset();
        Ok(env)
    }

    #[inline]
    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    #[inline]
    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    #[inline]
    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Current observation (set by the last reset/step).
    #[inline]
    pub fn obs(&self) -> &[f64] {
        &self.obs
    }

    /// Start a fresh episode: initial pose uniform, goal separated from it.
    /// Draws from the persistent per-env stream, so consecutive episodes
    /// differ while the whole sequence stays seed-reproducible.
    pub fn reset(&mut self) -> Vec<f64> {
        let theta = self.state.rng.random_range(-math::PI..math::PI);
        let target = sample_goal(
            &mut self.state.rng,
            Some((theta, self.config.min_goal_separation)),
        );
        self.reset_pose(theta, target);
        self.obs.clone()
    }

    /// Reset to an explicit pose/goal pair (trial replay). The RNG stream is
    /// kept, so construct the env with the trial's seed for exact replays.
    pub fn reset_to(&mut self, theta: f64, target: f64) -> Vec<f64> {
        self.reset_pose(math::wrap_angle(theta), math::wrap_angle(target));
        self.obs.clone()
    }

    fn reset_pose(&mut self, theta: f64, target: f64) {
        let n = self.config.n_fingers;
        self.state.theta = theta;
        self.state.omega = 0.0;
        self.state.target = target;
        self.state.q = vec![0.0; n];
        self.state.qd = vec![0.0; n];
        self.state.contact_force = vec![0.0; n];
        self.state.applied_torque = vec![0.0; n];
        self.state.steps = 0;
        self.state.done = false;
        self.state.episode_return = 0.0;
        self.state.tactile = tactile_readout(&mut self.state, &self.config);
        self.obs = self.build_obs();
    }

    /// One control step: track the commanded servo targets for
    /// `control_every` explicit-Euler substeps, score the resulting pose, and
    /// rebuild the observation.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::EpisodeDone);
        }
        if action.len() != self.config.n_fingers {
            return Err(Error::Shape {
                what: "action",
                expected: self.config.n_fingers,
                got: action.len(),
            });
        }
        let cfg = &self.config;
        let st = &mut self.state;

        // Commands: actions clamped only here, at the environment boundary.
        let mut command = Vec::with_capacity(action.len());
        for a in action {
            let mut a = *a;
            if cfg.act_noise_std > 0.0 {
                let z: f64 = st.rng.sample(StandardNormal);
                a += z * cfg.act_noise_std;
            }
            let a = a.clamp(-1.0, 1.0);
            command.push((a + 1.0) / 2.0);
        }

        let mut tracking_sq = vec![0.0; cfg.n_fingers];
        for _ in 0..cfg.control_every {
            // Servos.
            for j in 0..cfg.n_fingers {
                let (q_new, vel) =
                    actuator_track(st.q[j], command[j], cfg.servo_gain, cfg.servo_v_max, cfg.sim_dt);
                st.q[j] = q_new;
                st.qd[j] = vel;
                let e = command[j] - q_new;
                tracking_sq[j] += e * e;
            }
            // Contacts and net torque.
            let mut torque = 0.0;
            for j in 0..cfg.n_fingers {
                let ext = st.q[j] - cfg.contact_threshold;
                let force = if ext > 0.0 {
                    cfg.contact_stiffness * ext
                } else {
                    0.0
                };
                st.contact_force[j] = force;
                let tau = cfg.finger_dirs[j] * cfg.torque_per_force * force;
                st.applied_torque[j] = tau;
                torque += tau;
            }
            torque -= cfg.damping * st.omega;
            // Explicit Euler: θ advances on the pre-update ω.
            st.theta = math::wrap_angle(st.theta + st.omega * cfg.sim_dt);
            st.omega += torque * cfg.sim_dt / cfg.disk_inertia;
        }

        let angle_error = math::wrap_angle(st.target - st.theta);
        let success = math::abs(angle_error) < cfg.success_tol_train
            && math::abs(st.omega) < cfg.success_omega_cap;
        let mut reward = -cfg.reward_angle_coef * math::abs(angle_error);
        if success {
            reward += cfg.reward_success_bonus;
            if cfg.resample_on_success {
                st.target = sample_goal(&mut st.rng, Some((st.theta, cfg.min_goal_separation)));
            }
        }
        st.steps += 1;
        st.done = st.steps >= cfg.episode_steps();
        st.episode_return += reward;
        st.tactile = tactile_readout(st, cfg);
        let raw_tactile = st.tactile.clone();
        self.obs = self.build_obs();
        Ok(StepResult {
            obs: self.obs.clone(),
            reward,
            done: self.state.done,
            info: StepInfo {
                angle_error,
                omega: self.state.omega,
                success,
                raw_tactile,
                tracking_sq,
                substeps: self.config.control_every,
            },
        })
    }

    fn build_obs(&mut self) -> Vec<f64> {
        let cfg = &self.config;
        let st = &mut self.state;
        let mut obs = Vec::with_capacity(self.schema.total());
        // joint_pos: extension in [0,1] mapped to [-1,1].
        for q in &st.q {
            obs.push(2.0 * q - 1.0);
        }
        // joint_vel normalized by the servo speed cap.
        for qd in &st.qd {
            obs.push((qd / cfg.servo_v_max).clamp(-1.0, 1.0));
        }
        // joint_torque normalized by the per-finger torque cap.
        let torque_cap = cfg.torque_per_force * cfg.force_cap();
        for tau in &st.applied_torque {
            let v = if torque_cap > 0.0 { tau / torque_cap } else { 0.0 };
            obs.push(v.clamp(-1.0, 1.0));
        }
        match cfg.pose_repr {
            PoseRepr::Planar => {
                obs.push(math::cos(st.theta));
                obs.push(math::sin(st.theta));
                obs.push((st.omega / cfg.omega_cap).clamp(-1.0, 1.0));
                obs.push(math::cos(st.target));
                obs.push(math::sin(st.target));
            }
            PoseRepr::Quat => {
                obs.push(math::cos(st.theta / 2.0));
                obs.push(0.0);
                obs.push(0.0);
                obs.push(math::sin(st.theta / 2.0));
                obs.push(0.0);
                obs.push(0.0);
                obs.push((st.omega / cfg.omega_cap).clamp(-1.0, 1.0));
                obs.push(0.0);
                obs.push(0.0);
                obs.push(0.0);
                obs.push(math::cos(st.target / 2.0));
                obs.push(0.0);
                obs.push(0.0);
                obs.push(math::sin(st.target / 2.0));
            }
        }
        obs.extend_from_slice(&st.tactile);
        if cfg.obs_noise_std > 0.0 {
            for v in obs.iter_mut() {
                let z: f64 = st.rng.sample(StandardNormal);
                *v = (*v + z * cfg.obs_noise_std).clamp(-1.0, 1.0);
            }
        }
        debug_assert_eq!(obs.len(), self.schema.total());
        obs
    }
}

/// Compute the tactile bank readings for the current state. Contact sensors
/// report normalized force clamped to `[0, 1]`; duplicates echo an earlier
/// sensor plus read noise; noise sensors fire independently at their rate.
pub fn tactile_readout(state: &mut EnvState, config: &EnvConfig) -> Vec<f64> {
    let cap = config.force_cap();
    let mut out: Vec<f64> = Vec::with_capacity(config.tactile.len());
    for spec in &config.tactile {
        let v = match *spec {
            SensorSpec::Contact { finger } => {
                let f = state.contact_force[finger];
                if cap > 0.0 {
                    (f / cap).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
            SensorSpec::Duplicate { source, noise_std } => {
                let base = out[source];
                let noisy = if noise_std > 0.0 {
                    let z: f64 = state.rng.sample(StandardNormal);
                    base + z * noise_std
                } else {
                    base
                };
                noisy.clamp(-1.0, 1.0)
            }
            SensorSpec::Noise { rate } => {
                if rate > 0.0 && state.rng.random_range(0.0..1.0) < rate {
                    state.rng.random_range(0.1..1.0)
                } else {
                    0.0
                }
            }
        };
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;
    use proptest::prelude::*;

    #[test]
    fn actuator_track_examples() {
        // At the command: unchanged.
        let (q, v) = actuator_track(0.4, 0.4, 20.0, 4.0, 1.0 / 60.0);
        assert_eq!((q, v), (0.4, 0.0));
        // Far away with v_max·dt = 0.01: moves exactly 0.01.
        let (q, _) = actuator_track(0.0, 1.0, 20.0, 0.6, 1.0 / 60.0);
        assert!((q - 0.01).abs() < 1e-15, "q = {q}");
        // Proportional regime: err 0.01, gain 20 → speed 0.2, step 0.2/60.
        let (q, v) = actuator_track(0.0, 0.01, 20.0, 4.0, 1.0 / 60.0);
        assert!((q - 0.2 / 60.0).abs() < 1e-15);
        assert!((v - 0.2).abs() < 1e-12);
        // Never overshoots even with a huge gain.
        let (q, _) = actuator_track(0.0, 0.05, 1e6, 1e6, 1.0 / 60.0);
        assert_eq!(q, 0.05);
        // Symmetric when approaching from above.
        let (q, v) = actuator_track(1.0, 0.0, 20.0, 0.6, 1.0 / 60.0);
        assert!((q - 0.99).abs() < 1e-15);
        assert!((v + 0.6).abs() < 1e-12);
    }

    /// Explicit-Euler contact oracle: one substep of a single pressing finger
    /// on an undamped disk raises ω by τ·dt/I and leaves θ unchanged.
    #[test]
    fn single_contact_substep_matches_hand_integration() {
        let mut cfg = EnvConfig::toy();
        cfg.n_fingers = 1;
        cfg.finger_dirs = vec![1.0];
        cfg.tactile = vec![SensorSpec::Contact { finger: 0 }];
        cfg.damping = 0.0;
        cfg.disk_inertia = 2.0;
        cfg.control_every = 1;
        // Huge gain: the servo arrives at the command within one substep.
        cfg.servo_gain = 1e6;
        cfg.servo_v_max = 1e6;
        let mut env = Env::new(cfg, 0).unwrap();
        env.reset_to(0.0, 1.0);
        // Full press: extension 0.8, force 1.0, torque 4.0.
        let r = env.step(&[1.0]).unwrap();
        let expected_omega = 4.0 * (1.0 / 60.0) / 2.0;
        assert!(
            (env.state().omega - expected_omega).abs() < 1e-15,
            "omega = {}",
            env.state().omega
        );
        // θ advanced on the pre-update ω = 0.
        assert_eq!(env.state().theta, 0.0);
        assert!((r.info.raw_tactile[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn success_pays_bonus_and_resamples_target() {
        let mut cfg = EnvConfig::toy();
        cfg.damping = 0.0;
        let mut env = Env::new(cfg, 7).unwrap();
        // Start 0.05 rad from the goal with everything at rest: no contact,
        // nothing moves, the step scores a success.
        env.reset_to(1.0, 1.05);
        let r = env.step(&[-1.0, -1.0, -1.0]).unwrap();
        assert!(r.info.success);
        let expected = -0.05 / PI + 250.0;
        assert!((r.reward - expected).abs() < 1e-9, "reward = {}", r.reward);
        // Goal resampled away from the current pose.
        let sep = math::abs(math::wrap_angle(env.state().target - env.state().theta));
        assert!(sep >= env.config().min_goal_separation);
    }

    #[test]
    fn dense_reward_tracks_angle_error() {
        let mut env = Env::new(EnvConfig::toy(), 3).unwrap();
        env.reset_to(0.0, -3.0);
        let r = env.step(&[-1.0, -1.0, -1.0]).unwrap();
        assert!(!r.info.success);
        assert!((r.reward - (-math::abs(r.info.angle_error) / PI)).abs() < 1e-12);
        // Near-maximal error pays close to -1 per control step.
        assert!(r.reward < -0.9);
    }

    #[test]
    fn episode_ends_after_exact_step_count() {
        let mut cfg = EnvConfig::toy();
        cfg.episode_length_s = 0.5; // 15 control steps at 30 Hz
        let mut env = Env::new(cfg, 1).unwrap();
        assert_eq!(env.config().episode_steps(), 15);
        for i in 0..15 {
            let r = env.step(&[0.0, 0.0, 0.0]).unwrap();
            assert_eq!(r.done, i == 14, "step {i}");
        }
        assert!(matches!(env.step(&[0.0, 0.0, 0.0]), Err(Error::EpisodeDone)));
    }

    #[test]
    fn schema_shapes() {
        assert_eq!(EnvConfig::toy().schema().unwrap().total(), 22);
        assert_eq!(EnvConfig::toy13().schema().unwrap().total(), 27);
        assert_eq!(EnvConfig::wide75().schema().unwrap().total(), 75);
        let schema = EnvConfig::toy13().schema().unwrap();
        let (start, len) = schema.reducible_range();
        assert_eq!((start, len), (14, 13));
        assert_eq!(schema.feature_name(14), "tactile[0]");
        assert_eq!(schema.feature_name(0), "joint_pos[0]");
    }

    #[test]
    fn schema_rejects_gaps_and_missing_tactile() {
        // from_groups always packs contiguously, so break it manually.
        let mut schema = EnvConfig::toy().schema().unwrap();
        schema.groups[2].start += 1;
        assert!(schema.validate().is_err());
        assert!(FeatureSchema::from_groups(&[("joint_pos", 3)]).is_err());
    }

    #[test]
    fn trajectories_are_bit_reproducible() {
        let mk = || {
            let mut env = Env::new(EnvConfig::toy(), 99).unwrap();
            let mut trace = Vec::new();
            for i in 0..40 {
                let a = [
                    math::sin(i as f64 * 0.3),
                    math::cos(i as f64 * 0.211),
                    -0.2,
                ];
                let r = env.step(&a).unwrap();
                trace.push((r.obs, r.reward));
            }
            trace
        };
        assert_eq!(mk(), mk());
    }

    #[test]
    fn observations_stay_in_bounds() {
        let mut cfg = EnvConfig::toy13();
        cfg.obs_noise_std = 0.05;
        cfg.act_noise_std = 0.05;
        let mut env = Env::new(cfg, 5).unwrap();
        let mut rng = crate::rng::stream(5, 1);
        for _ in 0..600 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let r = match env.step(&a) {
                Ok(r) => r,
                Err(_) => {
                    env.reset();
                    continue;
                }
            };
            for (i, v) in r.obs.iter().enumerate() {
                assert!(
                    (-1.0..=1.0).contains(v),
                    "obs[{i}] = {v} out of bounds"
                );
            }
            assert!((-PI..PI).contains(&env.state().theta));
        }
    }

    #[test]
    fn contact_sensors_rest_below_activation_threshold() {
        let mut env = Env::new(EnvConfig::toy(), 11).unwrap();
        env.reset_to(0.0, 2.0);
        // Fully retracted fingers: no contact.
        let r = env.step(&[-1.0, -1.0, -1.0]).unwrap();
        for (i, spec) in env.config().tactile.iter().enumerate() {
            if matches!(spec, SensorSpec::Contact { .. }) {
                assert!(r.info.raw_tactile[i] < 0.05, "contact sensor {i} active at rest");
            }
        }
    }

    #[test]
    fn contact_reading_clamps_at_cap() {
        let cfg = EnvConfig::toy();
        let mut env = Env::new(cfg.clone(), 0).unwrap();
        let mut state = env.state().clone();
        // Synthetic force above the cap: reading pins to 1.
        state.contact_force[0] = cfg.force_cap() * 3.0;
        let readings = tactile_readout(&mut state, &cfg);
        assert_eq!(readings[0], 1.0);
        // And a mid-range force maps linearly.
        state.contact_force[0] = cfg.force_cap() * 0.5;
        let readings = tactile_readout(&mut state, &cfg);
        assert!((readings[0] - 0.5).abs() < 1e-12);
        let _ = env.step(&[0.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicate_sensor_echoes_its_source() {
        let mut cfg = EnvConfig::toy();
        cfg.tactile = vec![
            SensorSpec::Contact { finger: 0 },
            SensorSpec::Duplicate {
                source: 0,
                noise_std: 0.0,
            },
            SensorSpec::Duplicate {
                source: 0,
                noise_std: 0.05,
            },
        ];
        let mut env = Env::new(cfg, 2).unwrap();
        env.reset_to(0.0, 2.0);
        for _ in 0..50 {
            let r = env.step(&[1.0, 0.0, 0.0]).unwrap();
            let t = &r.info.raw_tactile;
            assert_eq!(t[1], t[0], "noise-free duplicate must match exactly");
            assert!((t[2] - t[0]).abs() < 0.25, "noisy duplicate strayed: {} vs {}", t[2], t[0]);
        }
    }

    #[test]
    fn noise_sensor_empirical_rate() {
        // Monte-Carlo: rate 0.2 over 10⁴ readouts → frequency within 0.02.
        let cfg = EnvConfig::diagnostic(&[0.2]);
        let mut env = Env::new(cfg.clone(), 13).unwrap();
        let mut state = env.state().clone();
        let mut fired = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let t = tactile_readout(&mut state, &cfg);
            if t[0] > 0.05 {
                fired += 1;
            }
        }
        let freq = fired as f64 / n as f64;
        assert!((freq - 0.2).abs() < 0.02, "empirical rate {freq}");
        let _ = env.step(&[0.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicate_must_reference_earlier_sensor() {
        let mut cfg = EnvConfig::toy();
        cfg.tactile = vec![SensorSpec::Duplicate {
            source: 0,
            noise_std: 0.0,
        }];
        assert!(Env::new(cfg, 0).is_err());
    }

    #[test]
    fn goal_sampling_respects_separation() {
        let mut rng = crate::rng::stream(21, 0);
        for _ in 0..2000 {
            let center = rng.random_range(-PI..PI);
            let g = sample_goal(&mut rng, Some((center, 0.5)));
            assert!((-PI..PI).contains(&g));
            assert!(math::abs(math::wrap_angle(g - center)) >= 0.5);
        }
    }

    #[test]
    fn goal_sampling_is_uniform_chi_square() {
        // 10⁴ draws with rotating exclusion centers, 16 bins; χ²₁₅ at the 1%
        // level is 30.578.
        let mut rng = crate::rng::stream(22, 0);
        let mut bins = [0usize; 16];
        let n = 10_000;
        for _ in 0..n {
            let center = rng.random_range(-PI..PI);
            let g = sample_goal(&mut rng, Some((center, 0.5)));
            let b = (((g + PI) / (2.0 * PI)) * 16.0) as usize;
            bins[b.min(15)] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = bins
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 30.578, "chi-square statistic {chi2}");
    }

    #[test]
    fn config_validation_rejects_bad_setups() {
        let mut cfg = EnvConfig::toy();
        cfg.success_tol_train = 0.5; // exceeds eval tolerance of 0.4
        assert!(cfg.validate().is_err());

        let mut cfg = EnvConfig::toy();
        cfg.tactile.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = EnvConfig::toy();
        cfg.finger_dirs = vec![1.0];
        assert!(cfg.validate().is_err());

        let mut cfg = EnvConfig::toy();
        cfg.tactile.push(SensorSpec::Noise { rate: 1.5 });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toy_presets_validate() {
        EnvConfig::toy().validate().unwrap();
        EnvConfig::toy13().validate().unwrap();
        EnvConfig::wide75().validate().unwrap();
        EnvConfig::diagnostic(&EnvConfig::diagnostic_rates())
            .validate()
            .unwrap();
        assert_eq!(EnvConfig::toy().control_rate_hz(), 30.0);
    }

    proptest! {
        #[test]
        fn prop_obs_bounded_under_random_actions(seed in 0u64..500, steps in 1usize..40) {
            let mut env = Env::new(EnvConfig::toy(), seed).unwrap();
            let mut rng = crate::rng::stream(seed, 9);
            for _ in 0..steps {
                let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let r = env.step(&a).unwrap();
                prop_assert!(r.obs.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn prop_wrap_angle_in_range(theta in -1e4f64..1e4) {
            let w = math::wrap_angle(theta);
            prop_assert!((-PI..PI).contains(&w));
        }
    }
}
