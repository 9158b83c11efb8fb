//! Deep random generator: feature replacement plus a per-epoch random layer.
//!
//! Once the curriculum has reduced features, the actor never sees their true
//! values again. Each masked feature is replaced with a draw from
//! `N(delta, sigma²)` (or zero in zeros mode), and the whole observation is
//! then passed through a square layer φ that is re-sampled once per training
//! epoch: with probability `alpha` it is the identity, otherwise a dense
//! matrix with Xavier-scaled Gaussian entries. The ever-changing layer keeps
//! the policy from latching onto any fixed statistics of the replaced slots,
//! while the identity mixture keeps the clean observation in distribution.
//!
//! At evaluation time the layer is pinned to the identity by default
//! (replacements still drawn), which makes a run whose φ is always the
//! identity bit-for-bit equivalent to one with no generator at all.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;
use crate::nn;
use crate::{Error, Result};

/// What the generator does during evaluation rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EvalMode {
    /// Replacements are drawn, but φ is forced to the identity.
    CleanIdentity,
    /// Evaluation uses the current training layer as-is.
    SampledLayer,
}

/// Generator hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DrgConfig {
    /// Mean of the replacement distribution.
    pub delta: f64,
    /// Std of the replacement distribution.
    pub sigma: f64,
    /// Probability that the per-epoch layer is the identity.
    pub alpha: f64,
    /// Replace with exact zeros and pin φ to the identity (ablation mode).
    pub zeros_mode: bool,
    pub eval_mode: EvalMode,
}

impl Default for DrgConfig {
    fn default() -> Self {
        DrgConfig {
            delta: 0.0,
            sigma: 1.0,
            alpha: 0.5,
            zeros_mode: false,
            eval_mode: EvalMode::CleanIdentity,
        }
    }
}

impl DrgConfig {
    /// Zero-replacement ablation: massless stand-in for the generator.
    pub fn zeros() -> Self {
        DrgConfig {
            zeros_mode: true,
            ..DrgConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig("replacement distribution invalid".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// The per-epoch layer. Identity is an explicit variant so the common case
/// costs nothing and is exactly reproducible.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum RandomLayer {
    Identity,
    Dense { weights: Matrix },
}

impl RandomLayer {
    /// Apply the layer to a vector. Identity is a bitwise copy.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            RandomLayer::Identity => x.to_vec(),
            RandomLayer::Dense { weights } => weights.mul_vec(x),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, RandomLayer::Identity)
    }
}

/// Draw one replacement value: `N(delta, sigma²)`, or exactly zero (no RNG
/// consumed) in zeros mode.
pub fn sample_replacement(config: &DrgConfig, rng: &mut impl Rng) -> f64 {
    if config.zeros_mode {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    config.delta + config.sigma * z
}

/// Sample the per-epoch layer: identity with probability `alpha`, otherwise a
/// dense square matrix with Xavier-scaled Gaussian entries.
pub fn init_random_layer(n: usize, alpha: f64, rng: &mut impl Rng) -> Result<RandomLayer> {
    if n == 0 {
        return Err(Error::InvalidConfig("random layer needs n >= 1".into()));
    }
    let u: f64 = rng.random_range(0.0..1.0);
    if u < alpha {
        Ok(RandomLayer::Identity)
    } else {
        Ok(RandomLayer::Dense {
            weights: nn::xavier_init(n, n, rng)?,
        })
    }
}

/// Runtime state: which features are masked and the current layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DrgState {
    n: usize,
    active: bool,
    mask: Vec<usize>,
    phi: RandomLayer,
    /// Epoch at which φ was last sampled (for audit trails).
    phi_epoch: Option<u64>,
}

impl DrgState {
    /// A dormant generator over `n`-feature observations. It stays a no-op
    /// (bitwise pass-through, zero RNG draws) until the first activation.
    pub fn new(n: usize) -> Self {
        DrgState {
            n,
            active: false,
            mask: Vec::new(),
            phi: RandomLayer::Identity,
            phi_epoch: None,
        }
    }

    /// Consistency check for state read from external sources: mask sorted,
    /// unique, in bounds; φ square of the right size; dormant ⇒ no-op shape.
    pub fn validate(&self) -> Result<()> {
        if self.mask.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("mask not sorted/unique".into()));
        }
        if let Some(&last) = self.mask.last() {
            if last >= self.n {
                return Err(Error::Shape {
                    what: "mask index",
                    expected: self.n,
                    got: last,
                });
            }
        }
        if let RandomLayer::Dense { weights } = &self.phi {
            weights.validate()?;
            if weights.rows() != self.n || weights.cols() != self.n {
                return Err(Error::Shape {
                    what: "random layer",
                    expected: self.n,
                    got: weights.rows(),
                });
            }
        }
        if !self.active && (!self.mask.is_empty() || !self.phi.is_identity()) {
            return Err(Error::InvalidConfig(
                "dormant generator with mask or non-identity layer".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Masked (replaced) absolute feature indices, sorted ascending.
    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.n
    }

    /// Features still observed truthfully.
    pub fn active_features(&self) -> usize {
        self.n - self.mask.len()
    }

    pub fn phi(&self) -> &RandomLayer {
        &self.phi
    }

    pub fn phi_epoch(&self) -> Option<u64> {
        self.phi_epoch
    }

    /// Add newly reduced features to the mask and switch the generator on.
    pub fn activate(&mut self, newly_reduced: &[usize]) -> Result<()> {
        for &i in newly_reduced {
            if i >= self.n {
                return Err(Error::Shape {
                    what: "mask index",
                    expected: self.n,
                    got: i,
                });
            }
            if !self.mask.contains(&i) {
                self.mask.push(i);
            }
        }
        self.mask.sort_unstable();
        self.active = true;
        Ok(())
    }

    /// Re-sample φ at an epoch boundary. Dormant generators and zeros mode
    /// never draw; zeros mode pins φ to the identity.
    pub fn epoch_reinit(
        &mut self,
        config: &DrgConfig,
        epoch: u64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        if !self.active {
            return Ok(());
        }
        if config.zeros_mode {
            self.phi = RandomLayer::Identity;
        } else {
            self.phi = init_random_layer(self.n, config.alpha, rng)?;
        }
        self.phi_epoch = Some(epoch);
        Ok(())
    }

    /// Training-time transform: replace masked features, then apply φ. A
    /// dormant generator returns the observation untouched without consuming
    /// any randomness.
    pub fn apply(&self, obs: &[f64], config: &DrgConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
        if obs.len() != self.n {
            return Err(Error::Shape {
                what: "drg input",
                expected: self.n,
                got: obs.len(),
            });
        }
        if !self.active {
            return Ok(obs.to_vec());
        }
        let mut x = obs.to_vec();
        for &i in &self.mask {
            x[i] = sample_replacement(config, rng);
        }
        if self.phi.is_identity() {
            Ok(x)
        } else {
            Ok(self.phi.apply(&x))
        }
    }

    /// Evaluation-time transform: replacements as configured, φ per
    /// `eval_mode` (identity by default).
    pub fn apply_eval(
        &self,
        obs: &[f64],
        config: &DrgConfig,
        rng: &mut impl Rng,
    ) -> Result<Vec<f64>> {
        if obs.len() != self.n {
            return Err(Error::Shape {
                what: "drg input",
                expected: self.n,
                got: obs.len(),
            });
        }
        if !self.active {
            return Ok(obs.to_vec());
        }
        let mut x = obs.to_vec();
        for &i in &self.mask {
            x[i] = sample_replacement(config, rng);
        }
        match config.eval_mode {
            EvalMode::CleanIdentity => Ok(x),
            EvalMode::SampledLayer => Ok(self.phi.apply(&x)),
        }
    }
}
