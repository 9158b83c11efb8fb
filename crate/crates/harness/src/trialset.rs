//! Stored evaluation trial sets. A trial set is generated once from a master
//! seed, written as JSON, and thereafter treated as immutable: reports refer
//! to it by the content hash of its canonical byte encoding, so any edit to
//! the file is detectable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tactix_core::env::EnvConfig;
use tactix_core::eval::{generate_trials, TrialSpec};

use crate::{HarnessError, Result};

pub const TRIALSET_VERSION: u32 = 1;

/// A frozen set of evaluation trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSet {
    pub version: u32,
    /// Seed the set was drawn from (provenance only; the trials are stored).
    pub master_seed: u64,
    /// Minimum initial angle-to-goal distance the trials were drawn with.
    pub min_goal_separation: f64,
    pub trials: Vec<TrialSpec>,
}

impl TrialSet {
    /// Draw a fresh set for the given env.
    pub fn generate(env: &EnvConfig, n_trials: usize, master_seed: u64) -> Self {
        TrialSet {
            version: TRIALSET_VERSION,
            master_seed,
            min_goal_separation: env.min_goal_separation,
            trials: generate_trials(n_trials, master_seed, env.min_goal_separation),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::read_to_string(path)?;
        let set: TrialSet =
            serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))?;
        set.validate()
            .map_err(|e| HarnessError::format(path, e))?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate().map_err(HarnessError::Config)?;
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        text.push('\n');
        crate::write_string(path, &text)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.version != TRIALSET_VERSION {
            return Err(format!(
                "unsupported trial-set version {} (expected {TRIALSET_VERSION})",
                self.version
            ));
        }
        if self.trials.is_empty() {
            return Err("trial set is empty".into());
        }
        for (i, t) in self.trials.iter().enumerate() {
            if !t.init_theta.is_finite() || !t.target.is_finite() {
                return Err(format!("trial {i} has a non-finite pose or target"));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical little-endian byte encoding, as lowercase
    /// hex. Stable across serialization details: only the numbers matter.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.version.to_le_bytes());
        h.update(self.master_seed.to_le_bytes());
        h.update(self.min_goal_separation.to_bits().to_le_bytes());
        h.update((self.trials.len() as u64).to_le_bytes());
        for t in &self.trials {
            h.update(t.seed.to_le_bytes());
            h.update(t.init_theta.to_bits().to_le_bytes());
            h.update(t.target.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_hash_tracks_content() {
        let env = EnvConfig::toy13();
        let a = TrialSet::generate(&env, 10, 4242);
        let b = TrialSet::generate(&env, 10, 4242);
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.content_hash(), b.content_hash());

        let c = TrialSet::generate(&env, 10, 4243);
        assert_ne!(a.content_hash(), c.content_hash());

        let mut d = a.clone();
        d.trials[3].target += 1e-12;
        assert_ne!(a.content_hash(), d.content_hash());
    }

    #[test]
    fn files_round_trip_with_the_same_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.json");
        let set = TrialSet::generate(&EnvConfig::toy(), 5, 7);
        set.save(&path).unwrap();
        let back = TrialSet::load(&path).unwrap();
        assert_eq!(back.trials, set.trials);
        assert_eq!(back.content_hash(), set.content_hash());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"version\": 9}").unwrap();
        let err = TrialSet::load(&path).unwrap_err();
        assert_eq!(err.kind(), "format");
    }
}
