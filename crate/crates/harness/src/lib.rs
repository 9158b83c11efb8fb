//! Experiment harness around the `tactix-core` training stack: JSON configs,
//! seeded training runs with CSV metrics and JSONL event logs, checkpoint and
//! trial-set files, fixed-set evaluation, control-rate sweeps, the 30-second
//! consecutive-goal marathon, and run comparison.
//!
//! Everything the core computes is emitted as plain files (JSON + CSV) so any
//! plotting stack can consume them; this crate adds no rendering. All file
//! artifacts except `report.json` (which records wall time) are deterministic
//! functions of the config, so identical configs produce byte-identical
//! metrics, events, trial sets, and checkpoints.
//!
//! Relative output paths resolve against the `TACTIX_OUT_ROOT` environment
//! variable (default: the working directory).

use std::path::{Path, PathBuf};

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod trialset;

pub use checkpoint::{Checkpoint, PolicySnapshot};
pub use config::ExperimentConfig;
pub use report::RunReport;
pub use trialset::TrialSet;

/// Environment variable naming the root for relative output paths.
pub const OUT_ROOT_VAR: &str = "TACTIX_OUT_ROOT";

/// Errors carrying a machine-readable kind for the CLI's JSON output.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// A config file or CLI request didn't make sense.
    #[error("invalid config: {0}")]
    Config(String),
    /// Filesystem trouble, with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A file existed but didn't parse or failed validation.
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    /// The core rejected an operation.
    #[error(transparent)]
    Core(#[from] tactix_core::Error),
}

impl HarnessError {
    /// Stable error category for the CLI's JSON envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Format { .. } => "format",
            HarnessError::Core(_) => "core",
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, reason: impl std::fmt::Display) -> Self {
        HarnessError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Root for relative output paths: `$TACTIX_OUT_ROOT`, or `.` when unset.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Resolve a possibly-relative artifact path against the output root.
pub fn resolve_out_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_root().join(path)
    }
}

/// Read a whole text file, wrapping IO failures with the path.
pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

/// Write a text file, creating parent directories as needed.
pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}
