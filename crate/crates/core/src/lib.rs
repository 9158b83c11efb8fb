//! Curriculum-based sensing reduction for an asymmetric actor-critic.
//!
//! This crate is the algorithmic core: a small hand-rolled MLP stack, a
//! deterministic toy palm-spin environment with a configurable tactile bank,
//! PPO with generalized advantage estimation, an activation-count importance
//! ledger driving a reduction curriculum, and the random-replacement /
//! random-layer observation transform that stands between the actor and the
//! raw observation. Everything here is pure computation over `Vec<f64>` with
//! explicitly seeded RNG streams; file formats, CLI, and wall-clock concerns
//! live in the companion harness crate.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std` feature
//! only switches float intrinsics and enables nothing else.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod csr;
pub mod drg;
pub mod env;
pub mod eval;
pub mod linalg;
pub mod math;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod trainer;

use alloc::string::String;
use core::fmt;

/// Errors shared across the core modules.
///
/// Configuration problems are reported as `InvalidConfig` with a
/// human-readable reason; shape mismatches carry the offending dimensions so
/// callers can see what was wired wrong. Numerical blow-ups abort with
/// `NonFinite` rather than poisoning parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A config or plan failed validation.
    InvalidConfig(String),
    /// A vector or matrix had the wrong length for the operation.
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A loss or gradient stopped being finite; the update was aborted.
    NonFinite { what: &'static str },
    /// Importance scores were requested before any step was observed.
    EmptyLedger,
    /// A finished episode was stepped without a reset.
    EpisodeDone,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(reason) => write!(f, "invalid config: {reason}"),
            Error::Shape {
                what,
                expected,
                got,
            } => write!(f, "shape mismatch in {what}: expected {expected}, got {got}"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::EmptyLedger => write!(f, "importance ledger has observed no steps"),
            Error::EpisodeDone => write!(f, "episode is done; reset before stepping"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
