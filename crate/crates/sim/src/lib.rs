//! IO companion to `bottleneck-core`: parameter-grid sweeps, CSV results,
//! JSON-lines event logs and their replay verification.

pub mod config;
pub mod csvio;
pub mod eventlog;
pub mod sweep;

/// Base seed used when neither a flag nor `BOTTLENECK_SEED` is given.
pub const DEFAULT_BASE_SEED: u64 = 42;
