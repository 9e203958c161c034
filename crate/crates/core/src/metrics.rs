//! Flow-balance metric and per-run/aggregate statistics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{ScenarioParams, Variant};

/// Outcome of one simulation run.
///
/// The drain and direction-change counters always sum to the turn target,
/// and `phi` is `flow_balance(drained_free, drained_blocked)` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub params: ScenarioParams,
    pub drained_free: u64,
    pub drained_blocked: u64,
    pub direction_changes: u64,
    /// Flow balance: +1 all free-lane drains, 0 balanced, -1 all blocked.
    pub phi: f64,
    /// Completed cooperation rounds (blocked phase reached its end).
    pub episode_count: u64,
    pub mean_blocked_drains_per_episode: f64,
    /// Mean length of maximal free-lane drain runs between direction
    /// changes.
    pub mean_free_drains_per_free_phase: f64,
    pub seed: u64,
    /// Total RNG draws consumed; replaying the run reproduces this exactly.
    pub rng_draws: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsError {
    /// φ is undefined when nothing drained.
    NoDrains,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("flow balance undefined for zero total drains")
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricsError {}

/// φ = 2 · drained_free / (drained_free + drained_blocked) − 1.
pub fn flow_balance(drained_free: u64, drained_blocked: u64) -> Result<f64, MetricsError> {
    let total = drained_free + drained_blocked;
    if total == 0 {
        return Err(MetricsError::NoDrains);
    }
    Ok(2.0 * drained_free as f64 / total as f64 - 1.0)
}

/// Aggregation scope over the human-parameter plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    /// All (p_f, p_b) combinations.
    All,
    /// Only the "likely" combinations where free-lane drivers are the more
    /// assertive ones: p_f < p_b.
    Likely,
}

/// One φ sample with the parameters that key the aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSample {
    pub variant: Variant,
    pub dmaxmax: u8,
    pub kappa: f64,
    pub p_f: f64,
    pub p_b: f64,
    pub phi: f64,
}

impl From<&RunResult> for PhiSample {
    fn from(r: &RunResult) -> Self {
        PhiSample {
            variant: r.params.variant,
            dmaxmax: r.params.dmaxmax,
            kappa: r.params.kappa,
            p_f: r.params.p_f,
            p_b: r.params.p_b,
            phi: r.phi,
        }
    }
}

/// Mean φ for one (variant, dmaxmax, kappa) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub variant: Variant,
    pub dmaxmax: u8,
    /// Kappa in basis points (exact grouping key); kappa() recovers the
    /// fraction.
    pub kappa_bp: u32,
    pub mean_phi: f64,
    pub n_combos: u32,
}

impl AggregateRow {
    pub fn kappa(&self) -> f64 {
        self.kappa_bp as f64 / 10_000.0
    }
}

/// A key is missing some in-scope (p_f, p_b) combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteCoverage {
    pub variant: Variant,
    pub dmaxmax: u8,
    pub kappa_bp: u32,
    /// Missing combinations in basis points.
    pub missing: Vec<(u32, u32)>,
}

impl fmt::Display for IncompleteCoverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "key ({}, dmaxmax={}, kappa={}) is missing {} (p_f, p_b) combos",
            self.variant,
            self.dmaxmax,
            self.kappa_bp as f64 / 10_000.0,
            self.missing.len()
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for IncompleteCoverage {}

fn bp(p: f64) -> u32 {
    // 1e-9 guard keeps 0.1*10000 etc. from truncating below the integer.
    (p * 10_000.0 + 0.5) as u32
}

/// True for the "likely" half of the human-parameter plane.
pub fn is_likely(p_f: f64, p_b: f64) -> bool {
    bp(p_f) < bp(p_b)
}

/// Mean φ per (variant, dmaxmax, kappa), restricted to likely combos.
pub fn aggregate_likely(samples: &[PhiSample]) -> Result<Vec<AggregateRow>, IncompleteCoverage> {
    aggregate(samples, AggregateMode::Likely)
}

/// Mean φ per (variant, dmaxmax, kappa) over the selected (p_f, p_b) scope.
///
/// The expected combo set is the union of in-scope (p_f, p_b) pairs across
/// the input; every key must cover all of them, otherwise the first
/// incomplete key is reported.
pub fn aggregate(
    samples: &[PhiSample],
    mode: AggregateMode,
) -> Result<Vec<AggregateRow>, IncompleteCoverage> {
    let in_scope = |s: &PhiSample| match mode {
        AggregateMode::All => true,
        AggregateMode::Likely => is_likely(s.p_f, s.p_b),
    };

    let mut expected: Vec<(u32, u32)> = Vec::new();
    for s in samples.iter().filter(|s| in_scope(s)) {
        let combo = (bp(s.p_f), bp(s.p_b));
        if !expected.contains(&combo) {
            expected.push(combo);
        }
    }
    expected.sort_unstable();

    type Key = (Variant, u8, u32);
    type Cell = Vec<((u32, u32), f64)>;
    let mut cells: BTreeMap<Key, Cell> = BTreeMap::new();
    for s in samples.iter().filter(|s| in_scope(s)) {
        cells
            .entry((s.variant, s.dmaxmax, bp(s.kappa)))
            .or_default()
            .push(((bp(s.p_f), bp(s.p_b)), s.phi));
    }

    let mut rows = Vec::with_capacity(cells.len());
    for ((variant, dmaxmax, kappa_bp), entries) in cells {
        let missing: Vec<(u32, u32)> = expected
            .iter()
            .filter(|combo| !entries.iter().any(|(c, _)| c == *combo))
            .copied()
            .collect();
        if !missing.is_empty() {
            return Err(IncompleteCoverage { variant, dmaxmax, kappa_bp, missing });
        }
        let mean = entries.iter().map(|(_, phi)| phi).sum::<f64>() / entries.len() as f64;
        rows.push(AggregateRow {
            variant,
            dmaxmax,
            kappa_bp,
            mean_phi: mean,
            n_combos: entries.len() as u32,
        });
    }
    Ok(rows)
}
