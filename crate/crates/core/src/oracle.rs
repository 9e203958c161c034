//! Independent analytic and brute-force predictions used to validate the
//! simulator.
//!
//! Nothing here touches the engine: `phi_baseline` is a closed form,
//! `phi_full_cav` enumerates the deterministic all-CAV cycle per dmax value,
//! and `blocked_drain_distribution` enumerates episode outcomes directly
//! from the behavior rules.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::types::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleError {
    /// `phi_baseline` requires p_b > 0.
    ZeroPB,
    /// `blocked_drain_distribution` requires returner_d >= 2 and cleared
    /// positions strictly between 1 and returner_d.
    BadReturnerConfig,
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleError::ZeroPB => "p_b must be > 0",
            OracleError::BadReturnerConfig => {
                "returner_d must be >= 2 with cleared positions in 2..returner_d"
            }
        })
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OracleError {}

/// Long-run flow balance with no CAVs.
///
/// Drain runs alternate between the lanes; after each direction change the
/// first vehicle always drives and every further human continues with
/// probability 1−p, so run lengths are geometric with means 1/p_f and
/// 1/p_b. Hence φ = (1/p_f − 1/p_b) / (1/p_f + 1/p_b) = (p_b − p_f) /
/// (p_b + p_f), and 1.0 when the free lane never yields.
pub fn phi_baseline(p_f: f64, p_b: f64) -> Result<f64, OracleError> {
    if p_b <= 0.0 {
        return Err(OracleError::ZeroPB);
    }
    if p_f == 0.0 {
        return Ok(1.0);
    }
    Ok((p_b - p_f) / (p_b + p_f))
}

/// Per-cycle drain totals `(blocked, free)` at full CAV penetration for an
/// inviter with patience `dmax`.
///
/// With every vehicle a CAV, each cooperation round is deterministic: the
/// returner sits at position dmax, the dmax−1 vehicles ahead of it drain
/// (the first under the always-drives rule, the rest under clearance), the
/// returner stops, and the free window re-admits the inviter plus the
/// cleared positions behind it (dmax−2 counting, dmax non-counting).
///
/// dmax = 1 degenerates: the returner is the front blocked vehicle and
/// drains under the always-drives rule itself; the next CAV stops without a
/// role, and the window is sized from that single drain.
pub fn full_cav_cycle(variant: Variant, dmax: u32) -> (u64, u64) {
    debug_assert!(dmax >= 1);
    match variant {
        Variant::Counting => {
            if dmax == 1 {
                (1, 1)
            } else {
                ((dmax - 1) as u64, (dmax - 1) as u64)
            }
        }
        Variant::NonCounting => {
            if dmax == 1 {
                (1, 2)
            } else {
                ((dmax - 1) as u64, (dmax + 1) as u64)
            }
        }
        Variant::NonConnectedBaseline => unreachable!("baseline has no CAV cycle"),
    }
}

/// Long-run flow balance at κ = 1, by enumerating cycles over the uniform
/// dmax ∈ {1..dmaxmax}.
///
/// Counting comes out exactly 0; non-counting keeps a free-lane bias of
/// (2·dmaxmax − 1) / (dmaxmax² + dmaxmax + 1). Returns `None` for the
/// non-connected baseline, whose prediction is `phi_baseline`.
pub fn phi_full_cav(variant: Variant, dmaxmax: u8) -> Option<f64> {
    if variant == Variant::NonConnectedBaseline {
        return None;
    }
    debug_assert!(dmaxmax >= 1);
    let mut free = 0u64;
    let mut blocked = 0u64;
    for dmax in 1..=dmaxmax as u32 {
        let (b, f) = full_cav_cycle(variant, dmax);
        blocked += b;
        free += f;
    }
    Some((free as f64 - blocked as f64) / (free as f64 + blocked as f64))
}

/// Exact distribution of the number of blocked vehicles draining in one
/// episode, given the returner's position and the cleared CAV positions
/// ahead of it.
///
/// Position 1 always drains. Each human position k (2 ≤ k ≤ returner_d−1)
/// is reached only if all earlier positions drained, and then drains with
/// probability 1−p_b. Cleared positions drain deterministically when
/// reached. The returner never drains. Returned vector index n−1 holds
/// P(drains = n) for n in 1..=returner_d−1.
pub fn blocked_drain_distribution(
    returner_d: u32,
    p_b: f64,
    cleared: &[u32],
) -> Result<Vec<f64>, OracleError> {
    if returner_d < 2 || cleared.iter().any(|&c| c < 2 || c >= returner_d) {
        return Err(OracleError::BadReturnerConfig);
    }
    let max_n = (returner_d - 1) as usize;
    let mut pmf = vec![0.0; max_n];
    let mut reach = 1.0; // probability that position n+1 is reached
    for n in 1..=max_n {
        if n == max_n {
            // Everyone ahead of the returner drained; the returner stops.
            pmf[n - 1] = reach;
        } else {
            let next = (n + 1) as u32;
            let p_stop = if cleared.contains(&next) { 0.0 } else { p_b };
            pmf[n - 1] = reach * p_stop;
            reach *= 1.0 - p_stop;
        }
    }
    Ok(pmf)
}

/// Mean of a pmf over support {1, 2, ...}.
pub fn pmf_mean(pmf: &[f64]) -> f64 {
    pmf.iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum()
}
