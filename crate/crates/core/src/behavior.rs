//! Stochastic behavior of non-CAV vehicles and the vehicle-creation draws.
//!
//! All decisions are memoryless: a human re-draws every time it is at the
//! front, and nothing but the probability and the stream is consulted.
//! Each function consumes exactly one draw.

use crate::rng::RngStream;
use crate::types::VehicleKind;

/// Front-of-free-lane human action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeAction {
    Drive,
    Yield,
}

/// Front-of-blocked-lane human action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockedAction {
    Drive,
    Stop,
}

/// Yield with probability `p_f`, else drive through.
pub fn human_free_decision(rng: &mut RngStream, p_f: f64) -> FreeAction {
    if rng.bernoulli(p_f) {
        FreeAction::Yield
    } else {
        FreeAction::Drive
    }
}

/// Stop before the bottleneck with probability `p_b`, else follow the
/// predecessor in.
pub fn human_blocked_decision(rng: &mut RngStream, p_b: f64) -> BlockedAction {
    if rng.bernoulli(p_b) {
        BlockedAction::Stop
    } else {
        BlockedAction::Drive
    }
}

/// CAV with probability `kappa`, else human.
pub fn draw_kind(rng: &mut RngStream, kappa: f64) -> VehicleKind {
    if rng.bernoulli(kappa) {
        VehicleKind::Cav
    } else {
        VehicleKind::Human
    }
}

/// Patience parameter, uniform on `{1, ..., dmaxmax}` inclusive.
pub fn draw_dmax(rng: &mut RngStream, dmaxmax: u8) -> u8 {
    debug_assert!(dmaxmax >= 1);
    rng.uniform_1_to(dmaxmax as u32) as u8
}
