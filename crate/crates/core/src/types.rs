//! Domain types shared by all modules.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Default negotiation range: how many vehicles per lane are reachable
/// over V2V from the bottleneck.
pub const DEFAULT_COMM_RANGE: u32 = 20;

/// Default run length in turns.
pub const DEFAULT_TURNS: u64 = 50_000;

/// Unique vehicle identifier; monotonically increasing with creation order
/// within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u64);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Compatible CAV or anything else (human driver, non-cooperative AV).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Human,
    Cav,
}

/// A vehicle in one of the queues.
///
/// `dmax` is the patience parameter of a CAV: the deepest blocked-queue
/// position it will grant the right of way to when inviting. It is present
/// for every CAV and absent for humans. Blocked-lane CAVs carry it too but
/// never consult it in this model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub kind: VehicleKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dmax: Option<u8>,
}

impl Vehicle {
    pub fn human(id: VehicleId) -> Self {
        Vehicle { id, kind: VehicleKind::Human, dmax: None }
    }

    pub fn cav(id: VehicleId, dmax: u8) -> Self {
        debug_assert!(dmax >= 1);
        Vehicle { id, kind: VehicleKind::Cav, dmax: Some(dmax) }
    }

    pub fn is_cav(&self) -> bool {
        self.kind == VehicleKind::Cav
    }
}

/// The two sides of the bottleneck. The blocked lane must cross into the
/// opposite lane's space; the free lane passes straight through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Free,
    Blocked,
}

impl Lane {
    pub fn opposite(self) -> Lane {
        match self {
            Lane::Free => Lane::Blocked,
            Lane::Blocked => Lane::Free,
        }
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lane::Free => "free",
            Lane::Blocked => "blocked",
        })
    }
}

/// CAV algorithm variant under evaluation.
///
/// `Counting` sizes the free-lane clearance window by the number of blocked
/// vehicles that actually drained; `NonCounting` by the inviter's dmax
/// regardless of the opposite flow. `NonConnectedBaseline` disables V2V
/// entirely: every vehicle, CAV or not, follows the stochastic human model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "counting")]
    Counting,
    #[serde(rename = "non-counting")]
    NonCounting,
    #[serde(rename = "baseline")]
    NonConnectedBaseline,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Counting => "counting",
            Variant::NonCounting => "non-counting",
            Variant::NonConnectedBaseline => "baseline",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, ParamError> {
        match s {
            "counting" => Ok(Variant::Counting),
            "non-counting" | "noncounting" => Ok(Variant::NonCounting),
            "baseline" | "non-connected" => Ok(Variant::NonConnectedBaseline),
            _ => Err(ParamError::UnknownVariant),
        }
    }
}

/// Full parameter point for one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// CAV penetration: probability that a newly created vehicle is a CAV.
    pub kappa: f64,
    /// Probability that a front human on the free lane yields.
    pub p_f: f64,
    /// Probability that a front human on the blocked lane stops (returns the
    /// right of way) instead of following its predecessor in.
    pub p_b: f64,
    /// Upper bound of the per-CAV dmax draw, uniform on {1..dmaxmax}.
    pub dmaxmax: u8,
    pub variant: Variant,
    /// Vehicles per lane reachable over V2V.
    pub comm_range: u32,
    pub turns_target: u64,
    pub seed: u64,
}

impl ScenarioParams {
    /// Parameter point with default range (20) and run length (50,000).
    pub fn new(kappa: f64, p_f: f64, p_b: f64, dmaxmax: u8, variant: Variant, seed: u64) -> Self {
        ScenarioParams {
            kappa,
            p_f,
            p_b,
            dmaxmax,
            variant,
            comm_range: DEFAULT_COMM_RANGE,
            turns_target: DEFAULT_TURNS,
            seed,
        }
    }

    /// Returns the parameters unchanged iff every field constraint holds;
    /// otherwise the first violated constraint.
    pub fn validated(self) -> Result<Self, ParamError> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(ParamError::Kappa);
        }
        if !(0.0..=1.0).contains(&self.p_f) {
            return Err(ParamError::PF);
        }
        if !(self.p_b > 0.0 && self.p_b <= 1.0) {
            return Err(ParamError::PB);
        }
        if self.dmaxmax < 4 || self.dmaxmax > 20 || self.dmaxmax % 2 != 0 {
            return Err(ParamError::DmaxMax);
        }
        if self.comm_range == 0 {
            return Err(ParamError::CommRange);
        }
        if self.turns_target == 0 {
            return Err(ParamError::Turns);
        }
        Ok(self)
    }
}

/// First violated parameter constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamError {
    Kappa,
    PF,
    PB,
    DmaxMax,
    CommRange,
    Turns,
    UnknownVariant,
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamError::Kappa => "kappa must be in [0, 1]",
            ParamError::PF => "p_f must be in [0, 1]",
            ParamError::PB => "p_b must be > 0",
            ParamError::DmaxMax => "dmaxmax must be even in [4,20]",
            ParamError::CommRange => "comm_range must be >= 1",
            ParamError::Turns => "turns_target must be >= 1",
            ParamError::UnknownVariant => {
                "variant must be one of counting, non-counting, baseline"
            }
        })
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ParamError {}

/// Which lane is currently draining, and whether the very next front vehicle
/// still holds the unconditional permission granted at the direction change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowState {
    pub direction: Lane,
    pub first_after_change: bool,
}
