//! Core simulation library for bottleneck traffic with cooperative
//! connected automated vehicles (CAVs).
//!
//! A two-way road narrows to a single usable lane: vehicles on the *blocked*
//! lane can only pass the bottleneck when a vehicle on the *free* lane yields
//! the right of way. Humans yield and stop stochastically; CAVs on the free
//! lane negotiate over V2V messages with a CAV in the blocked queue (the
//! "returner") that commits to stopping once it reaches the front, which
//! bounds the inviter's waiting time.
//!
//! The simulation is turn-based: each turn is either a vehicle draining
//! through the bottleneck or a change of flow direction. There is no notion
//! of wall-clock time, speed or car-following.
//!
//! Module map:
//! - [`types`]: vehicles, lanes, scenario parameters and their validation
//! - [`rng`]: deterministic single-stream randomness with draw accounting
//! - [`behavior`]: stochastic human decisions and vehicle creation draws
//! - [`protocol`]: V2V message vocabulary and the inviter/returner logic
//! - [`engine`]: the turn loop, episode lifecycle and the event log
//! - [`metrics`]: the flow-balance metric φ and result aggregation
//! - [`oracle`]: closed-form / enumerated predictions used to validate the
//!   engine
//!
//! The crate is `no_std` (with `alloc`); IO, file formats and the CLI live
//! in the companion `bottleneck-sim` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod behavior;
pub mod engine;
pub mod metrics;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod types;

pub use engine::{EventSink, NullSink, SimState, TurnEvent, VecSink};
pub use metrics::RunResult;
pub use rng::RngStream;
pub use types::{Lane, ScenarioParams, Variant, Vehicle, VehicleId, VehicleKind};
