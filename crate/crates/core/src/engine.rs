//! The turn-based simulation loop.
//!
//! One turn is either a vehicle draining through the bottleneck or a change
//! of flow direction. Queues are refilled lazily so each lane always shows
//! `comm_range + 1` vehicles. Resolution order for the front vehicle of the
//! flowing lane:
//!
//! 1. Immediately after a direction change the front vehicle drains
//!    unconditionally (it received explicit permission), whoever it is.
//! 2. On the free lane: a human draws the p_f yield decision; a CAV with
//!    clearance drains; any other CAV negotiates and yields if a returner
//!    is found, else drives through.
//! 3. On the blocked lane: a human draws the p_b stop decision; a cleared
//!    CAV drains; the returner stops and returns the right of way; a CAV
//!    without permission stops and waits.
//!
//! Episode bookkeeping (clearance windows, drain counting) is carried out
//! by the engine on the inviter's behalf; the message exchange is still
//! recorded once per episode on the direction-change events.
//!
//! Under the non-connected baseline variant every vehicle follows the
//! stochastic human model and no negotiation ever happens.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::behavior::{self, BlockedAction, FreeAction};
use crate::metrics::{flow_balance, RunResult};
use crate::protocol::{self, CavRole, EpisodePhase, Message, ViewEntry};
use crate::rng::RngStream;
use crate::types::{FlowState, Lane, ScenarioParams, Variant, Vehicle, VehicleId, VehicleKind};

/// What ended a drain run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionCause {
    HumanYield,
    CavInviteYield,
    HumanStop,
    CavReturnerStop,
    CavWaitStop,
}

/// Payload of one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Drain {
        lane: Lane,
        vehicle_id: VehicleId,
        vehicle_kind: VehicleKind,
        had_clearance: bool,
    },
    DirectionChange {
        from: Lane,
        to: Lane,
        cause: DirectionCause,
        /// Protocol messages tied to this event: the negotiation transcript
        /// on an invite yield, the return notice and free-lane
        /// clearances/dismissals on the stop that ends a blocked phase.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        messages: Vec<Message>,
    },
}

/// One line of the replayable event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub turn_index: u64,
    pub event: EventKind,
}

/// Receiver for the event stream of a run.
///
/// `WANTS_MESSAGES = false` lets the engine skip building message
/// transcripts entirely, which matters for large sweeps.
pub trait EventSink {
    const WANTS_MESSAGES: bool = true;
    fn on_event(&mut self, event: &TurnEvent);
}

/// Discards all events.
pub struct NullSink;

impl EventSink for NullSink {
    const WANTS_MESSAGES: bool = false;
    fn on_event(&mut self, _event: &TurnEvent) {}
}

/// Buffers all events in memory.
#[derive(Default)]
pub struct VecSink(pub Vec<TurnEvent>);

impl EventSink for VecSink {
    fn on_event(&mut self, event: &TurnEvent) {
        self.0.push(event.clone());
    }
}

/// Stats of one completed cooperation round, finalized when its blocked
/// phase ends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeRecord {
    pub returner_d: u32,
    /// Blocked CAV positions cleared at negotiation time.
    pub cleared_positions: Vec<u32>,
    /// Blocked vehicles drained during the episode.
    pub blocked_drains: u32,
    /// Free-lane clearance window issued when the blocked flow ceased.
    pub free_window: u32,
    /// True for the degenerate returner_d = 1 round where the returner
    /// itself drained under the first-vehicle rule.
    pub returner_drained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SimVehicle {
    id: VehicleId,
    kind: VehicleKind,
    /// Patience parameter; meaningful only for CAVs.
    dmax: u8,
    role: CavRole,
}

#[derive(Debug, Clone)]
struct ActiveEpisode {
    inviter: VehicleId,
    dmax_effective: u32,
    returner: VehicleId,
    returner_d: u32,
    cleared_positions: Vec<u32>,
    drained_blocked: u32,
    returner_drained: bool,
    free_window: u32,
    phase: EpisodePhase,
}

/// Full mutable state of one run.
pub struct SimState {
    params: ScenarioParams,
    free: VecDeque<SimVehicle>,
    blocked: VecDeque<SimVehicle>,
    flow: FlowState,
    episode: Option<ActiveEpisode>,
    /// Outstanding free-lane clearances; cancelled by any direction change
    /// away from the free lane.
    outstanding_cleared_free: u32,
    turn: u64,
    drained_free: u64,
    drained_blocked: u64,
    direction_changes: u64,
    rng: RngStream,
    next_id: u64,
    episode_records: Vec<EpisodeRecord>,
    free_phase_count: u64,
    prev_turn_was_free_drain: bool,
    view_blocked: Vec<ViewEntry>,
    view_free: Vec<ViewEntry>,
}

impl SimState {
    /// Fresh state with both queues drawn from the seeded stream.
    pub fn new(params: ScenarioParams) -> Self {
        Self::build(params, Vec::new(), Vec::new())
    }

    /// State with scripted queue prefixes, for constructed scenarios. The
    /// queues are topped up to `comm_range + 1` with drawn vehicles.
    pub fn with_queues(params: ScenarioParams, free: Vec<Vehicle>, blocked: Vec<Vehicle>) -> Self {
        Self::build(params, free, blocked)
    }

    fn build(params: ScenarioParams, free: Vec<Vehicle>, blocked: Vec<Vehicle>) -> Self {
        debug_assert!(params.validated().is_ok());
        let next_id = free
            .iter()
            .chain(blocked.iter())
            .map(|v| v.id.0 + 1)
            .max()
            .unwrap_or(0);
        let convert = |v: &Vehicle| SimVehicle {
            id: v.id,
            kind: v.kind,
            dmax: v.dmax.unwrap_or(0),
            role: CavRole::Idle,
        };
        let mut state = SimState {
            params,
            free: free.iter().map(convert).collect(),
            blocked: blocked.iter().map(convert).collect(),
            flow: FlowState { direction: Lane::Free, first_after_change: false },
            episode: None,
            outstanding_cleared_free: 0,
            turn: 0,
            drained_free: 0,
            drained_blocked: 0,
            direction_changes: 0,
            rng: RngStream::new(params.seed),
            next_id,
            episode_records: Vec::new(),
            free_phase_count: 0,
            prev_turn_was_free_drain: false,
            view_blocked: Vec::with_capacity(params.comm_range as usize),
            view_free: Vec::with_capacity(params.comm_range as usize),
        };
        state.extend_queue(Lane::Free);
        state.extend_queue(Lane::Blocked);
        state
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn turn_index(&self) -> u64 {
        self.turn
    }

    pub fn flow(&self) -> FlowState {
        self.flow
    }

    pub fn rng_draws(&self) -> u64 {
        self.rng.draws()
    }

    pub fn queue_len(&self, lane: Lane) -> usize {
        match lane {
            Lane::Free => self.free.len(),
            Lane::Blocked => self.blocked.len(),
        }
    }

    /// Stats of completed episodes so far.
    pub fn episode_records(&self) -> &[EpisodeRecord] {
        &self.episode_records
    }

    /// Kinds of the queued vehicles, front to back.
    pub fn queue_kinds(&self, lane: Lane) -> Vec<VehicleKind> {
        let queue = match lane {
            Lane::Free => &self.free,
            Lane::Blocked => &self.blocked,
        };
        queue.iter().map(|v| v.kind).collect()
    }

    /// Top up a lane to `comm_range + 1` vehicles, drawing kind (and dmax
    /// for CAVs) in queue order. The free lane is extended first each step.
    pub fn extend_queue(&mut self, lane: Lane) {
        let target = self.params.comm_range as usize + 1;
        let (queue, rng, next_id) = match lane {
            Lane::Free => (&mut self.free, &mut self.rng, &mut self.next_id),
            Lane::Blocked => (&mut self.blocked, &mut self.rng, &mut self.next_id),
        };
        while queue.len() < target {
            let id = VehicleId(*next_id);
            *next_id += 1;
            let kind = behavior::draw_kind(rng, self.params.kappa);
            let dmax = match kind {
                VehicleKind::Cav => behavior::draw_dmax(rng, self.params.dmaxmax),
                VehicleKind::Human => 0,
            };
            queue.push_back(SimVehicle { id, kind, dmax, role: CavRole::Idle });
        }
    }

    /// Advance exactly one turn.
    pub fn step<S: EventSink>(&mut self, sink: &mut S) {
        self.extend_queue(Lane::Free);
        self.extend_queue(Lane::Blocked);

        let lane = self.flow.direction;
        if self.flow.first_after_change {
            // The first vehicle on the new lane always drives, whoever it
            // is (including a returner at position 1).
            self.flow.first_after_change = false;
            self.drain_front(lane, sink);
        } else {
            match lane {
                Lane::Free => self.step_free(sink),
                Lane::Blocked => self.step_blocked(sink),
            }
        }

        debug_assert_eq!(
            self.turn,
            self.drained_free + self.drained_blocked + self.direction_changes
        );
    }

    fn step_free<S: EventSink>(&mut self, sink: &mut S) {
        let front = self.free[0];
        let stochastic = self.params.variant == Variant::NonConnectedBaseline
            || front.kind == VehicleKind::Human;
        if stochastic {
            match behavior::human_free_decision(&mut self.rng, self.params.p_f) {
                FreeAction::Drive => self.drain_front(Lane::Free, sink),
                FreeAction::Yield => self.direction_change(DirectionCause::HumanYield, Vec::new(), sink),
            }
            return;
        }
        match front.role {
            CavRole::ClearedFree { .. } => self.drain_front(Lane::Free, sink),
            role => {
                debug_assert!(role.is_unengaged(), "front free CAV with role {role:?}");
                self.negotiate_front(sink);
            }
        }
    }

    fn step_blocked<S: EventSink>(&mut self, sink: &mut S) {
        let front = self.blocked[0];
        let stochastic = self.params.variant == Variant::NonConnectedBaseline
            || front.kind == VehicleKind::Human;
        if stochastic {
            match behavior::human_blocked_decision(&mut self.rng, self.params.p_b) {
                BlockedAction::Drive => self.drain_front(Lane::Blocked, sink),
                BlockedAction::Stop => self.direction_change(DirectionCause::HumanStop, Vec::new(), sink),
            }
            return;
        }
        match front.role {
            CavRole::ClearedBlocked { .. } => self.drain_front(Lane::Blocked, sink),
            CavRole::Returner { .. } => {
                self.direction_change(DirectionCause::CavReturnerStop, Vec::new(), sink)
            }
            role => {
                // No permission this round: stop and wait for one.
                debug_assert!(role.is_unengaged(), "front blocked CAV with role {role:?}");
                self.direction_change(DirectionCause::CavWaitStop, Vec::new(), sink)
            }
        }
    }

    /// Front free CAV without a role: invite, and yield iff a returner is
    /// found.
    fn negotiate_front<S: EventSink>(&mut self, sink: &mut S) {
        debug_assert_eq!(self.outstanding_cleared_free, 0);
        let inviter = self.free[0];
        let range = self.params.comm_range;
        let dmax_effective = (inviter.dmax as u32).min(range);
        self.fill_views();

        let Some(returner_d) = protocol::select_returner(&self.view_blocked, dmax_effective, range)
        else {
            // No admissible returner: drive through without yielding.
            self.drain_front(Lane::Free, sink);
            return;
        };
        let cleared_positions = protocol::blocked_clearance_set(&self.view_blocked, returner_d);

        let messages = if S::WANTS_MESSAGES {
            protocol::negotiate(inviter.id, dmax_effective, range, &self.view_blocked, &self.view_free)
                .expect("returner already selected")
                .messages
        } else {
            Vec::new()
        };

        self.free[0].role = CavRole::Inviter { dmax_effective };
        let returner = self.blocked[returner_d as usize - 1].id;
        self.blocked[returner_d as usize - 1].role = CavRole::Returner { inviter: inviter.id };
        for &p in &cleared_positions {
            self.blocked[p as usize - 1].role = CavRole::ClearedBlocked { inviter: inviter.id };
        }
        for i in returner_d as usize..range as usize {
            let v = &mut self.blocked[i];
            if v.kind == VehicleKind::Cav {
                debug_assert!(v.role.is_unengaged());
                v.role = CavRole::Dismissed;
            }
        }
        // Free CAVs beyond the effective patience can never fall inside the
        // eventual clearance window.
        for i in dmax_effective as usize + 1..=range as usize {
            let v = &mut self.free[i];
            if v.kind == VehicleKind::Cav {
                debug_assert!(v.role.is_unengaged());
                v.role = CavRole::Dismissed;
            }
        }

        self.direction_change(DirectionCause::CavInviteYield, messages, sink);
        self.episode = Some(ActiveEpisode {
            inviter: inviter.id,
            dmax_effective,
            returner,
            returner_d,
            cleared_positions,
            drained_blocked: 0,
            returner_drained: false,
            free_window: 0,
            phase: EpisodePhase::BlockedDraining,
        });
    }

    fn drain_front<S: EventSink>(&mut self, lane: Lane, sink: &mut S) {
        let vehicle = match lane {
            Lane::Free => self.free.pop_front(),
            Lane::Blocked => self.blocked.pop_front(),
        }
        .expect("queues are never empty");
        let had_clearance = matches!(
            vehicle.role,
            CavRole::ClearedFree { .. } | CavRole::ClearedBlocked { .. }
        );

        match lane {
            Lane::Free => {
                self.drained_free += 1;
                if matches!(vehicle.role, CavRole::ClearedFree { .. }) {
                    self.outstanding_cleared_free -= 1;
                }
                if !self.prev_turn_was_free_drain {
                    self.free_phase_count += 1;
                }
            }
            Lane::Blocked => {
                self.drained_blocked += 1;
                if let Some(ep) = &mut self.episode {
                    if ep.phase == EpisodePhase::BlockedDraining {
                        ep.drained_blocked += 1;
                        if vehicle.id == ep.returner {
                            ep.returner_drained = true;
                        }
                    }
                }
            }
        }
        self.prev_turn_was_free_drain = lane == Lane::Free;

        self.emit(
            EventKind::Drain {
                lane,
                vehicle_id: vehicle.id,
                vehicle_kind: vehicle.kind,
                had_clearance,
            },
            sink,
        );
        self.turn += 1;
    }

    fn direction_change<S: EventSink>(
        &mut self,
        cause: DirectionCause,
        mut messages: Vec<Message>,
        sink: &mut S,
    ) {
        let from = self.flow.direction;
        let to = from.opposite();

        match from {
            Lane::Free => {
                // Interrupting the free flow cancels every outstanding
                // clearance; re-admission needs a fresh negotiation.
                if self.outstanding_cleared_free > 0 {
                    for v in self.free.iter_mut() {
                        if matches!(v.role, CavRole::ClearedFree { .. }) {
                            v.role = CavRole::Idle;
                        }
                    }
                    self.outstanding_cleared_free = 0;
                }
                if matches!(&self.episode, Some(ep) if ep.phase == EpisodePhase::FreeDraining) {
                    self.episode = None;
                }
                debug_assert!(self.episode.is_none() || cause == DirectionCause::CavInviteYield);
            }
            Lane::Blocked => {
                // The blocked flow ceased; if an episode is running this
                // ends its blocked phase and opens the free window.
                if matches!(&self.episode, Some(ep) if ep.phase == EpisodePhase::BlockedDraining) {
                    self.issue_free_window(cause, &mut messages, S::WANTS_MESSAGES);
                    for v in self.blocked.iter_mut() {
                        if matches!(
                            v.role,
                            CavRole::Returner { .. } | CavRole::ClearedBlocked { .. }
                        ) {
                            v.role = CavRole::Idle;
                        }
                    }
                }
            }
        }

        self.flow = FlowState { direction: to, first_after_change: true };
        self.direction_changes += 1;
        self.prev_turn_was_free_drain = false;
        self.emit(EventKind::DirectionChange { from, to, cause, messages }, sink);
        self.turn += 1;
    }

    /// End of an episode's blocked phase: size the window, grant free-lane
    /// clearances, record the episode.
    fn issue_free_window(
        &mut self,
        cause: DirectionCause,
        messages: &mut Vec<Message>,
        wants_messages: bool,
    ) {
        let ep = self.episode.as_mut().expect("active episode");
        // Clearance reaches at most dmax positions back. The cap only binds
        // in the degenerate returner_d = 1 rounds, where the blocked drain
        // count is not limited by the returner's position.
        let window = protocol::free_clearance_window(
            self.params.variant,
            ep.dmax_effective,
            ep.drained_blocked,
        )
        .min(ep.dmax_effective);
        ep.free_window = window;
        ep.phase = EpisodePhase::FreeDraining;

        debug_assert!(ep.returner_drained || ep.drained_blocked < ep.returner_d);
        debug_assert!((window as usize) < self.free.len());
        let mut granted = 0;
        for i in 1..=window as usize {
            let v = &mut self.free[i];
            if v.kind == VehicleKind::Cav {
                v.role = CavRole::ClearedFree { inviter: ep.inviter };
                granted += 1;
            }
        }
        self.outstanding_cleared_free = granted;

        self.episode_records.push(EpisodeRecord {
            returner_d: ep.returner_d,
            cleared_positions: ep.cleared_positions.clone(),
            blocked_drains: ep.drained_blocked,
            free_window: window,
            returner_drained: ep.returner_drained,
        });

        if wants_messages {
            let notify = match cause {
                DirectionCause::CavReturnerStop => Some(ep.returner),
                _ => None,
            };
            let view: Vec<ViewEntry> = self
                .free
                .iter()
                .enumerate()
                .skip(1)
                .take(self.params.comm_range as usize)
                .map(|(i, v)| ViewEntry {
                    d: i as u32 + 1,
                    id: v.id,
                    is_cav: v.kind == VehicleKind::Cav,
                })
                .collect();
            messages.extend(protocol::window_messages(
                ep.inviter,
                &view,
                window,
                ep.dmax_effective,
                notify,
            ));
        }
    }

    fn fill_views(&mut self) {
        let range = self.params.comm_range as usize;
        self.view_blocked.clear();
        for (i, v) in self.blocked.iter().take(range).enumerate() {
            self.view_blocked.push(ViewEntry {
                d: i as u32 + 1,
                id: v.id,
                is_cav: v.kind == VehicleKind::Cav,
            });
        }
        self.view_free.clear();
        for (i, v) in self.free.iter().enumerate().skip(1).take(range) {
            self.view_free.push(ViewEntry {
                d: i as u32 + 1,
                id: v.id,
                is_cav: v.kind == VehicleKind::Cav,
            });
        }
    }

    fn emit<S: EventSink>(&self, event: EventKind, sink: &mut S) {
        sink.on_event(&TurnEvent { turn_index: self.turn, event });
    }

    /// Summarize the run so far.
    pub fn result(&self) -> RunResult {
        let episode_count = self.episode_records.len() as u64;
        let mean_blocked_drains_per_episode = if episode_count == 0 {
            0.0
        } else {
            let total: u64 = self
                .episode_records
                .iter()
                .map(|r| r.blocked_drains as u64)
                .sum();
            total as f64 / episode_count as f64
        };
        let mean_free_drains_per_free_phase = if self.free_phase_count == 0 {
            0.0
        } else {
            self.drained_free as f64 / self.free_phase_count as f64
        };
        RunResult {
            params: self.params,
            drained_free: self.drained_free,
            drained_blocked: self.drained_blocked,
            direction_changes: self.direction_changes,
            phi: flow_balance(self.drained_free, self.drained_blocked).unwrap_or(0.0),
            episode_count,
            mean_blocked_drains_per_episode,
            mean_free_drains_per_free_phase,
            seed: self.params.seed,
            rng_draws: self.rng.draws(),
        }
    }
}

/// Run to the turn target, discarding events.
pub fn run(params: ScenarioParams) -> RunResult {
    run_with_sink(params, &mut NullSink)
}

/// Run to the turn target, streaming every event into `sink`.
pub fn run_with_sink<S: EventSink>(params: ScenarioParams, sink: &mut S) -> RunResult {
    let mut sim = SimState::new(params);
    while sim.turn_index() < params.turns_target {
        sim.step(sink);
    }
    sim.result()
}
