//! V2V message vocabulary and the inviter/returner decision logic.
//!
//! The front free-lane CAV (the "inviter") broadcasts an invite, collects
//! position reports, and asks the deepest admissible blocked CAV (the
//! "returner") to stop once it reaches the front, bounding the inviter's
//! wait. Blocked CAVs ahead of the returner are cleared to drain without
//! stopping; once the blocked flow ceases, clearance is granted to free-lane
//! CAVs behind the inviter so they follow without re-negotiating.
//!
//! Everything in this module is pure and engine-independent: the engine
//! performs the per-turn bookkeeping, and these functions define the
//! decisions and the message transcripts.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::types::{Lane, Variant, VehicleId};

/// Message destination. Only the invite is broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    Broadcast,
    Vehicle(VehicleId),
}

impl Serialize for Recipient {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Recipient::Broadcast => s.serialize_str("broadcast"),
            Recipient::Vehicle(id) => s.serialize_u64(id.0),
        }
    }
}

impl<'de> Deserialize<'de> for Recipient {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Recipient;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a vehicle id or \"broadcast\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Recipient, E> {
                Ok(Recipient::Vehicle(VehicleId(v)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Recipient, E> {
                if v == "broadcast" {
                    Ok(Recipient::Broadcast)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// The eight message kinds. Position reports carry the sender's distance
/// `d` (queue position, 1 = front).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageKind {
    Invite,
    PositionReportFree { d: u32 },
    PositionReportBlocked { d: u32 },
    RequestReturn,
    AcceptReturn,
    NotifyReturn,
    Clearance,
    Dismiss,
}

impl MessageKind {
    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::Invite => "invite",
            MessageKind::PositionReportFree { .. } => "position_report_free",
            MessageKind::PositionReportBlocked { .. } => "position_report_blocked",
            MessageKind::RequestReturn => "request_return",
            MessageKind::AcceptReturn => "accept_return",
            MessageKind::NotifyReturn => "notify_return",
            MessageKind::Clearance => "clearance",
            MessageKind::Dismiss => "dismiss",
        }
    }
}

/// One V2V message. Serializes to `{kind, sender, recipient, d?}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    #[serde(flatten)]
    pub kind: MessageKind,
    pub sender: VehicleId,
    pub recipient: Recipient,
}

impl Message {
    pub fn unicast(kind: MessageKind, sender: VehicleId, to: VehicleId) -> Self {
        Message { kind, sender, recipient: Recipient::Vehicle(to) }
    }

    pub fn broadcast(kind: MessageKind, sender: VehicleId) -> Self {
        Message { kind, sender, recipient: Recipient::Broadcast }
    }

    pub fn is_broadcast(&self) -> bool {
        self.recipient == Recipient::Broadcast
    }
}

/// Role a CAV holds during an episode. `Dismissed` is behaviorally
/// identical to `Idle`: the vehicle waits for (or issues) a fresh invite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CavRole {
    Idle,
    Inviter { dmax_effective: u32 },
    Returner { inviter: VehicleId },
    ClearedBlocked { inviter: VehicleId },
    ClearedFree { inviter: VehicleId },
    Dismissed,
}

impl CavRole {
    /// Idle and Dismissed act identically.
    pub fn is_unengaged(&self) -> bool {
        matches!(self, CavRole::Idle | CavRole::Dismissed)
    }
}

/// A vehicle as seen in a lane view: distance (queue position), identity,
/// and whether it is a compatible CAV. Views are sorted ascending by `d`
/// with distinct positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewEntry {
    pub d: u32,
    pub id: VehicleId,
    pub is_cav: bool,
}

/// Lifecycle of one cooperation round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodePhase {
    Negotiating,
    BlockedDraining,
    FreeDraining,
    Closed,
}

/// Record of one cooperation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub inviter: VehicleId,
    pub returner: VehicleId,
    pub returner_d: u32,
    /// Blocked CAVs ahead of the returner, granted clearance at negotiation.
    pub blocked_cleared: Vec<VehicleId>,
    /// Queue positions behind the inviter eligible for free-lane clearance;
    /// sized at window issuance.
    pub free_window: u32,
    pub drained_blocked: u32,
    pub phase: EpisodePhase,
}

/// A message that does not fit the receiving CAV's current role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolViolation {
    pub role: CavRole,
    pub message: Message,
}

impl fmt::Display for ProtocolViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "message {} inconsistent with role {:?}",
            self.message.kind.name(),
            self.role
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ProtocolViolation {}

fn assert_sorted_view(view: &[ViewEntry]) {
    debug_assert!(
        view.windows(2).all(|w| w[0].d < w[1].d) && view.iter().all(|e| e.d >= 1),
        "view must be sorted ascending with distinct positions >= 1"
    );
}

/// The returner choice: the deepest blocked CAV within both the inviter's
/// patience and communication range, if any.
pub fn select_returner(blocked_view: &[ViewEntry], dmax: u32, comm_range: u32) -> Option<u32> {
    assert_sorted_view(blocked_view);
    let limit = dmax.min(comm_range);
    blocked_view
        .iter()
        .filter(|e| e.is_cav && e.d <= limit)
        .map(|e| e.d)
        .next_back()
}

/// Positions of blocked CAVs ahead of the returner; these drain without
/// stopping.
pub fn blocked_clearance_set(blocked_view: &[ViewEntry], returner_d: u32) -> Vec<u32> {
    assert_sorted_view(blocked_view);
    debug_assert!(blocked_view
        .iter()
        .any(|e| e.d == returner_d && e.is_cav));
    blocked_view
        .iter()
        .filter(|e| e.is_cav && e.d < returner_d)
        .map(|e| e.d)
        .collect()
}

/// Size of the free-lane clearance window, in queue positions behind the
/// inviter.
///
/// Non-counting: the inviter's patience, regardless of the opposite flow.
/// Counting: one less than the number of blocked vehicles that drained —
/// the budget includes the inviter's own drain, so total free drains match
/// total blocked drains. Returns 0 for the baseline (never negotiates).
pub fn free_clearance_window(variant: Variant, dmax: u32, drained_blocked: u32) -> u32 {
    match variant {
        Variant::NonCounting => dmax,
        Variant::Counting => drained_blocked.saturating_sub(1),
        Variant::NonConnectedBaseline => 0,
    }
}

/// Outcome of a successful negotiation: the episode, the cleared blocked
/// positions, and the full message transcript up to this point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negotiation {
    pub episode: Episode,
    pub cleared_positions: Vec<u32>,
    pub messages: Vec<Message>,
}

/// Run the invite/report/request exchange for a fronting free-lane CAV.
///
/// `free_view` holds the vehicles behind the inviter (absolute positions,
/// inviter at 1). Returns `None` when no admissible returner exists; the
/// inviter then drives through without yielding.
pub fn negotiate(
    inviter: VehicleId,
    dmax: u32,
    comm_range: u32,
    blocked_view: &[ViewEntry],
    free_view: &[ViewEntry],
) -> Option<Negotiation> {
    negotiate_with_acceptor(inviter, dmax, comm_range, blocked_view, free_view, |_| true)
}

/// Negotiation with an injectable accept decision per candidate returner.
///
/// Candidates are tried deepest-first; a rejection moves to the CAV with
/// the next lower d. Simulated CAVs always accept, so the retry path is
/// exercised only by tests.
pub fn negotiate_with_acceptor(
    inviter: VehicleId,
    dmax: u32,
    comm_range: u32,
    blocked_view: &[ViewEntry],
    free_view: &[ViewEntry],
    mut accept: impl FnMut(&ViewEntry) -> bool,
) -> Option<Negotiation> {
    assert_sorted_view(blocked_view);
    assert_sorted_view(free_view);
    let limit = dmax.min(comm_range);

    let mut messages = vec![Message::broadcast(MessageKind::Invite, inviter)];
    for e in blocked_view.iter().filter(|e| e.is_cav) {
        messages.push(Message::unicast(
            MessageKind::PositionReportBlocked { d: e.d },
            e.id,
            inviter,
        ));
    }
    for e in free_view.iter().filter(|e| e.is_cav) {
        messages.push(Message::unicast(
            MessageKind::PositionReportFree { d: e.d },
            e.id,
            inviter,
        ));
    }

    let returner = blocked_view
        .iter()
        .filter(|e| e.is_cav && e.d <= limit)
        .rev()
        .find(|candidate| {
            messages.push(Message::unicast(MessageKind::RequestReturn, inviter, candidate.id));
            accept(candidate)
        })?;
    messages.push(Message::unicast(MessageKind::AcceptReturn, returner.id, inviter));

    let cleared_positions = blocked_clearance_set(blocked_view, returner.d);
    let mut blocked_cleared = Vec::with_capacity(cleared_positions.len());
    for e in blocked_view.iter().filter(|e| e.is_cav && e.d < returner.d) {
        blocked_cleared.push(e.id);
        messages.push(Message::unicast(MessageKind::Clearance, inviter, e.id));
    }
    // Blocked CAVs beyond the returner get no permissions this round.
    for e in blocked_view.iter().filter(|e| e.is_cav && e.d > returner.d) {
        messages.push(Message::unicast(MessageKind::Dismiss, inviter, e.id));
    }
    // Free CAVs beyond the inviter's patience can never fall in the window.
    for e in free_view.iter().filter(|e| e.is_cav && e.d - 1 > limit) {
        messages.push(Message::unicast(MessageKind::Dismiss, inviter, e.id));
    }

    Some(Negotiation {
        episode: Episode {
            inviter,
            returner: returner.id,
            returner_d: returner.d,
            blocked_cleared,
            free_window: 0,
            drained_blocked: 0,
            phase: EpisodePhase::Negotiating,
        },
        cleared_positions,
        messages,
    })
}

/// Messages sent when the blocked flow ceases and the free window opens:
/// the optional returner notification, clearance for free CAVs within
/// `window` positions behind the inviter, and dismissal for those between
/// the window and the inviter's patience.
///
/// `free_view` is the view at issuance (inviter at position 1).
pub fn window_messages(
    inviter: VehicleId,
    free_view: &[ViewEntry],
    window: u32,
    dmax_effective: u32,
    notify_from: Option<VehicleId>,
) -> Vec<Message> {
    assert_sorted_view(free_view);
    let mut messages = Vec::new();
    if let Some(returner) = notify_from {
        messages.push(Message::unicast(MessageKind::NotifyReturn, returner, inviter));
    }
    for e in free_view.iter().filter(|e| e.is_cav && e.d - 1 <= window) {
        messages.push(Message::unicast(MessageKind::Clearance, inviter, e.id));
    }
    for e in free_view
        .iter()
        .filter(|e| e.is_cav && e.d - 1 > window && e.d - 1 <= dmax_effective)
    {
        messages.push(Message::unicast(MessageKind::Dismiss, inviter, e.id));
    }
    messages
}

/// The fronting free CAV opens a round: it turns inviter and broadcasts.
/// This is the only transition that emits a broadcast.
pub fn begin_invite(self_id: VehicleId, dmax_effective: u32) -> (CavRole, Message) {
    (
        CavRole::Inviter { dmax_effective },
        Message::broadcast(MessageKind::Invite, self_id),
    )
}

/// The returner stops in front of the bottleneck, fulfilling its
/// commitment, and notifies the inviter.
pub fn returner_stop(self_id: VehicleId, role: CavRole) -> Result<(CavRole, Message), ProtocolViolation> {
    match role {
        CavRole::Returner { inviter } => Ok((
            CavRole::Idle,
            Message::unicast(MessageKind::NotifyReturn, self_id, inviter),
        )),
        _ => Err(ProtocolViolation {
            role,
            message: Message::broadcast(MessageKind::NotifyReturn, self_id),
        }),
    }
}

/// Per-CAV state machine: react to an incoming message given the current
/// role, own lane and own queue position. Returns the new role and any
/// responses. Messages inconsistent with the role are protocol violations.
pub fn handle_message(
    self_id: VehicleId,
    role: CavRole,
    lane: Lane,
    msg: &Message,
    self_d: u32,
) -> Result<(CavRole, Vec<Message>), ProtocolViolation> {
    debug_assert!(matches!(msg.recipient, Recipient::Broadcast) || msg.recipient == Recipient::Vehicle(self_id));
    let violation = Err(ProtocolViolation { role, message: *msg });
    let sender = msg.sender;
    match (role, msg.kind) {
        // An unengaged CAV answers an invite with its position.
        (r, MessageKind::Invite) if r.is_unengaged() => {
            let report = match lane {
                Lane::Free => MessageKind::PositionReportFree { d: self_d },
                Lane::Blocked => MessageKind::PositionReportBlocked { d: self_d },
            };
            Ok((CavRole::Idle, vec![Message::unicast(report, self_id, sender)]))
        }
        (r, MessageKind::RequestReturn) if r.is_unengaged() && lane == Lane::Blocked => Ok((
            CavRole::Returner { inviter: sender },
            vec![Message::unicast(MessageKind::AcceptReturn, self_id, sender)],
        )),
        (r, MessageKind::Clearance) if r.is_unengaged() => {
            let new = match lane {
                Lane::Free => CavRole::ClearedFree { inviter: sender },
                Lane::Blocked => CavRole::ClearedBlocked { inviter: sender },
            };
            Ok((new, Vec::new()))
        }
        (r, MessageKind::Dismiss) if r.is_unengaged() => Ok((CavRole::Dismissed, Vec::new())),
        // The inviter absorbs reports, acceptance and the return notice;
        // the aggregate decision lives in `negotiate`.
        (CavRole::Inviter { .. }, MessageKind::PositionReportFree { .. })
        | (CavRole::Inviter { .. }, MessageKind::PositionReportBlocked { .. })
        | (CavRole::Inviter { .. }, MessageKind::AcceptReturn)
        | (CavRole::Inviter { .. }, MessageKind::NotifyReturn) => Ok((role, Vec::new())),
        _ => violation,
    }
}
