//! Round-trip and message bounds.

use serde::{Deserialize, Serialize};

use super::Check;

/// Counters one process reported when it decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessCounters {
    pub process: usize,
    pub round_trips: u64,
    pub messages: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundsReport {
    pub rounds: u32,
    pub max_round_trips: u64,
    pub round_trip_bound: u64,
    pub max_messages_per_process: u64,
    pub message_bound: u64,
    pub round_trips: Check,
    pub messages: Check,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.round_trips.passed && self.messages.passed
    }
}

/// `3R + 1` round-trips.
pub fn round_trip_bound(rounds: u32) -> u64 {
    3 * u64::from(rounds) + 1
}

/// `8n(R + 1)` messages per process.
pub fn message_bound(n: usize, rounds: u32) -> u64 {
    8 * n as u64 * (u64::from(rounds) + 1)
}

/// Checks lattice agreement counters against the bounds for `n` processes
/// running `rounds` classifier rounds.
pub fn check_bounds(n: usize, rounds: u32, counters: &[ProcessCounters]) -> BoundsReport {
    let rt_bound = round_trip_bound(rounds);
    let msg_bound = message_bound(n, rounds);
    let max_rt = counters.iter().map(|c| c.round_trips).max().unwrap_or(0);
    let max_msg = counters.iter().map(|c| c.messages).max().unwrap_or(0);
    let rt = counters
        .iter()
        .find(|c| c.round_trips > rt_bound)
        .map(|c| format!("process {} used {} round-trips, bound {rt_bound}", c.process, c.round_trips));
    let msg = counters
        .iter()
        .find(|c| c.messages > msg_bound)
        .map(|c| format!("process {} sent {} messages, bound {msg_bound}", c.process, c.messages));
    BoundsReport {
        rounds,
        max_round_trips: max_rt,
        round_trip_bound: rt_bound,
        max_messages_per_process: max_msg,
        message_bound: msg_bound,
        round_trips: Check::from_witness(rt),
        messages: Check::from_witness(msg),
    }
}
