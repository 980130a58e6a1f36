//! Linearizability of key-value histories against a last-writer-wins map.
//!
//! The sequential model is a map in which every put carries the timestamp
//! the store assigned to it: a put overwrites the key only when its
//! timestamp is larger than the current one, and a get returns the current
//! value. Keys are independent objects, so the history is split per key and
//! each part is searched on its own.
//!
//! The per-key search follows Wing and Gong with Lowe's memoisation: at each
//! step any operation invoked before the earliest pending response may be
//! linearized next, and explored sets of linearized operations are cached.
//! Puts that never got a response may take effect at any point after their
//! invocation or not at all; gets without a response are dropped.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rsm::command::{ClientId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HistoryOp {
    Put { key: String, value: String, ts: Timestamp },
    /// `value` is the returned value; meaningless while the get is pending.
    Get { key: String, value: Option<String> },
}

impl HistoryOp {
    pub fn key(&self) -> &str {
        match self {
            Self::Put { key, .. } | Self::Get { key, .. } => key,
        }
    }
}

/// One client operation with its real-time interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryEntry {
    pub client: ClientId,
    pub op: HistoryOp,
    pub invoke: u64,
    /// `None` while the operation is pending.
    pub response: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearizabilityError {
    #[error("key {key:?}: {overlap} operations overlap, more than the search limit of {limit}")]
    WindowTooLarge { key: String, overlap: usize, limit: usize },
    #[error("operation on key {key:?} responds before it is invoked")]
    Malformed { key: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Linearizable,
    /// No legal order exists for the operations on `key`.
    Violation { key: String, witness: String },
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Self::Linearizable)
    }
}

/// Default cap on simultaneously open operations per key.
pub const DEFAULT_WINDOW: usize = 15;

#[derive(Debug, Clone)]
struct KeyOp {
    invoke: u64,
    response: u64,
    /// `Some` for puts.
    put: Option<(Timestamp, String)>,
    got: Option<String>,
    pending: bool,
}

pub fn check_linearizability(history: &[HistoryEntry]) -> Result<Verdict, LinearizabilityError> {
    check_linearizability_with_window(history, DEFAULT_WINDOW)
}

pub fn check_linearizability_with_window(
    history: &[HistoryEntry],
    window: usize,
) -> Result<Verdict, LinearizabilityError> {
    let mut per_key: BTreeMap<&str, Vec<&HistoryEntry>> = BTreeMap::new();
    for entry in history {
        per_key.entry(entry.op.key()).or_default().push(entry);
    }
    for (key, entries) in per_key {
        let ops = key_ops(key, &entries)?;
        let overlap = max_overlap(&ops);
        if overlap > window {
            return Err(LinearizabilityError::WindowTooLarge {
                key: key.to_owned(),
                overlap,
                limit: window,
            });
        }
        if !search(&ops) {
            return Ok(Verdict::Violation {
                key: key.to_owned(),
                witness: describe(&entries),
            });
        }
    }
    Ok(Verdict::Linearizable)
}

fn key_ops(key: &str, entries: &[&HistoryEntry]) -> Result<Vec<KeyOp>, LinearizabilityError> {
    let mut ops = Vec::new();
    for e in entries {
        if e.response.is_some_and(|r| r < e.invoke) {
            return Err(LinearizabilityError::Malformed { key: key.to_owned() });
        }
        let pending = e.response.is_none();
        let response = e.response.unwrap_or(u64::MAX);
        match &e.op {
            HistoryOp::Put { value, ts, .. } => ops.push(KeyOp {
                invoke: e.invoke,
                response,
                put: Some((*ts, value.clone())),
                got: None,
                pending,
            }),
            HistoryOp::Get { value, .. } if !pending => ops.push(KeyOp {
                invoke: e.invoke,
                response,
                put: None,
                got: value.clone(),
                pending,
            }),
            HistoryOp::Get { .. } => {}
        }
    }
    ops.sort_by_key(|o| (o.invoke, o.response));
    Ok(ops)
}

/// Largest number of operations whose intervals share a point.
fn max_overlap(ops: &[KeyOp]) -> usize {
    let mut points: Vec<(u64, i32)> = Vec::with_capacity(2 * ops.len());
    for o in ops {
        points.push((o.invoke, 1));
        if o.response != u64::MAX {
            // Closed intervals: a response at t overlaps an invoke at t.
            points.push((o.response, -1));
        }
    }
    points.sort_by_key(|&(t, d)| (t, -d));
    let mut open = 0i32;
    let mut best = 0i32;
    for (_, d) in points {
        open += d;
        best = best.max(open);
    }
    best as usize
}

fn search(ops: &[KeyOp]) -> bool {
    let words = ops.len().div_ceil(64).max(1);
    let mut done = vec![0u64; words];
    let mut seen = HashSet::new();
    dfs(ops, &mut done, &mut seen)
}

fn is_done(done: &[u64], i: usize) -> bool {
    done[i / 64] & (1 << (i % 64)) != 0
}

fn flip(done: &mut [u64], i: usize) {
    done[i / 64] ^= 1 << (i % 64);
}

/// Current value: the put with the largest timestamp among those linearized.
fn current(ops: &[KeyOp], done: &[u64]) -> Option<(Timestamp, String)> {
    ops.iter()
        .enumerate()
        .filter(|(i, _)| is_done(done, *i))
        .filter_map(|(_, o)| o.put.clone())
        .max_by_key(|(ts, _)| *ts)
}

fn dfs(ops: &[KeyOp], done: &mut Vec<u64>, seen: &mut HashSet<Vec<u64>>) -> bool {
    let remaining: Vec<usize> = (0..ops.len()).filter(|&i| !is_done(done, i)).collect();
    if remaining.iter().all(|&i| ops[i].pending) {
        return true;
    }
    if !seen.insert(done.clone()) {
        return false;
    }
    let deadline = remaining.iter().map(|&i| ops[i].response).min().unwrap_or(u64::MAX);
    let state = current(ops, done);
    for &i in &remaining {
        let op = &ops[i];
        if op.invoke > deadline {
            break;
        }
        let legal = match &op.put {
            Some(_) => true,
            None => op.got.as_deref() == state.as_ref().map(|(_, v)| v.as_str()),
        };
        if !legal {
            continue;
        }
        flip(done, i);
        if dfs(ops, done, seen) {
            return true;
        }
        flip(done, i);
    }
    false
}

fn describe(entries: &[&HistoryEntry]) -> String {
    let parts: Vec<String> = entries
        .iter()
        .map(|e| {
            let interval = match e.response {
                Some(r) => format!("[{}, {r}]", e.invoke),
                None => format!("[{}, pending]", e.invoke),
            };
            match &e.op {
                HistoryOp::Put { value, ts, .. } => {
                    format!("client {} put {value:?} ts ({}, {}) {interval}", e.client, ts.counter, ts.replica)
                }
                HistoryOp::Get { value, .. } => format!("client {} get -> {value:?} {interval}", e.client),
            }
        })
        .collect();
    format!("no legal order for: {}", parts.join("; "))
}
