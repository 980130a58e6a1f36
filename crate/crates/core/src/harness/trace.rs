//! Trace events and their JSONL encoding.
//!
//! Fields serialize in declaration order, so identical runs give identical
//! bytes.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::async_la::Phase;
use crate::rsm::command::{CommandId, CommandSet, Timestamp};
use crate::simnet::NetStats;
use crate::ProcessId;

use super::scenario::Protocol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", rename_all_fields = "camelCase")]
pub enum TraceEvent {
    RunStart {
        protocol: Protocol,
        n: usize,
        f: usize,
        seed: u64,
        /// Classifier rounds (lattice agreement) or the per-sequence round
        /// budget `f + 1` (generalized lattice agreement).
        rounds: u32,
        /// Ordering checks compare update commands only.
        updates_only: bool,
        window: u64,
    },
    Deliver {
        tick: u64,
        from: ProcessId,
        to: ProcessId,
        kind: String,
    },
    Crash {
        tick: u64,
        process: ProcessId,
    },
    Partition {
        tick: u64,
        groups: Vec<Vec<ProcessId>>,
    },
    Heal {
        tick: u64,
    },
    /// A lattice agreement input, as atom indices.
    Input {
        process: ProcessId,
        value: Vec<u32>,
    },
    Phase {
        tick: u64,
        process: ProcessId,
        phase: Phase,
        round: u32,
        label: i64,
    },
    Decide {
        tick: u64,
        process: ProcessId,
        value: Vec<u32>,
        round_trips: u64,
        messages: u64,
    },
    Submit {
        tick: u64,
        replica: ProcessId,
        command: CommandId,
    },
    Propose {
        tick: u64,
        replica: ProcessId,
        seq: u64,
        round: u32,
        size: usize,
        updates: usize,
    },
    Learn {
        tick: u64,
        replica: ProcessId,
        seq: u64,
        rounds: u32,
        value: CommandSet,
        accept_len: usize,
        lv_len: usize,
        /// The accept set still intersected `LV[s − 1]` after truncation.
        overlaps_previous: bool,
    },
    Collect {
        tick: u64,
        replica: ProcessId,
        below: u64,
    },
    Client {
        client: u32,
        request: u64,
        replica: ProcessId,
        op: String,
        key: String,
        /// Value written by a put or returned by a get.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        value: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        ts: Option<Timestamp>,
        invoke_time: u64,
        /// Absent when the request never got an answer.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        response_time: Option<u64>,
    },
    /// Final per-process counters, written just before `run_end`.
    Counters {
        process: ProcessId,
        round_trips: u64,
        messages: u64,
    },
    RunEnd {
        tick: u64,
        /// The event queue drained before the tick budget ran out.
        quiescent: bool,
        net: NetStats,
    },
}

pub fn write_jsonl(events: &[TraceEvent], out: &mut impl Write) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut *out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_jsonl(events, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace does not start with a run_start event")]
    MissingStart,
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?;
        events.push(event);
    }
    if !matches!(events.first(), Some(TraceEvent::RunStart { .. })) {
        return Err(TraceError::MissingStart);
    }
    Ok(events)
}
