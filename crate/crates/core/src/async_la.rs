//! Asynchronous lattice agreement in `O(log f)` round-trips.
//!
//! Every process first exchanges its input with `n − f` others (round 0),
//! then walks a binary tree of *classifier* instances. A classifier splits
//! the processes sharing a label into a master group, whose values dominate,
//! and a slave group. After `R` classifier rounds every group holds a single
//! value, and values of distinct groups are comparable.
//!
//! [`AsyncLaProcess`] is the per-process state machine. The blocking
//! "send to all, wait for `n − f` acks" steps are encoded as phases; each
//! call to [`AsyncLaProcess::on_message`] performs one transition and
//! returns the messages to send.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Height, Lattice};
use crate::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LaError {
    #[error("f = {f} needs n > 2f for intersecting quorums, got n = {n}")]
    NoMajority { n: usize, f: usize },
    #[error("lattice agreement needs at least one process")]
    Empty,
    #[error("classifier round {round} outside 1..={rounds}")]
    RoundOutOfRange { round: u32, rounds: u32 },
}

/// Number of classifier rounds for a failure bound `f`: the smallest `R`
/// with `2^R > f`. Zero when `f = 0`.
pub fn classifier_rounds(f: usize) -> u32 {
    usize::BITS - f.leading_zeros()
}

/// A fractional label stored as `numerator / 2^shift`.
///
/// All labels of one run share the same shift, so label arithmetic and the
/// `h(w) > k` test are exact integer operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScaledLabel {
    pub numerator: i64,
    pub shift: u32,
}

impl ScaledLabel {
    /// The root label `n − f/2`, scaled by `2^(rounds + 1)`.
    pub fn initial(n: usize, f: usize, rounds: u32) -> Self {
        let shift = rounds + 1;
        Self {
            numerator: ((n as i64) << shift) - ((f as i64) << (shift - 1)),
            shift,
        }
    }

    /// True when a value of height `h` lies strictly above this label.
    pub fn exceeded_by(&self, h: Height) -> bool {
        ((h.0 as i64) << self.shift) > self.numerator
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / (1u64 << self.shift) as f64
    }
}

impl fmt::Display for ScaledLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.numerator, self.shift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    /// `h(w) > k`: the process performs the second write and joins the
    /// master group once it completes.
    MasterPending,
    Slave,
}

/// Joins the classifier input set and decides which side of the threshold
/// the result falls on.
pub fn classify<'a, L: Lattice + 'a>(
    values: impl IntoIterator<Item = &'a L>,
    label: ScaledLabel,
) -> (L, Class) {
    let w = crate::lattice::join_all(values);
    let class = if label.exceeded_by(w.height()) {
        Class::MasterPending
    } else {
        Class::Slave
    };
    (w, class)
}

/// Label for the next classifier round: `l ± f / 2^(round + 1)`.
pub fn label_after(class: Class, label: ScaledLabel, round: u32, f: usize) -> Result<ScaledLabel, LaError> {
    let rounds = label.shift.saturating_sub(1);
    if round == 0 || round > rounds {
        return Err(LaError::RoundOutOfRange { round, rounds });
    }
    let step = (f as i64) << (label.shift - 1 - round);
    let numerator = match class {
        Class::MasterPending => label.numerator + step,
        Class::Slave => label.numerator - step,
    };
    Ok(ScaledLabel { numerator, ..label })
}

/// One `⟨value, label⟩` pair recorded by a write.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AcceptEntry<L> {
    pub value: L,
    pub label: ScaledLabel,
}

/// Distinguishes the classifier's first write from the master-only second write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteStage {
    First,
    Second,
}

pub type AcceptSnapshot<L> = Arc<Vec<AcceptEntry<L>>>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LaMessage<L> {
    Value { value: L },
    Write { value: L, label: ScaledLabel, round: u32, stage: WriteStage },
    WriteAck { accepted: AcceptSnapshot<L>, round: u32, stage: WriteStage },
    Read { round: u32 },
    ReadAck { accepted: AcceptSnapshot<L>, round: u32 },
}

impl<L> LaMessage<L> {
    pub fn is_request(&self) -> bool {
        matches!(self, Self::Value { .. } | Self::Write { .. } | Self::Read { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Value { .. } => "value",
            Self::Write { .. } => "write",
            Self::WriteAck { .. } => "write_ack",
            Self::Read { .. } => "read",
            Self::ReadAck { .. } => "read_ack",
        }
    }
}

/// Where incoming writes are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptScope {
    /// One accept set per classifier round, addressed by the round carried
    /// in the request. Entering a round starts from that round's set.
    #[default]
    PerRound,
    /// A single accept set cleared whenever this process enters a new
    /// classifier round. Writes that arrive early, or from processes still
    /// in an older round, are lost on the next clear.
    ResetOnEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LaConfig {
    pub n: usize,
    pub f: usize,
    pub rounds: u32,
    pub accept_scope: AcceptScope,
}

impl LaConfig {
    pub fn new(n: usize, f: usize) -> Result<Self, LaError> {
        if n == 0 {
            return Err(LaError::Empty);
        }
        if 2 * f >= n {
            return Err(LaError::NoMajority { n, f });
        }
        Ok(Self {
            n,
            f,
            rounds: classifier_rounds(f),
            accept_scope: AcceptScope::PerRound,
        })
    }

    /// Overrides the number of classifier rounds. Used to reproduce the
    /// `ceil(log2 f)` schedule, which is too short when `f` is a power of two.
    pub fn with_rounds(mut self, rounds: u32) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn with_accept_scope(mut self, scope: AcceptScope) -> Self {
        self.accept_scope = scope;
        self
    }

    pub fn quorum(&self) -> usize {
        self.n - self.f
    }

    /// `3R + 1`: round 0 plus at most three round-trips per classifier.
    pub fn round_trip_bound(&self) -> u64 {
        3 * u64::from(self.rounds) + 1
    }

    /// `8n(R + 1)`, a loose cap on messages (requests and acks) one process sends.
    pub fn message_bound(&self) -> u64 {
        8 * self.n as u64 * (u64::from(self.rounds) + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Round0,
    Write,
    Read,
    SecondWrite,
    Decided,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LaEvent<L> {
    PhaseEntered { phase: Phase, round: u32, label: ScaledLabel },
    Classified { round: u32, class: Class, value: L },
    Decided { value: L },
}

/// Output of one transition.
#[derive(Debug, Clone)]
pub struct LaStep<L> {
    pub outgoing: Vec<(ProcessId, LaMessage<L>)>,
    pub events: Vec<LaEvent<L>>,
}

impl<L> Default for LaStep<L> {
    fn default() -> Self {
        Self {
            outgoing: Vec::new(),
            events: Vec::new(),
        }
    }
}

impl<L: Clone> LaStep<L> {
    pub fn decided(&self) -> Option<&L> {
        self.events.iter().find_map(|e| match e {
            LaEvent::Decided { value } => Some(value),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum RequestKey {
    Value,
    Write(u32, WriteStage),
    Read(u32),
}

/// Entries are kept sorted, so a snapshot does not depend on the order in
/// which writes arrived.
#[derive(Clone, Default)]
struct AcceptStore<L> {
    entries: BTreeSet<AcceptEntry<L>>,
    snapshot: Option<AcceptSnapshot<L>>,
}

impl<L: Lattice + Ord> AcceptStore<L> {
    fn insert(&mut self, entry: AcceptEntry<L>) {
        if self.entries.insert(entry) {
            self.snapshot = None;
        }
    }

    fn snapshot(&mut self) -> AcceptSnapshot<L> {
        self.snapshot
            .get_or_insert_with(|| Arc::new(self.entries.iter().cloned().collect()))
            .clone()
    }

    fn clear(&mut self) {
        self.entries.clear();
        self.snapshot = None;
    }
}

// The snapshot is a cache and stays out of comparisons and the output.
impl<L: PartialEq> PartialEq for AcceptStore<L> {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl<L: Eq> Eq for AcceptStore<L> {}

impl<L: Hash> Hash for AcceptStore<L> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.entries.hash(state);
    }
}

impl<L: fmt::Debug> fmt::Debug for AcceptStore<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(&self.entries).finish()
    }
}

/// Per-process AsyncLA state. Equality and hashing cover the whole state,
/// so processes can serve as keys when exploring schedules.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AsyncLaProcess<L> {
    id: ProcessId,
    config: LaConfig,
    input: L,
    round: u32,
    value: L,
    label: ScaledLabel,
    phase: Phase,
    /// Senders counted toward the current wait.
    acked: Vec<bool>,
    ack_count: usize,
    /// Join of collected values (round 0) or of same-label values seen in
    /// the current wait's acks.
    collected: L,
    /// `w` of the current classifier round, kept for the second write.
    pending_master: Option<L>,
    accept: BTreeMap<u32, AcceptStore<L>>,
    seen_requests: BTreeSet<(ProcessId, RequestKey)>,
    decision: Option<L>,
    history: Vec<L>,
    round_trips: u64,
    messages_sent: u64,
}

impl<L: Lattice + Ord> AsyncLaProcess<L> {
    /// Starts a process with input `input` and broadcasts `value(input, 0)`.
    pub fn new(id: ProcessId, config: LaConfig, input: L) -> (Self, LaStep<L>) {
        assert!(id < config.n, "process id {id} outside 0..{}", config.n);
        let label = ScaledLabel::initial(config.n, config.f, config.rounds);
        let mut process = Self {
            id,
            config,
            input: input.clone(),
            round: 0,
            value: input.clone(),
            label,
            phase: Phase::Round0,
            acked: vec![false; config.n],
            ack_count: 0,
            collected: input.clone(),
            pending_master: None,
            accept: BTreeMap::new(),
            seen_requests: BTreeSet::new(),
            decision: None,
            history: Vec::new(),
            round_trips: 0,
            messages_sent: 0,
        };
        let mut step = LaStep::default();
        step.events.push(LaEvent::PhaseEntered {
            phase: Phase::Round0,
            round: 0,
            label,
        });
        process.broadcast(&mut step, LaMessage::Value { value: input });
        (process, step)
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn config(&self) -> &LaConfig {
        &self.config
    }

    pub fn input(&self) -> &L {
        &self.input
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn label(&self) -> ScaledLabel {
        self.label
    }

    /// `v_i^r`, the value at the start of the current round.
    pub fn value(&self) -> &L {
        &self.value
    }

    pub fn decision(&self) -> Option<&L> {
        self.decision.as_ref()
    }

    /// Hashes only what decides future behaviour when no message is
    /// delivered twice. Counters, the value history and the records of who
    /// already answered are skipped, and each accept set is reduced to the join of its values
    /// per label, which is all a reader ever takes from it.
    pub fn hash_behaviour<H: Hasher>(&self, state: &mut H)
    where
        L: Hash,
    {
        (self.id, &self.config, &self.input, self.round, &self.value).hash(state);
        (self.label, self.phase, self.ack_count, &self.collected).hash(state);
        (&self.pending_master, &self.decision).hash(state);
        for (round, store) in &self.accept {
            round.hash(state);
            // Labels in increasing order, each with the join of its values.
            let mut last = None;
            while let Some(label) = store.entries.iter().map(|e| e.label).filter(|l| Some(*l) > last).min() {
                let values = store.entries.iter().filter(|e| e.label == label).map(|e| &e.value);
                (label, crate::lattice::join_all(values)).hash(state);
                last = Some(label);
            }
        }
    }

    /// Values held at the start of rounds `1, 2, …` (and the decision).
    pub fn value_history(&self) -> &[L] {
        &self.history
    }

    /// Completed request/ack waits, round 0 included.
    pub fn round_trips(&self) -> u64 {
        self.round_trips
    }

    /// Messages this process has sent, acks and self-addressed copies included.
    pub fn messages_sent(&self) -> u64 {
        self.messages_sent
    }

    pub fn on_message(&mut self, from: ProcessId, msg: LaMessage<L>) -> LaStep<L> {
        let mut step = LaStep::default();
        match msg {
            LaMessage::Value { value } => {
                if self.first_request(from, RequestKey::Value) {
                    self.on_value(from, value, &mut step);
                }
            }
            LaMessage::Write { value, label, round, stage } => {
                if self.first_request(from, RequestKey::Write(round, stage)) {
                    let store = self.store_for(round);
                    store.insert(AcceptEntry { value, label });
                    let accepted = store.snapshot();
                    self.send(&mut step, from, LaMessage::WriteAck { accepted, round, stage });
                }
            }
            LaMessage::Read { round } => {
                if self.first_request(from, RequestKey::Read(round)) {
                    let accepted = self.store_for(round).snapshot();
                    self.send(&mut step, from, LaMessage::ReadAck { accepted, round });
                }
            }
            LaMessage::WriteAck { accepted, round, stage } => {
                let expected = match stage {
                    WriteStage::First => Phase::Write,
                    WriteStage::Second => Phase::SecondWrite,
                };
                if self.phase == expected && round == self.round && self.count_ack(from) {
                    if stage == WriteStage::Second {
                        self.collect_same_label(&accepted);
                    }
                    if self.ack_count == self.config.quorum() {
                        match stage {
                            WriteStage::First => self.finish_first_write(&mut step),
                            WriteStage::Second => self.finish_second_write(&mut step),
                        }
                    }
                }
            }
            LaMessage::ReadAck { accepted, round } => {
                if self.phase == Phase::Read && round == self.round && self.count_ack(from) {
                    self.collect_same_label(&accepted);
                    if self.ack_count == self.config.quorum() {
                        self.finish_read(&mut step);
                    }
                }
            }
        }
        step
    }

    fn first_request(&mut self, from: ProcessId, key: RequestKey) -> bool {
        self.seen_requests.insert((from, key))
    }

    fn store_for(&mut self, round: u32) -> &mut AcceptStore<L> {
        let key = match self.config.accept_scope {
            AcceptScope::PerRound => round,
            AcceptScope::ResetOnEntry => 0,
        };
        self.accept.entry(key).or_insert_with(|| AcceptStore {
            entries: BTreeSet::new(),
            snapshot: None,
        })
    }

    fn count_ack(&mut self, from: ProcessId) -> bool {
        if self.acked[from] {
            return false;
        }
        self.acked[from] = true;
        self.ack_count += 1;
        true
    }

    fn collect_same_label(&mut self, accepted: &[AcceptEntry<L>]) {
        for entry in accepted.iter().filter(|e| e.label == self.label) {
            self.collected.join_assign(&entry.value);
        }
    }

    fn on_value(&mut self, from: ProcessId, value: L, step: &mut LaStep<L>) {
        if self.phase != Phase::Round0 || !self.count_ack(from) {
            return;
        }
        self.collected.join_assign(&value);
        if self.ack_count < self.config.quorum() {
            return;
        }
        self.round_trips += 1;
        self.value = std::mem::replace(&mut self.collected, L::bottom());
        self.history.push(self.value.clone());
        self.round = 1;
        if self.config.rounds == 0 {
            self.decide(step);
        } else {
            self.start_classifier(step);
        }
    }

    fn enter(&mut self, phase: Phase, step: &mut LaStep<L>) {
        self.phase = phase;
        self.acked.iter_mut().for_each(|a| *a = false);
        self.ack_count = 0;
        self.collected = L::bottom();
        step.events.push(LaEvent::PhaseEntered {
            phase,
            round: self.round,
            label: self.label,
        });
    }

    fn start_classifier(&mut self, step: &mut LaStep<L>) {
        if self.config.accept_scope == AcceptScope::ResetOnEntry {
            self.store_for(self.round).clear();
        }
        self.enter(Phase::Write, step);
        let msg = LaMessage::Write {
            value: self.value.clone(),
            label: self.label,
            round: self.round,
            stage: WriteStage::First,
        };
        self.broadcast(step, msg);
    }

    fn finish_first_write(&mut self, step: &mut LaStep<L>) {
        self.round_trips += 1;
        self.enter(Phase::Read, step);
        self.broadcast(step, LaMessage::Read { round: self.round });
    }

    fn finish_read(&mut self, step: &mut LaStep<L>) {
        self.round_trips += 1;
        let u = std::mem::replace(&mut self.collected, L::bottom());
        let (w, class) = classify(std::iter::once(&u), self.label);
        match class {
            Class::MasterPending => {
                self.pending_master = Some(w.clone());
                self.enter(Phase::SecondWrite, step);
                let msg = LaMessage::Write {
                    value: w,
                    label: self.label,
                    round: self.round,
                    stage: WriteStage::Second,
                };
                self.broadcast(step, msg);
            }
            Class::Slave => {
                step.events.push(LaEvent::Classified {
                    round: self.round,
                    class,
                    value: self.value.clone(),
                });
                self.advance(class, step);
            }
        }
    }

    fn finish_second_write(&mut self, step: &mut LaStep<L>) {
        self.round_trips += 1;
        let mut w = self.pending_master.take().expect("second write without a pending value");
        w.join_assign(&self.collected);
        self.value = w;
        step.events.push(LaEvent::Classified {
            round: self.round,
            class: Class::MasterPending,
            value: self.value.clone(),
        });
        self.advance(Class::MasterPending, step);
    }

    fn advance(&mut self, class: Class, step: &mut LaStep<L>) {
        self.label = label_after(class, self.label, self.round, self.config.f)
            .expect("classifier round within the configured schedule");
        self.history.push(self.value.clone());
        if self.round == self.config.rounds {
            self.decide(step);
        } else {
            self.round += 1;
            self.start_classifier(step);
        }
    }

    fn decide(&mut self, step: &mut LaStep<L>) {
        self.enter(Phase::Decided, step);
        self.decision = Some(self.value.clone());
        step.events.push(LaEvent::Decided {
            value: self.value.clone(),
        });
    }

    fn send(&mut self, step: &mut LaStep<L>, to: ProcessId, msg: LaMessage<L>) {
        self.messages_sent += 1;
        step.outgoing.push((to, msg));
    }

    fn broadcast(&mut self, step: &mut LaStep<L>, msg: LaMessage<L>) {
        for to in 0..self.config.n {
            self.send(step, to, msg.clone());
        }
    }
}
