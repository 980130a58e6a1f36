//! Generalized lattice agreement over command sets.
//!
//! Each replica runs a sequence of lattice agreement instances numbered
//! `0, 1, 2, …`. Instance `s` repeatedly proposes the replica's accept set
//! and waits for `n − f` acks: a decide ack ends it with the join of the
//! decided values, a majority of accept acks ends it with the proposal, and
//! otherwise the reject values are folded in and the next round starts.
//!
//! Two changes keep the state small enough for a state machine:
//!
//! * after learning `LV[s]` the replica drops `LV[s − 1]` from its accept
//!   set (only the previous sequence, never everything learned);
//! * a proposal for an older sequence is answered with the decided value
//!   and its contents are buffered for this replica's next proposal, so
//!   clients' commands are never forwarded blindly.
//!
//! Learned maps are garbage collected below the lowest sequence every
//! replica has started and this replica has executed; decide acks for
//! collected sequences are answered with the join of everything collected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lattice::Lattice;
use crate::rsm::command::{contains_updates, CommandSet};
use crate::ProcessId;

/// Subset test applied to incoming proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetRule {
    /// Plain set inclusion.
    AllCommands,
    /// Inclusion of update commands only; null commands are ignored.
    #[default]
    UpdatesOnly,
}

impl SubsetRule {
    pub fn included(&self, a: &CommandSet, b: &CommandSet) -> bool {
        match self {
            Self::AllCommands => a.leq(b),
            Self::UpdatesOnly => contains_updates(a, b),
        }
    }
}

/// What is removed from the accept set when a sequence finishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Remove `LV[s − 1]` after learning `LV[s]`.
    #[default]
    PreviousSequence,
    /// Remove every learned command. Breaks comparability; kept so the
    /// checkers can be shown to catch it.
    AllLearned,
    /// Never truncate.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlaConfig {
    pub n: usize,
    pub f: usize,
    pub subset_rule: SubsetRule,
    pub truncation: Truncation,
    /// Buffer the value of a stale proposal for the next own proposal.
    pub buffer_stale_proposals: bool,
    pub gc: bool,
}

impl GlaConfig {
    pub fn new(n: usize, f: usize) -> Self {
        assert!(n > 2 * f, "GLA needs n > 2f (n = {n}, f = {f})");
        Self {
            n,
            f,
            subset_rule: SubsetRule::default(),
            truncation: Truncation::default(),
            buffer_stale_proposals: true,
            gc: true,
        }
    }

    pub fn quorum(&self) -> usize {
        self.n - self.f
    }

    /// Rounds per sequence the protocol is meant to need. Not enforced: a
    /// sequence keeps running rounds until it decides.
    pub fn round_bound(&self) -> u32 {
        self.f as u32 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckKind {
    Accept,
    Reject,
    Decide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GlaBody {
    Prop { value: CommandSet, round: u32, seq: u64 },
    Ack { kind: AckKind, value: Option<CommandSet>, round: u32, seq: u64 },
}

/// A protocol message plus the sender's progress watermark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlaMessage {
    pub body: GlaBody,
    /// Sender's current sequence number.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Learned {
    pub seq: u64,
    pub value: CommandSet,
    /// Commands not in the learned value before this sequence.
    pub newly: CommandSet,
    /// Proposal rounds used by this sequence.
    pub rounds: u32,
    pub accept_len: usize,
    /// Whether the accept set still intersected `LV[s − 1]` right after truncation.
    pub accept_overlaps_previous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum GlaEvent {
    ProposalStarted { seq: u64, round: u32, size: usize, updates: usize },
    SequenceLearned(Learned),
    Collected { below: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct GlaStep {
    pub outgoing: Vec<(ProcessId, GlaMessage)>,
    pub events: Vec<GlaEvent>,
}

impl GlaStep {
    pub fn learned(&self) -> impl Iterator<Item = &Learned> {
        self.events.iter().filter_map(|e| match e {
            GlaEvent::SequenceLearned(l) => Some(l),
            _ => None,
        })
    }

    pub fn extend(&mut self, other: GlaStep) {
        self.outgoing.extend(other.outgoing);
        self.events.extend(other.events);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlaStats {
    pub proposals: u64,
    pub proposal_commands: u64,
    pub proposal_updates: u64,
    pub sequences: u64,
    pub max_rounds: u32,
    pub acks_sent: BTreeMap<String, u64>,
    pub messages_sent: u64,
    pub max_lv_len: usize,
    pub max_accept_len: usize,
}

#[derive(Debug, Clone)]
struct RoundTally {
    acked: Vec<bool>,
    count: usize,
    accepts: usize,
    rejected: CommandSet,
    decided: Option<CommandSet>,
}

impl RoundTally {
    fn new(n: usize) -> Self {
        Self {
            acked: vec![false; n],
            count: 0,
            accepts: 0,
            rejected: CommandSet::new(),
            decided: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Deferred {
    from: ProcessId,
    value: CommandSet,
    round: u32,
}

/// One replica's generalized lattice agreement state.
#[derive(Debug, Clone)]
pub struct GlaReplica {
    id: ProcessId,
    config: GlaConfig,
    seq: u64,
    max_seq: i64,
    buffered: CommandSet,
    accepted: CommandSet,
    learned_map: BTreeMap<u64, CommandSet>,
    /// Join of all collected `LV` entries; they all lie below `collected_below`.
    collected: CommandSet,
    collected_below: u64,
    learned: CommandSet,
    active: bool,
    round: u32,
    proposal: CommandSet,
    tally: RoundTally,
    deferred: BTreeMap<u64, Vec<Deferred>>,
    progress: Vec<u64>,
    executed: Option<u64>,
    stats: GlaStats,
}

impl GlaReplica {
    pub fn new(id: ProcessId, config: GlaConfig) -> Self {
        assert!(id < config.n);
        Self {
            id,
            config,
            seq: 0,
            max_seq: -1,
            buffered: CommandSet::new(),
            accepted: CommandSet::new(),
            learned_map: BTreeMap::new(),
            collected: CommandSet::new(),
            collected_below: 0,
            learned: CommandSet::new(),
            active: false,
            round: 0,
            proposal: CommandSet::new(),
            tally: RoundTally::new(config.n),
            deferred: BTreeMap::new(),
            progress: vec![0; config.n],
            executed: None,
            stats: GlaStats::default(),
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn config(&self) -> &GlaConfig {
        &self.config
    }

    /// Next sequence number to learn.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn max_seq(&self) -> i64 {
        self.max_seq
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn buffered(&self) -> &CommandSet {
        &self.buffered
    }

    pub fn accepted(&self) -> &CommandSet {
        &self.accepted
    }

    pub fn learned_map(&self) -> &BTreeMap<u64, CommandSet> {
        &self.learned_map
    }

    /// `LearnedVal`: the join of every learned value so far.
    pub fn learned(&self) -> &CommandSet {
        &self.learned
    }

    pub fn stats(&self) -> &GlaStats {
        &self.stats
    }

    pub fn progress(&self) -> &[u64] {
        &self.progress
    }

    /// Adds client input to the proposal buffer.
    pub fn receive_value(&mut self, value: &CommandSet) {
        self.buffered.join_assign(value);
    }

    /// Records that the state machine applied everything up to `seq`.
    pub fn mark_executed(&mut self, seq: u64) {
        self.executed = Some(self.executed.map_or(seq, |e| e.max(seq)));
    }

    /// Starts instance `seq` if idle and there is something to propose or
    /// another replica is already ahead.
    pub fn try_agree(&mut self) -> GlaStep {
        let mut step = GlaStep::default();
        if !self.buffered.is_empty() {
            self.buffered.subtract(&self.learned);
        }
        let behind = self.max_seq >= self.seq as i64;
        // Accepted but unlearned commands would otherwise wait for some other
        // replica to start the next sequence, which may never happen.
        let unlearned = self.accepted.iter().any(|c| !self.learned.contains(c));
        if self.active || (self.buffered.is_empty() && !behind && !unlearned) {
            return step;
        }
        self.active = true;
        let buffered = std::mem::take(&mut self.buffered);
        self.accepted.join_assign(&buffered);
        self.round = 1;
        self.propose(&mut step);
        step
    }

    pub fn on_message(&mut self, from: ProcessId, msg: GlaMessage) -> GlaStep {
        let mut step = GlaStep::default();
        self.progress[from] = self.progress[from].max(msg.seq);
        match msg.body {
            GlaBody::Prop { value, round, seq } => self.on_prop(from, value, round, seq, &mut step),
            GlaBody::Ack { kind, value, round, seq } => self.on_ack(from, kind, value, round, seq, &mut step),
        }
        if self.config.gc {
            self.collect_garbage(&mut step);
        }
        step
    }

    fn on_prop(&mut self, from: ProcessId, value: CommandSet, round: u32, seq: u64, step: &mut GlaStep) {
        if seq < self.seq {
            let decided = self.decided_value(seq);
            if self.config.buffer_stale_proposals {
                // Commands this replica already learned need no new instance;
                // re-buffering them would restart agreement forever.
                self.buffered.join_assign(&value.difference(&self.learned));
            }
            self.reply(step, from, AckKind::Decide, Some(decided), round, seq);
            return;
        }
        self.max_seq = self.max_seq.max(seq as i64);
        if seq > self.seq {
            self.deferred.entry(seq).or_default().push(Deferred { from, value, round });
            return;
        }
        self.answer_current(from, value, round, step);
    }

    fn answer_current(&mut self, from: ProcessId, value: CommandSet, round: u32, step: &mut GlaStep) {
        if self.config.subset_rule.included(&self.accepted, &value) {
            self.reply(step, from, AckKind::Accept, None, round, self.seq);
            // Under the update-only rule `value` may lack null commands we hold.
            self.accepted.join_assign(&value);
        } else {
            let accepted = self.accepted.clone();
            self.reply(step, from, AckKind::Reject, Some(accepted), round, self.seq);
        }
    }

    fn decided_value(&self, seq: u64) -> CommandSet {
        match self.learned_map.get(&seq) {
            Some(v) => v.clone(),
            None => {
                debug_assert!(seq < self.collected_below, "LV[{seq}] missing but not collected");
                self.collected.clone()
            }
        }
    }

    fn on_ack(
        &mut self,
        from: ProcessId,
        kind: AckKind,
        value: Option<CommandSet>,
        round: u32,
        seq: u64,
        step: &mut GlaStep,
    ) {
        if !self.active || seq != self.seq || round != self.round || self.tally.acked[from] {
            return;
        }
        self.tally.acked[from] = true;
        self.tally.count += 1;
        match kind {
            AckKind::Accept => self.tally.accepts += 1,
            AckKind::Reject => {
                if let Some(v) = value {
                    self.tally.rejected.join_assign(&v);
                }
            }
            AckKind::Decide => {
                let v = value.unwrap_or_default();
                self.tally.decided.get_or_insert_with(CommandSet::new).join_assign(&v);
            }
        }
        if self.tally.count < self.config.quorum() {
            return;
        }
        if let Some(decided) = self.tally.decided.take() {
            self.finish(decided, step);
        } else if 2 * self.tally.accepts > self.config.n {
            let proposal = std::mem::take(&mut self.proposal);
            self.finish(proposal, step);
        } else {
            let rejected = std::mem::take(&mut self.tally.rejected);
            self.accepted.join_assign(&rejected);
            self.round += 1;
            self.propose(step);
        }
    }

    fn propose(&mut self, step: &mut GlaStep) {
        self.proposal = self.accepted.clone();
        self.tally = RoundTally::new(self.config.n);
        self.progress[self.id] = self.seq;
        self.stats.proposals += 1;
        self.stats.proposal_commands += self.proposal.len() as u64;
        let updates = self.proposal.iter().filter(|c| c.is_update()).count();
        self.stats.proposal_updates += updates as u64;
        step.events.push(GlaEvent::ProposalStarted {
            seq: self.seq,
            round: self.round,
            size: self.proposal.len(),
            updates,
        });
        let body = GlaBody::Prop {
            value: self.proposal.clone(),
            round: self.round,
            seq: self.seq,
        };
        for to in 0..self.config.n {
            self.send(step, to, body.clone());
        }
    }

    fn finish(&mut self, value: CommandSet, step: &mut GlaStep) {
        let seq = self.seq;
        let newly = value.difference(&self.learned);
        self.learned.join_assign(&value);
        self.learned_map.insert(seq, value.clone());
        let mut overlaps = false;
        match self.config.truncation {
            Truncation::PreviousSequence => {
                if let Some(prev) = seq.checked_sub(1) {
                    let prev_value = self.decided_value(prev);
                    self.accepted.subtract(&prev_value);
                    overlaps = self.accepted.iter().any(|c| prev_value.contains(c));
                }
            }
            Truncation::AllLearned => {
                let learned = self.learned.clone();
                self.accepted.subtract(&learned);
            }
            Truncation::Disabled => {}
        }
        self.seq += 1;
        self.progress[self.id] = self.seq;
        self.active = false;
        self.stats.sequences += 1;
        self.stats.max_rounds = self.stats.max_rounds.max(self.round);
        self.stats.max_accept_len = self.stats.max_accept_len.max(self.accepted.len());
        self.stats.max_lv_len = self.stats.max_lv_len.max(self.learned_map.len());
        step.events.push(GlaEvent::SequenceLearned(Learned {
            seq,
            value,
            newly,
            rounds: self.round,
            accept_len: self.accepted.len(),
            accept_overlaps_previous: overlaps,
        }));
        if let Some(waiting) = self.deferred.remove(&self.seq) {
            for d in waiting {
                self.answer_current(d.from, d.value, d.round, step);
            }
        }
    }

    fn collect_garbage(&mut self, step: &mut GlaStep) {
        let min_started = self.progress.iter().copied().min().unwrap_or(0);
        let Some(executed) = self.executed else {
            return;
        };
        // LV[s − 1] stays for truncation.
        let keep_from = min_started.min(executed).min(self.seq.saturating_sub(1));
        if keep_from <= self.collected_below {
            return;
        }
        let retained = self.learned_map.split_off(&keep_from);
        for (_, v) in std::mem::replace(&mut self.learned_map, retained) {
            self.collected.join_assign(&v);
        }
        self.collected_below = keep_from;
        step.events.push(GlaEvent::Collected { below: keep_from });
    }

    fn reply(&mut self, step: &mut GlaStep, to: ProcessId, kind: AckKind, value: Option<CommandSet>, round: u32, seq: u64) {
        let name = match kind {
            AckKind::Accept => "accept",
            AckKind::Reject => "reject",
            AckKind::Decide => "decide",
        };
        *self.stats.acks_sent.entry(name.to_owned()).or_default() += 1;
        self.send(step, to, GlaBody::Ack { kind, value, round, seq });
    }

    fn send(&mut self, step: &mut GlaStep, to: ProcessId, body: GlaBody) {
        self.stats.messages_sent += 1;
        step.outgoing.push((to, GlaMessage { body, seq: self.seq }));
    }
}
