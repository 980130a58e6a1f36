#![allow(dead_code)]

pub mod explore;

use std::collections::BTreeMap;

use larsm::checker::gla::{GlaHistory, Projection};
use larsm::checker::linearizability::{HistoryEntry, HistoryOp};
use larsm::gla::{GlaBody, GlaConfig, GlaMessage, GlaReplica, GlaStep, Learned, Truncation};
use larsm::rsm::command::{CommandId, CommandSet, Timestamp};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tries every order of the whole history (all keys at once) that respects
/// real time, and every choice of which pending puts take effect.
pub fn brute_force_linearizable(history: &[HistoryEntry]) -> bool {
    let ops: Vec<&HistoryEntry> = history
        .iter()
        .filter(|e| e.response.is_some() || matches!(e.op, HistoryOp::Put { .. }))
        .collect();
    let pending: Vec<usize> = (0..ops.len()).filter(|&i| ops[i].response.is_none()).collect();
    for mask in 0..1u32 << pending.len() {
        let chosen: Vec<usize> = (0..ops.len())
            .filter(|i| match pending.iter().position(|p| p == i) {
                Some(bit) => mask & (1 << bit) != 0,
                None => true,
            })
            .collect();
        let mut order = Vec::with_capacity(chosen.len());
        let mut used = vec![false; ops.len()];
        if permute(&ops, &chosen, &mut order, &mut used) {
            return true;
        }
    }
    false
}

fn precedes(a: &HistoryEntry, b: &HistoryEntry) -> bool {
    a.response.is_some_and(|r| r < b.invoke)
}

fn permute(ops: &[&HistoryEntry], chosen: &[usize], order: &mut Vec<usize>, used: &mut [bool]) -> bool {
    if order.len() == chosen.len() {
        return replay(ops, order);
    }
    for &i in chosen {
        if used[i] {
            continue;
        }
        // Everything that must come before i is already placed.
        // Skipped pending puts have no response, so they precede nothing.
        let ready = chosen.iter().all(|&j| used[j] || j == i || !precedes(ops[j], ops[i]));
        if !ready {
            continue;
        }
        used[i] = true;
        order.push(i);
        if permute(ops, chosen, order, used) {
            return true;
        }
        order.pop();
        used[i] = false;
    }
    false
}

fn replay(ops: &[&HistoryEntry], order: &[usize]) -> bool {
    let mut map: BTreeMap<&str, (Timestamp, &str)> = BTreeMap::new();
    for &i in order {
        match &ops[i].op {
            HistoryOp::Put { key, value, ts } => {
                if map.get(key.as_str()).is_none_or(|(cur, _)| ts > cur) {
                    map.insert(key, (*ts, value));
                }
            }
            HistoryOp::Get { key, value } => {
                if map.get(key.as_str()).map(|(_, v)| *v) != value.as_deref() {
                    return false;
                }
            }
        }
    }
    true
}

/// A small random history over two keys. Gets return a value drawn from the
/// puts on their key (or nothing), so some histories are linearizable and
/// many are not. Some puts stay pending.
pub fn random_history(rng: &mut impl Rng, len: usize) -> Vec<HistoryEntry> {
    let keys = ["x", "y"];
    let mut counters: Vec<u64> = (1..=len as u64 * 2).collect();
    counters.shuffle(rng);
    let mut history = Vec::with_capacity(len);
    let mut puts: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (i, &counter) in counters.iter().enumerate().take(len) {
        let key = keys[rng.gen_range(0..keys.len())];
        let invoke = rng.gen_range(0..20);
        let response = if rng.gen_bool(0.85) {
            Some(invoke + rng.gen_range(0..8))
        } else {
            None
        };
        let client = i as u32;
        let op = if rng.gen_bool(0.5) {
            let value = format!("v{i}");
            puts.entry(key).or_default().push(value.clone());
            HistoryOp::Put {
                key: key.to_owned(),
                value,
                ts: Timestamp::new(counter, client),
            }
        } else {
            HistoryOp::Get {
                key: key.to_owned(),
                value: None,
            }
        };
        history.push(HistoryEntry { client, op, invoke, response });
    }
    for entry in &mut history {
        if let HistoryOp::Get { key, value } = &mut entry.op {
            let options = puts.get(key.as_str()).map(Vec::as_slice).unwrap_or_default();
            if !options.is_empty() && rng.gen_bool(0.8) {
                *value = Some(options[rng.gen_range(0..options.len())].clone());
            }
        }
    }
    history
}

/// GLA replicas wired to a message pool, for tests that pick the delivery
/// order themselves.
pub struct Cluster {
    pub replicas: Vec<GlaReplica>,
    pub pending: Vec<(usize, usize, GlaMessage)>,
    pub submitted: Vec<(usize, CommandId)>,
    /// `learned[p][s]`
    pub learned: Vec<Vec<CommandSet>>,
    pub rounds: Vec<Vec<u32>>,
    /// Every sequence completion, by replica.
    pub learns: Vec<(usize, Learned)>,
    /// Deliveries skip the `try_agree` that normally follows them; the
    /// replica's next local step is simply late.
    pub lazy: bool,
    /// Learns after which the accept set still met `LV[s − 1]`, checked
    /// here rather than trusted from the replica.
    pub overlaps: Vec<(usize, u64)>,
}

impl Cluster {
    pub fn new(config: GlaConfig) -> Self {
        let n = config.n;
        Self {
            replicas: (0..n).map(|i| GlaReplica::new(i, config)).collect(),
            pending: Vec::new(),
            submitted: Vec::new(),
            learned: vec![Vec::new(); n],
            rounds: vec![Vec::new(); n],
            learns: Vec::new(),
            lazy: false,
            overlaps: Vec::new(),
        }
    }

    fn absorb(&mut self, at: usize, step: GlaStep) {
        for l in step.learned() {
            assert_eq!(l.seq as usize, self.learned[at].len(), "replica {at} skipped a sequence");
            self.learned[at].push(l.value.clone());
            self.rounds[at].push(l.rounds);
            self.learns.push((at, l.clone()));
            self.replicas[at].mark_executed(l.seq);
            if l.seq > 0 {
                let previous = &self.learned[at][l.seq as usize - 1];
                if !self.replicas[at].accepted().intersection(previous).is_empty() {
                    self.overlaps.push((at, l.seq));
                }
            }
        }
        self.pending.extend(step.outgoing.into_iter().map(|(to, m)| (at, to, m)));
    }

    pub fn submit(&mut self, at: usize, command: CommandId) {
        self.submitted.push((at, command));
        self.replicas[at].receive_value(&CommandSet::singleton(command));
        let step = self.replicas[at].try_agree();
        self.absorb(at, step);
    }

    pub fn deliver(&mut self, index: usize) {
        let (from, to, msg) = self.pending.remove(index);
        let mut step = self.replicas[to].on_message(from, msg);
        if !self.lazy {
            step.extend(self.replicas[to].try_agree());
        }
        self.absorb(to, step);
    }

    /// Delivers the oldest pending message matching `pick`.
    pub fn deliver_first(&mut self, pick: impl Fn(usize, usize, &GlaMessage) -> bool) -> bool {
        match self.pending.iter().position(|(f, t, m)| pick(*f, *t, m)) {
            Some(i) => {
                self.deliver(i);
                true
            }
            None => false,
        }
    }

    pub fn agree_all(&mut self) {
        for at in 0..self.replicas.len() {
            let step = self.replicas[at].try_agree();
            self.absorb(at, step);
        }
    }

    /// Delivers everything in random order, with local steps on time.
    pub fn run_random(&mut self, rng: &mut impl Rng) {
        self.lazy = false;
        self.agree_all();
        while !self.pending.is_empty() {
            let i = rng.gen_range(0..self.pending.len());
            self.deliver(i);
        }
    }

    pub fn history(&self) -> GlaHistory {
        let n = self.replicas.len();
        GlaHistory {
            n,
            crashed: vec![false; n],
            submitted: self.submitted.clone(),
            learned: self.learned.clone(),
            rounds: self.rounds.clone(),
            max_rounds: self.replicas[0].config().round_bound(),
            projection: Projection::AllCommands,
        }
    }
}

pub fn cmd(c: char) -> CommandId {
    CommandId::update(0, 0, c as u64)
}

pub fn set(items: &str) -> CommandSet {
    items.chars().map(cmd).collect()
}

fn prop(from: usize, to: usize, seq: u64) -> impl Fn(usize, usize, &GlaMessage) -> bool {
    move |f, t, m| f == from && t == to && m.seq == seq && matches!(m.body, GlaBody::Prop { .. })
}

fn ack(from: usize, to: usize, seq: u64) -> impl Fn(usize, usize, &GlaMessage) -> bool {
    move |f, t, m| f == from && t == to && m.seq == seq && matches!(m.body, GlaBody::Ack { .. })
}

/// Three replicas learn `{a}`, `{a, b}` and `{a, b, c}` for sequence 0.
pub fn staircase(truncation: Truncation) -> Cluster {
    let mut config = GlaConfig::new(3, 1);
    config.truncation = truncation;
    let mut c = Cluster::new(config);
    c.lazy = true;
    c.submit(0, cmd('a'));
    assert!(c.deliver_first(prop(0, 0, 0)) && c.deliver_first(prop(0, 1, 0)));
    assert!(c.deliver_first(ack(0, 0, 0)) && c.deliver_first(ack(1, 0, 0)));
    c.submit(1, cmd('b'));
    assert!(c.deliver_first(prop(1, 1, 0)) && c.deliver_first(prop(1, 2, 0)));
    c.submit(2, cmd('c'));
    assert!(c.deliver_first(prop(2, 2, 0)) && c.deliver_first(prop(2, 1, 0)));
    assert!(c.deliver_first(ack(2, 2, 0)) && c.deliver_first(ack(1, 2, 0)));
    assert!(c.deliver_first(ack(1, 1, 0)) && c.deliver_first(ack(2, 1, 0)));
    let first: Vec<&CommandSet> = c.learned.iter().map(|lv| &lv[0]).collect();
    assert_eq!(first, [&set("a"), &set("ab"), &set("abc")]);
    c
}

/// Replica 0 starts sequence 1 with `{d}` and only replica 2 answers.
pub fn naive_follow_up(c: &mut Cluster) {
    c.lazy = true;
    c.submit(0, cmd('d'));
    assert!(c.deliver_first(prop(0, 0, 1)) && c.deliver_first(prop(0, 2, 1)));
    assert!(c.deliver_first(ack(0, 0, 1)) && c.deliver_first(ack(2, 0, 1)));
    c.run_random(&mut ChaCha8Rng::seed_from_u64(3));
}

