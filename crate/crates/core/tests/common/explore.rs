//! Exhaustive search over the delivery schedules of a crash-free AsyncLA run.
//!
//! The search enumerates a normal form of schedules rather than raw message
//! orders. Every reduction below keeps the set of reachable decisions.
//!
//! - An acceptor's state is independent of its own proposer's state, so an
//!   ack can be delivered the moment it is created. The only choice left is
//!   whether the proposer counts it (take) or never sees it (drop).
//! - Round-0 values are all sent at start, so each process picks up front
//!   which quorum of values it waits for.
//! - First-write acks carry nothing the proposer reads. Taking the first
//!   quorum of them is at least as early as any other choice, and a later
//!   completion is the same run with the following reads delayed.
//! - A read whose ack is dropped changes nothing, so reads are only ever
//!   taken, and reads whose proposer has moved on are discarded.
//! - A write whose ack nobody counts commutes with everything except reads
//!   and counted second-write acks at the same acceptor. Such writes are
//!   parked and, right before each of those observations, any subset of the
//!   parked writes at that acceptor is delivered first. A parked write that
//!   would not change its acceptor is discarded, and parked writes are told
//!   apart by what they write and where, not by who sent them.
//! - Visited states are keyed by behaviour only: counters and histories are
//!   ignored and accept sets are compared by their join per label. Keys are
//!   128-bit hashes, so a collision could in principle prune a state.
//! - Permuting process ids together with their input atoms maps runs to
//!   runs and keeps comparability, so only one round-0 quorum choice per
//!   orbit is explored.

use std::collections::{BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use larsm::async_la::{AsyncLaProcess, LaConfig, LaMessage, Phase, WriteStage};
use larsm::lattice::{BitSet64, Lattice};
use xxhash_rust::xxh3::Xxh3;

type Process = AsyncLaProcess<BitSet64>;
type Message = LaMessage<BitSet64>;
/// (proposer, acceptor, request)
type Request = (usize, usize, Message);

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

#[derive(Clone)]
struct State {
    procs: Vec<Process>,
    /// Requests whose ack some proposer may still count.
    requests: Vec<Request>,
    /// Writes whose ack nobody will count.
    parked: Vec<Request>,
    /// Acks counted toward each proposer's current wait.
    taken: Vec<usize>,
}

pub struct Exploration {
    pub states: usize,
    pub terminals: u64,
    pub outcomes: BTreeSet<Vec<BitSet64>>,
    /// First terminal whose decisions are not pairwise comparable.
    pub incomparable: Option<Vec<BitSet64>>,
    /// Terminals where some decision misses its own input or goes beyond
    /// the join of all inputs.
    pub invalid: u64,
}

/// Whether `p` is waiting for the ack to `msg`.
fn awaits(p: &Process, msg: &Message) -> bool {
    match msg {
        LaMessage::Write { round, stage, .. } | LaMessage::WriteAck { round, stage, .. } => {
            *round == p.round()
                && matches!(
                    (p.phase(), stage),
                    (Phase::Write, WriteStage::First) | (Phase::SecondWrite, WriteStage::Second)
                )
        }
        LaMessage::Read { round } | LaMessage::ReadAck { round, .. } => *round == p.round() && p.phase() == Phase::Read,
        LaMessage::Value { .. } => false,
    }
}

fn behaviour(p: &Process) -> u128 {
    let mut h = Xxh3::new();
    p.hash_behaviour(&mut h);
    h.digest128()
}

/// What a parked write does when it lands, independent of who sent it.
fn effect(r: &Request) -> impl Hash + '_ {
    match &r.2 {
        LaMessage::Write { value, label, round, .. } => (r.1, value, label, round),
        _ => unreachable!("only writes are parked"),
    }
}

fn hash_one(value: &impl Hash) -> u64 {
    let mut h = Xxh3::new();
    value.hash(&mut h);
    h.finish()
}

impl State {
    /// Counts an ack at proposer `to`, then parks or discards requests
    /// nobody waits for any more.
    fn take(&mut self, from: usize, to: usize, msg: Message) {
        let before = (self.procs[to].phase(), self.procs[to].round());
        self.taken[to] += 1;
        let step = self.procs[to].on_message(from, msg);
        if (self.procs[to].phase(), self.procs[to].round()) != before {
            self.taken[to] = 0;
        }
        self.requests.extend(step.outgoing.into_iter().map(|(dst, m)| (to, dst, m)));
        let mut i = 0;
        while i < self.requests.len() {
            let (p, _, m) = &self.requests[i];
            if awaits(&self.procs[*p], m) {
                i += 1;
                continue;
            }
            let r = self.requests.swap_remove(i);
            if matches!(r.2, LaMessage::Write { .. }) {
                self.parked.push(r);
            }
        }
        self.purge();
    }

    /// Drops parked writes that would not change their acceptor.
    fn purge(&mut self) {
        if self.parked.is_empty() {
            return;
        }
        let procs = &self.procs;
        let now: Vec<u128> = procs.iter().map(behaviour).collect();
        self.parked.retain(|(from, to, msg)| {
            let mut p = procs[*to].clone();
            p.on_message(*from, msg.clone());
            behaviour(&p) != now[*to]
        });
    }

    /// Some schedule from here can still complete every proposer's wait.
    fn viable(&self) -> bool {
        self.procs.iter().enumerate().all(|(i, p)| {
            if matches!(p.phase(), Phase::Decided | Phase::Round0) {
                return true;
            }
            let open = self.requests.iter().filter(|(from, _, _)| *from == i).count();
            self.taken[i] + open >= p.config().quorum()
        })
    }

    fn key(&self) -> u128 {
        let mut requests: Vec<u64> = self.requests.iter().map(hash_one).collect();
        requests.sort_unstable();
        let mut parked: Vec<u64> = self.parked.iter().map(|r| hash_one(&effect(r))).collect();
        parked.sort_unstable();
        parked.dedup();
        let mut h = Xxh3::new();
        for p in &self.procs {
            p.hash_behaviour(&mut h);
        }
        (requests, parked, &self.taken).hash(&mut h);
        h.digest128()
    }

    /// Every state reached by first delivering some subset of the writes
    /// parked at `acceptor`.
    fn with_parked_subsets(&self, acceptor: usize) -> Vec<State> {
        let here: Vec<usize> = (0..self.parked.len()).filter(|&i| self.parked[i].1 == acceptor).collect();
        let mut out = Vec::with_capacity(1 << here.len());
        for mask in 0..1u32 << here.len() {
            let mut s = self.clone();
            let chosen = (0..here.len()).filter(|b| mask & (1 << b) != 0).map(|b| here[b]);
            // Back to front so earlier indices stay valid.
            for i in chosen.rev() {
                let (from, to, msg) = s.parked.remove(i);
                s.procs[to].on_message(from, msg);
            }
            s.purge();
            out.push(s);
        }
        out
    }

    fn successors(&self) -> Vec<State> {
        let mut out = Vec::new();
        let mut tried = HashSet::new();
        for (i, request) in self.requests.iter().enumerate() {
            let id = hash_one(request);
            if !tried.insert(id) {
                continue;
            }
            let (_, acceptor, ref msg) = *request;
            if let LaMessage::Write { stage: WriteStage::Second, .. } = msg {
                let mut dropped = self.clone();
                let r = dropped.requests.swap_remove(i);
                dropped.parked.push(r);
                dropped.purge();
                out.push(dropped);
            }
            let observes = !matches!(msg, LaMessage::Write { stage: WriteStage::First, .. });
            let bases = if observes {
                self.with_parked_subsets(acceptor)
            } else {
                vec![self.clone()]
            };
            for mut s in bases {
                // Parked deliveries never touch `requests`, so `i` still holds.
                let (from, to, msg) = s.requests.swap_remove(i);
                let step = s.procs[to].on_message(from, msg);
                let (_, ack) = step.outgoing.into_iter().next().expect("requests are answered");
                s.take(to, from, ack);
                out.push(s);
            }
        }
        out
    }
}

/// Quorum choices for round 0, one per orbit under process permutations.
/// Entry `i` is the process whose value `i` does not wait for.
fn root_choices() -> Vec<[usize; 3]> {
    let mut reps = Vec::new();
    for code in 0..27 {
        let skip = [code % 3, code / 3 % 3, code / 9];
        let canonical = PERMUTATIONS
            .iter()
            .map(|pi| {
                let mut image = [0; 3];
                for i in 0..3 {
                    image[pi[i]] = pi[skip[i]];
                }
                image
            })
            .min()
            .unwrap();
        if canonical == skip {
            reps.push(skip);
        }
    }
    reps
}

fn root(config: LaConfig, skip: [usize; 3]) -> State {
    let mut procs = Vec::new();
    let mut values = Vec::new();
    for i in 0..3 {
        let (p, step) = AsyncLaProcess::new(i, config, BitSet64::atom(i as u32));
        procs.push(p);
        values.extend(step.outgoing.into_iter().map(|(to, m)| (i, to, m)));
    }
    let mut state = State {
        procs,
        requests: Vec::new(),
        parked: Vec::new(),
        taken: vec![0; 3],
    };
    for (from, to, msg) in values {
        if from != skip[to] {
            state.take(from, to, msg);
        }
    }
    state
}

/// Explores every schedule of three processes with inputs `{0}`, `{1}`, `{2}`.
pub fn explore_three(config: LaConfig) -> Exploration {
    assert_eq!((config.n, config.f), (3, 1));
    let top = BitSet64(0b111);
    let mut seen = HashSet::new();
    let mut stack: Vec<State> = root_choices().into_iter().map(|skip| root(config, skip)).collect();
    let mut out = Exploration {
        states: 0,
        terminals: 0,
        outcomes: BTreeSet::new(),
        incomparable: None,
        invalid: 0,
    };
    let progress = std::env::var_os("EXPLORE_PROGRESS").is_some();
    while let Some(state) = stack.pop() {
        if progress && seen.len() % 100_000 == 0 {
            eprintln!("{} states, {} terminals", seen.len(), out.terminals);
        }
        if state.requests.is_empty() {
            let Some(decisions) = state.procs.iter().map(|p| p.decision().copied()).collect::<Option<Vec<_>>>() else {
                continue;
            };
            out.terminals += 1;
            let comparable = decisions.iter().all(|a| decisions.iter().all(|b| a.comparable(b)));
            if !comparable && out.incomparable.is_none() {
                out.incomparable = Some(decisions.clone());
            }
            let valid = decisions
                .iter()
                .enumerate()
                .all(|(i, d)| BitSet64::atom(i as u32).leq(d) && d.leq(&top));
            if !valid {
                out.invalid += 1;
            }
            out.outcomes.insert(decisions);
            continue;
        }
        for s in state.successors() {
            if s.viable() && seen.insert(s.key()) {
                stack.push(s);
            }
        }
    }
    out.states = seen.len();
    out
}
