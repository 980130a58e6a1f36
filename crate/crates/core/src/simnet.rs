//! Seeded discrete-event network.
//!
//! [`Network`] owns the event queue for one run. Messages get a random delay
//! in `minDelay..=maxDelay` ticks and may be duplicated. Links are reliable
//! between live processes: a message is dropped only when its destination
//! has crashed, and messages crossing an active partition are held and
//! resent with fresh delays on heal. With `fifoPerPair` set, messages on
//! one ordered pair are delivered in send order.
//!
//! Events at the same tick pop in scheduling order, and all randomness
//! comes from one ChaCha stream, so a run is a pure function of its inputs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ProcessId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default = "default_min_delay")]
    pub min_delay: u64,
    #[serde(default = "default_max_delay")]
    pub max_delay: u64,
    #[serde(default)]
    pub duplicate_prob: f64,
    #[serde(default = "default_fifo")]
    pub fifo_per_pair: bool,
}

fn default_min_delay() -> u64 {
    1
}

fn default_max_delay() -> u64 {
    10
}

fn default_fifo() -> bool {
    true
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            min_delay: default_min_delay(),
            max_delay: default_max_delay(),
            duplicate_prob: 0.0,
            fifo_per_pair: default_fifo(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("minDelay {min} exceeds maxDelay {max}")]
    DelayRange { min: u64, max: u64 },
    #[error("minDelay must be at least 1 tick")]
    ZeroDelay,
    #[error("duplicateProb {0} outside [0, 1)")]
    DuplicateProb(f64),
    #[error("partition groups must cover each of the {n} processes exactly once")]
    BadPartition { n: usize },
    #[error("process {0} out of range")]
    UnknownProcess(ProcessId),
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.min_delay == 0 {
            return Err(NetError::ZeroDelay);
        }
        if self.min_delay > self.max_delay {
            return Err(NetError::DelayRange {
                min: self.min_delay,
                max: self.max_delay,
            });
        }
        if !(0.0..1.0).contains(&self.duplicate_prob) {
            return Err(NetError::DuplicateProb(self.duplicate_prob));
        }
        Ok(())
    }
}

/// What the network hands back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub enum Delivery<M, T> {
    Message { from: ProcessId, to: ProcessId, msg: M },
    Timer(T),
}

#[derive(Debug, Clone)]
enum Payload<M, T> {
    Message { from: ProcessId, to: ProcessId, msg: M },
    Timer(T),
}

#[derive(Debug)]
struct Scheduled<M, T> {
    time: u64,
    seq: u64,
    payload: Payload<M, T>,
}

impl<M, T> PartialEq for Scheduled<M, T> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<M, T> Eq for Scheduled<M, T> {}

impl<M, T> PartialOrd for Scheduled<M, T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<M, T> Ord for Scheduled<M, T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub duplicated: u64,
    pub dropped: u64,
    pub held: u64,
}

/// Event queue, link model and fault state for one run.
#[derive(Debug)]
pub struct Network<M, T> {
    n: usize,
    config: NetConfig,
    now: u64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Scheduled<M, T>>>,
    rng: ChaCha8Rng,
    /// Latest scheduled delivery per ordered pair, for FIFO links.
    last_delivery: Vec<u64>,
    crashed: Vec<bool>,
    group: Option<Vec<usize>>,
    held: Vec<(ProcessId, ProcessId, M)>,
    in_flight: usize,
    stats: NetStats,
}

impl<M: Clone, T> Network<M, T> {
    pub fn new(n: usize, config: NetConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        Ok(Self {
            n,
            config,
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_delivery: vec![0; n * n],
            crashed: vec![false; n],
            group: None,
            held: Vec::new(),
            in_flight: 0,
            stats: NetStats::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    /// Messages scheduled for delivery, held ones excluded.
    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn held(&self) -> usize {
        self.held.len()
    }

    pub fn has_pending(&self) -> bool {
        !self.queue.is_empty()
    }

    /// The network's random stream, for callers that need randomness in
    /// the same deterministic order as the network's own draws.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn is_crashed(&self, p: ProcessId) -> bool {
        self.crashed[p]
    }

    pub fn crashed_count(&self) -> usize {
        self.crashed.iter().filter(|&&c| c).count()
    }

    pub fn is_partitioned(&self) -> bool {
        self.group.is_some()
    }

    fn push(&mut self, time: u64, payload: Payload<M, T>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, payload }));
    }

    fn delay(&mut self) -> u64 {
        self.rng.gen_range(self.config.min_delay..=self.config.max_delay)
    }

    fn schedule_message(&mut self, from: ProcessId, to: ProcessId, msg: M) {
        let mut at = self.now + self.delay();
        if self.config.fifo_per_pair {
            let last = &mut self.last_delivery[from * self.n + to];
            at = at.max(*last);
            *last = at;
        }
        self.in_flight += 1;
        self.push(at, Payload::Message { from, to, msg });
    }

    /// Sends `msg`; a crashed sender sends nothing.
    pub fn send(&mut self, from: ProcessId, to: ProcessId, msg: M) {
        if self.crashed[from] {
            return;
        }
        self.stats.sent += 1;
        if self.config.duplicate_prob > 0.0 && self.rng.gen_bool(self.config.duplicate_prob) {
            self.stats.duplicated += 1;
            self.schedule_message(from, to, msg.clone());
        }
        self.schedule_message(from, to, msg);
    }

    /// Schedules `timer` to fire at absolute tick `at` (or now, if earlier).
    pub fn schedule(&mut self, at: u64, timer: T) {
        let at = at.max(self.now);
        self.push(at, Payload::Timer(timer));
    }

    pub fn crash(&mut self, p: ProcessId) -> Result<(), NetError> {
        if p >= self.n {
            return Err(NetError::UnknownProcess(p));
        }
        self.crashed[p] = true;
        Ok(())
    }

    /// Splits the processes into `groups`; cross-group messages are held.
    pub fn partition(&mut self, groups: &[Vec<ProcessId>]) -> Result<(), NetError> {
        let mut group = vec![usize::MAX; self.n];
        for (g, members) in groups.iter().enumerate() {
            for &p in members {
                if p >= self.n || group[p] != usize::MAX {
                    return Err(NetError::BadPartition { n: self.n });
                }
                group[p] = g;
            }
        }
        if group.contains(&usize::MAX) {
            return Err(NetError::BadPartition { n: self.n });
        }
        self.group = Some(group);
        Ok(())
    }

    /// Ends the partition and resends held messages with fresh delays.
    pub fn heal(&mut self) {
        self.group = None;
        for (from, to, msg) in std::mem::take(&mut self.held) {
            self.schedule_message(from, to, msg);
        }
    }

    fn separated(&self, a: ProcessId, b: ProcessId) -> bool {
        self.group.as_ref().is_some_and(|g| g[a] != g[b])
    }

    /// Pops the next event, advancing the clock. Messages to crashed
    /// processes are dropped and cross-partition messages are held, so
    /// neither is returned.
    pub fn next_event(&mut self) -> Option<(u64, Delivery<M, T>)> {
        while let Some(Reverse(event)) = self.queue.pop() {
            self.now = event.time;
            match event.payload {
                Payload::Timer(t) => return Some((self.now, Delivery::Timer(t))),
                Payload::Message { from, to, msg } => {
                    self.in_flight -= 1;
                    if self.crashed[to] {
                        self.stats.dropped += 1;
                    } else if self.separated(from, to) {
                        self.stats.held += 1;
                        self.held.push((from, to, msg));
                    } else {
                        self.stats.delivered += 1;
                        return Some((self.now, Delivery::Message { from, to, msg }));
                    }
                }
            }
        }
        None
    }
}
