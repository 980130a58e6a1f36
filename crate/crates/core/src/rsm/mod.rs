//! Linearizable replicated key-value store on top of [`crate::gla`].
//!
//! Updates enter the lattice as commands. Reads are grouped into a batch
//! tied to a single null command; when the null command is learned the
//! minting replica answers every read in the batch from its map. Learned
//! commands are applied to a last-writer-wins map, so their order inside a
//! learned set does not matter.

pub mod command;
pub mod lww;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::gla::{GlaConfig, GlaEvent, GlaMessage, GlaReplica, GlaStep, Learned};
use crate::ProcessId;
use command::{ClientId, Command, CommandId, CommandKind, CommandRegistry, CommandSet, ReplicaId, Timestamp};
use lww::LwwMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ClientOp {
    Put { key: String, value: String },
    Get { key: String },
}

impl ClientOp {
    pub fn key(&self) -> &str {
        match self {
            Self::Put { key, .. } | Self::Get { key } => key,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientRequest {
    pub client: ClientId,
    /// Per-client request counter.
    pub request: u64,
    pub op: ClientOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpResult {
    /// The put is in the replica's learned set; `ts` is its LWW timestamp.
    Put { ts: Timestamp },
    Get { value: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientResponse {
    pub client: ClientId,
    pub request: u64,
    pub replica: ProcessId,
    pub result: OpResult,
}

/// A GLA message with the sender's logical clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsmMessage {
    pub gla: GlaMessage,
    pub clock: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RsmStep {
    /// Commands created by a submission; empty when a read joined an open batch.
    pub submitted: Vec<CommandId>,
    pub outgoing: Vec<(ProcessId, RsmMessage)>,
    pub responses: Vec<ClientResponse>,
    pub events: Vec<GlaEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsmStats {
    pub updates_submitted: u64,
    pub reads_submitted: u64,
    pub null_ops: u64,
    pub updates_applied: u64,
    pub null_ops_applied: u64,
}

#[derive(Debug, Clone)]
struct ReadBatch {
    null: CommandId,
    reads: Vec<ClientRequest>,
}

/// One replica: a [`GlaReplica`] plus the map it drives.
#[derive(Debug, Clone)]
pub struct RsmReplica {
    id: ProcessId,
    gla: GlaReplica,
    map: LwwMap,
    clock: u64,
    next_batch: u64,
    /// Batch whose null command still sits in the proposal buffer.
    open_batch: Option<ReadBatch>,
    sealed: HashMap<CommandId, Vec<ClientRequest>>,
    pending_updates: HashMap<CommandId, (ClientRequest, Timestamp)>,
    executed_seq: Option<u64>,
    stats: RsmStats,
}

impl RsmReplica {
    pub fn new(id: ProcessId, config: GlaConfig) -> Self {
        Self {
            id,
            gla: GlaReplica::new(id, config),
            map: LwwMap::new(),
            clock: 0,
            next_batch: 0,
            open_batch: None,
            sealed: HashMap::new(),
            pending_updates: HashMap::new(),
            executed_seq: None,
            stats: RsmStats::default(),
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn gla(&self) -> &GlaReplica {
        &self.gla
    }

    pub fn map(&self) -> &LwwMap {
        &self.map
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn stats(&self) -> &RsmStats {
        &self.stats
    }

    pub fn executed_seq(&self) -> Option<u64> {
        self.executed_seq
    }

    fn replica_id(&self) -> ReplicaId {
        self.id as ReplicaId
    }

    /// Accepts a client request. Updates get a fresh timestamp; reads join
    /// the open batch or start one with a new null command.
    pub fn submit(&mut self, request: ClientRequest, registry: &mut CommandRegistry) -> RsmStep {
        let mut created = None;
        match &request.op {
            ClientOp::Put { key, value } => {
                self.clock += 1;
                let ts = Timestamp::new(self.clock, self.replica_id());
                let id = CommandId::update(self.replica_id(), request.client, request.request);
                registry.insert(Command {
                    id,
                    kind: CommandKind::Update {
                        key: key.clone(),
                        value: value.clone(),
                        ts,
                    },
                });
                self.stats.updates_submitted += 1;
                self.pending_updates.insert(id, (request, ts));
                self.gla.receive_value(&CommandSet::singleton(id));
                created = Some(id);
            }
            ClientOp::Get { .. } => {
                self.stats.reads_submitted += 1;
                // A batch stays open only until its null command is proposed;
                // later reads must not be served by an already running instance.
                match &mut self.open_batch {
                    Some(batch) if self.gla.buffered().contains(&batch.null) => batch.reads.push(request),
                    _ => {
                        self.seal_open_batch();
                        let null = CommandId::null(self.replica_id(), self.next_batch);
                        self.next_batch += 1;
                        self.stats.null_ops += 1;
                        registry.insert(Command {
                            id: null,
                            kind: CommandKind::Null,
                        });
                        self.open_batch = Some(ReadBatch {
                            null,
                            reads: vec![request],
                        });
                        self.gla.receive_value(&CommandSet::singleton(null));
                        created = Some(null);
                    }
                }
            }
        }
        let step = self.gla.try_agree();
        let mut out = RsmStep {
            submitted: created.into_iter().collect(),
            ..RsmStep::default()
        };
        self.absorb(step, registry, &mut out);
        out
    }

    pub fn on_message(&mut self, from: ProcessId, msg: RsmMessage, registry: &CommandRegistry) -> RsmStep {
        self.clock = self.clock.max(msg.clock);
        let mut out = RsmStep::default();
        let step = self.gla.on_message(from, msg.gla);
        self.absorb(step, registry, &mut out);
        let step = self.gla.try_agree();
        self.absorb(step, registry, &mut out);
        out
    }

    fn seal_open_batch(&mut self) {
        if let Some(batch) = self.open_batch.take() {
            self.sealed.insert(batch.null, batch.reads);
        }
    }

    fn absorb(&mut self, step: GlaStep, registry: &CommandRegistry, out: &mut RsmStep) {
        for learned in step.learned() {
            self.apply(learned, registry, out);
        }
        if let Some(batch) = &self.open_batch {
            if !self.gla.buffered().contains(&batch.null) {
                self.seal_open_batch();
            }
        }
        let clock = self.clock;
        out.outgoing
            .extend(step.outgoing.into_iter().map(|(to, gla)| (to, RsmMessage { gla, clock })));
        out.events.extend(step.events);
    }

    fn apply(&mut self, learned: &Learned, registry: &CommandRegistry, out: &mut RsmStep) {
        let mut updates = Vec::new();
        let mut nulls = Vec::new();
        for id in learned.newly.iter() {
            let command = registry
                .get(id)
                .unwrap_or_else(|| panic!("learned command {id} has no registered payload"));
            match &command.kind {
                CommandKind::Update { key, value, ts } => updates.push((*ts, *id, key, value)),
                CommandKind::Null => nulls.push(*id),
            }
        }
        updates.sort_by_key(|&(ts, id, _, _)| (ts, id));
        for (ts, id, key, value) in updates {
            self.clock = self.clock.max(ts.counter);
            self.map.put(key, value, ts);
            self.stats.updates_applied += 1;
            if let Some((request, ts)) = self.pending_updates.remove(&id) {
                out.responses.push(ClientResponse {
                    client: request.client,
                    request: request.request,
                    replica: self.id,
                    result: OpResult::Put { ts },
                });
            }
        }
        for null in nulls {
            self.stats.null_ops_applied += 1;
            if null.origin() != self.replica_id() {
                continue;
            }
            if self.open_batch.as_ref().is_some_and(|b| b.null == null) {
                self.seal_open_batch();
            }
            for request in self.sealed.remove(&null).unwrap_or_default() {
                let value = self.map.get(request.op.key()).map(str::to_owned);
                out.responses.push(ClientResponse {
                    client: request.client,
                    request: request.request,
                    replica: self.id,
                    result: OpResult::Get { value },
                });
            }
        }
        self.executed_seq = Some(learned.seq);
        self.gla.mark_executed(learned.seq);
    }
}
