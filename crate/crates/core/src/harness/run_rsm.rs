//! Key-value store runs with closed-loop clients.

use std::collections::BTreeMap;

use rand::Rng;

use super::scenario::{Scenario, TraceLevel};
use super::trace::TraceEvent;
use super::{apply_fault, gla_config, gla_events, schedule_faults, RunError, Timer};
use crate::gla::GlaBody;
use crate::rsm::command::{CommandId, CommandKind, CommandRegistry};
use crate::rsm::{ClientOp, ClientRequest, OpResult, RsmMessage, RsmReplica, RsmStep};
use crate::simnet::{Delivery, Network};
use crate::ProcessId;

struct Client {
    replica: ProcessId,
    issued: usize,
    /// Request the client is waiting on.
    waiting: Option<u64>,
}

struct Invocation {
    replica: ProcessId,
    op: ClientOp,
    invoke: u64,
}

pub(super) fn run(scenario: &Scenario, events: &mut Vec<TraceEvent>) -> Result<(), RunError> {
    let n = scenario.n;
    let full = scenario.trace == TraceLevel::Full;
    let config = gla_config(scenario);
    events.push(TraceEvent::RunStart {
        protocol: scenario.protocol,
        n,
        f: scenario.f,
        seed: scenario.seed,
        rounds: config.round_bound(),
        updates_only: config.subset_rule == crate::gla::SubsetRule::UpdatesOnly,
        window: scenario.window,
    });
    let mut net: Network<RsmMessage, Timer> = Network::new(n, scenario.net_config, scenario.seed)?;
    schedule_faults(&mut net, scenario);
    let mut replicas: Vec<RsmReplica> = (0..n).map(|i| RsmReplica::new(i, config)).collect();
    let mut registry = CommandRegistry::new();
    let w = &scenario.workload;
    let timeout = scenario.client_timeout();

    let mut clients: Vec<Client> = (0..w.clients)
        .map(|c| Client {
            replica: c % n,
            issued: 0,
            waiting: None,
        })
        .collect();
    for c in 0..w.clients {
        let at = net.rng().gen_range(0..=scenario.net_config.max_delay);
        net.schedule(at, Timer::Issue { client: c });
    }
    let mut open: BTreeMap<(u32, u64), Invocation> = BTreeMap::new();

    let mut quiescent = true;
    while let Some((tick, delivery)) = net.next_event() {
        if tick > scenario.max_ticks {
            quiescent = false;
            break;
        }
        let (at, step) = match delivery {
            Delivery::Message { from, to, msg } => {
                if full {
                    let kind = match msg.gla.body {
                        GlaBody::Prop { .. } => "prop",
                        GlaBody::Ack { .. } => "ack",
                    };
                    events.push(TraceEvent::Deliver {
                        tick,
                        from,
                        to,
                        kind: kind.to_owned(),
                    });
                }
                (to, replicas[to].on_message(from, msg, &registry))
            }
            Delivery::Timer(Timer::Issue { client }) => {
                let c = &mut clients[client];
                if c.issued == w.ops_per_client || c.waiting.is_some() {
                    continue;
                }
                let request = c.issued as u64;
                c.issued += 1;
                c.waiting = Some(request);
                let key = net.rng().gen_range(0..w.key_range).to_string();
                let op = if net.rng().gen_bool(w.read_ratio) {
                    ClientOp::Get { key }
                } else {
                    ClientOp::Put {
                        key,
                        value: value_for(client, request, w.value_size),
                    }
                };
                let replica = clients[client].replica;
                open.insert(
                    (client as u32, request),
                    Invocation {
                        replica,
                        op: op.clone(),
                        invoke: tick,
                    },
                );
                net.schedule(tick + timeout, Timer::Timeout { client, request });
                if net.is_crashed(replica) {
                    continue;
                }
                let req = ClientRequest {
                    client: client as u32,
                    request,
                    op,
                };
                let step = replicas[replica].submit(req, &mut registry);
                for &command in &step.submitted {
                    events.push(TraceEvent::Submit { tick, replica, command });
                }
                (replica, step)
            }
            Delivery::Timer(Timer::Timeout { client, request }) => {
                let c = &mut clients[client];
                if c.waiting == Some(request) {
                    c.waiting = None;
                    c.replica = (c.replica + 1) % n;
                    net.schedule(tick, Timer::Issue { client });
                }
                continue;
            }
            Delivery::Timer(Timer::Fault(i)) => {
                apply_fault(&mut net, &scenario.faults[i], tick, events)?;
                continue;
            }
            Delivery::Timer(Timer::Submit { .. }) => unreachable!("no direct submissions in rsm runs"),
        };
        handle_step(at, tick, step, &mut replicas, &mut net, events, &mut open, &mut clients);
    }

    // Requests that never got an answer.
    for ((client, request), inv) in open {
        let (op, key, value) = describe(&inv.op);
        let ts = match inv.op {
            ClientOp::Put { .. } => registry
                .get(&CommandId::update(inv.replica as u32, client, request))
                .and_then(|c| match c.kind {
                    CommandKind::Update { ts, .. } => Some(ts),
                    CommandKind::Null => None,
                }),
            ClientOp::Get { .. } => None,
        };
        events.push(TraceEvent::Client {
            client,
            request,
            replica: inv.replica,
            op,
            key,
            value: if matches!(inv.op, ClientOp::Put { .. }) { value } else { None },
            ts,
            invoke_time: inv.invoke,
            response_time: None,
        });
    }
    for r in &replicas {
        events.push(TraceEvent::Counters {
            process: r.id(),
            round_trips: 0,
            messages: r.gla().stats().messages_sent,
        });
    }
    events.push(TraceEvent::RunEnd {
        tick: net.now(),
        quiescent,
        net: net.stats(),
    });
    Ok(())
}

/// Unique value for a put, padded to `size` bytes.
fn value_for(client: usize, request: u64, size: usize) -> String {
    let mut value = format!("c{client}r{request}");
    while value.len() < size {
        value.push('.');
    }
    value
}

fn describe(op: &ClientOp) -> (String, String, Option<String>) {
    match op {
        ClientOp::Put { key, value } => ("put".into(), key.clone(), Some(value.clone())),
        ClientOp::Get { key } => ("get".into(), key.clone(), None),
    }
}

#[allow(clippy::too_many_arguments)]
fn handle_step(
    id: ProcessId,
    tick: u64,
    step: RsmStep,
    replicas: &mut [RsmReplica],
    net: &mut Network<RsmMessage, Timer>,
    events: &mut Vec<TraceEvent>,
    open: &mut BTreeMap<(u32, u64), Invocation>,
    clients: &mut [Client],
) {
    gla_events(id, tick, &step.events, replicas[id].gla(), events);
    for response in step.responses {
        let Some(inv) = open.remove(&(response.client, response.request)) else {
            continue;
        };
        let (op, key, put_value) = describe(&inv.op);
        let (value, ts) = match response.result {
            OpResult::Put { ts } => (put_value, Some(ts)),
            OpResult::Get { value } => (value, None),
        };
        events.push(TraceEvent::Client {
            client: response.client,
            request: response.request,
            replica: response.replica,
            op,
            key,
            value,
            ts,
            invoke_time: inv.invoke,
            response_time: Some(tick),
        });
        let client = response.client as usize;
        if clients[client].waiting == Some(response.request) {
            clients[client].waiting = None;
            net.schedule(tick + 1, Timer::Issue { client });
        }
    }
    for (to, msg) in step.outgoing {
        net.send(id, to, msg);
    }
}
