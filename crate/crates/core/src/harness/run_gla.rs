//! Generalized lattice agreement runs with commands injected directly.

use rand::Rng;

use super::scenario::{Scenario, TraceLevel};
use super::trace::TraceEvent;
use super::{apply_fault, gla_config, gla_events, schedule_faults, RunError, Timer};
use crate::gla::{GlaBody, GlaMessage, GlaReplica, GlaStep};
use crate::rsm::command::{CommandId, CommandSet};
use crate::simnet::{Delivery, Network};

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
        updates_only: false,
        window: scenario.window,
    });
    let mut net: Network<GlaMessage, Timer> = Network::new(n, scenario.net_config, scenario.seed)?;
    schedule_faults(&mut net, scenario);
    let mut replicas: Vec<GlaReplica> = (0..n).map(|i| GlaReplica::new(i, config)).collect();

    // Commands arrive at random ticks spread over the run.
    let w = &scenario.workload;
    let spread = (w.ops_per_client as u64 * 4 * scenario.net_config.max_delay).max(1);
    for client in 0..w.clients {
        for counter in 0..w.ops_per_client {
            let at = net.rng().gen_range(0..spread);
            net.schedule(at, Timer::Submit { client, counter: counter as u64 });
        }
    }

    let mut quiescent = true;
    while let Some((tick, delivery)) = net.next_event() {
        if tick > scenario.max_ticks {
            quiescent = false;
            break;
        }
        match delivery {
            Delivery::Message { from, to, msg } => {
                if full {
                    events.push(TraceEvent::Deliver {
                        tick,
                        from,
                        to,
                        kind: kind(&msg).to_owned(),
                    });
                }
                let mut step = replicas[to].on_message(from, msg);
                step.extend(replicas[to].try_agree());
                dispatch(to, tick, step, &mut replicas[to], &mut net, events);
            }
            Delivery::Timer(Timer::Submit { client, counter }) => {
                // Clients skip replicas that have crashed.
                let first = net.rng().gen_range(0..n);
                let Some(target) = (0..n).map(|k| (first + k) % n).find(|&r| !net.is_crashed(r)) else {
                    continue;
                };
                let command = CommandId::update(target as u32, client as u32, counter);
                events.push(TraceEvent::Submit {
                    tick,
                    replica: target,
                    command,
                });
                replicas[target].receive_value(&CommandSet::singleton(command));
                let step = replicas[target].try_agree();
                dispatch(target, tick, step, &mut replicas[target], &mut net, events);
            }
            Delivery::Timer(Timer::Fault(i)) => apply_fault(&mut net, &scenario.faults[i], tick, events)?,
            Delivery::Timer(_) => unreachable!("no client timers in gla runs"),
        }
    }
    for r in &replicas {
        events.push(TraceEvent::Counters {
            process: r.id(),
            round_trips: 0,
            messages: r.stats().messages_sent,
        });
    }
    events.push(TraceEvent::RunEnd {
        tick: net.now(),
        quiescent,
        net: net.stats(),
    });
    Ok(())
}

fn kind(msg: &GlaMessage) -> &'static str {
    match msg.body {
        GlaBody::Prop { .. } => "prop",
        GlaBody::Ack { .. } => "ack",
    }
}

fn dispatch(
    id: usize,
    tick: u64,
    step: GlaStep,
    replica: &mut GlaReplica,
    net: &mut Network<GlaMessage, Timer>,
    events: &mut Vec<TraceEvent>,
) {
    for learned in step.learned() {
        replica.mark_executed(learned.seq);
    }
    gla_events(id, tick, &step.events, replica, events);
    for (to, msg) in step.outgoing {
        net.send(id, to, msg);
    }
}
