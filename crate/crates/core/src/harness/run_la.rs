//! Lattice agreement runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Scenario, TraceLevel};
use super::trace::TraceEvent;
use super::{apply_fault, schedule_faults, RunError, Timer};
use crate::async_la::{AsyncLaProcess, LaConfig, LaEvent, LaMessage, LaStep};
use crate::lattice::BitSet64;
use crate::simnet::{Delivery, Network};

/// Inputs for `n` processes: process `i` holds atom `i` plus a random
/// subset of `n` shared atoms.
pub fn la_inputs(n: usize, seed: u64) -> Vec<BitSet64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_696e_7075_7473);
    let shared = (n as u32).min(64 - n as u32);
    (0..n)
        .map(|i| {
            let mut value = BitSet64::atom(i as u32);
            for j in 0..shared {
                if rng.gen_bool(0.15) {
                    value.0 |= BitSet64::atom(n as u32 + j).0;
                }
            }
            value
        })
        .collect()
}

pub fn atoms(value: &BitSet64) -> Vec<u32> {
    value.atoms().collect()
}

pub(super) fn run(scenario: &Scenario, events: &mut Vec<TraceEvent>) -> Result<(), RunError> {
    let n = scenario.n;
    let full = scenario.trace == TraceLevel::Full;
    let mut config = LaConfig::new(n, scenario.f)?.with_accept_scope(scenario.options.accept_scope);
    if let Some(rounds) = scenario.options.rounds {
        config = config.with_rounds(rounds);
    }
    events.push(TraceEvent::RunStart {
        protocol: scenario.protocol,
        n,
        f: scenario.f,
        seed: scenario.seed,
        rounds: config.rounds,
        updates_only: false,
        window: scenario.window,
    });
    let inputs = la_inputs(n, scenario.seed);
    for (process, input) in inputs.iter().enumerate() {
        events.push(TraceEvent::Input {
            process,
            value: atoms(input),
        });
    }
    let mut net: Network<LaMessage<BitSet64>, Timer> = Network::new(n, scenario.net_config, scenario.seed)?;
    schedule_faults(&mut net, scenario);

    let mut processes = Vec::with_capacity(n);
    let mut initial = Vec::with_capacity(n);
    for (i, input) in inputs.into_iter().enumerate() {
        let (process, step) = AsyncLaProcess::new(i, config, input);
        processes.push(process);
        initial.push(step);
    }
    for (i, step) in initial.into_iter().enumerate() {
        dispatch(i, 0, step, &processes[i], &mut net, events, full);
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
                        kind: msg.kind().to_owned(),
                    });
                }
                let step = processes[to].on_message(from, msg);
                dispatch(to, tick, step, &processes[to], &mut net, events, full);
            }
            Delivery::Timer(Timer::Fault(i)) => apply_fault(&mut net, &scenario.faults[i], tick, events)?,
            Delivery::Timer(_) => unreachable!("lattice agreement runs schedule only faults"),
        }
    }
    for p in &processes {
        events.push(TraceEvent::Counters {
            process: p.id(),
            round_trips: p.round_trips(),
            messages: p.messages_sent(),
        });
    }
    events.push(TraceEvent::RunEnd {
        tick: net.now(),
        quiescent,
        net: net.stats(),
    });
    Ok(())
}

fn dispatch(
    id: usize,
    tick: u64,
    step: LaStep<BitSet64>,
    process: &AsyncLaProcess<BitSet64>,
    net: &mut Network<LaMessage<BitSet64>, Timer>,
    events: &mut Vec<TraceEvent>,
    full: bool,
) {
    for event in step.events {
        match event {
            LaEvent::PhaseEntered { phase, round, label } if full => events.push(TraceEvent::Phase {
                tick,
                process: id,
                phase,
                round,
                label: label.numerator,
            }),
            LaEvent::Decided { value } => events.push(TraceEvent::Decide {
                tick,
                process: id,
                value: atoms(&value),
                round_trips: process.round_trips(),
                messages: process.messages_sent(),
            }),
            _ => {}
        }
    }
    for (to, msg) in step.outgoing {
        net.send(id, to, msg);
    }
}
