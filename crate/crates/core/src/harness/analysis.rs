//! Report and metrics, both computed from a trace alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::Protocol;
use super::trace::TraceEvent;
use crate::checker::bounds::{check_bounds, ProcessCounters};
use crate::checker::gla::{check_gla, GlaHistory, Projection};
use crate::checker::la::check_la;
use crate::checker::linearizability::{check_linearizability, HistoryEntry, HistoryOp, Verdict};
use crate::checker::Check;
use crate::lattice::BitSet64;
use crate::simnet::NetStats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub protocol: Protocol,
    pub seed: u64,
    /// Every property holds. Bounds do not count.
    pub passed: bool,
    /// Safety, liveness and linearizability.
    pub properties: Vec<Property>,
    /// Round and message complexity bounds.
    pub bounds: Vec<Property>,
}

impl Report {
    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn bound(&self, name: &str) -> Option<&Property> {
        self.bounds.iter().find(|p| p.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Property> {
        self.properties.iter().filter(|p| !p.passed)
    }

    pub fn bound_failures(&self) -> impl Iterator<Item = &Property> {
        self.bounds.iter().filter(|p| !p.passed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessMetrics {
    pub process: usize,
    pub messages: u64,
    pub round_trips: u64,
    pub sequences: u64,
    pub proposals: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LaMetrics {
    pub rounds: u32,
    pub decided: usize,
    pub max_round_trips: u64,
    pub round_trip_bound: u64,
    pub max_messages: u64,
    pub message_bound: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GlaMetrics {
    pub submitted: usize,
    pub sequences: u64,
    pub proposals: u64,
    pub mean_proposal_size: f64,
    pub mean_proposal_updates: f64,
    pub mean_rounds_per_sequence: f64,
    pub max_rounds_per_sequence: u32,
    pub max_lv_len: usize,
    pub max_accept_len: usize,
    /// Largest gap between the most and least advanced live replica.
    pub max_lag: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Bucket {
    /// Inclusive upper edge in ticks.
    pub up_to: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Latency {
    pub mean: f64,
    pub p50: u64,
    pub p99: u64,
    pub max: u64,
    pub histogram: Vec<Bucket>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RsmMetrics {
    pub completed: u64,
    pub pending: u64,
    pub puts: u64,
    pub gets: u64,
    pub window: u64,
    /// Responses per window of `window` ticks, up to the last response.
    pub committed_ops_per_window: Vec<u64>,
    pub latency: Latency,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub ticks: u64,
    pub quiescent: bool,
    pub net: NetStats,
    pub per_process: Vec<ProcessMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub la: Option<LaMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gla: Option<GlaMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rsm: Option<RsmMetrics>,
}

fn property(name: &str, check: &Check) -> Property {
    Property {
        name: name.to_owned(),
        passed: check.passed,
        witness: check.witness.clone(),
    }
}

fn bitset(atoms: &[u32]) -> BitSet64 {
    BitSet64(atoms.iter().fold(0, |acc, &a| acc | (1u64 << a)))
}

/// Checks a trace and computes its metrics.
///
/// Panics if the trace does not begin with `run_start`; use
/// [`super::trace::read_jsonl`] to validate traces read from disk.
pub fn analyze(events: &[TraceEvent]) -> (Report, Metrics) {
    let Some(&TraceEvent::RunStart {
        protocol,
        n,
        f,
        seed,
        rounds,
        updates_only,
        window,
    }) = events.first()
    else {
        panic!("trace must begin with run_start");
    };

    let mut crashed = vec![false; n];
    let mut per_process: Vec<ProcessMetrics> = (0..n)
        .map(|process| ProcessMetrics {
            process,
            ..ProcessMetrics::default()
        })
        .collect();
    let mut counters = Vec::new();
    let mut end = (0, false, NetStats::default());
    for event in events {
        match event {
            TraceEvent::Crash { process, .. } => crashed[*process] = true,
            TraceEvent::Counters {
                process,
                round_trips,
                messages,
            } => {
                per_process[*process].messages = *messages;
                per_process[*process].round_trips = *round_trips;
                counters.push(ProcessCounters {
                    process: *process,
                    round_trips: *round_trips,
                    messages: *messages,
                });
            }
            TraceEvent::Learn { replica, .. } => per_process[*replica].sequences += 1,
            TraceEvent::Propose { replica, .. } => per_process[*replica].proposals += 1,
            TraceEvent::RunEnd { tick, quiescent, net } => end = (*tick, *quiescent, *net),
            _ => {}
        }
    }

    let mut properties = vec![Property {
        name: "quiescence".into(),
        passed: end.1,
        witness: (!end.1).then(|| format!("tick budget exhausted at tick {} with events pending", end.0)),
    }];
    let mut bounds = Vec::new();
    let mut metrics = Metrics {
        n,
        f,
        seed,
        ticks: end.0,
        quiescent: end.1,
        net: end.2,
        per_process,
        ..Metrics::default()
    };

    match protocol {
        Protocol::AsyncLa => {
            let mut inputs = vec![BitSet64::default(); n];
            let mut outputs = vec![None; n];
            for event in events {
                match event {
                    TraceEvent::Input { process, value } => inputs[*process] = bitset(value),
                    TraceEvent::Decide { process, value, .. } => outputs[*process] = Some(bitset(value)),
                    _ => {}
                }
            }
            let la = check_la(&inputs, &outputs, &crashed);
            properties.push(property("downwardValidity", &la.downward_validity));
            properties.push(property("upwardValidity", &la.upward_validity));
            properties.push(property("comparability", &la.comparability));
            properties.push(property("termination", &la.termination));
            let la_bounds = check_bounds(n, rounds, &counters);
            bounds.push(property("roundTripBound", &la_bounds.round_trips));
            bounds.push(property("messageBound", &la_bounds.messages));
            metrics.la = Some(LaMetrics {
                rounds,
                decided: outputs.iter().filter(|o| o.is_some()).count(),
                max_round_trips: la_bounds.max_round_trips,
                round_trip_bound: la_bounds.round_trip_bound,
                max_messages: la_bounds.max_messages_per_process,
                message_bound: la_bounds.message_bound,
            });
        }
        Protocol::Gla | Protocol::Rsm => {
            let history = gla_history(events, n, rounds, updates_only, &crashed);
            let report = check_gla(&history);
            for (name, check) in report.properties() {
                properties.push(property(name, check));
            }
            bounds.push(property("roundBound", &report.round_bound));
            properties.push(truncation_property(events));
            metrics.gla = Some(gla_metrics(events, n, &history));
            if protocol == Protocol::Rsm {
                properties.push(linearizability_property(events));
                metrics.rsm = Some(rsm_metrics(events, window));
            }
        }
    }

    let report = Report {
        protocol,
        seed,
        passed: properties.iter().all(|p| p.passed),
        properties,
        bounds,
    };
    (report, metrics)
}

fn gla_history(events: &[TraceEvent], n: usize, rounds: u32, updates_only: bool, crashed: &[bool]) -> GlaHistory {
    let mut history = GlaHistory {
        n,
        crashed: crashed.to_vec(),
        learned: vec![Vec::new(); n],
        rounds: vec![Vec::new(); n],
        max_rounds: rounds,
        projection: if updates_only {
            Projection::UpdatesOnly
        } else {
            Projection::AllCommands
        },
        ..GlaHistory::default()
    };
    for event in events {
        match event {
            TraceEvent::Submit { replica, command, .. } => history.submitted.push((*replica, *command)),
            TraceEvent::Learn {
                replica,
                seq,
                rounds,
                value,
                ..
            } => {
                debug_assert_eq!(history.learned[*replica].len() as u64, *seq);
                history.learned[*replica].push(value.clone());
                history.rounds[*replica].push(*rounds);
            }
            _ => {}
        }
    }
    history
}

fn truncation_property(events: &[TraceEvent]) -> Property {
    let witness = events.iter().find_map(|e| match e {
        TraceEvent::Learn {
            replica,
            seq,
            overlaps_previous: true,
            ..
        } => Some(format!("replica {replica} kept commands of LV[{}] in its accept set after sequence {seq}", seq - 1)),
        _ => None,
    });
    property("truncation", &Check::from_witness(witness))
}

fn gla_metrics(events: &[TraceEvent], n: usize, history: &GlaHistory) -> GlaMetrics {
    let mut m = GlaMetrics {
        submitted: history.submitted.len(),
        ..GlaMetrics::default()
    };
    let (mut size_sum, mut update_sum) = (0u64, 0u64);
    let (mut round_sum, mut learns) = (0u64, 0u64);
    let mut next_seq = vec![0u64; n];
    let mut live = vec![true; n];
    for event in events {
        match event {
            TraceEvent::Crash { process, .. } => live[*process] = false,
            TraceEvent::Propose { size, updates, .. } => {
                m.proposals += 1;
                size_sum += *size as u64;
                update_sum += *updates as u64;
            }
            TraceEvent::Learn {
                replica,
                seq,
                rounds,
                accept_len,
                lv_len,
                ..
            } => {
                learns += 1;
                round_sum += u64::from(*rounds);
                m.max_rounds_per_sequence = m.max_rounds_per_sequence.max(*rounds);
                m.max_lv_len = m.max_lv_len.max(*lv_len);
                m.max_accept_len = m.max_accept_len.max(*accept_len);
                next_seq[*replica] = seq + 1;
                let live_seqs = || (0..n).filter(|&q| live[q]).map(|q| next_seq[q]);
                if let (Some(hi), Some(lo)) = (live_seqs().max(), live_seqs().min()) {
                    m.max_lag = m.max_lag.max(hi - lo);
                }
            }
            _ => {}
        }
    }
    m.sequences = next_seq.iter().copied().max().unwrap_or(0);
    if m.proposals > 0 {
        m.mean_proposal_size = size_sum as f64 / m.proposals as f64;
        m.mean_proposal_updates = update_sum as f64 / m.proposals as f64;
    }
    if learns > 0 {
        m.mean_rounds_per_sequence = round_sum as f64 / learns as f64;
    }
    m
}

/// Client operations from the trace, in the checker's format. Puts that
/// were never handed to a replica have no timestamp and are left out: they
/// cannot have taken effect.
pub fn client_history(events: &[TraceEvent]) -> Vec<HistoryEntry> {
    events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Client {
                client,
                op,
                key,
                value,
                ts,
                invoke_time,
                response_time,
                ..
            } => {
                let op = match op.as_str() {
                    "put" => HistoryOp::Put {
                        key: key.clone(),
                        value: value.clone().unwrap_or_default(),
                        ts: (*ts)?,
                    },
                    _ => HistoryOp::Get {
                        key: key.clone(),
                        value: value.clone(),
                    },
                };
                Some(HistoryEntry {
                    client: *client,
                    op,
                    invoke: *invoke_time,
                    response: *response_time,
                })
            }
            _ => None,
        })
        .collect()
}

fn linearizability_property(events: &[TraceEvent]) -> Property {
    let history = client_history(events);
    let check = match check_linearizability(&history) {
        Ok(Verdict::Linearizable) => Check::pass(),
        Ok(Verdict::Violation { witness, .. }) => Check::fail(witness),
        Err(e) => Check::fail(format!("inconclusive: {e}")),
    };
    property("linearizability", &check)
}

fn rsm_metrics(events: &[TraceEvent], window: u64) -> RsmMetrics {
    let mut m = RsmMetrics {
        window,
        ..RsmMetrics::default()
    };
    let mut latencies = Vec::new();
    let mut per_window: BTreeMap<u64, u64> = BTreeMap::new();
    for event in events {
        if let TraceEvent::Client {
            op,
            invoke_time,
            response_time,
            ..
        } = event
        {
            if op == "put" {
                m.puts += 1;
            } else {
                m.gets += 1;
            }
            match response_time {
                Some(t) => {
                    m.completed += 1;
                    latencies.push(t - invoke_time);
                    *per_window.entry(t / window).or_default() += 1;
                }
                None => m.pending += 1,
            }
        }
    }
    if let Some((&last, _)) = per_window.last_key_value() {
        m.committed_ops_per_window = (0..=last).map(|w| per_window.get(&w).copied().unwrap_or(0)).collect();
    }
    latencies.sort_unstable();
    if let Some(&max) = latencies.last() {
        let pick = |q: f64| latencies[((latencies.len() - 1) as f64 * q).round() as usize];
        m.latency = Latency {
            mean: latencies.iter().sum::<u64>() as f64 / latencies.len() as f64,
            p50: pick(0.5),
            p99: pick(0.99),
            max,
            histogram: histogram(&latencies),
        };
    }
    m
}

/// Power-of-two buckets.
fn histogram(sorted: &[u64]) -> Vec<Bucket> {
    let mut buckets: Vec<Bucket> = Vec::new();
    for &x in sorted {
        let up_to = x.max(1).next_power_of_two();
        match buckets.last_mut() {
            Some(b) if b.up_to == up_to => b.count += 1,
            _ => buckets.push(Bucket { up_to, count: 1 }),
        }
    }
    buckets
}
