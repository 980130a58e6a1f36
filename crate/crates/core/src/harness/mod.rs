//! Scenario runner: builds the processes, drives them through the
//! simulator, records a trace, and derives the report and metrics from it.

pub mod analysis;
mod run_gla;
mod run_la;
mod run_rsm;
pub mod scenario;
pub mod sweep;
pub mod trace;

use std::path::Path;

use thiserror::Error;

pub use analysis::{analyze, Metrics, Property, Report};
pub use run_la::{atoms, la_inputs};
pub use scenario::{random_faults, ConfigError, Fault, FaultKind, FaultTarget, Protocol, ProtocolOptions, Scenario, TraceLevel, Workload};
pub use trace::TraceEvent;

use crate::async_la::LaError;
use crate::gla::{GlaConfig, GlaEvent, GlaReplica};
use crate::simnet::{NetError, Network};
use crate::ProcessId;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    La(#[from] LaError),
}

/// Timers the runners put on the network's queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Timer {
    Fault(usize),
    /// A command handed straight to a replica (generalized lattice agreement runs).
    Submit { client: usize, counter: u64 },
    /// A closed-loop client issues its next request.
    Issue { client: usize },
    Timeout { client: usize, request: u64 },
}

fn schedule_faults<M: Clone>(net: &mut Network<M, Timer>, scenario: &Scenario) {
    for (i, fault) in scenario.faults.iter().enumerate() {
        net.schedule(fault.tick, Timer::Fault(i));
    }
}

fn apply_fault<M: Clone>(
    net: &mut Network<M, Timer>,
    fault: &Fault,
    tick: u64,
    events: &mut Vec<TraceEvent>,
) -> Result<(), RunError> {
    match (&fault.kind, &fault.target) {
        (FaultKind::Crash, Some(FaultTarget::Process(p))) => {
            net.crash(*p)?;
            events.push(TraceEvent::Crash { tick, process: *p });
        }
        (FaultKind::Partition, Some(FaultTarget::Groups(groups))) => {
            net.partition(groups)?;
            events.push(TraceEvent::Partition {
                tick,
                groups: groups.clone(),
            });
        }
        (FaultKind::Heal, _) => {
            net.heal();
            events.push(TraceEvent::Heal { tick });
        }
        _ => unreachable!("fault targets are checked by Scenario::validate"),
    }
    Ok(())
}

fn gla_config(scenario: &Scenario) -> GlaConfig {
    let mut config = GlaConfig::new(scenario.n, scenario.f);
    config.subset_rule = scenario.subset_rule();
    config.truncation = scenario.options.truncation;
    config.gc = scenario.options.gc;
    config
}

fn gla_events(id: ProcessId, tick: u64, step: &[GlaEvent], replica: &GlaReplica, events: &mut Vec<TraceEvent>) {
    for event in step {
        match event {
            GlaEvent::ProposalStarted { seq, round, size, updates } => events.push(TraceEvent::Propose {
                tick,
                replica: id,
                seq: *seq,
                round: *round,
                size: *size,
                updates: *updates,
            }),
            GlaEvent::SequenceLearned(l) => events.push(TraceEvent::Learn {
                tick,
                replica: id,
                seq: l.seq,
                rounds: l.rounds,
                value: l.value.clone(),
                accept_len: l.accept_len,
                lv_len: replica.learned_map().len(),
                overlaps_previous: l.accept_overlaps_previous,
            }),
            GlaEvent::Collected { below } => events.push(TraceEvent::Collect {
                tick,
                replica: id,
                below: *below,
            }),
        }
    }
}

/// A finished run: its trace plus what was derived from it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<TraceEvent>,
    pub report: Report,
    pub metrics: Metrics,
}

impl RunOutput {
    pub fn trace_jsonl(&self) -> String {
        trace::to_jsonl(&self.events)
    }

    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.metrics).expect("metrics serialize") + "\n"
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n"
    }

    /// Writes `trace.jsonl`, `metrics.json` and `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trace.jsonl"), self.trace_jsonl())?;
        std::fs::write(dir.join("metrics.json"), self.metrics_json())?;
        std::fs::write(dir.join("report.json"), self.report_json())?;
        Ok(())
    }
}

/// Runs a validated scenario to quiescence (or its tick budget).
pub fn simulate(scenario: &Scenario) -> Result<Vec<TraceEvent>, RunError> {
    scenario.validate()?;
    let mut events = Vec::new();
    match scenario.protocol {
        Protocol::AsyncLa => run_la::run(scenario, &mut events)?,
        Protocol::Gla => run_gla::run(scenario, &mut events)?,
        Protocol::Rsm => run_rsm::run(scenario, &mut events)?,
    }
    Ok(events)
}

/// Runs a scenario and checks it.
pub fn run(scenario: &Scenario) -> Result<RunOutput, RunError> {
    let events = simulate(scenario)?;
    let (report, metrics) = analyze(&events);
    Ok(RunOutput { events, report, metrics })
}
