//! Scenario files.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::async_la::AcceptScope;
use crate::gla::{SubsetRule, Truncation};
use crate::simnet::{NetConfig, NetError};
use crate::ProcessId;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The message already carries the parser's detail, so no source.
    #[error("invalid scenario: {0}")]
    Parse(serde_json::Error),
    #[error("unsupported scenario version {0}, expected {SCENARIO_VERSION}")]
    Version(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        Self::Parse(e)
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// One-shot lattice agreement.
    AsyncLa,
    /// Generalized lattice agreement with commands injected directly.
    Gla,
    /// The replicated key-value store with closed-loop clients.
    Rsm,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AsyncLa => "async_la",
            Self::Gla => "gla",
            Self::Rsm => "rsm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Workload {
    #[serde(default = "default_clients")]
    pub clients: usize,
    /// Operations per client.
    #[serde(default = "default_ops")]
    pub ops_per_client: usize,
    #[serde(default = "default_read_ratio")]
    pub read_ratio: f64,
    #[serde(default = "default_key_range")]
    pub key_range: u64,
    #[serde(default = "default_value_size")]
    pub value_size: usize,
    /// Ticks a client waits for a response before giving up on the request
    /// and moving to the next replica. Defaults to `50 × maxDelay`.
    #[serde(default)]
    pub timeout: Option<u64>,
}

fn default_clients() -> usize {
    4
}

fn default_ops() -> usize {
    10
}

fn default_read_ratio() -> f64 {
    0.5
}

fn default_key_range() -> u64 {
    1000
}

fn default_value_size() -> usize {
    20
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            clients: default_clients(),
            ops_per_client: default_ops(),
            read_ratio: default_read_ratio(),
            key_range: default_key_range(),
            value_size: default_value_size(),
            timeout: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Crash,
    Partition,
    Heal,
}

/// A crash names one process; a partition names its groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FaultTarget {
    Process(ProcessId),
    Groups(Vec<Vec<ProcessId>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Fault {
    pub kind: FaultKind,
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<FaultTarget>,
}

/// Protocol knobs. The defaults are the protocols as intended; the others
/// exist to show what breaks without them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProtocolOptions {
    #[serde(default)]
    pub subset_rule: Option<SubsetRule>,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default = "default_true")]
    pub gc: bool,
    #[serde(default)]
    pub accept_scope: AcceptScope,
    /// Classifier rounds for lattice agreement; derived from `f` if unset.
    #[serde(default)]
    pub rounds: Option<u32>,
}

fn default_true() -> bool {
    true
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            subset_rule: None,
            truncation: Truncation::default(),
            gc: true,
            accept_scope: AcceptScope::default(),
            rounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Every delivery and phase change.
    #[default]
    Full,
    /// Only what the checkers and metrics need.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub n: usize,
    pub f: usize,
    pub protocol: Protocol,
    #[serde(default)]
    pub net_config: NetConfig,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub options: ProtocolOptions,
    #[serde(default)]
    pub trace: TraceLevel,
    /// Simulation stops here even if events remain.
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    /// Width of the throughput windows in the metrics.
    #[serde(default = "default_window")]
    pub window: u64,
}

fn default_max_ticks() -> u64 {
    1_000_000
}

fn default_window() -> u64 {
    100
}

impl Scenario {
    /// A scenario with defaults for everything but the essentials.
    pub fn new(protocol: Protocol, n: usize, f: usize, seed: u64) -> Self {
        Self {
            version: SCENARIO_VERSION,
            n,
            f,
            protocol,
            net_config: NetConfig::default(),
            workload: Workload::default(),
            faults: Vec::new(),
            seed,
            options: ProtocolOptions::default(),
            trace: TraceLevel::default(),
            max_ticks: default_max_ticks(),
            window: default_window(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn subset_rule(&self) -> SubsetRule {
        self.options.subset_rule.unwrap_or(match self.protocol {
            Protocol::Rsm => SubsetRule::UpdatesOnly,
            _ => SubsetRule::AllCommands,
        })
    }

    pub fn client_timeout(&self) -> u64 {
        self.workload.timeout.unwrap_or(50 * self.net_config.max_delay)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCENARIO_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if 2 * self.f >= self.n {
            return Err(invalid(format!("f = {} needs n > 2f, got n = {}", self.f, self.n)));
        }
        if self.protocol == Protocol::AsyncLa && self.n > 32 {
            return Err(invalid("async_la runs support at most 32 processes"));
        }
        self.net_config.validate()?;
        let w = &self.workload;
        if !(0.0..=1.0).contains(&w.read_ratio) {
            return Err(invalid(format!("readRatio {} outside [0, 1]", w.read_ratio)));
        }
        if w.key_range == 0 {
            return Err(invalid("keyRange must be positive"));
        }
        if self.protocol != Protocol::AsyncLa && w.clients == 0 {
            return Err(invalid("workload needs at least one client"));
        }
        if self.window == 0 {
            return Err(invalid("window must be positive"));
        }
        self.validate_faults()
    }

    fn validate_faults(&self) -> Result<(), ConfigError> {
        let mut crashed = vec![false; self.n];
        let mut faults: Vec<&Fault> = self.faults.iter().collect();
        faults.sort_by_key(|f| f.tick);
        let mut partitioned = false;
        for fault in faults {
            match (fault.kind, &fault.target) {
                (FaultKind::Crash, Some(FaultTarget::Process(p))) => {
                    if *p >= self.n {
                        return Err(invalid(format!("crash target {p} outside 0..{}", self.n)));
                    }
                    if crashed[*p] {
                        return Err(invalid(format!("process {p} crashes twice")));
                    }
                    crashed[*p] = true;
                }
                (FaultKind::Partition, Some(FaultTarget::Groups(groups))) => {
                    let mut seen = vec![false; self.n];
                    for &p in groups.iter().flatten() {
                        if p >= self.n || seen[p] {
                            return Err(invalid("partition groups must list every process exactly once"));
                        }
                        seen[p] = true;
                    }
                    if seen.contains(&false) {
                        return Err(invalid("partition groups must list every process exactly once"));
                    }
                    partitioned = true;
                }
                (FaultKind::Heal, None) => partitioned = false,
                (kind, _) => return Err(invalid(format!("fault {kind:?} at tick {} has the wrong target", fault.tick))),
            }
        }
        let crashes = crashed.iter().filter(|&&c| c).count();
        if crashes > self.f {
            return Err(invalid(format!("{crashes} crashes exceed f = {}", self.f)));
        }
        if partitioned {
            return Err(invalid("the last partition is never healed"));
        }
        Ok(())
    }
}

/// A random fault schedule over `[0, horizon)`: up to `f` crashes of
/// distinct processes and, half the time, one two-way partition that heals
/// before `horizon`.
pub fn random_faults(n: usize, f: usize, horizon: u64, rng: &mut impl Rng) -> Vec<Fault> {
    let horizon = horizon.max(2);
    let mut faults = Vec::new();
    let mut processes: Vec<ProcessId> = (0..n).collect();
    processes.shuffle(rng);
    for &p in processes.iter().take(rng.gen_range(0..=f)) {
        faults.push(Fault {
            kind: FaultKind::Crash,
            tick: rng.gen_range(0..horizon),
            target: Some(FaultTarget::Process(p)),
        });
    }
    if n > 1 && rng.gen_bool(0.5) {
        processes.shuffle(rng);
        let cut = rng.gen_range(1..n);
        let mut groups = vec![processes[..cut].to_vec(), processes[cut..].to_vec()];
        for g in &mut groups {
            g.sort_unstable();
        }
        let start = rng.gen_range(0..horizon - 1);
        faults.push(Fault {
            kind: FaultKind::Partition,
            tick: start,
            target: Some(FaultTarget::Groups(groups)),
        });
        faults.push(Fault {
            kind: FaultKind::Heal,
            tick: rng.gen_range(start + 1..horizon),
            target: None,
        });
    }
    faults.sort_by_key(|f| f.tick);
    faults
}
