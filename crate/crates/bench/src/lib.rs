//! Scenario builders shared by the benchmarks in `benches/`.

use larsm::harness::{Protocol, Scenario, TraceLevel};

/// A crash-free run with summary tracing, so the benchmark measures the
/// protocol rather than trace formatting.
pub fn scenario(protocol: Protocol, n: usize, seed: u64) -> Scenario {
    let mut s = Scenario::new(protocol, n, (n - 1) / 2, seed);
    s.trace = TraceLevel::Summary;
    s
}

/// The replicated store under a closed-loop load with the given read ratio.
pub fn store(n: usize, read_ratio: f64) -> Scenario {
    let mut s = scenario(Protocol::Rsm, n, 1);
    s.workload.clients = 8;
    s.workload.ops_per_client = 25;
    s.workload.read_ratio = read_ratio;
    s
}
