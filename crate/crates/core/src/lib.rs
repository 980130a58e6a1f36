//! Lattice agreement protocols and a replicated key-value store built on them.

pub mod async_la;
pub mod checker;
pub mod gla;
pub mod harness;
pub mod lattice;
pub mod rsm;
pub mod simnet;

/// Index of a process or replica, `0..n`.
pub type ProcessId = usize;
