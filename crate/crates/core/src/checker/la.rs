//! Lattice agreement: validity and comparability of decisions.

use serde::{Deserialize, Serialize};

use super::{find_incomparable, Check};
use crate::lattice::{join_all, Lattice};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LaReport {
    /// `x_i ≤ y_i` for every deciding process.
    pub downward_validity: Check,
    /// `y_i ≤ ⊔x` for every deciding process.
    pub upward_validity: Check,
    pub comparability: Check,
    /// Every process that did not crash decided.
    pub termination: Check,
}

impl LaReport {
    pub fn passed(&self) -> bool {
        self.downward_validity.passed && self.upward_validity.passed && self.comparability.passed && self.termination.passed
    }
}

/// Checks one run. `outputs[i]` is `None` when process `i` never decided;
/// `crashed[i]` excuses that. Decisions made before a crash are checked.
pub fn check_la<L: Lattice>(inputs: &[L], outputs: &[Option<L>], crashed: &[bool]) -> LaReport {
    assert_eq!(inputs.len(), outputs.len());
    let top: L = join_all(inputs);
    let decided: Vec<(usize, L)> = outputs
        .iter()
        .enumerate()
        .filter_map(|(i, y)| y.clone().map(|y| (i, y)))
        .collect();
    let downward = decided
        .iter()
        .find(|(i, y)| !inputs[*i].leq(y))
        .map(|(i, y)| format!("process {i}: input {:?} not below decision {y:?}", inputs[*i]));
    let upward = decided
        .iter()
        .find(|(_, y)| !y.leq(&top))
        .map(|(i, y)| format!("process {i}: decision {y:?} not below the join of all inputs {top:?}"));
    let comparability = find_incomparable(&decided)
        .map(|(a, b)| format!("processes {} and {} decided incomparable {:?} and {:?}", a.0, b.0, a.1, b.1));
    let termination = (0..outputs.len())
        .find(|&i| outputs[i].is_none() && !crashed.get(i).copied().unwrap_or(false))
        .map(|i| format!("correct process {i} never decided"));
    LaReport {
        downward_validity: Check::from_witness(downward),
        upward_validity: Check::from_witness(upward),
        comparability: Check::from_witness(comparability),
        termination: Check::from_witness(termination),
    }
}
