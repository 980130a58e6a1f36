//! Offline property checkers.
//!
//! Every checker is a pure function from a recorded run to a report. A
//! failed check always carries a witness naming the values involved.

pub mod bounds;
pub mod gla;
pub mod la;
pub mod linearizability;

use serde::{Deserialize, Serialize};

use crate::lattice::Lattice;

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<String>,
}

impl Check {
    pub fn pass() -> Self {
        Self { passed: true, witness: None }
    }

    pub fn fail(witness: impl Into<String>) -> Self {
        Self {
            passed: false,
            witness: Some(witness.into()),
        }
    }

    pub fn from_witness(witness: Option<String>) -> Self {
        match witness {
            Some(w) => Self::fail(w),
            None => Self::pass(),
        }
    }
}

/// Two labelled values.
pub type Pair<'a, K, L> = (&'a (K, L), &'a (K, L));

/// Finds two incomparable values, if any.
///
/// Sorting by height turns a chain into a sequence where each value lies
/// below the next, so only neighbours need comparing. If neighbours `x, y`
/// with `h(x) ≤ h(y)` fail `x ≤ y`, they are incomparable: `y ≤ x` would
/// force `h(y) < h(x)` unless `x = y`.
pub fn find_incomparable<L: Lattice, K: Clone>(items: &[(K, L)]) -> Option<Pair<'_, K, L>> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| items[i].1.height());
    order
        .windows(2)
        .map(|w| (&items[w[0]], &items[w[1]]))
        .find(|(a, b)| !a.1.leq(&b.1))
}
