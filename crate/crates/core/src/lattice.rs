//! Join semi-lattices.
//!
//! A [`Lattice`] is a value type with a bottom element, a join (least upper
//! bound) and a height function. The protocols in this crate are written
//! against the trait so they can run on any finite-height lattice; the
//! replicated state machine uses [`SetLattice`] over command identifiers.

use std::collections::BTreeSet;
use std::fmt::{self, Debug};

use serde::{Deserialize, Serialize};

/// Length of the longest chain from a minimal element up to a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Height(pub u64);

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// An element of a join semi-lattice with a computable height.
///
/// Implementations must make `join` idempotent, commutative and associative,
/// with `bottom()` as its identity, and `height` monotone in `leq`.
pub trait Lattice: Clone + Eq + Debug {
    fn bottom() -> Self;

    fn join(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.join_assign(other);
        out
    }

    fn join_assign(&mut self, other: &Self);

    /// `self ≤ other`, i.e. `join(self, other) == other`.
    fn leq(&self, other: &Self) -> bool;

    fn height(&self) -> Height;

    fn is_bottom(&self) -> bool {
        *self == Self::bottom()
    }

    fn comparable(&self, other: &Self) -> bool {
        self.leq(other) || other.leq(self)
    }
}

/// Joins every element of an iterator, starting from bottom.
pub fn join_all<'a, L: Lattice + 'a>(items: impl IntoIterator<Item = &'a L>) -> L {
    items.into_iter().fold(L::bottom(), |mut acc, x| {
        acc.join_assign(x);
        acc
    })
}

/// Finite sets ordered by inclusion. Height is cardinality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SetLattice<T: Ord>(BTreeSet<T>);

impl<T: Ord> SetLattice<T> {
    pub fn new() -> Self {
        Self(BTreeSet::new())
    }

    pub fn singleton(item: T) -> Self {
        Self(BTreeSet::from([item]))
    }

    pub fn insert(&mut self, item: T) -> bool {
        self.0.insert(item)
    }

    pub fn contains(&self, item: &T) -> bool {
        self.0.contains(item)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::collections::btree_set::Iter<'_, T> {
        self.0.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<T> {
        &self.0
    }

    pub fn into_inner(self) -> BTreeSet<T> {
        self.0
    }

    /// Keeps only the items matching `keep`.
    pub fn retain(&mut self, keep: impl FnMut(&T) -> bool) {
        self.0.retain(keep);
    }
}

impl<T: Ord + Clone> SetLattice<T> {
    /// Set difference `self − other`.
    pub fn difference(&self, other: &Self) -> Self {
        Self(self.0.difference(&other.0).cloned().collect())
    }

    /// Removes every item of `other` from `self` in place.
    pub fn subtract(&mut self, other: &Self) {
        if other.0.len() < self.0.len() {
            for item in &other.0 {
                self.0.remove(item);
            }
        } else {
            self.0.retain(|x| !other.0.contains(x));
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(self.0.intersection(&other.0).cloned().collect())
    }
}

impl<T: Ord> Default for SetLattice<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Ord + Debug> Debug for SetLattice<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl<T: Ord> FromIterator<T> for SetLattice<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<T: Ord> From<BTreeSet<T>> for SetLattice<T> {
    fn from(set: BTreeSet<T>) -> Self {
        Self(set)
    }
}

impl<'a, T: Ord> IntoIterator for &'a SetLattice<T> {
    type Item = &'a T;
    type IntoIter = std::collections::btree_set::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl<T: Ord + Clone + Debug> Lattice for SetLattice<T> {
    fn bottom() -> Self {
        Self::new()
    }

    fn join_assign(&mut self, other: &Self) {
        if self.0.is_empty() {
            self.0 = other.0.clone();
            return;
        }
        for item in &other.0 {
            if !self.0.contains(item) {
                self.0.insert(item.clone());
            }
        }
    }

    fn leq(&self, other: &Self) -> bool {
        self.0.is_subset(&other.0)
    }

    fn height(&self) -> Height {
        Height(self.0.len() as u64)
    }

    fn is_bottom(&self) -> bool {
        self.0.is_empty()
    }
}

/// Subsets of a 64-atom universe, packed into a bit mask.
///
/// Same order as [`SetLattice`] but with constant-time operations; the
/// large simulation sweeps use it for lattice agreement inputs.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BitSet64(pub u64);

impl BitSet64 {
    pub fn atom(i: u32) -> Self {
        assert!(i < 64, "atom {i} outside the 64-element universe");
        Self(1 << i)
    }

    pub fn atoms(&self) -> impl Iterator<Item = u32> + '_ {
        (0..64).filter(move |i| self.0 & (1 << i) != 0)
    }
}

impl Debug for BitSet64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.atoms()).finish()
    }
}

impl Lattice for BitSet64 {
    fn bottom() -> Self {
        Self(0)
    }

    fn join(&self, other: &Self) -> Self {
        Self(self.0 | other.0)
    }

    fn join_assign(&mut self, other: &Self) {
        self.0 |= other.0;
    }

    fn leq(&self, other: &Self) -> bool {
        self.0 & !other.0 == 0
    }

    fn height(&self) -> Height {
        Height(u64::from(self.0.count_ones()))
    }
}

/// The chain of natural numbers under `max`. Height of `n` is `n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaxLattice(pub u64);

impl Lattice for MaxLattice {
    fn bottom() -> Self {
        Self(0)
    }

    fn join_assign(&mut self, other: &Self) {
        self.0 = self.0.max(other.0);
    }

    fn leq(&self, other: &Self) -> bool {
        self.0 <= other.0
    }

    fn height(&self) -> Height {
        Height(self.0)
    }
}

/// Product of two lattices, ordered componentwise.
///
/// The height of a pair is the sum of component heights: a maximal chain
/// below `(a, b)` climbs one component at a time.
impl<A: Lattice, B: Lattice> Lattice for (A, B) {
    fn bottom() -> Self {
        (A::bottom(), B::bottom())
    }

    fn join_assign(&mut self, other: &Self) {
        self.0.join_assign(&other.0);
        self.1.join_assign(&other.1);
    }

    fn leq(&self, other: &Self) -> bool {
        self.0.leq(&other.0) && self.1.leq(&other.1)
    }

    fn height(&self) -> Height {
        Height(self.0.height().0 + self.1.height().0)
    }
}
