//! Generalized lattice agreement: validity, stability, comparability and
//! liveness over the learned values of every replica.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{find_incomparable, Check};
use crate::lattice::Lattice;
use crate::rsm::command::{updates_of, CommandId, CommandSet};
use crate::ProcessId;

/// Which part of a learned set the ordering checks look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    #[default]
    AllCommands,
    /// Null commands dropped; the guarantee when proposals are compared on
    /// updates only.
    UpdatesOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GlaHistory {
    pub n: usize,
    pub crashed: Vec<bool>,
    /// Commands handed to each replica, in submission order.
    pub submitted: Vec<(ProcessId, CommandId)>,
    /// `learned[p][s]` is `LV_p[s]`.
    pub learned: Vec<Vec<CommandSet>>,
    /// `rounds[p][s]`: proposal rounds replica `p` used for sequence `s`.
    pub rounds: Vec<Vec<u32>>,
    pub max_rounds: u32,
    pub projection: Projection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GlaReport {
    /// Every learned command was submitted.
    pub validity: Check,
    /// `LearnedVal_p^s ⊆ LearnedVal_q^(s+1)` for all replicas `p, q`.
    pub stability: Check,
    /// `LV_p[s]` and `LV_q[s]` comparable for every `s`.
    pub sequence_comparability: Check,
    /// All `LearnedVal_p^s` form a chain.
    pub comparability: Check,
    /// Commands submitted to correct replicas are learned by every correct
    /// replica (null commands under the update projection: by their own).
    pub liveness: Check,
    /// No sequence used more than `f + 1` proposal rounds.
    pub round_bound: Check,
}

impl GlaReport {
    /// Everything but the round bound.
    pub fn properties(&self) -> [(&'static str, &Check); 5] {
        [
            ("validity", &self.validity),
            ("stability", &self.stability),
            ("sequenceComparability", &self.sequence_comparability),
            ("comparability", &self.comparability),
            ("liveness", &self.liveness),
        ]
    }

    pub fn passed(&self) -> bool {
        self.properties().iter().all(|(_, c)| c.passed)
    }
}

/// `LearnedVal_p^s` for every `s`.
pub fn cumulative(learned: &[CommandSet]) -> Vec<CommandSet> {
    let mut acc = CommandSet::new();
    learned
        .iter()
        .map(|lv| {
            acc.join_assign(lv);
            acc.clone()
        })
        .collect()
}

fn project(set: &CommandSet, projection: Projection) -> CommandSet {
    match projection {
        Projection::AllCommands => set.clone(),
        Projection::UpdatesOnly => updates_of(set),
    }
}

fn show(set: &CommandSet) -> String {
    let items: Vec<String> = set.iter().map(|c| c.to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

pub fn check_gla(history: &GlaHistory) -> GlaReport {
    let n = history.n;
    let crashed = |p: usize| history.crashed.get(p).copied().unwrap_or(false);
    let full: Vec<Vec<CommandSet>> = history.learned.iter().map(|lv| cumulative(lv)).collect();
    let projected: Vec<Vec<CommandSet>> = full
        .iter()
        .map(|c| c.iter().map(|v| project(v, history.projection)).collect())
        .collect();

    let submitted: BTreeSet<CommandId> = history.submitted.iter().map(|(_, c)| *c).collect();
    let validity = full.iter().enumerate().find_map(|(p, seqs)| {
        let last = seqs.last()?;
        let invented: Vec<_> = last.iter().filter(|c| !submitted.contains(c)).collect();
        invented
            .first()
            .map(|c| format!("replica {p} learned {c}, which was never submitted"))
    });

    let mut stability = None;
    'outer: for p in 0..n {
        for q in 0..n {
            for (s, lower) in projected[p].iter().enumerate() {
                let Some(upper) = projected[q].get(s + 1) else { break };
                if !lower.leq(upper) {
                    let missing = lower.difference(upper);
                    stability = Some(format!(
                        "learned command set of replica {p} for sequence {s} is not contained in that of replica {q} for sequence {}: missing {}",
                        s + 1,
                        show(&missing)
                    ));
                    break 'outer;
                }
            }
        }
    }

    let max_seq = history.learned.iter().map(Vec::len).max().unwrap_or(0);
    let mut sequence_comparability = None;
    for s in 0..max_seq {
        let values: Vec<(ProcessId, CommandSet)> = history
            .learned
            .iter()
            .enumerate()
            .filter_map(|(p, lv)| lv.get(s).map(|v| (p, project(v, history.projection))))
            .collect();
        if let Some((a, b)) = find_incomparable(&values) {
            sequence_comparability = Some(format!(
                "LV of replica {} and replica {} at sequence {s} are incomparable: {} vs {}",
                a.0,
                b.0,
                show(&a.1),
                show(&b.1)
            ));
            break;
        }
    }

    let all: Vec<((ProcessId, usize), CommandSet)> = projected
        .iter()
        .enumerate()
        .flat_map(|(p, seqs)| seqs.iter().enumerate().map(move |(s, v)| ((p, s), v.clone())))
        .collect();
    let comparability = find_incomparable(&all).map(|(a, b)| {
        format!(
            "learned command set of replica {} for sequence {} is {} and of replica {} for sequence {} is {}; they are incomparable",
            a.0 .0,
            a.0 .1,
            show(&a.1),
            b.0 .0,
            b.0 .1,
            show(&b.1)
        )
    });

    let empty = CommandSet::new();
    let finals: Vec<&CommandSet> = (0..n).map(|p| full.get(p).and_then(|c| c.last()).unwrap_or(&empty)).collect();
    let liveness = history
        .submitted
        .iter()
        .filter(|(origin, _)| !crashed(*origin))
        .find_map(|(origin, c)| {
            // Under the update projection a null command only has to reach
            // the replica that answers the reads riding on it.
            let everywhere = history.projection == Projection::AllCommands || c.is_update();
            (0..n)
                .filter(|&q| !crashed(q) && (everywhere || q == *origin))
                .find(|&q| !finals[q].contains(c))
                .map(|q| format!("command {c} submitted to replica {origin} was never learned by replica {q}"))
        });

    let round_bound = history.rounds.iter().enumerate().find_map(|(p, rounds)| {
        rounds
            .iter()
            .enumerate()
            .find(|(_, &r)| r > history.max_rounds)
            .map(|(s, r)| format!("replica {p} used {r} rounds for sequence {s}, bound {}", history.max_rounds))
    });

    GlaReport {
        validity: Check::from_witness(validity),
        stability: Check::from_witness(stability),
        sequence_comparability: Check::from_witness(sequence_comparability),
        comparability: Check::from_witness(comparability),
        liveness: Check::from_witness(liveness),
        round_bound: Check::from_witness(round_bound),
    }
}
