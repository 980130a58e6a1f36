//! Commands, timestamps and the command-set lattice.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::lattice::SetLattice;

pub type ReplicaId = u32;
pub type ClientId = u32;

/// Globally unique command identifier.
///
/// Updates are named by the replica that minted them, the issuing client
/// and that client's request counter. Null commands are named by the
/// minting replica and a batch number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CommandId {
    Update { origin: ReplicaId, client: ClientId, counter: u64 },
    Null { origin: ReplicaId, batch: u64 },
}

impl CommandId {
    pub fn update(origin: ReplicaId, client: ClientId, counter: u64) -> Self {
        Self::Update { origin, client, counter }
    }

    pub fn null(origin: ReplicaId, batch: u64) -> Self {
        Self::Null { origin, batch }
    }

    pub fn is_update(&self) -> bool {
        matches!(self, Self::Update { .. })
    }

    pub fn origin(&self) -> ReplicaId {
        match *self {
            Self::Update { origin, .. } | Self::Null { origin, .. } => origin,
        }
    }
}

impl fmt::Display for CommandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Update { origin, client, counter } => write!(f, "u{origin}.{client}.{counter}"),
            Self::Null { origin, batch } => write!(f, "n{origin}.{batch}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed command id {0:?}")]
pub struct ParseCommandIdError(String);

impl FromStr for CommandId {
    type Err = ParseCommandIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseCommandIdError(s.to_owned());
        let (tag, rest) = s.split_at_checked(1).ok_or_else(err)?;
        let parts: Vec<&str> = rest.split('.').collect();
        let num = |i: usize| -> Result<u64, ParseCommandIdError> {
            parts.get(i).and_then(|p| p.parse().ok()).ok_or_else(err)
        };
        match (tag, parts.len()) {
            ("u", 3) => Ok(Self::Update {
                origin: u32::try_from(num(0)?).map_err(|_| err())?,
                client: u32::try_from(num(1)?).map_err(|_| err())?,
                counter: num(2)?,
            }),
            ("n", 2) => Ok(Self::Null {
                origin: u32::try_from(num(0)?).map_err(|_| err())?,
                batch: num(1)?,
            }),
            _ => Err(err()),
        }
    }
}

impl Serialize for CommandId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CommandId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

pub type CommandSet = SetLattice<CommandId>;

/// `{c ∈ a : c is an update} ⊆ {c ∈ b : c is an update}`.
///
/// Null commands only carry read batches, so proposals are compared on
/// their update content alone.
pub fn contains_updates(a: &CommandSet, b: &CommandSet) -> bool {
    a.iter().filter(|c| c.is_update()).all(|c| b.contains(c))
}

/// The update-only projection of a command set.
pub fn updates_of(set: &CommandSet) -> CommandSet {
    set.iter().filter(|c| c.is_update()).copied().collect()
}

/// Logical timestamp, totally ordered by `(counter, replica)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Timestamp {
    pub counter: u64,
    pub replica: ReplicaId,
}

impl Timestamp {
    pub fn new(counter: u64, replica: ReplicaId) -> Self {
        Self { counter, replica }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandKind {
    Update { key: String, value: String, ts: Timestamp },
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub id: CommandId,
    #[serde(flatten)]
    pub kind: CommandKind,
}

/// Side table from command id to payload.
///
/// The lattice only moves identifiers around; replicas look payloads up
/// here when they apply learned commands.
#[derive(Debug, Clone, Default)]
pub struct CommandRegistry {
    commands: HashMap<CommandId, Command>,
}

impl CommandRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, command: Command) {
        self.commands.insert(command.id, command);
    }

    pub fn get(&self, id: &CommandId) -> Option<&Command> {
        self.commands.get(id)
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}
