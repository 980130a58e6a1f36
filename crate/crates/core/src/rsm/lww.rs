//! Last-writer-wins map.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::command::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LwwEntry {
    pub value: String,
    pub ts: Timestamp,
}

/// Each key holds the value written with the greatest timestamp. Applying
/// a set of puts in any order gives the same map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwMap {
    entries: BTreeMap<String, LwwEntry>,
}

impl LwwMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns whether the put became the key's current value.
    pub fn put(&mut self, key: &str, value: &str, ts: Timestamp) -> bool {
        match self.entries.get_mut(key) {
            Some(entry) if entry.ts >= ts => false,
            Some(entry) => {
                entry.value = value.to_owned();
                entry.ts = ts;
                true
            }
            None => {
                self.entries.insert(
                    key.to_owned(),
                    LwwEntry {
                        value: value.to_owned(),
                        ts,
                    },
                );
                true
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn entry(&self, key: &str) -> Option<&LwwEntry> {
        self.entries.get(key)
    }

    /// State-based merge: keeps the newer entry per key.
    pub fn merge(&mut self, other: &LwwMap) {
        for (key, entry) in &other.entries {
            self.put(key, &entry.value, entry.ts);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Deterministic digest of the full map contents.
    pub fn state_hash(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        self.entries.hash(&mut hasher);
        hasher.finish()
    }
}
