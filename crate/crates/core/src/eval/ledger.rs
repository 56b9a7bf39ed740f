//! Token and environment-usage accounting.
//!
//! Every entry is recorded against a task; totals are always derived from the
//! per-task entries, so they equal the per-task sums by construction.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Policy,
    Value,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Policy => "policy",
            ModelRole::Value => "value",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenCounts {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    fn add(&mut self, other: TokenCounts) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UsageKey {
    pub role: ModelRole,
    pub model: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskUsage {
    #[serde(with = "usage_map")]
    pub tokens: BTreeMap<UsageKey, TokenCounts>,
    pub states_expanded: u64,
    pub transport_calls: u64,
}

/// Serializable copy of a ledger.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub tasks: BTreeMap<String, TaskUsage>,
}

impl LedgerSnapshot {
    pub fn totals(&self) -> BTreeMap<UsageKey, TokenCounts> {
        let mut totals: BTreeMap<UsageKey, TokenCounts> = BTreeMap::new();
        for usage in self.tasks.values() {
            for (key, counts) in &usage.tokens {
                totals.entry(key.clone()).or_default().add(*counts);
            }
        }
        totals
    }

    /// Token totals per model name, summed over roles.
    pub fn per_model(&self) -> BTreeMap<String, TokenCounts> {
        let mut out: BTreeMap<String, TokenCounts> = BTreeMap::new();
        for (key, counts) in self.totals() {
            out.entry(key.model).or_default().add(counts);
        }
        out
    }

    pub fn states_expanded(&self) -> u64 {
        self.tasks.values().map(|u| u.states_expanded).sum()
    }

    pub fn transport_calls(&self) -> u64 {
        self.tasks.values().map(|u| u.transport_calls).sum()
    }

    pub fn merge(&mut self, other: &LedgerSnapshot) {
        for (task, usage) in &other.tasks {
            let entry = self.tasks.entry(task.clone()).or_default();
            for (key, counts) in &usage.tokens {
                entry.tokens.entry(key.clone()).or_default().add(*counts);
            }
            entry.states_expanded += usage.states_expanded;
            entry.transport_calls += usage.transport_calls;
        }
    }

    /// Every counter multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> LedgerSnapshot {
        let mut out = self.clone();
        for usage in out.tasks.values_mut() {
            for counts in usage.tokens.values_mut() {
                counts.prompt_tokens *= factor;
                counts.completion_tokens *= factor;
            }
            usage.states_expanded *= factor;
            usage.transport_calls *= factor;
        }
        out
    }
}

/// Thread-safe, append-only usage ledger.
#[derive(Debug, Default)]
pub struct Ledger {
    inner: Mutex<LedgerSnapshot>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_tokens(&self, task_id: &str, role: ModelRole, model: &str, counts: TokenCounts) {
        let mut inner = self.inner.lock().expect("ledger poisoned");
        let usage = inner.tasks.entry(task_id.to_string()).or_default();
        usage.tokens.entry(UsageKey { role, model: model.to_string() }).or_default().add(counts);
        usage.transport_calls += 1;
    }

    pub fn record_expansions(&self, task_id: &str, count: u64) {
        let mut inner = self.inner.lock().expect("ledger poisoned");
        inner.tasks.entry(task_id.to_string()).or_default().states_expanded += count;
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.inner.lock().expect("ledger poisoned").clone()
    }
}

// JSON object keys must be strings: store the map as a list of entries.
mod usage_map {
    use super::{TokenCounts, UsageKey};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        role: super::ModelRole,
        model: String,
        prompt_tokens: u64,
        completion_tokens: u64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<UsageKey, TokenCounts>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, v)| Entry {
                role: k.role,
                model: k.model.clone(),
                prompt_tokens: v.prompt_tokens,
                completion_tokens: v.completion_tokens,
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<UsageKey, TokenCounts>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                (
                    UsageKey { role: e.role, model: e.model },
                    TokenCounts { prompt_tokens: e.prompt_tokens, completion_tokens: e.completion_tokens },
                )
            })
            .collect())
    }
}
