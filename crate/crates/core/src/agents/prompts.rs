//! Prompt templates, keyed by environment family and model role.
//!
//! Built-in templates live in `assets/prompts/<family>/<role>.txt`; a prompt
//! directory with the same layout overrides them file by file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptFamily {
    Webshop,
    Hotpotqa,
    Game24,
}

impl fmt::Display for PromptFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptFamily::Webshop => "webshop",
            PromptFamily::Hotpotqa => "hotpotqa",
            PromptFamily::Game24 => "game24",
        })
    }
}

impl FromStr for PromptFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "webshop" => Ok(PromptFamily::Webshop),
            "hotpotqa" => Ok(PromptFamily::Hotpotqa),
            "game24" => Ok(PromptFamily::Game24),
            other => Err(format!("unknown prompt family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptRole {
    Policy,
    Value,
    Attribute,
}

impl PromptRole {
    fn file_stem(self) -> &'static str {
        match self {
            PromptRole::Policy => "policy",
            PromptRole::Value => "value",
            PromptRole::Attribute => "attribute",
        }
    }
}

fn builtin(family: PromptFamily, role: PromptRole) -> Option<&'static str> {
    use PromptFamily::*;
    use PromptRole::*;
    match (family, role) {
        (Webshop, Policy) => Some(include_str!("../../assets/prompts/webshop/policy.txt")),
        (Webshop, Value) => Some(include_str!("../../assets/prompts/webshop/value.txt")),
        (Webshop, Attribute) => Some(include_str!("../../assets/prompts/webshop/attribute.txt")),
        (Hotpotqa, Policy) => Some(include_str!("../../assets/prompts/hotpotqa/policy.txt")),
        (Hotpotqa, Value) => Some(include_str!("../../assets/prompts/hotpotqa/value.txt")),
        (Game24, Policy) => Some(include_str!("../../assets/prompts/game24/policy.txt")),
        (Game24, Value) => Some(include_str!("../../assets/prompts/game24/value.txt")),
        _ => None,
    }
}

/// A template with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    /// Substitutes every `{key}`; placeholders without a value become empty.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if after[..close].chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                    if let Some(v) = values.get(&after[..close]) {
                        out.push_str(v);
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone)]
pub struct PromptSet {
    pub family: PromptFamily,
    templates: BTreeMap<PromptRole, PromptTemplate>,
    pub few_shot: String,
}

impl PromptSet {
    pub fn builtin(family: PromptFamily) -> Self {
        let templates = [PromptRole::Policy, PromptRole::Value, PromptRole::Attribute]
            .into_iter()
            .filter_map(|role| builtin(family, role).map(|t| (role, PromptTemplate::new(t))))
            .collect();
        Self { family, templates, few_shot: String::new() }
    }

    /// Built-ins overridden by `<dir>/<family>/<role>.txt` and
    /// `<dir>/<family>/few_shot.txt` where present.
    pub fn with_overrides(family: PromptFamily, dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::builtin(family);
        let base = dir.join(family.to_string());
        for role in [PromptRole::Policy, PromptRole::Value, PromptRole::Attribute] {
            let path = base.join(format!("{}.txt", role.file_stem()));
            if path.exists() {
                set.templates.insert(role, PromptTemplate::new(std::fs::read_to_string(path)?));
            }
        }
        let few_shot = base.join("few_shot.txt");
        if few_shot.exists() {
            set.few_shot = std::fs::read_to_string(few_shot)?;
        }
        Ok(set)
    }

    pub fn template(&self, role: PromptRole) -> Option<&PromptTemplate> {
        self.templates.get(&role)
    }
}
