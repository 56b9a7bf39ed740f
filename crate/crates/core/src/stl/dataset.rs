use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{build_action_outcome, LookaheadRecord};
use super::StlError;
use crate::agents::{count_value_phrases, parse_value, MalformedRationale, ValueScale};
use crate::domain::{StateKey, TrainingExample};

/// A visited state with its lookahead record, before filtering.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub task_id: String,
    pub depth: usize,
    pub iteration: usize,
    pub context: String,
    pub state_key: StateKey,
    pub record: LookaheadRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    ScaffoldingMissing,
    NumberMissing,
    OutOfScale,
    ConflictingLabels,
    SegmentMissing,
    /// The target cannot be written on the scale (e.g. a discounted label).
    Unformattable,
    /// The completion would carry more than one value phrase.
    RepeatedScaffolding,
}

impl From<&MalformedRationale> for RejectReason {
    fn from(err: &MalformedRationale) -> Self {
        match err {
            MalformedRationale::ScaffoldingMissing => RejectReason::ScaffoldingMissing,
            MalformedRationale::NumberMissing => RejectReason::NumberMissing,
            MalformedRationale::OutOfScale(_) => RejectReason::OutOfScale,
            MalformedRationale::ConflictingLabels => RejectReason::ConflictingLabels,
            MalformedRationale::SegmentMissing(_) => RejectReason::SegmentMissing,
            MalformedRationale::Unformattable(_) => RejectReason::Unformattable,
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = serde_json::to_value(self).expect("reasons serialize");
        f.write_str(text.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub task_id: String,
    pub state_key: StateKey,
    pub depth: usize,
    pub reason: RejectReason,
}

/// Keeps candidates whose successor rationale parses on `scale` and whose
/// completion can be formatted with exactly one value phrase.
pub fn filter_examples(candidates: Vec<Candidate>, scale: ValueScale) -> (Vec<TrainingExample>, Vec<Rejection>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for c in candidates {
        let completion = parse_value(&c.record.successor_rationale, scale)
            .and_then(|_| build_action_outcome(&c.record, scale))
            .map_err(|e| RejectReason::from(&e))
            .and_then(|completion| {
                // Label lines may legitimately repeat in Game-of-24 reasoning;
                // only the final line carries the value there.
                if scale != ValueScale::Game24 && count_value_phrases(&completion, scale) != 1 {
                    Err(RejectReason::RepeatedScaffolding)
                } else {
                    Ok(completion)
                }
            });
        match completion {
            Ok(completion) => kept.push(TrainingExample {
                task_id: c.task_id,
                depth: c.depth,
                iteration: c.iteration,
                context: c.context,
                completion,
                state_key: c.state_key,
            }),
            Err(reason) => rejected.push(Rejection { task_id: c.task_id, state_key: c.state_key, depth: c.depth, reason }),
        }
    }
    (kept, rejected)
}

/// Training examples, at most one per state key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    examples: BTreeMap<StateKey, TrainingExample>,
    /// Examples dropped because the same state already had one from the same
    /// or a later iteration.
    pub duplicates: usize,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, key: &StateKey) -> Option<&TrainingExample> {
        self.examples.get(key)
    }

    /// Examples in canonical order: (task_id, depth, state_key).
    pub fn examples(&self) -> Vec<&TrainingExample> {
        let mut all: Vec<&TrainingExample> = self.examples.values().collect();
        all.sort_by(|a, b| (&a.task_id, a.depth, &a.state_key).cmp(&(&b.task_id, b.depth, &b.state_key)));
        all
    }

    /// Examples grouped by depth; each group in canonical order.
    pub fn partitions(&self) -> BTreeMap<usize, Dataset> {
        let mut parts: BTreeMap<usize, Dataset> = BTreeMap::new();
        for example in self.examples.values() {
            parts.entry(example.depth).or_default().examples.insert(example.state_key.clone(), example.clone());
        }
        parts
    }

    /// Inserts one example: a later iteration replaces an earlier one for the
    /// same state; within an iteration the first occurrence wins.
    pub fn insert(&mut self, example: TrainingExample) {
        match self.examples.get(&example.state_key) {
            Some(existing) if existing.iteration >= example.iteration => self.duplicates += 1,
            _ => {
                self.examples.insert(example.state_key.clone(), example);
            }
        }
    }
}

/// Merges `new_examples` from `iteration` into `dataset`.
pub fn dedup_latest(mut dataset: Dataset, new_examples: Vec<TrainingExample>, iteration: usize) -> Dataset {
    for mut example in new_examples {
        example.iteration = iteration;
        dataset.insert(example);
    }
    dataset
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMask {
    /// Loss on the full sequence.
    #[default]
    None,
    /// Loss on the completion only.
    CompletionOnly,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportMeta {
    pub examples: usize,
    pub mask: LossMask,
}

/// Path of the metadata file written next to an export.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// One JSON object per line in canonical order, plus a metadata file
/// carrying the loss-mask flag for the external trainer.
pub fn export_jsonl(dataset: &Dataset, path: &Path, mask: LossMask) -> Result<(), StlError> {
    if dataset.is_empty() {
        return Err(StlError::EmptyDataset(path.to_path_buf()));
    }
    let io = |index: Option<usize>| {
        let path = path.to_path_buf();
        move |source| StlError::Io { path, index, source }
    };
    let mut out = BufWriter::new(File::create(path).map_err(io(None))?);
    for (i, example) in dataset.examples().into_iter().enumerate() {
        let line = serde_json::to_string(example).expect("examples serialize");
        writeln!(out, "{line}").map_err(io(Some(i)))?;
    }
    out.flush().map_err(io(None))?;
    let meta = ExportMeta { examples: dataset.len(), mask };
    let meta_file = meta_path(path);
    std::fs::write(&meta_file, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")
        .map_err(|source| StlError::Io { path: meta_file, index: None, source })
}

pub fn import_jsonl(path: &Path) -> Result<Dataset, StlError> {
    let file = File::open(path).map_err(|source| StlError::Io { path: path.into(), index: None, source })?;
    let mut dataset = Dataset::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| StlError::Io { path: path.into(), index: Some(i), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let example: TrainingExample = serde_json::from_str(&line).map_err(|e| StlError::Io {
            path: path.into(),
            index: Some(i),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        dataset.insert(example);
    }
    Ok(dataset)
}
