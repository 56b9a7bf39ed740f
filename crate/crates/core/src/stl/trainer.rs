use std::collections::BTreeMap;
use std::sync::Arc;

use super::dataset::Dataset;
use super::StlError;
use crate::agents::{parse_value, AgentError, ValueEstimate, ValueModel, ValueRequest, ValueScale};
use crate::domain::{state_key, StateKey};

/// Produces a value model from a base model and a dataset.
pub trait Trainer: Send + Sync {
    fn name(&self) -> &str;

    /// Always starts from `base`; previous checkpoints are never reused.
    fn fine_tune(&self, base: &Arc<dyn ValueModel>, dataset: &Dataset) -> Result<Arc<dyn ValueModel>, StlError>;
}

/// Memorizes each example's completion and target; unseen states go to the base model.
#[derive(Debug, Clone, Copy, Default)]
pub struct TabularTrainer;

impl Trainer for TabularTrainer {
    fn name(&self) -> &str {
        "tabular"
    }

    fn fine_tune(&self, base: &Arc<dyn ValueModel>, dataset: &Dataset) -> Result<Arc<dyn ValueModel>, StlError> {
        Ok(Arc::new(TabularValueModel::from_dataset(Arc::clone(base), dataset)?))
    }
}

pub struct TabularValueModel {
    name: String,
    base: Arc<dyn ValueModel>,
    table: BTreeMap<StateKey, (String, f64)>,
}

impl TabularValueModel {
    pub fn from_dataset(base: Arc<dyn ValueModel>, dataset: &Dataset) -> Result<Self, StlError> {
        let scale = base.scale();
        let mut table = BTreeMap::new();
        for example in dataset.examples() {
            let y = parse_value(&example.completion, scale)
                .map_err(|e| StlError::Trainer(format!("example {}: {e}", example.state_key)))?;
            table.insert(example.state_key.clone(), (example.completion.clone(), y));
        }
        Ok(Self { name: format!("tabular({})", base.name()), base, table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, key: &StateKey) -> Option<f64> {
        self.table.get(key).map(|(_, y)| *y)
    }
}

impl ValueModel for TabularValueModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn scale(&self) -> ValueScale {
        self.base.scale()
    }

    fn evaluate(&self, request: &ValueRequest<'_>) -> Result<ValueEstimate, AgentError> {
        let key = state_key(&request.trajectory.task, request.trajectory);
        match self.table.get(&key) {
            Some((completion, y)) => {
                Ok(ValueEstimate::fixed(completion.clone(), *y, request.sampling.samples, request.sampling.aggregation))
            }
            None => self.base.evaluate(request),
        }
    }
}
