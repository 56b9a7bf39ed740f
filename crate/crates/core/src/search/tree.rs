use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::ValueEstimate;
use crate::domain::{Action, State, Task, Trajectory};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    pub index: usize,
    pub parent: Option<usize>,
    pub action: Option<String>,
    pub state_id: String,
    pub depth: usize,
    pub observation: String,
    pub terminal: bool,
    pub value: Option<ValueEstimate>,
    /// MCTS visit count N.
    pub visits: u64,
    /// MCTS total proxy reward W.
    pub total_reward: f64,
    pub expanded: bool,
    pub children: Vec<usize>,
    #[serde(skip)]
    pub state: Option<Arc<State>>,
}

impl TreeNode {
    pub fn value(&self) -> Option<f64> {
        self.value.as_ref().map(|v| v.value)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Environment transition calls made by this search.
    pub states_expanded: u64,
    pub evaluations: u64,
    pub terminal_reached: bool,
    pub best_leaf: Option<usize>,
    pub rejected_actions: u64,
    pub value_failures: u64,
    pub failure: Option<String>,
}

/// Every node an engine materialized, with values, visit statistics and
/// the engine's summary statistics. Node 0 is the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchTree {
    pub task: Task,
    pub engine: String,
    pub nodes: Vec<TreeNode>,
    pub stats: SearchStats,
}

impl SearchTree {
    pub fn new(task: Task, engine: &str, root: Arc<State>, terminal: bool) -> Self {
        let node = TreeNode {
            index: 0,
            parent: None,
            action: None,
            state_id: root.id.clone(),
            depth: root.depth,
            observation: root.observation.clone(),
            terminal,
            value: None,
            visits: 0,
            total_reward: 0.0,
            expanded: false,
            children: Vec::new(),
            state: Some(root),
        };
        Self { task, engine: engine.to_string(), nodes: vec![node], stats: SearchStats::default() }
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub(crate) fn add_child(&mut self, parent: usize, action: &Action, state: Arc<State>, terminal: bool) -> usize {
        let index = self.nodes.len();
        self.nodes.push(TreeNode {
            index,
            parent: Some(parent),
            action: Some(action.text().to_string()),
            state_id: state.id.clone(),
            depth: state.depth,
            observation: state.observation.clone(),
            terminal,
            value: None,
            visits: 0,
            total_reward: 0.0,
            expanded: false,
            children: Vec::new(),
            state: Some(state),
        });
        self.nodes[parent].children.push(index);
        index
    }

    pub fn state(&self, index: usize) -> &Arc<State> {
        self.nodes[index].state.as_ref().expect("live tree nodes carry their state")
    }

    pub fn trajectory(&self, index: usize) -> Trajectory {
        Trajectory::from_leaf(self.task.clone(), self.state(index))
    }

    /// Node indices from the root down to `index`.
    pub fn path(&self, index: usize) -> Vec<usize> {
        let mut path = vec![index];
        let mut cursor = index;
        while let Some(parent) = self.nodes[cursor].parent {
            path.push(parent);
            cursor = parent;
        }
        path.reverse();
        path
    }

    /// Children that received a value, in generation order.
    pub fn evaluated_children(&self, index: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes[index].children.iter().map(|&c| &self.nodes[c]).filter(|n| n.value.is_some())
    }

    pub fn best_trajectory(&self) -> Option<Trajectory> {
        self.stats.best_leaf.map(|leaf| self.trajectory(leaf))
    }

    /// Deterministic pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("search trees serialize")
    }

    pub fn write_dump(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }
}
