//! Scripted fixture environment: a finite rooted DAG loaded from JSON.
//!
//! Schema (all keys other than `root`, `nodes`, `edges` are optional):
//!
//! ```json
//! {
//!   "root": "home",
//!   "instruction": "i need ...",
//!   "value_scale": "likert10",
//!   "tasks": [{"id": "t0", "instruction": "i need ...", "root": "home", "split": "rollout"}],
//!   "nodes": [{"id": "home", "observation": "...", "terminal": false, "score": 1.0,
//!              "rationales": ["... Thus the correctness score is 6"], "attribute": false}],
//!   "edges": [{"from": "home", "action": "search[shorts]", "to": "results"}]
//! }
//! ```
//!
//! Without `tasks`, the fixture defines a single task `task-0` whose
//! instruction is `instruction` (or the root observation).

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment};
use crate::domain::{canonicalize_action, Action, Split, State, Task, Trajectory};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureNode {
    pub id: String,
    pub observation: String,
    #[serde(default)]
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Value-model samples for this node, consumed by the scripted value model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rationales: Vec<String>,
    /// Marks attribute-selection nodes (4-point attribute scale).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub attribute: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureEdge {
    pub from: String,
    pub action: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureTask {
    pub id: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Fixture {
    pub root: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_scale: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<FixtureTask>,
    pub nodes: Vec<FixtureNode>,
    #[serde(default)]
    pub edges: Vec<FixtureEdge>,
}

#[derive(Debug)]
pub struct ScriptedEnvironment {
    name: String,
    fixture: Fixture,
    nodes: HashMap<String, usize>,
    // node id -> ordered (canonical action, target node id)
    edges: HashMap<String, Vec<(String, String)>>,
    task_roots: BTreeMap<String, String>,
}

fn fixture_err(element: impl Into<String>, reason: impl Into<String>) -> EnvError {
    EnvError::Fixture { element: element.into(), reason: reason.into() }
}

impl ScriptedEnvironment {
    /// Loads and validates a fixture file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| EnvError::Io { path: path.display().to_string(), source })?;
        let fixture: Fixture =
            serde_json::from_str(&text).map_err(|e| fixture_err(path.display().to_string(), e.to_string()))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scripted".into());
        Self::from_fixture(name, fixture)
    }

    pub fn from_fixture(name: impl Into<String>, fixture: Fixture) -> Result<Self, EnvError> {
        let mut nodes = HashMap::new();
        for (index, node) in fixture.nodes.iter().enumerate() {
            if nodes.insert(node.id.clone(), index).is_some() {
                return Err(fixture_err(format!("node `{}`", node.id), "duplicate node id"));
            }
        }
        if !nodes.contains_key(&fixture.root) {
            return Err(fixture_err(format!("root `{}`", fixture.root), "root is not a declared node"));
        }

        let mut edges: HashMap<String, Vec<(String, String)>> = HashMap::new();
        for (index, edge) in fixture.edges.iter().enumerate() {
            for end in [&edge.from, &edge.to] {
                if !nodes.contains_key(end) {
                    return Err(fixture_err(format!("edge #{index}"), format!("dangling reference to node `{end}`")));
                }
            }
            let action = canonicalize_action(&edge.action);
            if action.is_empty() {
                return Err(fixture_err(format!("edge #{index}"), "empty action"));
            }
            let out = edges.entry(edge.from.clone()).or_default();
            if out.iter().any(|(a, _)| *a == action) {
                return Err(fixture_err(format!("node `{}`", edge.from), format!("duplicate edge action `{action}`")));
            }
            out.push((action, edge.to.clone()));
        }

        let mut task_roots = BTreeMap::new();
        let tasks = if fixture.tasks.is_empty() {
            let instruction = fixture.instruction.clone().unwrap_or_else(|| {
                fixture.nodes[nodes[&fixture.root]].observation.clone()
            });
            vec![FixtureTask { id: "task-0".into(), instruction, root: None, split: Split::Rollout }]
        } else {
            fixture.tasks.clone()
        };
        for task in &tasks {
            let root = task.root.clone().unwrap_or_else(|| fixture.root.clone());
            if !nodes.contains_key(&root) {
                return Err(fixture_err(format!("task `{}`", task.id), format!("unknown root `{root}`")));
            }
            if task.instruction.trim().is_empty() {
                return Err(fixture_err(format!("task `{}`", task.id), "empty instruction"));
            }
            if task_roots.insert(task.id.clone(), root).is_some() {
                return Err(fixture_err(format!("task `{}`", task.id), "duplicate task id"));
            }
        }

        // Reachability from the fixture root and every task root.
        let mut reached: HashSet<&str> = HashSet::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        for start in std::iter::once(&fixture.root).chain(task_roots.values()) {
            if reached.insert(start) {
                queue.push_back(start);
            }
        }
        while let Some(id) = queue.pop_front() {
            for (_, to) in edges.get(id).into_iter().flatten() {
                if reached.insert(to) {
                    queue.push_back(to);
                }
            }
        }
        if let Some(orphan) = fixture.nodes.iter().find(|n| !reached.contains(n.id.as_str())) {
            return Err(fixture_err(format!("node `{}`", orphan.id), "unreachable from root"));
        }
        check_acyclic(&fixture, &edges)?;

        let mut fixture = fixture;
        fixture.tasks = tasks;
        Ok(Self { name: name.into(), fixture, nodes, edges, task_roots })
    }

    pub fn fixture(&self) -> &Fixture {
        &self.fixture
    }

    pub fn node(&self, id: &str) -> Option<&FixtureNode> {
        self.nodes.get(id).map(|&i| &self.fixture.nodes[i])
    }

    pub fn value_scale(&self) -> Option<&str> {
        self.fixture.value_scale.as_deref()
    }

    pub fn outgoing(&self, id: &str) -> &[(String, String)] {
        self.edges.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    fn lookup(&self, id: &str) -> Result<&FixtureNode, EnvError> {
        self.node(id).ok_or_else(|| EnvError::UnknownState(id.to_string()))
    }
}

fn check_acyclic(fixture: &Fixture, edges: &HashMap<String, Vec<(String, String)>>) -> Result<(), EnvError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    for node in &fixture.nodes {
        if marks.contains_key(node.id.as_str()) {
            continue;
        }
        // Iterative DFS: (node, next edge index).
        let mut stack: Vec<(&str, usize)> = vec![(node.id.as_str(), 0)];
        marks.insert(node.id.as_str(), Mark::Open);
        while let Some((id, next)) = stack.pop() {
            let out = edges.get(id).map(Vec::as_slice).unwrap_or(&[]);
            if next < out.len() {
                stack.push((id, next + 1));
                let to = out[next].1.as_str();
                match marks.get(to) {
                    Some(Mark::Open) => {
                        return Err(fixture_err(format!("node `{to}`"), "cycle detected"));
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(to, Mark::Open);
                        stack.push((to, 0));
                    }
                }
            } else {
                marks.insert(id, Mark::Done);
            }
        }
    }
    Ok(())
}

impl Environment for ScriptedEnvironment {
    fn name(&self) -> &str {
        &self.name
    }

    fn initial_state(&self, task: &Task) -> Result<Arc<State>, EnvError> {
        let root = self.task_roots.get(&task.id).cloned().unwrap_or_else(|| self.fixture.root.clone());
        let node = self.lookup(&root)?;
        Ok(State::root(node.id.clone(), node.observation.clone()))
    }

    fn transition(&self, state: &Arc<State>, action: &Action) -> Result<Arc<State>, EnvError> {
        let (_, to) = self
            .outgoing(&state.id)
            .iter()
            .find(|(a, _)| a == action.text())
            .ok_or_else(|| EnvError::RejectedAction {
                state: state.id.clone(),
                action: action.text().to_string(),
                reason: "no such edge".into(),
            })?;
        let node = self.lookup(to)?;
        Ok(State::child(state, action.clone(), node.id.clone(), node.observation.clone()))
    }

    fn is_terminal(&self, state: &State) -> bool {
        self.node(&state.id).map(|n| n.terminal).unwrap_or(true)
    }

    fn enumerable_actions(&self, state: &State) -> Option<Vec<Action>> {
        Some(self.outgoing(&state.id).iter().filter_map(|(a, _)| Action::new(a)).collect())
    }

    fn ground_truth_score(&self, trajectory: &Trajectory) -> Option<f64> {
        self.node(&trajectory.last_state().id).and_then(|n| n.score)
    }

    fn tasks(&self) -> Vec<Task> {
        self.fixture
            .tasks
            .iter()
            .map(|t| Task { id: t.id.clone(), instruction: t.instruction.clone(), split: t.split })
            .collect()
    }
}
