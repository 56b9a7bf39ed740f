//! Shared test helpers: an independent Game-of-24 enumerator and generated
//! scripted fixtures.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stl_core::envs::scripted::{Fixture, FixtureEdge, FixtureNode, FixtureTask};
use stl_core::envs::ScriptedEnvironment;
use stl_core::Split;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

type Q = Ratio<i64>;

/// Every value of every full expression tree over `numbers`, built by
/// splitting the multiset into two non-empty parts in all ways.
fn expression_values(numbers: &[Q]) -> BTreeSet<Q> {
    if numbers.len() == 1 {
        return BTreeSet::from([numbers[0]]);
    }
    let n = numbers.len();
    let mut out = BTreeSet::new();
    for mask in 1..(1u32 << n) - 1 {
        let (left, right): (Vec<(usize, Q)>, Vec<(usize, Q)>) =
            numbers.iter().copied().enumerate().partition(|(i, _)| mask >> i & 1 == 1);
        let left: Vec<Q> = left.into_iter().map(|(_, q)| q).collect();
        let right: Vec<Q> = right.into_iter().map(|(_, q)| q).collect();
        for x in expression_values(&left) {
            for y in expression_values(&right) {
                out.insert(x + y);
                out.insert(x - y);
                out.insert(x * y);
                if y != Q::from_integer(0) {
                    out.insert(x / y);
                }
            }
        }
    }
    out
}

/// Brute force: some full expression over all numbers equals 24.
pub fn brute_force_solvable(numbers: &[i64]) -> bool {
    let qs: Vec<Q> = numbers.iter().map(|&n| Q::from_integer(n)).collect();
    expression_values(&qs).contains(&Q::from_integer(24))
}

pub fn random_tuples(count: usize, seed: u64) -> Vec<[i64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| [0; 4].map(|_| rng.gen_range(1..=13))).collect()
}

fn node(id: String, observation: String, terminal: bool, score: Option<f64>, value: Option<f64>) -> FixtureNode {
    FixtureNode {
        id,
        observation,
        terminal,
        score,
        rationales: value.map(|v| vec![format!("Reflection: state judged. Thus the correctness score is {v}")]).unwrap_or_default(),
        attribute: false,
    }
}

/// A complete tree of the given depth and fan-out. Leaves are terminal with
/// values drawn from `leaf_values`; internal nodes carry `internal_value`.
/// Every task shares the root and instruction, so state keys coincide.
pub fn complete_tree(
    depth: usize,
    fanout: usize,
    internal_value: f64,
    leaf_values: &[f64],
    seed: u64,
    tasks: usize,
) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![node("r".into(), "root page".into(), false, None, None)];
    let mut edges = Vec::new();
    let mut level = vec!["r".to_string()];
    for d in 1..=depth {
        let mut next = Vec::new();
        for parent in &level {
            for k in 0..fanout {
                let id = format!("{parent}.{k}");
                let terminal = d == depth;
                let value = if terminal { leaf_values[rng.gen_range(0..leaf_values.len())] } else { internal_value };
                let score = terminal.then_some(value / 10.0);
                nodes.push(node(id.clone(), format!("page {id}"), terminal, score, Some(value)));
                edges.push(FixtureEdge { from: parent.clone(), action: format!("click[{id}]"), to: id.clone() });
                next.push(id);
            }
        }
        level = next;
    }
    let tasks = (0..tasks)
        .map(|i| FixtureTask { id: format!("copy-{i}"), instruction: "walk the tree".into(), root: None, split: Split::Rollout })
        .collect();
    Fixture {
        root: "r".into(),
        instruction: Some("walk the tree".into()),
        value_scale: Some("likert10".into()),
        tasks,
        nodes,
        edges,
    }
}

pub fn scripted(name: &str, fixture: Fixture) -> Arc<ScriptedEnvironment> {
    Arc::new(ScriptedEnvironment::from_fixture(name, fixture).expect("valid generated fixture"))
}

/// Value of every node id in a fixture, read back from its first rationale.
pub fn fixture_value(fixture: &Fixture, id: &str) -> Option<f64> {
    let node = fixture.nodes.iter().find(|n| n.id == id)?;
    let text = node.rationales.first()?;
    text.rsplit(' ').next()?.parse().ok()
}

/// Brute-force optimal backed-up value: max over reachable leaves.
pub fn best_leaf_value(fixture: &Fixture, id: &str) -> f64 {
    let children: Vec<&str> = fixture.edges.iter().filter(|e| e.from == id).map(|e| e.to.as_str()).collect();
    if children.is_empty() {
        return fixture_value(fixture, id).expect("leaves carry values");
    }
    children.into_iter().map(|c| best_leaf_value(fixture, c)).fold(f64::NEG_INFINITY, f64::max)
}

/// A hand-written fixture: `nodes` are `(id, value, terminal)` with the root
/// first; `edges` are `(from, to)` with action `click[to]`.
pub fn custom(nodes: &[(&str, Option<f64>, bool)], edges: &[(&str, &str)]) -> Fixture {
    let nodes = nodes
        .iter()
        .map(|&(id, value, terminal)| {
            let score = if terminal { value.map(|v| v / 10.0) } else { None };
            node(id.into(), format!("page {id}"), terminal, score, value)
        })
        .collect::<Vec<_>>();
    let edges = edges
        .iter()
        .map(|&(from, to)| FixtureEdge { from: from.into(), action: format!("click[{to}]"), to: to.into() })
        .collect();
    Fixture {
        root: nodes[0].id.clone(),
        instruction: Some("pick the best page".into()),
        value_scale: Some("likert10".into()),
        tasks: Vec::new(),
        nodes,
        edges,
    }
}

/// Independent recomputation of every kept example's target: the value in its
/// completion must equal `gamma` times the largest evaluated child value of the
/// tree node it came from. Returns the number of examples checked.
pub fn check_backup(outcome: &stl_core::stl::StlOutcome, gamma: f64, scale: stl_core::agents::ValueScale) -> usize {
    use std::collections::BTreeMap;
    let mut checked = 0;
    for (dataset, trees) in outcome.datasets.iter().zip(&outcome.trees) {
        let mut expected: BTreeMap<stl_core::StateKey, f64> = BTreeMap::new();
        for tree in trees {
            for node in &tree.nodes {
                let best = node
                    .children
                    .iter()
                    .filter_map(|&c| tree.nodes[c].value.as_ref().map(|v| v.value))
                    .fold(f64::NEG_INFINITY, f64::max);
                if best.is_finite() {
                    let key = stl_core::domain::state_key(&tree.task, &tree.trajectory(node.index));
                    expected.entry(key).or_insert(gamma * best);
                }
            }
        }
        for example in dataset.examples() {
            if let Some(&want) = expected.get(&example.state_key) {
                let got = stl_core::agents::parse_value(&example.completion, scale).expect("kept completions parse");
                assert!((got - want).abs() < 1e-9, "{}: target {got}, expected {want}", example.state_key);
                checked += 1;
            }
        }
    }
    checked
}
