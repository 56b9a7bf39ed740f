mod common;

use std::sync::Arc;

use stl_core::agents::{ExhaustivePolicy, OracleValueModel, ScriptedValueModel, ValueModel};
use stl_core::envs::{Environment, Game24Env, Instrumented, ScriptedEnvironment};
use stl_core::eval::Ledger;
use stl_core::search::{Engine, SearchConfig, SearchContext, SearchTree};
use stl_core::{Split, Task};

fn run(env: &dyn Environment, value: &dyn ValueModel, config: &SearchConfig, engine: Engine, task: &Task) -> SearchTree {
    SearchContext::new(env, &ExhaustivePolicy, value, config).run(engine, task).unwrap()
}

fn scripted_run(env: &Arc<ScriptedEnvironment>, config: &SearchConfig, engine: Engine) -> SearchTree {
    let value = ScriptedValueModel::new(Arc::clone(env)).unwrap();
    let task = env.tasks().remove(0);
    run(&**env, &value, config, engine, &task)
}

fn leaf_id(tree: &SearchTree) -> &str {
    &tree.nodes[tree.stats.best_leaf.unwrap()].state_id
}

fn webshop() -> Arc<ScriptedEnvironment> {
    Arc::new(ScriptedEnvironment::load(common::fixture_path("webshop_shorts.json")).unwrap())
}

#[test]
fn greedy_follows_best_child() {
    let env = webshop();
    let tree = scripted_run(&env, &SearchConfig::default(), Engine::Greedy);
    let path: Vec<&str> = tree.path(tree.stats.best_leaf.unwrap()).iter().map(|&i| tree.nodes[i].state_id.as_str()).collect();
    assert_eq!(path, ["home", "results", "item-drawstring", "xl", "bought-xl"]);
    assert_eq!(tree.stats.states_expanded, 2 + 3 + 2 + 1);
    assert!(tree.stats.terminal_reached);
}

#[test]
fn greedy_ties_go_to_first_proposal() {
    let fixture = common::custom(
        &[("r", None, false), ("a", Some(6.0), true), ("b", Some(6.0), true), ("c", Some(4.0), true)],
        &[("r", "a"), ("r", "b"), ("r", "c")],
    );
    let tree = scripted_run(&common::scripted("tie", fixture), &SearchConfig::default(), Engine::Greedy);
    assert_eq!(leaf_id(&tree), "a");

    let fixture = common::custom(
        &[("r", None, false), ("a", Some(2.0), true), ("b", Some(6.0), true), ("c", Some(4.0), true)],
        &[("r", "a"), ("r", "b"), ("r", "c")],
    );
    let tree = scripted_run(&common::scripted("plain", fixture), &SearchConfig::default(), Engine::Greedy);
    assert_eq!(leaf_id(&tree), "b");
}

#[test]
fn greedy_budget_limits_expansions() {
    let env = common::scripted("tree", common::complete_tree(5, 5, 4.0, &[1.0, 10.0], 2, 1));
    for b in 1..=5 {
        let config = SearchConfig { branching: b, ..SearchConfig::default() };
        let tree = scripted_run(&env, &config, Engine::Greedy);
        assert_eq!(tree.stats.states_expanded, 5 * b as u64);
    }
}

#[test]
fn greedy_stops_at_max_depth() {
    let env = common::scripted("tree", common::complete_tree(4, 2, 4.0, &[8.0], 0, 1));
    let config = SearchConfig { max_depth: 2, ..SearchConfig::default() };
    let tree = scripted_run(&env, &config, Engine::Greedy);
    assert_eq!(tree.nodes[tree.stats.best_leaf.unwrap()].depth, 2);
    assert!(!tree.stats.terminal_reached);
}

#[test]
fn beam_width_one_matches_greedy() {
    for seed in 0..5 {
        let env = common::scripted("tree", common::complete_tree(4, 3, 4.0, &[1.0, 2.0, 6.0, 10.0], seed, 1));
        let config = SearchConfig { beam_width: 1, ..SearchConfig::default() };
        let beam = scripted_run(&env, &config, Engine::Beam);
        let greedy = scripted_run(&env, &config, Engine::Greedy);
        assert_eq!(leaf_id(&beam), leaf_id(&greedy), "seed {seed}");
    }
    let env = webshop();
    let config = SearchConfig { beam_width: 1, ..SearchConfig::default() };
    assert_eq!(leaf_id(&scripted_run(&env, &config, Engine::Beam)), "bought-xl");
}

#[test]
fn beam_keeps_both_top_values() {
    let fixture = common::custom(
        &[
            ("r", None, false),
            ("a", Some(10.0), false),
            ("b", Some(4.0), false),
            ("c", Some(10.0), false),
            ("d", Some(2.0), false),
            ("a1", Some(6.0), true),
            ("b1", Some(10.0), true),
            ("c1", Some(8.0), true),
            ("d1", Some(10.0), true),
        ],
        &[("r", "a"), ("r", "b"), ("r", "c"), ("r", "d"), ("a", "a1"), ("b", "b1"), ("c", "c1"), ("d", "d1")],
    );
    let config = SearchConfig { beam_width: 2, ..SearchConfig::default() };
    let tree = scripted_run(&common::scripted("beam", fixture), &config, Engine::Beam);
    let expanded: Vec<&str> =
        tree.nodes.iter().filter(|n| n.depth == 1 && n.expanded).map(|n| n.state_id.as_str()).collect();
    assert_eq!(expanded, ["a", "c"]);
    assert_eq!(leaf_id(&tree), "c1");
    assert_eq!(tree.stats.states_expanded, 4 + 2);
}

#[test]
fn beam_proposals_widen_the_pool() {
    // With two proposals only a and b are seen; with four, c is found.
    let fixture = common::custom(
        &[("r", None, false), ("a", Some(2.0), true), ("b", Some(4.0), true), ("c", Some(10.0), true), ("d", Some(1.0), true)],
        &[("r", "a"), ("r", "b"), ("r", "c"), ("r", "d")],
    );
    let env = common::scripted("wide", fixture);
    let narrow = SearchConfig { branching: 2, beam_width: 2, ..SearchConfig::default() };
    assert_eq!(leaf_id(&scripted_run(&env, &narrow, Engine::Beam)), "b");
    let wide = SearchConfig { beam_proposals: Some(4), ..narrow };
    let tree = scripted_run(&env, &wide, Engine::Beam);
    assert_eq!(leaf_id(&tree), "c");
    assert_eq!(tree.stats.states_expanded, 4);
}

#[test]
fn mcts_single_iteration_visits_root_once_per_child() {
    let env = common::scripted("tree", common::complete_tree(3, 4, 4.0, &[8.0], 0, 1));
    for b in 1..=4 {
        let config = SearchConfig { branching: b, mcts_iterations: 1, ..SearchConfig::default() };
        let tree = scripted_run(&env, &config, Engine::Mcts);
        assert_eq!(tree.root().visits, b as u64);
        assert!((tree.root().total_reward - b as f64 * 0.4).abs() < 1e-12);
    }
}

#[test]
fn mcts_without_exploration_exploits() {
    let fixture = common::custom(
        &[("r", None, false), ("a", Some(2.0), true), ("b", Some(8.0), true), ("c", Some(4.0), true)],
        &[("r", "a"), ("r", "b"), ("r", "c")],
    );
    let config = SearchConfig { exploration: 0.0, mcts_iterations: 10, ..SearchConfig::default() };
    let tree = scripted_run(&common::scripted("exploit", fixture), &config, Engine::Mcts);
    let visits: Vec<u64> = tree.root().children.iter().map(|&c| tree.nodes[c].visits).collect();
    // One visit each from the first expansion, then nine re-backups of b.
    assert_eq!(visits, [1, 10, 1]);
    assert_eq!(leaf_id(&tree), "b");
}

fn check_visit_invariants(tree: &SearchTree) {
    let root = tree.root();
    let child_sum = |i: usize| -> (u64, f64) {
        tree.nodes[i].children.iter().fold((0, 0.0), |(n, w), &c| (n + tree.nodes[c].visits, w + tree.nodes[c].total_reward))
    };
    let (n, w) = child_sum(0);
    assert_eq!(root.visits, n);
    assert!((root.total_reward - w).abs() < 1e-9);
    for node in tree.nodes.iter().skip(1) {
        if node.visits == 0 || node.terminal {
            continue;
        }
        let (n, _) = child_sum(node.index);
        if node.expanded && n > 0 {
            assert_eq!(node.visits, 1 + n, "node {}", node.index);
        }
        assert!(node.visits >= 1);
        let v = node.value().unwrap();
        assert!(node.total_reward >= 0.0 && node.total_reward <= node.visits as f64 + 1e-9, "{v}");
    }
}

#[test]
fn mcts_visit_counts_are_consistent() {
    for seed in 0..5 {
        let env = common::scripted("tree", common::complete_tree(4, 3, 4.0, &[1.0, 6.0, 10.0], seed, 1));
        for iterations in [1, 5, 20, 60] {
            let config = SearchConfig { branching: 3, mcts_iterations: iterations, ..SearchConfig::default() };
            let tree = scripted_run(&env, &config, Engine::Mcts);
            check_visit_invariants(&tree);
        }
    }
}

#[test]
fn mcts_is_deterministic() {
    let env = common::scripted("tree", common::complete_tree(4, 3, 4.0, &[1.0, 6.0, 10.0], 9, 1));
    let config = SearchConfig { mcts_iterations: 30, branching: 3, ..SearchConfig::default() };
    let a = scripted_run(&env, &config, Engine::Mcts).to_json();
    let b = scripted_run(&env, &config, Engine::Mcts).to_json();
    assert_eq!(a, b);
}

#[test]
fn expansions_match_environment_transitions() {
    let inner = ScriptedEnvironment::load(common::fixture_path("webshop_shorts.json")).unwrap();
    let env = Instrumented::new(inner);
    let value = ScriptedValueModel::new(webshop()).unwrap();
    let task = env.tasks().remove(0);
    for engine in [Engine::Greedy, Engine::Beam, Engine::Mcts] {
        env.reset();
        let ledger = Arc::new(Ledger::new());
        let config = SearchConfig { mcts_iterations: 12, ..SearchConfig::default() };
        let tree = SearchContext::new(&env, &ExhaustivePolicy, &value, &config)
            .with_ledger(Arc::clone(&ledger))
            .run(engine, &task)
            .unwrap();
        assert_eq!(tree.stats.states_expanded, env.transitions(), "{engine}");
        assert_eq!(ledger.snapshot().states_expanded(), env.transitions(), "{engine}");
    }

    let game = Instrumented::new(Game24Env::new());
    let task = Task::new("p", "4 6 1 1", Split::Test).unwrap();
    let config = SearchConfig { beam_width: 3, max_depth: 3, mcts_iterations: 8, ..SearchConfig::default() };
    for engine in [Engine::Greedy, Engine::Beam, Engine::Mcts] {
        game.reset();
        let tree = run(&game, &OracleValueModel::new(), &config, engine, &task);
        assert_eq!(tree.stats.states_expanded, game.transitions(), "{engine}");
    }
}

#[test]
fn excluded_actions_are_never_taken() {
    let env = webshop();
    let mut config = SearchConfig::default();
    config.excluded_actions.insert("click[Buy Now]".into());
    for engine in [Engine::Greedy, Engine::Beam, Engine::Mcts] {
        let tree = scripted_run(&env, &config, engine);
        assert!(tree.nodes.iter().all(|n| n.action.as_deref() != Some("click[Buy Now]")), "{engine}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let env = webshop();
    let value = ScriptedValueModel::new(Arc::clone(&env)).unwrap();
    let task = env.tasks().remove(0);
    for config in [
        SearchConfig { branching: 0, ..SearchConfig::default() },
        SearchConfig { exploration: -1.0, ..SearchConfig::default() },
        SearchConfig { beam_proposals: Some(0), ..SearchConfig::default() },
    ] {
        assert!(SearchContext::new(&*env, &ExhaustivePolicy, &value, &config).run(Engine::Beam, &task).is_err());
    }
}

#[test]
fn oracle_greedy_solves_game24() {
    let env = Game24Env::new();
    let config = SearchConfig { branching: 100, max_depth: 3, ..SearchConfig::default() };
    let task = Task::new("p", "4 6 1 1", Split::Test).unwrap();
    let tree = run(&env, &OracleValueModel::new(), &config, Engine::Greedy, &task);
    let best = tree.best_trajectory().unwrap();
    assert_eq!(env.ground_truth_score(&best), Some(1.0));
}
