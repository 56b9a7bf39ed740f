//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stl_core::agents::{
    parse_simulated_lookahead, Aggregation, ExhaustivePolicy, OracleValueModel, Sampling, ScriptedValueModel,
    ValueEstimate, ValueModel, ValueRequest, ValueScale,
};
use stl_core::envs::{load_puzzles, Environment, Game24Env, Game24Oracle, Instrumented, Rational, Verdict};
use stl_core::eval::{cost, format_dollars, paired_bootstrap, Ledger, ModelRole, PricingTable, TokenCounts};
use stl_core::search::{Engine, SearchConfig, SearchContext};
use stl_core::stl::{
    build_action_outcome, dedup_latest, filter_examples, lookahead_target, Candidate, Dataset, LookaheadRecord,
    RejectReason, StlConfig, StlRun, TabularTrainer,
};
use stl_core::{Action, Split, State, StateKey, Trajectory, TrainingExample};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<f64, String> {
    let secs = start.elapsed().as_secs_f64();
    ensure(start.elapsed() < limit, || format!("took {secs:.1} s, limit {} s", limit.as_secs()))?;
    Ok(secs)
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let oracle = Game24Oracle::new();
    let mut disagreements = 0;
    let mut solvable = 0;
    for tuple in common::random_tuples(500, 2024) {
        let nums: Vec<Rational> = tuple.iter().map(|&n| Rational::from_integer(n)).collect();
        let sure = oracle.verdict(&nums).map_err(|e| e.to_string())? == Verdict::Sure;
        let brute = common::brute_force_solvable(&tuple);
        solvable += usize::from(brute);
        disagreements += usize::from(sure != brute);
    }
    ensure(disagreements == 0, || format!("{disagreements} disagreements"))?;
    let secs = within(start, Duration::from_secs(30))?;
    Ok(format!("500 tuples ({solvable} solvable), 0 disagreements, {secs:.2} s"))
}

fn oracle_guided_beam() -> Check {
    let start = Instant::now();
    let path = common::fixture_path("game24_puzzles.txt");
    let tasks = load_puzzles(&path, Split::Test).map_err(|e| e.to_string())?;
    let solvable: Vec<_> = tasks
        .into_iter()
        .filter(|t| {
            let nums: Vec<i64> = t.instruction.split_whitespace().map(|n| n.parse().unwrap()).collect();
            common::brute_force_solvable(&nums)
        })
        .take(50)
        .collect();
    ensure(solvable.len() == 50, || format!("only {} solvable puzzles in the fixture", solvable.len()))?;
    let env = Game24Env::new();
    let value = OracleValueModel::new();
    let config = SearchConfig { beam_width: 5, branching: 5, beam_proposals: Some(1000), max_depth: 3, ..SearchConfig::default() };
    let mut solved = 0;
    for task in &solvable {
        let tree = SearchContext::new(&env, &ExhaustivePolicy, &value, &config).run(Engine::Beam, task).map_err(|e| e.to_string())?;
        let score = tree.best_trajectory().and_then(|t| env.ground_truth_score(&t)).unwrap_or(0.0);
        solved += usize::from(score >= 1.0);
    }
    ensure(solved == 50, || format!("solved {solved}/50"))?;
    let secs = within(start, Duration::from_secs(60))?;
    Ok(format!("solved 50/50 (width 5, B 5), {secs:.2} s"))
}

fn backup_exactness() -> Check {
    let mut checked = 0;
    let mut total = 0;
    for (engine, gamma, seed) in [(Engine::Mcts, 0.9, 1), (Engine::Beam, 1.0, 2), (Engine::Greedy, 0.8, 3)] {
        let fixture = common::complete_tree(3, 3, 4.0, &[1.0, 2.0, 4.0, 6.0, 8.0, 10.0], seed, 4);
        let env = common::scripted("tree", fixture);
        let base: Arc<dyn ValueModel> = Arc::new(ScriptedValueModel::new(Arc::clone(&env)).map_err(|e| e.to_string())?);
        let stl = StlConfig { iterations: 2, tasks_per_iteration: 2, gamma, engine, ..StlConfig::default() };
        let search = SearchConfig { branching: 3, beam_width: 3, mcts_iterations: 20, ..SearchConfig::default() };
        let run = StlRun {
            env: &*env,
            policy: &ExhaustivePolicy,
            base,
            trainer: &TabularTrainer,
            stl: &stl,
            search: &search,
            out_dir: None,
            parallel: 1,
        };
        let outcome = run.run(&env.tasks()).map_err(|e| e.to_string())?;
        checked += common::check_backup(&outcome, gamma, ValueScale::Likert10);
        total += outcome.datasets.iter().map(Dataset::len).sum::<usize>();
    }
    ensure(checked == total && checked > 0, || format!("checked {checked} of {total} examples"))?;
    Ok(format!("{checked} examples across greedy, beam and mcts runs, 0 violations"))
}

const WORDS: &[&str] = &["the", "item", "page", "matches", "color", "size", "price", "looks", "close", "partly", "gray", "xl"];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..12);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    format!("{}.", words.join(" "))
}

fn round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let likert = [1.0, 2.0, 4.0, 6.0, 8.0, 10.0];
    let (mut exact, mut refused) = (0, 0);
    let mut i = 0;
    while exact < 1000 {
        i += 1;
        let root = State::root("r", "start page");
        let count = rng.gen_range(1..=5);
        let successors: Vec<(Action, Arc<State>, ValueEstimate, String, String, f64)> = (0..count)
            .map(|k| {
                let action = Action::new(&format!("click[{}-{k}]", WORDS.choose(&mut rng).unwrap())).unwrap();
                let observation = format!("[Back to Search] {} ${}.{:02}", sentence(&mut rng), rng.gen_range(1..99), rng.gen_range(0..100));
                let body = sentence(&mut rng);
                let value = *likert.choose(&mut rng).unwrap();
                let child = State::child(&root, action.clone(), format!("c{k}"), observation.clone());
                let rationale = format!("{body} Thus the correctness score is {value}");
                let estimate = ValueEstimate::fixed(&rationale, value, 1, Aggregation::Mean);
                (action, child, estimate, observation, body, value)
            })
            .collect();
        let gamma = [1.0, 0.95, 0.9, 0.75, 0.5, 0.35][i % 6];
        let list: Vec<(Action, Arc<State>, ValueEstimate)> =
            successors.iter().map(|(a, s, e, ..)| (a.clone(), Arc::clone(s), e.clone())).collect();
        let record = lookahead_target(&root, &list, gamma).ok_or("no lookahead record")?;

        // First maximum wins ties.
        let mut best = 0;
        for (k, s) in successors.iter().enumerate() {
            if s.5 > successors[best].5 {
                best = k;
            }
        }
        let (action, _, _, observation, body, value) = &successors[best];
        let want = gamma * value;
        if want < 1.0 {
            // Below the scale floor: must be refused, never rendered.
            ensure(build_action_outcome(&record, ValueScale::Likert10).is_err(), || format!("record {i}: rendered {want}"))?;
            refused += 1;
            continue;
        }
        let completion = build_action_outcome(&record, ValueScale::Likert10).map_err(|e| e.to_string())?;
        let parsed = parse_simulated_lookahead(&completion, ValueScale::Likert10).map_err(|e| format!("record {i}: {e}"))?;
        ensure(parsed.action == action.text(), || format!("record {i}: action {}", parsed.action))?;
        ensure(&parsed.observation == observation, || format!("record {i}: observation {}", parsed.observation))?;
        ensure(&parsed.rationale == body, || format!("record {i}: rationale {}", parsed.rationale))?;
        ensure(parsed.value == want, || format!("record {i}: value {} != {want}", parsed.value))?;
        exact += 1;
    }
    let text = std::fs::read_to_string(common::fixture_path("lookahead_example.txt")).map_err(|e| e.to_string())?;
    let verbatim = parse_simulated_lookahead(&text, ValueScale::Likert10).map_err(|e| e.to_string())?;
    ensure(verbatim.value == 6.0, || format!("verbatim example parsed to {}", verbatim.value))?;
    Ok(format!("1000 randomized records exact ({refused} sub-floor targets refused), verbatim example parses to 6.0"))
}

fn value_at(model: &dyn ValueModel, env: &dyn Environment, task: &stl_core::Task, path: &[String]) -> Result<f64, String> {
    let mut t = Trajectory::new(task.clone(), env.initial_state(task).map_err(|e| e.to_string())?);
    for a in path {
        let action = Action::new(a).unwrap();
        let next = env.transition(t.last_state(), &action).map_err(|e| e.to_string())?;
        t = t.extended(action, next);
    }
    let req = ValueRequest { trajectory: &t, candidates: None, sampling: Sampling::default(), seed: 0 };
    model.evaluate(&req).map(|e| e.value).map_err(|e| e.to_string())
}

fn value_iteration_fixed_point() -> Check {
    let fixture = common::complete_tree(4, 3, 1.0, &[1.0, 2.0, 4.0, 6.0, 8.0], 5, 4);
    let env = common::scripted("tree", fixture.clone());
    let base: Arc<dyn ValueModel> = Arc::new(ScriptedValueModel::new(Arc::clone(&env)).map_err(|e| e.to_string())?);
    let stl = StlConfig { iterations: 4, tasks_per_iteration: 1, gamma: 1.0, engine: Engine::Beam, include_root: true, ..StlConfig::default() };
    let search = SearchConfig { branching: 3, beam_width: 81, max_depth: 4, ..SearchConfig::default() };
    let run = StlRun {
        env: &*env,
        policy: &ExhaustivePolicy,
        base,
        trainer: &TabularTrainer,
        stl: &stl,
        search: &search,
        out_dir: None,
        parallel: 1,
    };
    let tasks = env.tasks();
    let outcome = run.run(&tasks).map_err(|e| e.to_string())?;
    let model = outcome.models.as_model();

    let optimum = common::best_leaf_value(&fixture, "r");
    let root = value_at(&*model, &*env, &tasks[0], &[])?;
    ensure(root == optimum, || format!("root value {root}, optimal {optimum}"))?;

    // Every internal node has converged, not just the root.
    let mut internal = 0;
    let mut stack = vec![("r".to_string(), Vec::<String>::new())];
    while let Some((id, path)) = stack.pop() {
        let children: Vec<&str> = fixture.edges.iter().filter(|e| e.from == id).map(|e| e.to.as_str()).collect();
        if children.is_empty() {
            continue;
        }
        let got = value_at(&*model, &*env, &tasks[0], &path)?;
        let want = common::best_leaf_value(&fixture, &id);
        ensure(got == want, || format!("node {id}: {got} != {want}"))?;
        internal += 1;
        for c in children {
            let mut next = path.clone();
            next.push(format!("click[{c}]"));
            stack.push((c.to_string(), next));
        }
    }
    Ok(format!("root value {root} equals optimum {optimum}; {internal} internal nodes exact"))
}

fn candidate(rationale: String, key: String) -> Candidate {
    let root = State::root("r", "start page");
    let action = Action::new("click[x]").unwrap();
    let child = State::child(&root, action.clone(), "x", "page x");
    Candidate {
        task_id: "t".into(),
        depth: 1,
        iteration: 1,
        context: "ctx".into(),
        state_key: StateKey(key),
        record: LookaheadRecord {
            state: root,
            best_action: action,
            best_successor: child,
            successor_rationale: rationale,
            successor_value: 6.0,
            target: 6.0,
            gamma: 1.0,
        },
    }
}

fn filtering_and_dedup() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut candidates = Vec::new();
    let mut expected = Vec::new();
    for i in 0..100 {
        let body = sentence(&mut rng);
        let (text, reason) = match i % 5 {
            0 => (body, RejectReason::ScaffoldingMissing),
            1 => (format!("{body} Thus the correctness score is unclear"), RejectReason::NumberMissing),
            2 => (format!("{body} Thus the correctness score is {}", [3, 5, 7, 9][rng.gen_range(0..4)]), RejectReason::OutOfScale),
            3 => (format!("{body} Thus the correctness score is 12.00 / 10.00"), RejectReason::OutOfScale),
            _ => (
                format!("{body} Thus the correctness score is 2. {body} Thus the correctness score is 6"),
                RejectReason::RepeatedScaffolding,
            ),
        };
        candidates.push(candidate(text, format!("k{i}")));
        expected.push(reason);
    }
    let (kept, rejected) = filter_examples(candidates, ValueScale::Likert10);
    ensure(kept.is_empty(), || format!("{} malformed rationales kept", kept.len()))?;
    let reasons: Vec<RejectReason> = rejected.iter().map(|r| r.reason).collect();
    ensure(reasons == expected, || format!("reasons differ: {reasons:?}"))?;

    let mut dataset = Dataset::new();
    let mut arrivals = Vec::new();
    let mut latest: BTreeMap<String, usize> = BTreeMap::new();
    for c in 0..200 {
        let key = format!("state-{c}");
        let mut iterations: Vec<usize> = (1..=8).collect();
        iterations.shuffle(&mut rng);
        let copies = rng.gen_range(2..=4);
        for &it in &iterations[..copies] {
            arrivals.push((key.clone(), it));
        }
        latest.insert(key, *iterations[..copies].iter().max().unwrap());
    }
    arrivals.shuffle(&mut rng);
    for (key, it) in arrivals {
        let example = TrainingExample {
            task_id: "t".into(),
            depth: 1,
            iteration: 0,
            context: String::new(),
            completion: format!("from iteration {it}"),
            state_key: StateKey(key),
        };
        dataset = dedup_latest(dataset, vec![example], it);
    }
    ensure(dataset.len() == 200, || format!("{} survivors", dataset.len()))?;
    for (key, it) in &latest {
        let survivor = dataset.get(&StateKey(key.clone())).ok_or_else(|| format!("{key} lost"))?;
        ensure(survivor.iteration == *it && survivor.completion == format!("from iteration {it}"), || {
            format!("{key}: kept iteration {}, expected {it}", survivor.iteration)
        })?;
    }
    Ok("100/100 malformed rejected with reasons; 200 collisions keep the higher iteration".into())
}

fn cost_accounting() -> Check {
    let table = PricingTable::default();
    let mut shown = Vec::new();
    for (model, want) in [("gpt-3.5-turbo", "0.002000"), ("gpt-4o", "0.012500"), ("llama-3.1-8b-instruct", "0.000130")] {
        let ledger = Ledger::new();
        ledger.record_tokens("t", ModelRole::Value, model, TokenCounts { prompt_tokens: 1000, completion_tokens: 1000 });
        let got = format_dollars(&cost(&ledger.snapshot(), &table).map_err(|e| e.to_string())?.total);
        ensure(got == want, || format!("{model}: ${got}, expected ${want}"))?;
        shown.push(format!("{model} ${got}"));
    }
    Ok(shown.join(", "))
}

fn bootstrap() -> Check {
    let ones = vec![1.0; 500];
    let zeros = vec![0.0; 500];
    let dominant = paired_bootstrap(&ones, &zeros, 100_000, 8).map_err(|e| e.to_string())?;
    ensure(dominant.p == 0.0, || format!("dominant p = {}", dominant.p))?;

    let a: Vec<f64> = (0..1000).map(|i| f64::from(i % 2 == 0)).collect();
    let b: Vec<f64> = (0..1000).map(|i| f64::from(i % 2 == 1)).collect();
    let symmetric = paired_bootstrap(&a, &b, 100_000, 8).map_err(|e| e.to_string())?;
    ensure((0.45..=0.55).contains(&symmetric.p), || format!("symmetric p = {}", symmetric.p))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
    let ys: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
    let start = Instant::now();
    let first = paired_bootstrap(&xs, &ys, 1_000_000, 8).map_err(|e| e.to_string())?;
    let secs = within(start, Duration::from_secs(60))?;
    let second = paired_bootstrap(&xs, &ys, 1_000_000, 8).map_err(|e| e.to_string())?;
    ensure(first.p == second.p, || format!("p differs across runs: {} vs {}", first.p, second.p))?;
    Ok(format!("dominant p = 0, symmetric p = {:.4}, b = 1e6 in {secs:.1} s with p = {} reproduced", symmetric.p, first.p))
}

fn efficiency_accounting() -> Check {
    let fixture = common::complete_tree(5, 5, 4.0, &[1.0, 2.0, 4.0, 6.0, 8.0, 10.0], 9, 1);
    let inner = stl_core::envs::ScriptedEnvironment::from_fixture("tree", fixture).map_err(|e| e.to_string())?;
    let env = Instrumented::new(inner);
    let value = ScriptedValueModel::new(common::scripted("tree", common::complete_tree(5, 5, 4.0, &[1.0, 2.0, 4.0, 6.0, 8.0, 10.0], 9, 1)))
        .map_err(|e| e.to_string())?;
    let task = env.tasks().remove(0);
    let config = SearchConfig { branching: 5, max_depth: 5, beam_width: 3, mcts_iterations: 30, ..SearchConfig::default() };
    let mut counts = Vec::new();
    for engine in [Engine::Greedy, Engine::Beam, Engine::Mcts] {
        env.reset();
        let ledger = Arc::new(Ledger::new());
        let tree = SearchContext::new(&env, &ExhaustivePolicy, &value, &config)
            .with_ledger(Arc::clone(&ledger))
            .run(engine, &task)
            .map_err(|e| e.to_string())?;
        let calls = env.transitions();
        ensure(tree.stats.states_expanded == calls, || format!("{engine}: {} expanded, {calls} transitions", tree.stats.states_expanded))?;
        ensure(ledger.snapshot().states_expanded() == calls, || format!("{engine}: ledger disagrees"))?;
        if engine == Engine::Greedy {
            ensure(calls == 25, || format!("greedy expanded {calls}, expected 25"))?;
        }
        counts.push(format!("{engine} {calls}"));
    }

    let game = Instrumented::new(Game24Env::new());
    let game_task = stl_core::Task::new("p", "4 6 1 1", Split::Test).ok_or("invalid task")?;
    for engine in [Engine::Greedy, Engine::Beam, Engine::Mcts] {
        game.reset();
        let tree = SearchContext::new(&game, &ExhaustivePolicy, &OracleValueModel::new(), &config)
            .run(engine, &game_task)
            .map_err(|e| e.to_string())?;
        ensure(tree.stats.states_expanded == game.transitions(), || format!("game24 {engine}: count mismatch"))?;
    }
    Ok(format!("expansions equal transitions ({}); game24 engines agree too", counts.join(", ")))
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn stl_bin(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stl")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("stl {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = common::complete_tree(3, 3, 4.0, &[1.0, 2.0, 4.0, 6.0, 8.0, 10.0], 10, 4);
    let fixture_file = dir.path().join("tree.json");
    std::fs::write(&fixture_file, serde_json::to_string(&fixture).unwrap()).map_err(|e| e.to_string())?;
    let env = format!("scripted:{}", fixture_file.display());
    let webshop = format!("scripted:{}", common::fixture_path("webshop_shorts.json").display());

    let first_runs: [(&str, Vec<&str>); 3] = [
        ("search-mcts", vec!["search", "--env", &env, "--value", &env, "--engine", "mcts", "--parallel", "2", "--set", "search.mcts_iterations=12"]),
        ("search-shop", vec!["search", "--env", &webshop, "--value", &webshop, "--engine", "beam", "--attempts", "2"]),
        (
            "stl",
            vec![
                "stl", "--env", &env, "--value", &env, "--parallel", "2", "--set", "stl.iterations=2", "--set", "stl.tasks_per_iteration=2",
                "--set", "stl.gamma=0.9", "--set", "search.mcts_iterations=12",
            ],
        ),
    ];
    let mut compared = 0;
    for (name, args) in first_runs {
        let one = format!("{name}-1");
        let two = format!("{name}-2");
        stl_bin(dir.path(), &[args.as_slice(), &["--out", &one]].concat())?;
        let manifest = format!("{one}/manifest.json");
        stl_bin(dir.path(), &[args[0], "--config", &manifest, "--out", &two])?;
        let a = files_under(&dir.path().join(&one));
        let b = files_under(&dir.path().join(&two));
        ensure(a.keys().eq(b.keys()), || format!("{name}: file sets differ"))?;
        for (path, bytes) in &a {
            ensure(b[path] == *bytes, || format!("{name}: {} differs", path.display()))?;
        }
        let required: &[&str] = if name == "stl" {
            &["iteration-1/trees", "iteration-2/dataset.jsonl", "model/dataset.jsonl", "stl_report.json"]
        } else {
            &["trees", "results.jsonl", "report.csv"]
        };
        for want in required {
            ensure(a.keys().any(|p| p.starts_with(want)), || format!("{name}: no {want} artifacts"))?;
        }
        compared += a.len();
    }
    Ok(format!("{compared} artifacts byte-identical across manifest re-runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("oracle-guided beam upper bound", oracle_guided_beam),
        ("one-step backup exactness", backup_exactness),
        ("action-outcome round trip", round_trip),
        ("tabular value-iteration fixed point", value_iteration_fixed_point),
        ("filtering and dedup", filtering_and_dedup),
        ("cost accounting", cost_accounting),
        ("paired bootstrap", bootstrap),
        ("efficiency accounting", efficiency_accounting),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
