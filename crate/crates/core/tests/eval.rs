mod common;

use std::sync::Arc;

use num_rational::Ratio;

use stl_core::agents::prompts::{PromptFamily, PromptSet};
use stl_core::agents::transport::{ChatClient, RetryPolicy, ScriptedTransport};
use stl_core::agents::{ExhaustivePolicy, RemoteValueModel, ValueScale};
use stl_core::envs::{Environment, ScriptedEnvironment};
use stl_core::eval::{
    cost, emit_report, format_dollars, paired_bootstrap, pass_at_k, read_results, write_results, EvalError, Ledger,
    LedgerSnapshot, MethodResult, ModelRole, PricingTable, TaskResult, TokenCounts,
};
use stl_core::search::{Engine, SearchConfig, SearchContext};

fn tokens(prompt: u64, completion: u64) -> TokenCounts {
    TokenCounts { prompt_tokens: prompt, completion_tokens: completion }
}

fn single(model: &str, counts: TokenCounts) -> LedgerSnapshot {
    let ledger = Ledger::new();
    ledger.record_tokens("t", ModelRole::Value, model, counts);
    ledger.snapshot()
}

#[test]
fn cost_examples() {
    let table = PricingTable::default();
    let cases = [("gpt-3.5-turbo", "0.002000"), ("gpt-4o", "0.012500"), ("llama-3.1-8b-instruct", "0.000130")];
    for (model, want) in cases {
        let c = cost(&single(model, tokens(1000, 1000)), &table).unwrap();
        assert_eq!(format_dollars(&c.total), want, "{model}");
    }
    assert!(matches!(cost(&single("mystery", tokens(1, 1)), &table), Err(EvalError::UnknownModel(_))));
}

#[test]
fn cost_is_linear_and_exact() {
    let table = PricingTable::default();
    let a = cost(&single("gpt-4o", tokens(1234, 567)), &table).unwrap().total;
    let b = cost(&single("gpt-4o", tokens(4321, 765)), &table).unwrap().total;
    let ab = cost(&single("gpt-4o", tokens(1234 + 4321, 567 + 765)), &table).unwrap().total;
    assert_eq!(a.clone() + b, ab);
    // 1234 * 0.0025 / 1000 + 567 * 0.01 / 1000, in exact hundred-millionths.
    assert_eq!(a, Ratio::new(1234 * 25 + 567 * 100, 10_000_000));

    let ledger = Ledger::new();
    ledger.record_tokens("t1", ModelRole::Policy, "gpt-3.5-turbo", tokens(1000, 0));
    ledger.record_tokens("t2", ModelRole::Value, "llama-3.1-8b-instruct", tokens(0, 1000));
    let c = cost(&ledger.snapshot(), &table).unwrap();
    assert_eq!(format_dollars(&c.total), "0.000580");
    assert_eq!(c.per_model.len(), 2);
}

#[test]
fn pricing_overrides_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    std::fs::write(&path, "model,prompt_per_1k,completion_per_1k,open\ngpt-4o,0.005,0.015,false\nlocal,0,0,true\n").unwrap();
    let table = PricingTable::with_overrides(&path).unwrap();
    assert_eq!(format_dollars(&cost(&single("gpt-4o", tokens(1000, 1000)), &table).unwrap().total), "0.020000");
    assert!(table.rate("local").unwrap().open);
    assert!(table.rate("gpt-3.5-turbo").is_some());

    std::fs::write(&path, "model,prompt_per_1k,completion_per_1k\ngpt-4o,cheap,0.01\n").unwrap();
    assert!(matches!(PricingTable::with_overrides(&path), Err(EvalError::Pricing { row: 1, .. })));
}

#[test]
fn bootstrap_dominant_and_dominated() {
    let a = vec![1.0; 50];
    let b = vec![0.0; 50];
    let dominant = paired_bootstrap(&a, &b, 10_000, 3).unwrap();
    assert_eq!(dominant.delta, 1.0);
    assert_eq!(dominant.p, 0.0);
    // Every resample of a constant negative difference exceeds twice it.
    let dominated = paired_bootstrap(&b, &a, 10_000, 3).unwrap();
    assert_eq!(dominated.delta, -1.0);
    assert_eq!(dominated.p, 1.0);
}

#[test]
fn bootstrap_symmetric_near_half() {
    let a: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let b: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
    let r = paired_bootstrap(&a, &b, 20_000, 11).unwrap();
    assert_eq!(r.delta, 0.0);
    assert!((0.45..=0.55).contains(&r.p), "{}", r.p);
}

#[test]
fn bootstrap_is_reproducible_and_order_free() {
    let a: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
    let b: Vec<f64> = (0..40).map(|i| ((i * 5) % 13) as f64 / 12.0).collect();
    let first = paired_bootstrap(&a, &b, 5000, 42).unwrap();
    assert_eq!(first, paired_bootstrap(&a, &b, 5000, 42).unwrap());
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.reverse();
    pairs.rotate_left(13);
    let (ra, rb): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    assert_eq!(first.p, paired_bootstrap(&ra, &rb, 5000, 42).unwrap().p);
    assert!(matches!(paired_bootstrap(&a, &b[1..], 10, 0), Err(EvalError::LengthMismatch { .. })));
}

fn result(task: &str, score: f64, attempts: &[bool]) -> TaskResult {
    TaskResult { task_id: task.into(), score, success: score >= 1.0, attempts: attempts.to_vec() }
}

#[test]
fn report_rows_are_sorted_and_stable() {
    let ledger = Ledger::new();
    ledger.record_tokens("a", ModelRole::Policy, "gpt-3.5-turbo", tokens(1000, 1000));
    ledger.record_tokens("a", ModelRole::Value, "llama-3.1-8b-instruct", tokens(500, 250));
    ledger.record_expansions("a", 12);
    let mcts = MethodResult {
        method: "mcts".into(),
        tasks: vec![result("a", 1.0, &[true]), result("b", 0.5, &[false, true])],
        ledger: ledger.snapshot(),
        k: 2,
    };
    let greedy = MethodResult {
        method: "greedy".into(),
        tasks: vec![result("a", 0.25, &[false]), result("b", 0.0, &[false])],
        ledger: LedgerSnapshot::default(),
        k: 1,
    };
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("one.csv");
    let second = dir.path().join("two.csv");
    emit_report(&[mcts.clone(), greedy.clone()], &PricingTable::default(), &first).unwrap();
    emit_report(&[greedy, mcts], &PricingTable::default(), &second).unwrap();
    let text = std::fs::read_to_string(&first).unwrap();
    assert_eq!(text.as_bytes(), std::fs::read(&second).unwrap().as_slice());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,tasks,score_mean,success_rate,pass_at_k,k,open_tokens,closed_tokens,states_expanded,cost_usd");
    assert_eq!(lines[1], "greedy,2,0.125000,0.000000,0.000000,1,0,0,0,0.000000");
    // 0.0005 + 0.0015 + 0.5 * 0.00005 + 0.25 * 0.00008 = 0.002045
    assert_eq!(lines[2], "mcts,2,0.750000,0.500000,1.000000,2,750,2000,12,0.002045");
    assert!(matches!(emit_report(&[], &PricingTable::default(), &first), Err(EvalError::NoResults)));
}

#[test]
fn results_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let tasks = vec![result("a", 1.0, &[true]), result("b", 0.25, &[])];
    write_results(&tasks, &path).unwrap();
    assert_eq!(read_results(&path).unwrap(), tasks);
}

#[test]
fn pass_at_k_cases() {
    assert!(pass_at_k(&[false, true, false], 2).unwrap());
    assert!(!pass_at_k(&[false, false, true], 2).unwrap());
    assert!(matches!(pass_at_k(&[true], 0), Err(EvalError::NonPositiveK)));
    assert!(matches!(pass_at_k(&[true], 2), Err(EvalError::TooFewAttempts { .. })));
}

#[test]
fn ledger_matches_transport_tally() {
    let env = Arc::new(ScriptedEnvironment::load(common::fixture_path("webshop_shorts.json")).unwrap());
    let transport = Arc::new(ScriptedTransport::new(|request, i| {
        let words = request.messages[0].content.split_whitespace().count();
        let value = [1, 2, 4, 6, 8, 10][(words + i) % 6];
        Ok(format!("Reflection: call {i}. Thus the correctness score is {value}"))
    }));
    let ledger = Arc::new(Ledger::new());
    let client = ChatClient::new(Arc::clone(&transport) as _, "gpt-4o", ModelRole::Value)
        .with_retry(RetryPolicy::immediate(1))
        .with_ledger(Arc::clone(&ledger));
    let value = RemoteValueModel::new(client, PromptSet::builtin(PromptFamily::Webshop), ValueScale::Likert10);
    let config = SearchConfig { mcts_iterations: 10, ..SearchConfig::default() };
    for task in env.tasks() {
        for engine in [Engine::Greedy, Engine::Mcts] {
            SearchContext::new(&*env, &ExhaustivePolicy, &value, &config)
                .with_ledger(Arc::clone(&ledger))
                .run(engine, &task)
                .unwrap();
        }
    }
    let snapshot = ledger.snapshot();
    let served = transport.served_tokens();
    assert_eq!(snapshot.per_model()["gpt-4o"], served);
    assert_eq!(snapshot.transport_calls(), transport.calls() as u64);
    let per_task: u64 = snapshot.tasks.values().map(|t| t.tokens.values().map(TokenCounts::total).sum::<u64>()).sum();
    assert_eq!(per_task, served.total());
    assert_eq!(snapshot.tasks.len(), 2);
}
