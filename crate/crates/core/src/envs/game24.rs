//! Game-of-24 with exact rational arithmetic.
//!
//! A state is an ordered list of 1–4 exact rationals. Combining two numbers
//! removes both and puts the result at the front, so `2 3 4 5` combined with
//! `2 + 3` becomes `5 4 5`. The oracle decides exactly whether a multiset can
//! still reach 24.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};

use super::{EnvError, Environment};
use crate::domain::{Action, ActionKind, Split, State, Task, Trajectory};

pub type Rational = Ratio<i64>;

pub fn target() -> Rational {
    Rational::from_integer(24)
}

pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    match text.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            (d != 0).then(|| Rational::new(n, d))
        }
        None => text.parse::<i64>().ok().map(Rational::from_integer),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
        }
    }

    pub fn parse(symbol: &str) -> Option<Self> {
        match symbol {
            "+" => Some(Op::Add),
            "-" | "−" => Some(Op::Sub),
            "*" | "×" | "x" => Some(Op::Mul),
            "/" | "÷" => Some(Op::Div),
            _ => None,
        }
    }

    /// `None` on division by zero or overflow.
    pub fn apply(self, a: &Rational, b: &Rational) -> Option<Rational> {
        match self {
            Op::Add => a.checked_add(b),
            Op::Sub => a.checked_sub(b),
            Op::Mul => a.checked_mul(b),
            Op::Div => {
                if b.is_zero() {
                    None
                } else {
                    a.checked_div(b)
                }
            }
        }
    }

    fn commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }
}

/// One arithmetic step `left op right = result`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub left: Rational,
    pub op: Op,
    pub right: Rational,
    pub result: Rational,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} = {}",
            format_rational(&self.left),
            self.op.symbol(),
            format_rational(&self.right),
            format_rational(&self.result)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game24State {
    pub numbers: Vec<Rational>,
    pub history: Vec<Step>,
}

impl Game24State {
    pub fn new(numbers: Vec<Rational>) -> Self {
        Self { numbers, history: Vec::new() }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let numbers = text.split_whitespace().map(parse_rational).collect::<Option<Vec<_>>>()?;
        (!numbers.is_empty() && numbers.len() <= 4).then(|| Self::new(numbers))
    }

    pub fn is_terminal(&self) -> bool {
        self.numbers.len() == 1
    }

    pub fn is_success(&self) -> bool {
        self.numbers.len() == 1 && self.numbers[0] == target()
    }

    pub fn numbers_text(&self) -> String {
        join(&self.numbers)
    }

    /// Sorted rendering used for multiset identity.
    pub fn canonical_text(&self) -> String {
        let mut sorted = self.numbers.clone();
        sorted.sort();
        join(&sorted)
    }

    pub fn combine(&self, i: usize, j: usize, op: Op) -> Result<(Game24State, Step), EnvError> {
        let reject = |reason: &str| EnvError::RejectedAction {
            state: self.numbers_text(),
            action: format!("combine({i}, {j}, {})", op.symbol()),
            reason: reason.to_string(),
        };
        if i == j || i >= self.numbers.len() || j >= self.numbers.len() {
            return Err(reject("index out of range"));
        }
        let (a, b) = (self.numbers[i], self.numbers[j]);
        if op == Op::Div && b.is_zero() {
            return Err(reject("division by zero"));
        }
        let result = op.apply(&a, &b).ok_or_else(|| reject("arithmetic overflow"))?;
        let mut numbers = vec![result];
        numbers.extend(
            self.numbers.iter().enumerate().filter(|(k, _)| *k != i && *k != j).map(|(_, n)| *n),
        );
        let step = Step { left: a, op, right: b, result };
        let mut history = self.history.clone();
        history.push(step.clone());
        Ok((Game24State { numbers, history }, step))
    }

    /// All legal combinations in documented order: index pairs `(i, j)` with
    /// `i < j` in ascending order; per pair `a+b, a-b, b-a, a*b, a/b, b/a`.
    /// Actions with identical text are kept once.
    pub fn legal_moves(&self) -> Vec<(usize, usize, Op)> {
        let n = self.numbers.len();
        let mut moves = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for op in Op::ALL {
                    let orders: &[(usize, usize)] =
                        if op.commutative() { &[(i, j)] } else { &[(i, j), (j, i)] };
                    for &(l, r) in orders {
                        if let Ok((_, step)) = self.combine(l, r, op) {
                            if seen.insert(step.to_string()) {
                                moves.push((l, r, op));
                            }
                        }
                    }
                }
            }
        }
        moves
    }
}

fn join(numbers: &[Rational]) -> String {
    numbers.iter().map(format_rational).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Sure,
    Impossible,
}

/// Exact reachability of 24 with memoisation on sorted multisets.
#[derive(Debug, Default)]
pub struct Game24Oracle {
    memo: Mutex<HashMap<Vec<Rational>, bool>>,
}

impl Game24Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn verdict(&self, numbers: &[Rational]) -> Result<Verdict, EnvError> {
        if numbers.is_empty() {
            return Err(EnvError::EmptyMultiset);
        }
        let mut sorted = numbers.to_vec();
        sorted.sort();
        let mut memo = self.memo.lock().expect("oracle memo poisoned");
        Ok(if solvable(sorted, &mut memo) { Verdict::Sure } else { Verdict::Impossible })
    }
}

/// One-shot oracle call with a private memo table.
pub fn game24_oracle(numbers: &[Rational]) -> Result<Verdict, EnvError> {
    Game24Oracle::new().verdict(numbers)
}

fn solvable(sorted: Vec<Rational>, memo: &mut HashMap<Vec<Rational>, bool>) -> bool {
    if sorted.len() == 1 {
        return sorted[0] == target();
    }
    if let Some(&known) = memo.get(&sorted) {
        return known;
    }
    let n = sorted.len();
    let mut found = false;
    'pairs: for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (sorted[i], sorted[j]);
            let rest = sorted.iter().enumerate().filter(|(k, _)| *k != i && *k != j).map(|(_, v)| *v);
            let candidates = [
                Op::Add.apply(&a, &b),
                Op::Sub.apply(&a, &b),
                Op::Sub.apply(&b, &a),
                Op::Mul.apply(&a, &b),
                Op::Div.apply(&a, &b),
                Op::Div.apply(&b, &a),
            ];
            for value in candidates.into_iter().flatten() {
                let mut next: Vec<Rational> = rest.clone().collect();
                next.push(value);
                next.sort();
                if solvable(next, memo) {
                    found = true;
                    break 'pairs;
                }
            }
        }
    }
    memo.insert(sorted, found);
    found
}

/// Reads one puzzle per non-empty line (e.g. `4 6 6 4`); task ids are
/// `puzzle-NNN` by line order among puzzles.
pub fn load_puzzles(path: &Path, split: Split) -> Result<Vec<Task>, EnvError> {
    let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io { path: path.display().to_string(), source })?;
    let mut tasks = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let numbers = Game24State::parse(line).filter(|s| s.numbers.len() == 4).ok_or_else(|| EnvError::Fixture {
            element: format!("{} line {}", path.display(), line_no + 1),
            reason: format!("expected four numbers, got `{line}`"),
        })?;
        let id = format!("puzzle-{:03}", tasks.len());
        tasks.push(Task::new(id, numbers.numbers_text(), split).expect("non-empty puzzle text"));
    }
    Ok(tasks)
}

/// The Game-of-24 environment. Task instructions are the starting numbers,
/// e.g. `"4 6 6 4"`.
#[derive(Debug, Default)]
pub struct Game24Env;

impl Game24Env {
    pub fn new() -> Self {
        Self
    }

    pub fn decode(state: &State) -> Result<Game24State, EnvError> {
        Game24State::parse(&state.id).ok_or_else(|| EnvError::UnknownState(state.id.clone()))
    }

    pub fn combine_action(state: &Game24State, i: usize, j: usize, op: Op) -> Result<Action, EnvError> {
        let (_, step) = state.combine(i, j, op)?;
        Ok(Action::with_kind(&step.to_string(), ActionKind::Combine).expect("non-empty step text"))
    }

    fn make_state(parent: &Arc<State>, action: Action, next: &Game24State, step: &Step) -> Arc<State> {
        let observation = format!("{step} (left: {})", next.numbers_text());
        State::child(parent, action, next.numbers_text(), observation).with_canonical(next.canonical_text())
    }

    fn parse_action(&self, current: &Game24State, action: &Action) -> Result<(usize, usize, Op, Option<Rational>), EnvError> {
        let reject = |reason: &str| EnvError::RejectedAction {
            state: current.numbers_text(),
            action: action.text().to_string(),
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = action.text().split(' ').collect();
        let (lhs, claimed) = match parts.len() {
            3 => (&parts[..3], None),
            5 if parts[3] == "=" => (&parts[..3], Some(parse_rational(parts[4]).ok_or_else(|| reject("unparseable result"))?)),
            _ => return Err(reject("expected `a op b = c`")),
        };
        let left = parse_rational(lhs[0]).ok_or_else(|| reject("unparseable operand"))?;
        let op = Op::parse(lhs[1]).ok_or_else(|| reject("unknown operator"))?;
        let right = parse_rational(lhs[2]).ok_or_else(|| reject("unparseable operand"))?;
        let i = current.numbers.iter().position(|n| *n == left).ok_or_else(|| reject("operand not available"))?;
        let j = current
            .numbers
            .iter()
            .enumerate()
            .position(|(k, n)| k != i && *n == right)
            .ok_or_else(|| reject("operand not available"))?;
        Ok((i, j, op, claimed))
    }
}

impl Environment for Game24Env {
    fn name(&self) -> &str {
        "game24"
    }

    fn initial_state(&self, task: &Task) -> Result<Arc<State>, EnvError> {
        let start = Game24State::parse(&task.instruction).ok_or_else(|| EnvError::InvalidTask {
            task: task.id.clone(),
            reason: "expected 1-4 numbers".into(),
        })?;
        if start.is_terminal() {
            return Err(EnvError::InvalidTask { task: task.id.clone(), reason: "initial state is terminal".into() });
        }
        Ok(State::root(start.numbers_text(), start.numbers_text()).with_canonical(start.canonical_text()))
    }

    fn transition(&self, state: &Arc<State>, action: &Action) -> Result<Arc<State>, EnvError> {
        let current = Self::decode(state)?;
        let (i, j, op, claimed) = self.parse_action(&current, action)?;
        let (next, step) = current.combine(i, j, op)?;
        if let Some(claimed) = claimed {
            if claimed != step.result {
                return Err(EnvError::RejectedAction {
                    state: current.numbers_text(),
                    action: action.text().to_string(),
                    reason: format!("arithmetic error, expected {}", format_rational(&step.result)),
                });
            }
        }
        let canonical_action = Action::with_kind(&step.to_string(), ActionKind::Combine).expect("non-empty");
        Ok(Self::make_state(state, canonical_action, &next, &step))
    }

    fn is_terminal(&self, state: &State) -> bool {
        Self::decode(state).map(|s| s.is_terminal()).unwrap_or(true)
    }

    fn enumerable_actions(&self, state: &State) -> Option<Vec<Action>> {
        let current = Self::decode(state).ok()?;
        Some(
            current
                .legal_moves()
                .into_iter()
                .map(|(i, j, op)| Self::combine_action(&current, i, j, op).expect("legal move"))
                .collect(),
        )
    }

    fn ground_truth_score(&self, trajectory: &Trajectory) -> Option<f64> {
        let last = Self::decode(trajectory.last_state()).ok()?;
        Some(if last.is_success() { 1.0 } else { 0.0 })
    }
}
