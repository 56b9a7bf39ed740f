use super::{Engine, SearchContext, SearchError, SearchTree};
use crate::domain::Task;

fn uct(tree: &SearchTree, parent: usize, child: usize, c: f64) -> f64 {
    let node = &tree.nodes[child];
    let n = node.visits as f64;
    let n_parent = tree.nodes[parent].visits.max(1) as f64;
    node.total_reward / n + c * (n_parent.ln() / n).sqrt()
}

/// Descends from the root through expanded nodes. Unvisited children are
/// taken first in proposal order; otherwise the maximal UCT score wins, the
/// earliest child on ties.
fn select(tree: &SearchTree, c: f64, max_depth: usize) -> Vec<usize> {
    let mut path = vec![0];
    let mut node = 0;
    loop {
        let current = &tree.nodes[node];
        if !current.expanded || current.terminal || current.depth >= max_depth {
            return path;
        }
        let candidates: Vec<usize> = tree.evaluated_children(node).map(|n| n.index).collect();
        if candidates.is_empty() {
            return path;
        }
        let next = match candidates.iter().find(|&&ch| tree.nodes[ch].visits == 0) {
            Some(&unvisited) => unvisited,
            None => {
                let mut best = candidates[0];
                let mut best_score = uct(tree, node, best, c);
                for &ch in &candidates[1..] {
                    let score = uct(tree, node, ch, c);
                    if score > best_score {
                        best = ch;
                        best_score = score;
                    }
                }
                best
            }
        };
        path.push(next);
        node = next;
    }
}

fn backup(tree: &mut SearchTree, path: &[usize], reward: f64) {
    for &n in path {
        tree.nodes[n].visits += 1;
        tree.nodes[n].total_reward += reward;
    }
}

/// UCT search with the value model's estimate as proxy reward. Each
/// iteration selects a leaf, expands up to `branching` children, evaluates
/// them and backs each child's reward up along the selected path. The
/// environment's ground-truth score is never consulted.
pub fn mcts_search(task: &Task, ctx: &SearchContext<'_>) -> Result<SearchTree, SearchError> {
    let mut tree = ctx.start(task, Engine::Mcts)?;
    let c = ctx.config.exploration;
    for _ in 0..ctx.config.mcts_iterations {
        let path = select(&tree, c, ctx.config.max_depth);
        let leaf = *path.last().expect("selection path starts at the root");
        let node = &tree.nodes[leaf];
        let expandable = !node.expanded && !node.terminal && node.depth < ctx.config.max_depth;

        if expandable {
            let children = ctx.expand(&mut tree, leaf, ctx.config.branching)?;
            let mut evaluated = 0;
            for child in children {
                if let Some(v) = tree.nodes[child].value() {
                    let reward = ctx.reward(v);
                    let mut full = path.clone();
                    full.push(child);
                    backup(&mut tree, &full, reward);
                    evaluated += 1;
                }
            }
            if evaluated > 0 {
                continue;
            }
        }
        // Terminal, depth-limited or dead-end leaf: back up its own value again.
        match tree.nodes[leaf].value() {
            Some(v) => {
                let reward = ctx.reward(v);
                backup(&mut tree, &path, reward);
            }
            None => {
                tree.stats.failure = Some(format!("no evaluated successor at depth {}", tree.nodes[leaf].depth));
                break;
            }
        }
    }

    // Best path: follow the most visited child, earliest on ties.
    let mut current = 0;
    loop {
        let mut best: Option<(usize, u64)> = None;
        for child in tree.evaluated_children(current) {
            if child.visits > 0 && best.is_none_or(|(_, v)| child.visits > v) {
                best = Some((child.index, child.visits));
            }
        }
        match best {
            Some((child, _)) => current = child,
            None => break,
        }
    }
    tree.stats.best_leaf = Some(current);
    tree.stats.terminal_reached = tree.nodes.iter().any(|n| n.terminal);
    Ok(tree)
}
