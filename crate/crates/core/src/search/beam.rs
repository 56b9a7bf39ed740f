use super::{Engine, SearchContext, SearchError, SearchTree};
use crate::domain::Task;

/// Sorts by value, highest first; the sort is stable so earlier-generated
/// nodes win ties.
fn rank(tree: &SearchTree, nodes: &mut [usize]) {
    nodes.sort_by(|&a, &b| {
        let va = tree.nodes[a].value().unwrap_or(f64::NEG_INFINITY);
        let vb = tree.nodes[b].value().unwrap_or(f64::NEG_INFINITY);
        vb.total_cmp(&va)
    });
}

/// Level-synchronous beam search. Each frontier state contributes its top
/// `branching` evaluated successors; the global top `beam_width` form the
/// next frontier. Terminal states are collected rather than expanded.
pub fn beam_search(task: &Task, ctx: &SearchContext<'_>) -> Result<SearchTree, SearchError> {
    let mut tree = ctx.start(task, Engine::Beam)?;
    let budget = ctx.config.beam_proposals.unwrap_or(ctx.config.branching);
    let mut frontier = vec![0usize];
    let mut terminals: Vec<usize> = Vec::new();

    for _level in 0..ctx.config.max_depth {
        let mut pool = Vec::new();
        for &parent in &frontier {
            if tree.nodes[parent].terminal {
                continue;
            }
            let mut children: Vec<usize> = ctx
                .expand(&mut tree, parent, budget)?
                .into_iter()
                .filter(|&c| tree.nodes[c].value.is_some())
                .collect();
            rank(&tree, &mut children);
            children.truncate(ctx.config.branching);
            // Restore generation order so global ties favor earlier nodes.
            children.sort_unstable();
            pool.extend(children);
        }
        rank(&tree, &mut pool);
        pool.truncate(ctx.config.beam_width);
        if pool.is_empty() {
            tree.stats.failure = Some(format!("frontier emptied at depth {}", tree.nodes[frontier[0]].depth));
            break;
        }
        terminals.extend(pool.iter().copied().filter(|&n| tree.nodes[n].terminal));
        let done = pool.iter().all(|&n| tree.nodes[n].terminal);
        frontier = pool;
        if done {
            break;
        }
    }

    rank(&tree, &mut terminals);
    tree.stats.terminal_reached = !terminals.is_empty();
    tree.stats.best_leaf = terminals.first().copied().or_else(|| {
        let mut last = frontier.clone();
        rank(&tree, &mut last);
        last.first().copied()
    });
    Ok(tree)
}

/// Evaluated terminal nodes anywhere in the tree, best first.
pub fn terminal_leaves(tree: &SearchTree) -> Vec<usize> {
    let mut leaves: Vec<usize> = tree.nodes.iter().filter(|n| n.terminal && n.value.is_some()).map(|n| n.index).collect();
    rank(tree, &mut leaves);
    leaves
}
