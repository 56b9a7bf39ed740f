use super::{argmax, Engine, SearchContext, SearchError, SearchTree};
use crate::domain::Task;

/// Evaluates all proposed successors of the current state and descends into
/// the best one, until a terminal state or `max_depth`.
pub fn greedy_search(task: &Task, ctx: &SearchContext<'_>) -> Result<SearchTree, SearchError> {
    let mut tree = ctx.start(task, Engine::Greedy)?;
    let mut current = 0;
    while !tree.nodes[current].terminal && tree.nodes[current].depth < ctx.config.max_depth {
        let children = ctx.expand(&mut tree, current, ctx.config.branching)?;
        match argmax(children.iter().map(|&c| &tree.nodes[c])) {
            Some(best) => current = best,
            None => {
                tree.stats.failure = Some(format!("no evaluated successor at depth {}", tree.nodes[current].depth));
                break;
            }
        }
    }
    tree.stats.terminal_reached = tree.nodes[current].terminal;
    tree.stats.best_leaf = Some(current);
    Ok(tree)
}
