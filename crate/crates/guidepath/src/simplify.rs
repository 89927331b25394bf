//! Tree simplification in three passes iterated to a fixpoint: ancestor
//! shortcutting (breadth-first from the root), proper-crossing removal, and
//! leaf pruning. Collision samples ride through untouched.
//!
//! Each sub-procedure strictly decreases a bounded measure or leaves the tree
//! unchanged (total path length, crossing count, leaf count respectively), so
//! the outer loop terminates; a generous pass cap guards against numerical
//! pathologies anyway.

use thiserror::Error;

use crate::environment::EnvironmentModel;
use crate::geometry::{oriented_angle, segment_intersection};
use crate::rrt::{NodeId, RoadmapTree};

#[derive(Debug, Error)]
pub enum SimplifyError {
    #[error("simplification did not reach a fixpoint within {passes} passes ({nodes} nodes left)")]
    PassLimitExceeded { passes: usize, nodes: usize },
}

/// Which leaf children survive when a node has several.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LeafRule {
    /// Keep the single leaf with the median bearing (lower median when the
    /// count is even).
    #[default]
    Median,
    /// Keep the two leaves with the extreme bearings.
    Extremes,
}

/// Reparent nodes to an ancestor whenever the direct edge is collision-free
/// and does not lengthen the path to the root. Nodes are visited in
/// breadth-first order from the root; each keeps climbing while the shortcut
/// to its current grandparent is admissible.
pub fn post_process_rewiring(tree: &RoadmapTree, env: &EnvironmentModel) -> RoadmapTree {
    let mut out = tree.clone();
    for id in breadth_first_order(tree) {
        loop {
            let Some(parent) = out.parent_of(id) else { break };
            let Some(grand) = out.parent_of(parent) else { break };
            let pos = out.position(id);
            let grand_pos = out.position(grand);
            if env.is_edge_collision(pos, grand_pos) {
                break;
            }
            let current = out.cost_to_root(id);
            let through_grand = out.cost_to_root(grand) + pos.dist(grand_pos);
            if through_grand <= current + 1e-9 {
                out.set_parent(id, grand);
            } else {
                break;
            }
        }
    }
    out
}

fn breadth_first_order(tree: &RoadmapTree) -> Vec<NodeId> {
    let mut order = Vec::with_capacity(tree.len());
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(tree.root());
    while let Some(id) = queue.pop_front() {
        order.push(id);
        for c in tree.children(id) {
            queue.push_back(c);
        }
    }
    order
}

/// Split every proper edge crossing at its intersection point. The new node
/// adopts the two children of the crossing and picks, among the two old
/// parents, the one giving it the cheaper path to the root (cycle-creating
/// choices are excluded; ties go to the lower node id).
pub fn remove_crossing(tree: &RoadmapTree) -> RoadmapTree {
    let mut out = tree.clone();
    // Each split removes exactly one crossing, so this terminates.
    loop {
        let edges = out.edges();
        let mut found = None;
        'scan: for a in 0..edges.len() {
            for b in (a + 1)..edges.len() {
                let (i, j) = edges[a];
                let (p, q) = edges[b];
                if i == p || i == q || j == p || j == q {
                    continue;
                }
                if let Some(k) = segment_intersection(
                    out.position(i),
                    out.position(j),
                    out.position(p),
                    out.position(q),
                ) {
                    found = Some(((i, j), (p, q), k));
                    break 'scan;
                }
            }
        }
        let Some(((i, j), (p, q), k_pos)) = found else {
            return out;
        };

        let k = out.add_orphan(k_pos);
        out.set_parent(i, k);
        out.set_parent(p, k);
        // Candidate parents for the new node; a candidate whose root path now
        // runs through k would close a cycle and is skipped.
        let mut best: Option<(f64, NodeId)> = None;
        for cand in [j, q] {
            if out.path_passes_through(cand, k) {
                continue;
            }
            let cost = {
                let mut c = k_pos.dist(out.position(cand));
                let mut cur = cand;
                while let Some(par) = out.parent_of(cur) {
                    c += out.position(cur).dist(out.position(par));
                    cur = par;
                }
                c
            };
            let better = match best {
                None => true,
                Some((bc, bid)) => cost < bc - 1e-12 || ((cost - bc).abs() <= 1e-12 && cand < bid),
            };
            if better {
                best = Some((cost, cand));
            }
        }
        let (_, parent) = best.expect("at least one of the old parents is cycle-free");
        out.set_parent(k, parent);
    }
}

/// For every node with two or more leaf children, keep only the leaves chosen
/// by `rule`. Bearings are measured against the node's own parent edge
/// direction (the +x axis at the root).
pub fn cut_leaves(tree: &RoadmapTree, rule: LeafRule) -> RoadmapTree {
    let mut out = tree.clone();
    let ids: Vec<NodeId> = out.node_ids().collect();
    for id in ids {
        if !out.contains_node(id) {
            continue;
        }
        let leaf_children: Vec<NodeId> = out
            .children(id)
            .into_iter()
            .filter(|&c| out.is_leaf(c))
            .collect();
        if leaf_children.len() < 2 {
            continue;
        }
        let base = match out.parent_of(id) {
            Some(p) => out.position(id) - out.position(p),
            None => nalgebra::Vector2::new(1.0, 0.0),
        };
        let mut measured: Vec<(f64, NodeId)> = leaf_children
            .iter()
            .map(|&c| {
                let dir = out.position(c) - out.position(id);
                let angle = oriented_angle(base, dir).unwrap_or(0.0);
                (angle, c)
            })
            .collect();
        measured.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(&b.1))
        });
        let keep: Vec<NodeId> = match rule {
            LeafRule::Median => vec![measured[(measured.len() - 1) / 2].1],
            LeafRule::Extremes => {
                let mut k = vec![measured[0].1, measured[measured.len() - 1].1];
                k.dedup();
                k
            }
        };
        for (_, c) in measured {
            if !keep.contains(&c) {
                out.remove_leaf(c);
            }
        }
    }
    out
}

/// Run rewiring, crossing removal, and leaf pruning until one full pass
/// leaves the tree unchanged.
pub fn simplify(
    tree: &RoadmapTree,
    env: &EnvironmentModel,
    rule: LeafRule,
) -> Result<RoadmapTree, SimplifyError> {
    const MAX_PASSES: usize = 100;
    let mut current = tree.clone();
    for _ in 0..MAX_PASSES {
        let a = post_process_rewiring(&current, env);
        let b = remove_crossing(&a);
        let c = cut_leaves(&b, rule);
        if c == current {
            return Ok(c);
        }
        current = c;
    }
    Err(SimplifyError::PassLimitExceeded {
        passes: MAX_PASSES,
        nodes: current.len(),
    })
}
