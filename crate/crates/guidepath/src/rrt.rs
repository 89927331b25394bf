//! Tree construction over the sampled environment, with rewiring and one
//! departure from the usual formulation: samples rejected for being inside an
//! obstacle are retained on the tree record instead of discarded, since the
//! cone construction downstream consumes them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::environment::EnvironmentModel;
use crate::geometry::Point2;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("start point is in collision")]
    StartInCollision,
    #[error("max_itr must be at least 1")]
    ZeroIterations,
    #[error("eta must be positive, got {0}")]
    NonPositiveEta(f64),
    #[error("no free samples accepted after {0} iterations")]
    NoFreeSamples(usize),
    #[error("could not draw a sample inside the bounds polytope")]
    DegenerateBounds,
    #[error("free area of the environment is not positive")]
    NoFreeArea,
    #[error("steer endpoints coincide")]
    CoincidentPoints,
}

#[derive(Clone, Copy, Debug)]
pub struct PlannerParams {
    pub max_itr: usize,
    pub eta: f64,
    pub gamma_override: Option<f64>,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            max_itr: 1000,
            eta: 60.0,
            gamma_override: None,
        }
    }
}

/// Rooted tree over sampled positions plus the retained collision samples.
///
/// Invariants: exactly one node (the root) has no parent entry, parent
/// pointers are acyclic, and every stored edge was collision-free in the
/// environment the tree was built in.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadmapTree {
    nodes: BTreeMap<NodeId, Point2>,
    parent: BTreeMap<NodeId, NodeId>,
    root: NodeId,
    pub collision_samples: Vec<Point2>,
}

impl RoadmapTree {
    pub fn new(root_pos: Point2) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(0, root_pos);
        Self {
            nodes,
            parent: BTreeMap::new(),
            root: 0,
            collision_samples: Vec::new(),
        }
    }

    /// Rebuild from explicit parts (used by the artifact loader).
    pub fn from_parts(
        nodes: BTreeMap<NodeId, Point2>,
        parent: BTreeMap<NodeId, NodeId>,
        root: NodeId,
        collision_samples: Vec<Point2>,
    ) -> Self {
        Self {
            nodes,
            parent,
            root,
            collision_samples,
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, id: NodeId) -> Point2 {
        self.nodes[&id]
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(&id).copied()
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Edges as `(child, parent)` pairs, ascending by child id.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.parent.iter().map(|(&c, &p)| (c, p)).collect()
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.parent
            .iter()
            .filter(|(_, &p)| p == id)
            .map(|(&c, _)| c)
            .collect()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        !self.parent.values().any(|&p| p == id)
    }

    pub fn add_node(&mut self, pos: Point2, parent: NodeId) -> NodeId {
        let id = self.next_id();
        self.nodes.insert(id, pos);
        self.parent.insert(id, parent);
        id
    }

    /// Insert a node without a parent edge; the caller must assign one.
    pub fn add_orphan(&mut self, pos: Point2) -> NodeId {
        let id = self.next_id();
        self.nodes.insert(id, pos);
        id
    }

    fn next_id(&self) -> NodeId {
        self.nodes.keys().next_back().map_or(0, |&k| k + 1)
    }

    pub fn set_parent(&mut self, id: NodeId, parent: NodeId) {
        debug_assert!(id != self.root);
        self.parent.insert(id, parent);
    }

    /// Remove a leaf node entirely.
    pub fn remove_leaf(&mut self, id: NodeId) {
        debug_assert!(self.is_leaf(id) && id != self.root);
        self.nodes.remove(&id);
        self.parent.remove(&id);
    }

    /// Sum of parent-edge lengths from `id` up to the root.
    pub fn cost_to_root(&self, id: NodeId) -> f64 {
        let mut cost = 0.0;
        let mut cur = id;
        let mut hops = 0usize;
        while let Some(p) = self.parent_of(cur) {
            cost += self.position(cur).dist(self.position(p));
            cur = p;
            hops += 1;
            debug_assert!(hops <= self.nodes.len(), "parent cycle at node {id}");
        }
        cost
    }

    /// Walk from `start` toward the root; true if `target` is on the path.
    pub fn path_passes_through(&self, start: NodeId, target: NodeId) -> bool {
        let mut cur = start;
        let mut hops = 0usize;
        loop {
            if cur == target {
                return true;
            }
            match self.parent_of(cur) {
                Some(p) => cur = p,
                None => return false,
            }
            hops += 1;
            if hops > self.nodes.len() {
                return false;
            }
        }
    }

    /// Nearest node to `p`; ties broken by lowest node id.
    pub fn nearest(&self, p: Point2) -> NodeId {
        let mut best = self.root;
        let mut best_d = f64::INFINITY;
        for (&id, &pos) in &self.nodes {
            let d = pos.dist(p);
            if d < best_d {
                best_d = d;
                best = id;
            }
        }
        best
    }

    /// Nearest node excluding the root; ties broken by lowest node id.
    pub fn nearest_non_root(&self, p: Point2) -> Option<NodeId> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (&id, &pos) in &self.nodes {
            if id == self.root {
                continue;
            }
            let d = pos.dist(p);
            if d < best_d {
                best_d = d;
                best = Some(id);
            }
        }
        best
    }
}

/// Neighborhood radius `min(gamma (log |V| / |V|)^(1/(d+1)), eta)` with
/// `gamma = 2 ((1 + 1/d) A_free / pi)^(1/d)`.
pub fn near_radius(num_nodes: usize, dim: usize, eta: f64, free_area: f64) -> f64 {
    near_radius_with(num_nodes, dim, eta, free_area, None)
}

pub fn near_radius_with(
    num_nodes: usize,
    dim: usize,
    eta: f64,
    free_area: f64,
    gamma_override: Option<f64>,
) -> f64 {
    debug_assert!(num_nodes >= 1 && free_area > 0.0);
    let d = dim as f64;
    let gamma = gamma_override.unwrap_or_else(|| {
        2.0 * ((1.0 + 1.0 / d) * free_area / std::f64::consts::PI).powf(1.0 / d)
    });
    let n = num_nodes as f64;
    let r = gamma * (n.ln() / n).powf(1.0 / (d + 1.0));
    r.min(eta)
}

/// Move from `from` toward `toward`, at most `eta` away.
pub fn steer(from: Point2, toward: Point2, eta: f64) -> Result<Point2, PlanError> {
    let d = toward - from;
    let len = d.norm();
    if len < 1e-12 {
        return Err(PlanError::CoincidentPoints);
    }
    if len <= eta {
        Ok(toward)
    } else {
        Ok(from + d * (eta / len))
    }
}

/// Build the tree rooted at `start`. Deterministic for a given `seed`.
/// Samples drawn inside an obstacle are appended to `collision_samples`.
pub fn build_rrt(
    env: &EnvironmentModel,
    start: Point2,
    params: &PlannerParams,
    seed: u64,
) -> Result<RoadmapTree, PlanError> {
    if params.max_itr == 0 {
        return Err(PlanError::ZeroIterations);
    }
    if !(params.eta > 0.0) {
        return Err(PlanError::NonPositiveEta(params.eta));
    }
    if env.is_sample_collision(start) {
        return Err(PlanError::StartInCollision);
    }
    let free_area = env.free_area();
    if !(free_area > 0.0) {
        return Err(PlanError::NoFreeArea);
    }
    let bounds_verts = env
        .bounds
        .vertices()
        .map_err(|_| PlanError::DegenerateBounds)?;
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in &bounds_verts {
        xmin = xmin.min(v.x);
        xmax = xmax.max(v.x);
        ymin = ymin.min(v.y);
        ymax = ymax.max(v.y);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = RoadmapTree::new(start);

    for _ in 0..params.max_itr {
        // Uniform over the bounding box, rejected into the bounds polytope.
        let x_rand = {
            let mut drawn = None;
            for _ in 0..10_000 {
                let p = Point2::new(
                    xmin + (xmax - xmin) * rng.random::<f64>(),
                    ymin + (ymax - ymin) * rng.random::<f64>(),
                );
                if env.bounds.contains(p, crate::geometry::GEOM_TOL) {
                    drawn = Some(p);
                    break;
                }
            }
            drawn.ok_or(PlanError::DegenerateBounds)?
        };

        if env.is_sample_collision(x_rand) {
            tree.collision_samples.push(x_rand);
            continue;
        }

        let nearest = tree.nearest(x_rand);
        let nearest_pos = tree.position(nearest);
        if nearest_pos.dist(x_rand) < 1e-12 {
            continue;
        }
        let x_new = steer(nearest_pos, x_rand, params.eta)?;
        // Refuse duplicate positions; zero-length edges break cell geometry.
        if tree.node_ids().any(|id| tree.position(id).dist(x_new) < 1e-9) {
            continue;
        }
        if env.is_edge_collision(nearest_pos, x_new) {
            continue;
        }

        let r = near_radius_with(tree.len(), 2, params.eta, free_area, params.gamma_override);
        let near_ids: Vec<NodeId> = tree
            .node_ids()
            .filter(|&id| tree.position(id).dist(x_new) <= r)
            .collect();

        // Lowest-cost parent among the neighborhood and the nearest node,
        // ties broken by lowest id (candidates scanned in ascending order).
        let mut candidates = near_ids.clone();
        if !candidates.contains(&nearest) {
            candidates.push(nearest);
            candidates.sort_unstable();
        }
        let mut best = nearest;
        let mut best_cost = tree.cost_to_root(nearest) + nearest_pos.dist(x_new);
        for &cand in &candidates {
            if cand == nearest {
                continue;
            }
            let cand_pos = tree.position(cand);
            if env.is_edge_collision(cand_pos, x_new) {
                continue;
            }
            let cost = tree.cost_to_root(cand) + cand_pos.dist(x_new);
            if cost < best_cost || (cost == best_cost && cand < best) {
                best = cand;
                best_cost = cost;
            }
        }
        let new_id = tree.add_node(x_new, best);

        // Rewire the neighborhood through the new node where it is cheaper.
        for &near in &near_ids {
            if near == best {
                continue;
            }
            let near_pos = tree.position(near);
            if env.is_edge_collision(x_new, near_pos) {
                continue;
            }
            let through_new = best_cost + x_new.dist(near_pos);
            if through_new < tree.cost_to_root(near) {
                tree.set_parent(near, new_id);
            }
        }
    }

    if tree.len() == 1 {
        return Err(PlanError::NoFreeSamples(params.max_itr));
    }
    Ok(tree)
}
