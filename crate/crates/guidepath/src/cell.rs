//! Per-edge cell construction: the Voronoi-like polytope around a node, the
//! exit direction that defines the edge's Lyapunov function, and the cone of
//! halfplanes carved out of the retained collision samples.
//!
//! The exit direction points from the parent toward the child, so
//! `V(x) = z . (x - x_parent)` is zero exactly on the cell face through the
//! parent and positive over the rest of the cell.

use nalgebra::Vector2;
use thiserror::Error;

use crate::geometry::{cross2, perp, scalar_projection, Halfspace, Point2, Polytope2};
use crate::rrt::{NodeId, RoadmapTree};

#[derive(Debug, Error)]
pub enum CellError {
    #[error("edge ({0}, {1}): nodes coincide")]
    CoincidentNodes(NodeId, NodeId),
    #[error("edge ({0}, {1}): {2} is not the parent of {0}")]
    NotParent(NodeId, NodeId, NodeId),
    #[error("edge ({0}, {1}): cell has empty interior")]
    EmptyCellInterior(NodeId, NodeId),
    #[error("edge ({0}, {1}): collision sample ({2}, {3}) lies on the edge segment")]
    SampleOnEdge(NodeId, NodeId, f64, f64),
    #[error("edge ({0}, {1}): degenerate cone geometry")]
    DegenerateCone(NodeId, NodeId),
}

/// Which node the cone halfplanes pass through. `Child` follows the
/// construction text (lines through the child node and each supporting
/// sample); `Parent` anchors the lines at the parent instead.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConeApex {
    #[default]
    Child,
    Parent,
}

/// Convex cell for one tree edge, with the data the controller synthesis
/// consumes: the polytope rows, the exit direction, and the parent target.
#[derive(Clone, Debug)]
pub struct EdgeCell {
    pub edge: (NodeId, NodeId),
    pub polytope: Polytope2,
    pub exit_dir: Vector2<f64>,
    pub target: Point2,
}

/// One halfplane of the collision-sample cone: safe where
/// `normal . x + offset > 0`. The supporting sample sits on the zero level.
#[derive(Clone, Debug)]
pub struct ConeRow {
    pub normal: Vector2<f64>,
    pub offset: f64,
    pub support: Point2,
}

impl ConeRow {
    #[inline]
    pub fn eval(&self, p: Point2) -> f64 {
        self.normal.x * p.x + self.normal.y * p.y + self.offset
    }
}

/// Up to two cone rows (one per side of the edge); empty when no retained
/// collision sample projects onto the edge.
#[derive(Clone, Debug, Default)]
pub struct CbfCone {
    pub rows: Vec<ConeRow>,
}

/// Unit vector from the parent `j` toward the child `i`.
pub fn exit_direction(tree: &RoadmapTree, edge: (NodeId, NodeId)) -> Result<Vector2<f64>, CellError> {
    let (i, j) = edge;
    let d = tree.position(i) - tree.position(j);
    let len = d.norm();
    if len < 1e-12 {
        return Err(CellError::CoincidentNodes(i, j));
    }
    Ok(d / len)
}

/// Build the cell for edge `(i, j)`, `j = parent(i)`: perpendicular-bisector
/// halfplanes against every other node except the parent, the face through
/// the parent perpendicular to the edge, and the environment bounds.
pub fn build_cell(
    tree: &RoadmapTree,
    edge: (NodeId, NodeId),
    bounds: &Polytope2,
) -> Result<EdgeCell, CellError> {
    let (i, j) = edge;
    if tree.parent_of(i) != Some(j) {
        return Err(CellError::NotParent(i, j, j));
    }
    let xi = tree.position(i);
    let xj = tree.position(j);
    let edge_vec = xj - xi;
    let edge_len = edge_vec.norm();
    if edge_len < 1e-12 {
        return Err(CellError::CoincidentNodes(i, j));
    }

    let mut rows: Vec<Halfspace> = Vec::new();
    for k in tree.node_ids() {
        if k == i || k == j {
            continue;
        }
        let d = tree.position(k) - xi;
        let len = d.norm();
        if len < 1e-12 {
            return Err(CellError::CoincidentNodes(i, k));
        }
        let n = d / len;
        let offset = n.dot(&xi.vec()) + len / 2.0;
        rows.push(Halfspace::new(n, offset).expect("unit bisector normal"));
    }
    // Face through the parent, perpendicular to the edge; equality at x_j.
    let n = edge_vec / edge_len;
    rows.push(
        Halfspace::new(n, n.dot(&xi.vec()) + edge_len).expect("unit exit-face normal"),
    );
    rows.extend(bounds.halfspaces.iter().copied());

    let polytope = Polytope2::new(rows);
    // The child node certifies the nonempty interior.
    if polytope.max_violation(xi) >= -1e-12 {
        return Err(CellError::EmptyCellInterior(i, j));
    }

    Ok(EdgeCell {
        edge,
        polytope,
        exit_dir: exit_direction(tree, edge)?,
        target: xj,
    })
}

/// Build the cone for edge `(i, j)` from the retained collision samples:
/// keep the samples whose normalized projection onto the segment lies in
/// `[0, 1]`, pick the perpendicular-closest one on each side of the edge,
/// and raise a halfplane through the apex and each pick, signed so the
/// opposite edge endpoint is strictly inside.
pub fn build_cbf_cone(
    tree: &RoadmapTree,
    edge: (NodeId, NodeId),
    collision_samples: &[Point2],
    apex: ConeApex,
) -> Result<CbfCone, CellError> {
    let (i, j) = edge;
    let xi = tree.position(i);
    let xj = tree.position(j);
    let edge_vec = xj - xi;
    let edge_len = edge_vec.norm();
    if edge_len < 1e-12 {
        return Err(CellError::CoincidentNodes(i, j));
    }
    let edge_unit = edge_vec / edge_len;

    // (signed perpendicular distance, |angle proxy|, index, sample)
    let mut up: Option<(f64, f64, usize)> = None;
    let mut down: Option<(f64, f64, usize)> = None;
    for (idx, &o) in collision_samples.iter().enumerate() {
        let t = scalar_projection(xi, xj, o).expect("edge length checked above");
        if !(0.0..=1.0).contains(&t) {
            continue;
        }
        let rel = o - xi;
        let perp_dist = cross2(edge_unit, rel);
        if perp_dist.abs() <= 1e-9 {
            return Err(CellError::SampleOnEdge(i, j, o.x, o.y));
        }
        // Tie-breaks: smaller perpendicular distance, then smaller |angle|
        // to the edge, then lower sample index.
        let angle_mag = perp_dist.abs().atan2(rel.dot(&edge_unit).abs());
        let slot = if perp_dist > 0.0 { &mut up } else { &mut down };
        let key = (perp_dist.abs(), angle_mag, idx);
        let better = match *slot {
            None => true,
            Some((d, a, k)) => {
                key.0 < d - 1e-12
                    || ((key.0 - d).abs() <= 1e-12
                        && (key.1 < a - 1e-12 || ((key.1 - a).abs() <= 1e-12 && idx < k)))
            }
        };
        if better {
            *slot = Some(key);
        }
    }

    let (apex_pt, inside_pt) = match apex {
        ConeApex::Child => (xi, xj),
        ConeApex::Parent => (xj, xi),
    };
    let mut rows = Vec::new();
    for pick in [up, down].into_iter().flatten() {
        let support = collision_samples[pick.2];
        let dir = support - apex_pt;
        if dir.norm() < 1e-12 {
            return Err(CellError::DegenerateCone(i, j));
        }
        let mut normal = perp(dir).normalize();
        let mut offset = -normal.dot(&apex_pt.vec());
        let at_inside = normal.dot(&inside_pt.vec()) + offset;
        if at_inside.abs() <= 1e-9 {
            return Err(CellError::DegenerateCone(i, j));
        }
        if at_inside < 0.0 {
            normal = -normal;
            offset = -offset;
        }
        rows.push(ConeRow {
            normal,
            offset,
            support,
        });
    }
    Ok(CbfCone { rows })
}
