//! Execution-side pieces of the policy: the full-stack feedback law, its
//! single-anchor reformulation for a limited field of view, cell lookup,
//! switching, and the unicycle input mapping.
//!
//! The single-anchor form is exact: with the gain blocks `K_k` conformal
//! with the landmark stack, `u = K y = (sum_k K_k) y_i + sum_{k != i}
//! K_k (l_k - l_i)`, where the bias term uses the planning-time landmark
//! table. Switching anchors therefore never changes the control.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::geometry::Point2;
use crate::rrt::{NodeId, RoadmapTree};
use crate::synthesis::EdgeGains;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("measurement has {got} entries, gains expect {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("unknown landmark id {0:?}")]
    UnknownLandmark(String),
}

/// `u = K y` over the full stacked measurement.
pub fn full_control(gains: &EdgeGains, y: &DVector<f64>) -> Result<DVector<f64>, RuntimeError> {
    if y.len() != gains.k.ncols() {
        return Err(RuntimeError::DimensionMismatch {
            got: y.len(),
            want: gains.k.ncols(),
        });
    }
    Ok(&gains.k * y)
}

/// Single-anchor control: reproduces `full_control` exactly from one
/// measured displacement `y_i = l_i - x`, using the known landmark table for
/// the constant bias.
pub fn limited_fov_control(
    gains: &EdgeGains,
    visible_id: &str,
    y_i: Vector2<f64>,
    landmark_table: &BTreeMap<String, Point2>,
) -> Result<DVector<f64>, RuntimeError> {
    let anchor = gains
        .landmark_ids
        .iter()
        .position(|id| id == visible_id)
        .ok_or_else(|| RuntimeError::UnknownLandmark(visible_id.to_string()))?;
    let anchor_pos = *landmark_table
        .get(visible_id)
        .ok_or_else(|| RuntimeError::UnknownLandmark(visible_id.to_string()))?;

    let m = gains.k.nrows();
    let n_l = gains.k.ncols() / 2;
    let mut k_sum: DMatrix<f64> = DMatrix::zeros(m, 2);
    let mut bias: DVector<f64> = DVector::zeros(m);
    for l in 0..n_l {
        let block = gains.k.view((0, 2 * l), (m, 2));
        k_sum += block;
        if l != anchor {
            let lk = landmark_table
                .get(&gains.landmark_ids[l])
                .ok_or_else(|| RuntimeError::UnknownLandmark(gains.landmark_ids[l].clone()))?;
            let d = *lk - anchor_pos;
            bias += block * DVector::from_column_slice(&[d.x, d.y]);
        }
    }
    Ok(k_sum * DVector::from_column_slice(&[y_i.x, y_i.y]) + bias)
}

/// Result of a cell lookup at a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveEdge {
    AtRoot,
    Edge(NodeId, NodeId),
}

/// Cells are Voronoi-like around non-root nodes, so membership reduces to the
/// nearest non-root node. The root wins only inside its epsilon ball.
pub fn active_edge(tree: &RoadmapTree, x: Point2, epsilon: f64) -> ActiveEdge {
    let nearest = tree.nearest(x);
    if nearest == tree.root() && tree.position(nearest).dist(x) <= epsilon {
        return ActiveEdge::AtRoot;
    }
    match tree.nearest_non_root(x) {
        Some(i) => ActiveEdge::Edge(i, tree.parent_of(i).expect("non-root node has a parent")),
        None => ActiveEdge::AtRoot,
    }
}

/// Closed-ball switching test.
#[inline]
pub fn should_switch(x: Point2, target: Point2, epsilon: f64) -> bool {
    x.dist(target) <= epsilon
}

/// Map a planar velocity command onto unicycle inputs: forward speed from
/// the heading-aligned component, turn rate from the heading-transverse
/// component, both normalized by `|u|` so only the direction of `u` matters.
pub fn unicycle_map(u: Vector2<f64>, heading: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let norm = u.norm();
    if norm < 1e-12 {
        return (0.0, 0.0);
    }
    let (s, c) = heading.sin_cos();
    let u_x = alpha * (c * u.x + s * u.y) / norm;
    // z-component of [cos, sin, 0] x [u, 0].
    let omega_z = beta * (c * u.y - s * u.x) / norm;
    (u_x, omega_z)
}

/// Rotate a body-frame displacement into the world frame.
pub fn world_align(heading: f64, body: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = heading.sin_cos();
    Vector2::new(c * body.x - s * body.y, s * body.x + c * body.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::LandmarkStack;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn stack3() -> LandmarkStack {
        LandmarkStack {
            ids: vec!["a".into(), "b".into(), "c".into()],
            positions: vec![
                Point2::new(1.0, 2.0),
                Point2::new(-2.0, 0.5),
                Point2::new(0.0, -1.5),
            ],
        }
    }

    fn table(stack: &LandmarkStack) -> BTreeMap<String, Point2> {
        stack
            .ids
            .iter()
            .cloned()
            .zip(stack.positions.iter().copied())
            .collect()
    }

    fn random_gains(rng: &mut StdRng, n_l: usize) -> EdgeGains {
        EdgeGains {
            edge: (1, 0),
            k: DMatrix::from_fn(2, 2 * n_l, |_, _| -1.0 + 2.0 * rng.random::<f64>()),
            s_h: vec![],
            s_v: -0.1,
            landmark_ids: match n_l {
                1 => vec!["a".into()],
                _ => vec!["a".into(), "b".into(), "c".into()],
            },
        }
    }

    #[test]
    fn full_control_basics() {
        let mut rng = StdRng::seed_from_u64(1);
        let stack = stack3();
        // Zero gains give zero control.
        let zero = EdgeGains {
            edge: (1, 0),
            k: DMatrix::zeros(2, 6),
            s_h: vec![],
            s_v: 0.0,
            landmark_ids: stack.ids.clone(),
        };
        let y = stack.measure(Point2::new(0.3, 0.3));
        assert_eq!(full_control(&zero, &y).unwrap(), DVector::zeros(2));

        // Identity block on a single landmark: standing at the landmark
        // zeroes the displacement and the control.
        let single = LandmarkStack {
            ids: vec!["a".into()],
            positions: vec![Point2::new(1.0, 2.0)],
        };
        let ident = EdgeGains {
            edge: (1, 0),
            k: DMatrix::identity(2, 2),
            s_h: vec![],
            s_v: 0.0,
            landmark_ids: single.ids.clone(),
        };
        let y = single.measure(Point2::new(1.0, 2.0));
        assert_eq!(full_control(&ident, &y).unwrap(), DVector::zeros(2));

        // Random K y matches a naive double loop.
        let gains = random_gains(&mut rng, 3);
        let x = Point2::new(0.7, -0.4);
        let y = stack.measure(x);
        let u = full_control(&gains, &y).unwrap();
        for r in 0..2 {
            let mut acc = 0.0;
            for c in 0..6 {
                acc += gains.k[(r, c)] * y[c];
            }
            assert!((u[r] - acc).abs() < 1e-12);
        }

        // Dimension mismatch errors.
        assert!(full_control(&gains, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn limited_fov_matches_full_for_every_anchor() {
        let mut rng = StdRng::seed_from_u64(2);
        let stack = stack3();
        let tbl = table(&stack);
        for _ in 0..50 {
            let gains = random_gains(&mut rng, 3);
            let x = Point2::new(-3.0 + 6.0 * rng.random::<f64>(), -3.0 + 6.0 * rng.random::<f64>());
            let full = full_control(&gains, &stack.measure(x)).unwrap();
            for (k, id) in stack.ids.iter().enumerate() {
                let y_i = stack.positions[k] - x;
                let lim = limited_fov_control(&gains, id, y_i, &tbl).unwrap();
                assert!(
                    (&full - &lim).norm() < 1e-9,
                    "anchor {id}: {:?} vs {:?}",
                    full,
                    lim
                );
            }
        }
    }

    #[test]
    fn single_landmark_bias_is_zero() {
        let mut rng = StdRng::seed_from_u64(3);
        let gains = random_gains(&mut rng, 1);
        let stack = LandmarkStack {
            ids: vec!["a".into()],
            positions: vec![Point2::new(1.0, 2.0)],
        };
        let tbl = table(&stack);
        let x = Point2::new(0.2, 0.9);
        let full = full_control(&gains, &stack.measure(x)).unwrap();
        let lim = limited_fov_control(&gains, "a", stack.positions[0] - x, &tbl).unwrap();
        assert!((&full - &lim).norm() < 1e-15);
    }

    #[test]
    fn anchor_switch_is_continuous() {
        // Evaluating both anchors at the same state gives the same control.
        let mut rng = StdRng::seed_from_u64(4);
        let stack = stack3();
        let tbl = table(&stack);
        let gains = random_gains(&mut rng, 3);
        let x = Point2::new(0.1, 0.2);
        let ua = limited_fov_control(&gains, "a", stack.positions[0] - x, &tbl).unwrap();
        let ub = limited_fov_control(&gains, "b", stack.positions[1] - x, &tbl).unwrap();
        assert!((ua - ub).norm() < 1e-9);
    }

    #[test]
    fn unknown_landmark_errors() {
        let mut rng = StdRng::seed_from_u64(5);
        let gains = random_gains(&mut rng, 3);
        let tbl = table(&stack3());
        assert!(matches!(
            limited_fov_control(&gains, "nope", Vector2::zeros(), &tbl),
            Err(RuntimeError::UnknownLandmark(_))
        ));
    }

    #[test]
    fn active_edge_lookup() {
        let mut tree = RoadmapTree::new(Point2::new(0.0, 0.0));
        let a = tree.add_node(Point2::new(1.0, 0.0), 0);
        let b = tree.add_node(Point2::new(2.0, 0.0), a);
        // At a non-root node: its own edge.
        assert_eq!(
            active_edge(&tree, Point2::new(2.0, 0.0), 0.1),
            ActiveEdge::Edge(b, a)
        );
        // Within epsilon of the root: at-root.
        assert_eq!(
            active_edge(&tree, Point2::new(0.05, 0.0), 0.1),
            ActiveEdge::AtRoot
        );
        // Near the root but outside epsilon: nearest non-root edge.
        assert_eq!(
            active_edge(&tree, Point2::new(0.3, 0.0), 0.1),
            ActiveEdge::Edge(a, 0)
        );
    }

    #[test]
    fn active_edge_agrees_with_cell_membership() {
        use crate::cell::build_cell;
        use crate::geometry::Polytope2;
        let mut tree = RoadmapTree::new(Point2::new(0.0, 0.0));
        let a = tree.add_node(Point2::new(0.8, 0.2), 0);
        let b = tree.add_node(Point2::new(-0.5, 0.9), 0);
        let c = tree.add_node(Point2::new(0.9, 1.0), a);
        let bounds = Polytope2::axis_box(-1.5, 1.5, -1.5, 1.5);
        let cells: BTreeMap<NodeId, _> = [(a, 0), (b, 0), (c, a)]
            .into_iter()
            .map(|(i, j)| (i, build_cell(&tree, (i, j), &bounds).unwrap()))
            .collect();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..1000 {
            let p = Point2::new(
                -1.5 + 3.0 * rng.random::<f64>(),
                -1.5 + 3.0 * rng.random::<f64>(),
            );
            if let ActiveEdge::Edge(i, _) = active_edge(&tree, p, 0.05) {
                // The point belongs to the looked-up cell, except possibly
                // through the exit face (cells overhang their parent).
                let cell = &cells[&i];
                let n_bounds = bounds.halfspaces.len();
                let exit_idx = cell.polytope.halfspaces.len() - n_bounds - 1;
                for (k, h) in cell.polytope.halfspaces.iter().enumerate() {
                    if k != exit_idx {
                        assert!(
                            h.eval(p) <= 1e-9,
                            "point {:?} violates row {k} of cell {i}",
                            p
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn should_switch_closed_ball() {
        let t = Point2::new(1.0, 1.0);
        assert!(should_switch(t, t, 0.125));
        // Exactly on the ball boundary (dyadic values keep it exact).
        assert!(should_switch(Point2::new(1.125, 1.0), t, 0.125));
        assert!(!should_switch(Point2::new(1.2, 1.0), t, 0.125));
    }

    #[test]
    fn unicycle_map_examples() {
        // Aligned heading: pure forward at alpha.
        let (ux, wz) = unicycle_map(Vector2::new(1.0, 0.0), 0.0, 0.1, 0.5);
        assert!((ux - 0.1).abs() < 1e-15 && wz.abs() < 1e-15);
        // Command at +90 degrees: pure rotation at beta.
        let (ux, wz) = unicycle_map(Vector2::new(0.0, 1.0), 0.0, 0.1, 0.5);
        assert!(ux.abs() < 1e-15 && (wz - 0.5).abs() < 1e-15);
        // Aligned at any magnitude: forward at alpha exactly.
        let (ux, wz) = unicycle_map(Vector2::new(0.0, 2.0), std::f64::consts::FRAC_PI_2, 0.1, 0.5);
        assert!((ux - 0.1).abs() < 1e-12 && wz.abs() < 1e-12);
        // Zero command stops.
        assert_eq!(unicycle_map(Vector2::zeros(), 1.0, 0.1, 0.5), (0.0, 0.0));
    }

    #[test]
    fn unicycle_map_scale_invariant() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..100 {
            let u = Vector2::new(-1.0 + 2.0 * rng.random::<f64>(), -1.0 + 2.0 * rng.random::<f64>());
            if u.norm() < 1e-6 {
                continue;
            }
            let phi = -3.0 + 6.0 * rng.random::<f64>();
            let a = unicycle_map(u, phi, 0.1, 0.5);
            let b = unicycle_map(u * 2.0, phi, 0.1, 0.5);
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn world_align_round_trip() {
        assert!(
            (world_align(0.0, Vector2::new(0.3, -0.7)) - Vector2::new(0.3, -0.7)).norm() < 1e-15
        );
        let w = world_align(std::f64::consts::FRAC_PI_2, Vector2::new(1.0, 0.0));
        assert!((w - Vector2::new(0.0, 1.0)).norm() < 1e-12);
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..50 {
            let phi = -3.0 + 6.0 * rng.random::<f64>();
            let v = Vector2::new(rng.random::<f64>(), rng.random::<f64>());
            let back = world_align(-phi, world_align(phi, v));
            assert!((back - v).norm() < 1e-12);
        }
    }

    #[test]
    fn policy_affine_slope_matches_gain_blocks() {
        // Finite differences of u(x) recover -K Istack.
        let mut rng = StdRng::seed_from_u64(10);
        let stack = stack3();
        let gains = random_gains(&mut rng, 3);
        let k_state = gains.field_state_coeff();
        let x0 = Point2::new(0.25, -0.6);
        let h = 1e-6;
        let u0 = full_control(&gains, &stack.measure(x0)).unwrap();
        for d in 0..2 {
            let mut x1 = x0;
            if d == 0 {
                x1.x += h;
            } else {
                x1.y += h;
            }
            let u1 = full_control(&gains, &stack.measure(x1)).unwrap();
            for r in 0..2 {
                let fd = (u1[r] - u0[r]) / h;
                assert!(
                    (fd + k_state[(r, d)]).abs() < 1e-6,
                    "slope mismatch at ({r},{d}): {fd} vs {}",
                    -k_state[(r, d)]
                );
            }
        }
    }
}
