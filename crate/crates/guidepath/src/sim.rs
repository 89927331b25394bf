//! Closed-loop simulation of the synthesized policy under single-integrator
//! or unicycle dynamics, with optional limited field of view and environment
//! deformation.
//!
//! Sensing happens against the (possibly deformed) ground-truth environment,
//! while the constant bias of the single-anchor controller keeps using the
//! planning-time landmark table. That split is what makes a deformation run
//! a robustness test: measurements move with the world, gains do not.

use std::collections::BTreeMap;

use nalgebra::{DVector, Vector2};
use thiserror::Error;

use crate::environment::{Deformation, EnvError, EnvironmentModel};
use crate::geometry::{Point2, Polytope2};
use crate::rrt::{NodeId, RoadmapTree};
use crate::runtime::{active_edge, limited_fov_control, should_switch, unicycle_map, world_align, ActiveEdge};
use crate::synthesis::{Dynamics, EdgeGains, LandmarkStack, SynthesisResult};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("start point is in collision")]
    StartInCollision,
    #[error("no gains available for edge ({0}, {1})")]
    MissingGains(NodeId, NodeId),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("control evaluation failed: {0}")]
    Control(#[from] crate::runtime::RuntimeError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SimMode {
    #[default]
    Integrator,
    Unicycle,
}

#[derive(Clone, Copy, Debug)]
pub struct FovLimit {
    pub half_angle: f64,
    pub range: f64,
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub mode: SimMode,
    pub dt: f64,
    pub max_time: f64,
    pub epsilon: f64,
    pub fov: Option<FovLimit>,
    /// Rescale the executed control to this speed (direction preserved).
    pub speed_norm: Option<f64>,
    pub deformation: Option<Deformation>,
    /// Unicycle forward gain.
    pub alpha: f64,
    /// Unicycle turn gain.
    pub beta: f64,
    /// How long to hold the last control when no landmark is visible.
    pub dwell: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            mode: SimMode::Integrator,
            dt: 0.01,
            max_time: 120.0,
            epsilon: 0.1,
            fov: None,
            speed_norm: Some(1.0),
            deformation: None,
            alpha: 0.1,
            beta: 0.5,
            dwell: 0.5,
        }
    }
}

/// Per-edge data the runtime needs: gains plus the cell polytope (for
/// membership recovery) and the CLF data (for descent diagnostics).
#[derive(Clone, Debug)]
pub struct PolicyEdge {
    pub gains: EdgeGains,
    pub cell: Polytope2,
    pub exit_dir: Vector2<f64>,
    pub target: Point2,
}

/// Everything the simulator consumes, keyed by child node id.
#[derive(Clone, Debug)]
pub struct Policy {
    pub dynamics: Dynamics,
    pub stack: LandmarkStack,
    pub c_v: f64,
    pub edges: BTreeMap<NodeId, PolicyEdge>,
}

impl Policy {
    pub fn from_synthesis(result: &SynthesisResult, dynamics: Dynamics, c_v: f64) -> Self {
        let edges = result
            .records
            .iter()
            .map(|rec| {
                (
                    rec.gains.edge.0,
                    PolicyEdge {
                        gains: rec.gains.clone(),
                        cell: rec.cell.polytope.clone(),
                        exit_dir: rec.cell.exit_dir,
                        target: rec.cell.target,
                    },
                )
            })
            .collect();
        Self {
            dynamics,
            stack: result.stack.clone(),
            c_v,
            edges,
        }
    }

    pub fn landmark_table(&self) -> BTreeMap<String, Point2> {
        self.stack
            .ids
            .iter()
            .cloned()
            .zip(self.stack.positions.iter().copied())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Timeout,
    Collision,
    NoLandmark,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub phi: Option<f64>,
    pub edge: Option<(NodeId, NodeId)>,
    /// Executed control (after speed normalization).
    pub u: Option<(f64, f64)>,
    /// Raw feedback before normalization; carried for descent diagnostics.
    pub u_raw: Option<(f64, f64)>,
    pub landmark: Option<String>,
    pub events: Vec<&'static str>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub outcome: Outcome,
    pub duration: f64,
    pub path_length: f64,
}

/// Fourth-order Runge-Kutta step of `xdot = A x + B u` with `u` held.
pub fn step_integrator(dynamics: &Dynamics, x: Point2, u: &DVector<f64>, dt: f64) -> Point2 {
    let f = |p: Vector2<f64>| -> Vector2<f64> {
        let ax = &dynamics.a * p;
        let bu = &dynamics.b * u;
        Vector2::new(ax[0] + bu[0], ax[1] + bu[1])
    };
    let p0 = x.vec();
    let k1 = f(p0);
    let k2 = f(p0 + k1 * (dt / 2.0));
    let k3 = f(p0 + k2 * (dt / 2.0));
    let k4 = f(p0 + k3 * dt);
    Point2::from_vec(p0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// RK4 step of the unicycle kinematics with constant `(u_x, omega_z)`.
pub fn step_unicycle(x: Point2, phi: f64, u_x: f64, omega_z: f64, dt: f64) -> (Point2, f64) {
    let f = |s: (f64, f64, f64)| -> (f64, f64, f64) {
        (u_x * s.2.cos(), u_x * s.2.sin(), omega_z)
    };
    let s0 = (x.x, x.y, phi);
    let add = |s: (f64, f64, f64), k: (f64, f64, f64), h: f64| {
        (s.0 + k.0 * h, s.1 + k.1 * h, s.2 + k.2 * h)
    };
    let k1 = f(s0);
    let k2 = f(add(s0, k1, dt / 2.0));
    let k3 = f(add(s0, k2, dt / 2.0));
    let k4 = f(add(s0, k3, dt));
    let s1 = (
        s0.0 + (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) * dt / 6.0,
        s0.1 + (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) * dt / 6.0,
        s0.2 + (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2) * dt / 6.0,
    );
    (Point2::new(s1.0, s1.1), s1.2)
}

/// Run the policy from `start` until the root ball, a collision, a sensing
/// dropout, or the time limit. Deterministic for identical inputs.
pub fn run_closed_loop(
    env: &EnvironmentModel,
    tree: &RoadmapTree,
    policy: &Policy,
    start: Point2,
    phi0: f64,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    let truth = match &opts.deformation {
        Some(d) => env.deform(d)?,
        None => env.clone(),
    };
    if truth.is_sample_collision(start) {
        return Err(SimError::StartInCollision);
    }
    let table = policy.landmark_table();
    let root_pos = tree.position(tree.root());

    let mut x = start;
    let mut phi = phi0;
    let mut steps = 0u64;
    let mut rows: Vec<TrajectoryRow> = Vec::new();
    let mut path_length = 0.0f64;
    let mut held: Option<(DVector<f64>, (f64, f64))> = None; // (exec u, raw u)
    let mut dwell_left = opts.dwell;
    let phi_out = |phi: f64| match opts.mode {
        SimMode::Unicycle => Some(phi),
        SimMode::Integrator => None,
    };

    let mut edge = match active_edge(tree, x, opts.epsilon) {
        ActiveEdge::AtRoot => {
            return Ok(Trajectory {
                rows: vec![TrajectoryRow {
                    t: 0.0,
                    x: x.x,
                    y: x.y,
                    phi: phi_out(phi),
                    edge: None,
                    u: None,
                    u_raw: None,
                    landmark: None,
                    events: vec!["success"],
                }],
                outcome: Outcome::Success,
                duration: 0.0,
                path_length: 0.0,
            })
        }
        ActiveEdge::Edge(i, j) => (i, j),
    };

    let outcome = loop {
        let t = steps as f64 * opts.dt;
        let mut events: Vec<&'static str> = Vec::new();

        if x.dist(root_pos) <= opts.epsilon {
            events.push("success");
            rows.push(TrajectoryRow {
                t,
                x: x.x,
                y: x.y,
                phi: phi_out(phi),
                edge: Some(edge),
                u: None,
                u_raw: None,
                landmark: None,
                events,
            });
            break Outcome::Success;
        }
        if truth.is_sample_collision(x) {
            events.push("collision");
            rows.push(TrajectoryRow {
                t,
                x: x.x,
                y: x.y,
                phi: phi_out(phi),
                edge: Some(edge),
                u: None,
                u_raw: None,
                landmark: None,
                events,
            });
            break Outcome::Collision;
        }
        if t >= opts.max_time {
            events.push("timeout");
            rows.push(TrajectoryRow {
                t,
                x: x.x,
                y: x.y,
                phi: phi_out(phi),
                edge: Some(edge),
                u: None,
                u_raw: None,
                landmark: None,
                events,
            });
            break Outcome::Timeout;
        }

        // Node-passing switch: hand over to the parent's edge inside the
        // epsilon ball around the current target.
        while edge.1 != tree.root() && should_switch(x, tree.position(edge.1), opts.epsilon) {
            edge = (edge.1, tree.parent_of(edge.1).expect("non-root"));
            events.push("switch");
        }
        // Membership recovery: deformations can push the state out of the
        // active cell before it reaches the switch ball; re-anchor to the
        // cell that actually contains it.
        let current = policy
            .edges
            .get(&edge.0)
            .ok_or(SimError::MissingGains(edge.0, edge.1))?;
        if !current.cell.contains(x, 1e-6) {
            if let ActiveEdge::Edge(i, j) = active_edge(tree, x, opts.epsilon) {
                if (i, j) != edge {
                    edge = (i, j);
                    events.push("reassign");
                }
            }
        }
        let pe = policy
            .edges
            .get(&edge.0)
            .ok_or(SimError::MissingGains(edge.0, edge.1))?;

        // Sense. The FOV heading is the vehicle heading for the unicycle and
        // the direction of the last executed control for the integrator.
        let fov_heading = match opts.mode {
            SimMode::Unicycle => phi,
            SimMode::Integrator => held
                .as_ref()
                .map(|(u, _)| u[1].atan2(u[0]))
                .unwrap_or(0.0),
        };
        let visible = match &opts.fov {
            Some(f) => truth.visible_landmarks(x, fov_heading, f.half_angle, f.range),
            None => truth.visible_landmarks(x, 0.0, std::f64::consts::PI, f64::INFINITY),
        };

        let (u_exec, u_raw, anchor) = match visible.first() {
            Some(id) => {
                dwell_left = opts.dwell;
                let truth_pos = truth
                    .landmarks
                    .iter()
                    .find(|lm| &lm.id == id)
                    .map(|lm| lm.pos)
                    .expect("visible landmark exists in truth");
                // The sensor reports the displacement in the body frame;
                // align it back into the world frame before feedback.
                let d_world = truth_pos - x;
                let y_i = match opts.mode {
                    SimMode::Unicycle => {
                        let body = world_align(-phi, d_world);
                        world_align(phi, body)
                    }
                    SimMode::Integrator => d_world,
                };
                let u = limited_fov_control(&pe.gains, id, y_i, &table)?;
                let raw = (u[0], u[1]);
                let exec = match opts.speed_norm {
                    Some(v) if u.norm() > 1e-9 => u.normalize() * v,
                    _ => u,
                };
                held = Some((exec.clone(), raw));
                (exec, raw, Some(id.clone()))
            }
            None => match &held {
                Some((u, raw)) if dwell_left > 0.0 => {
                    dwell_left -= opts.dt;
                    events.push("hold");
                    (u.clone(), *raw, None)
                }
                _ => {
                    events.push("no-landmark");
                    rows.push(TrajectoryRow {
                        t,
                        x: x.x,
                        y: x.y,
                        phi: phi_out(phi),
                        edge: Some(edge),
                        u: None,
                        u_raw: None,
                        landmark: None,
                        events,
                    });
                    break Outcome::NoLandmark;
                }
            },
        };

        rows.push(TrajectoryRow {
            t,
            x: x.x,
            y: x.y,
            phi: phi_out(phi),
            edge: Some(edge),
            u: Some((u_exec[0], u_exec[1])),
            u_raw: Some(u_raw),
            landmark: anchor,
            events,
        });

        let before = x;
        match opts.mode {
            SimMode::Integrator => {
                x = step_integrator(&policy.dynamics, x, &u_exec, opts.dt);
            }
            SimMode::Unicycle => {
                let (ux, wz) = unicycle_map(
                    Vector2::new(u_exec[0], u_exec[1]),
                    phi,
                    opts.alpha,
                    opts.beta,
                );
                let (nx, nphi) = step_unicycle(x, phi, ux, wz, opts.dt);
                x = nx;
                phi = nphi;
            }
        }
        path_length += x.dist(before);
        steps += 1;
    };

    Ok(Trajectory {
        rows,
        outcome,
        duration: steps as f64 * opts.dt,
        path_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::ConeApex;
    use crate::environment::{Landmark, Obstacle};
    use crate::rrt::RoadmapTree;
    use crate::synthesis::{synthesize_all, SynthesisParams};

    fn mini_env() -> EnvironmentModel {
        EnvironmentModel {
            bounds: Polytope2::axis_box(-1.2, 1.2, -1.2, 1.2),
            obstacles: vec![],
            landmarks: vec![
                Landmark {
                    id: "l0".into(),
                    pos: Point2::new(-0.9, 0.4),
                    group: None,
                },
                Landmark {
                    id: "l1".into(),
                    pos: Point2::new(0.8, 0.7),
                    group: None,
                },
                Landmark {
                    id: "l2".into(),
                    pos: Point2::new(0.2, -0.9),
                    group: None,
                },
            ],
            seed: 7,
            deformations: Default::default(),
            start_presets: vec![],
        }
    }

    fn mini_tree() -> RoadmapTree {
        let mut tree = RoadmapTree::new(Point2::new(0.0, 0.0));
        let a = tree.add_node(Point2::new(0.6, 0.1), 0);
        tree.add_node(Point2::new(1.0, 0.5), a);
        tree.add_node(Point2::new(-0.7, -0.3), 0);
        tree
    }

    fn mini_policy(env: &EnvironmentModel, tree: &RoadmapTree) -> Policy {
        let dynamics = Dynamics::single_integrator();
        let params = SynthesisParams::default();
        let result =
            synthesize_all(tree, env, &dynamics, &params, ConeApex::Child, Some(1)).unwrap();
        for rec in &result.records {
            assert!(rec.report.pass, "edge {:?} failed verification", rec.gains.edge);
        }
        Policy::from_synthesis(&result, dynamics, params.c_v)
    }

    #[test]
    fn rk4_exact_for_constant_field() {
        let dynamics = Dynamics::single_integrator();
        let u = DVector::from_column_slice(&[1.0, 0.0]);
        let next = step_integrator(&dynamics, Point2::new(0.0, 0.0), &u, 0.01);
        assert_eq!(next, Point2::new(0.01, 0.0));
        let still = step_integrator(&dynamics, Point2::new(0.3, 0.4), &DVector::zeros(2), 0.01);
        assert_eq!(still, Point2::new(0.3, 0.4));
    }

    #[test]
    fn unicycle_straight_line() {
        let (p, phi) = step_unicycle(Point2::new(0.0, 0.0), 0.3, 0.5, 0.0, 0.02);
        let expect = Point2::new(0.5 * 0.02 * 0.3f64.cos(), 0.5 * 0.02 * 0.3f64.sin());
        assert!(p.dist(expect) < 1e-12);
        assert_eq!(phi, 0.3);
    }

    #[test]
    fn immediate_success_is_single_row() {
        let env = mini_env();
        let tree = mini_tree();
        let policy = mini_policy(&env, &tree);
        let opts = SimOptions::default();
        let traj = run_closed_loop(&env, &tree, &policy, Point2::new(0.05, 0.0), 0.0, &opts)
            .unwrap();
        assert_eq!(traj.outcome, Outcome::Success);
        assert_eq!(traj.rows.len(), 1);
        assert_eq!(traj.rows[0].t, 0.0);
        assert!(traj.rows[0].events.contains(&"success"));
    }

    #[test]
    fn integrator_run_reaches_root() {
        let env = mini_env();
        let tree = mini_tree();
        let policy = mini_policy(&env, &tree);
        let opts = SimOptions::default();
        for start in [Point2::new(1.0, 0.5), Point2::new(-0.65, -0.25)] {
            let traj = run_closed_loop(&env, &tree, &policy, start, 0.0, &opts).unwrap();
            assert_eq!(traj.outcome, Outcome::Success, "from {:?}", start);
            assert!(traj.duration < 120.0);
            // No collision events anywhere.
            assert!(traj
                .rows
                .iter()
                .all(|r| !r.events.contains(&"collision")));
        }
    }

    #[test]
    fn timestamps_strictly_increase_from_zero() {
        let env = mini_env();
        let tree = mini_tree();
        let policy = mini_policy(&env, &tree);
        let traj = run_closed_loop(
            &env,
            &tree,
            &policy,
            Point2::new(0.9, 0.4),
            0.0,
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.rows[0].t, 0.0);
        for w in traj.rows.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn start_in_collision_errors() {
        let mut env = mini_env();
        env.obstacles.push(Obstacle::Circle {
            center: Point2::new(0.9, 0.4),
            radius: 0.15,
            group: None,
        });
        let tree = mini_tree();
        let policy = mini_policy(&mini_env(), &tree);
        let res = run_closed_loop(
            &env,
            &tree,
            &policy,
            Point2::new(0.9, 0.4),
            0.0,
            &SimOptions::default(),
        );
        assert!(matches!(res, Err(SimError::StartInCollision)));
    }

    #[test]
    fn clf_descent_along_unnormalized_field() {
        let env = mini_env();
        let tree = mini_tree();
        let policy = mini_policy(&env, &tree);
        // Disable speed normalization so the raw field drives the state.
        let opts = SimOptions {
            speed_norm: None,
            ..Default::default()
        };
        let traj = run_closed_loop(&env, &tree, &policy, Point2::new(1.0, 0.5), 0.0, &opts)
            .unwrap();
        assert_eq!(traj.outcome, Outcome::Success);
        for row in &traj.rows {
            let (Some(edge), Some(u_raw)) = (row.edge, row.u_raw) else {
                continue;
            };
            let pe = &policy.edges[&edge.0];
            // Descent certificate applies inside the cell.
            let pos = Point2::new(row.x, row.y);
            if !pe.cell.contains(pos, 1e-9) {
                continue;
            }
            let u = DVector::from_column_slice(&[u_raw.0, u_raw.1]);
            if u.norm() <= 1e-9 {
                continue;
            }
            let ax = &policy.dynamics.a * pos.vec();
            let bu = &policy.dynamics.b * &u;
            let xdot = Vector2::new(ax[0] + bu[0], ax[1] + bu[1]);
            let v = pe.exit_dir.dot(&(pos - pe.target));
            let vdot = pe.exit_dir.dot(&xdot);
            assert!(
                vdot <= -policy.c_v * v + pe.gains.s_v + 1e-6,
                "descent violated at t={}: vdot={} bound={}",
                row.t,
                vdot,
                -policy.c_v * v + pe.gains.s_v
            );
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let env = mini_env();
        let tree = mini_tree();
        let policy = mini_policy(&env, &tree);
        let opts = SimOptions::default();
        let a = run_closed_loop(&env, &tree, &policy, Point2::new(1.0, 0.5), 0.0, &opts).unwrap();
        let b = run_closed_loop(&env, &tree, &policy, Point2::new(1.0, 0.5), 0.0, &opts).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.x.to_bits(), rb.x.to_bits());
            assert_eq!(ra.y.to_bits(), rb.y.to_bits());
        }
    }

    #[test]
    fn full_and_limited_fov_agree_when_landmarks_stay_visible() {
        let env = mini_env();
        let tree = mini_tree();
        let policy = mini_policy(&env, &tree);
        let full = run_closed_loop(
            &env,
            &tree,
            &policy,
            Point2::new(1.0, 0.5),
            0.0,
            &SimOptions::default(),
        )
        .unwrap();
        // A wide-but-finite field of view that keeps at least one landmark
        // visible the whole way (half angle pi covers everything in range).
        let limited = run_closed_loop(
            &env,
            &tree,
            &policy,
            Point2::new(1.0, 0.5),
            0.0,
            &SimOptions {
                fov: Some(FovLimit {
                    half_angle: std::f64::consts::PI,
                    range: 10.0,
                }),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(full.rows.len(), limited.rows.len());
        for (a, b) in full.rows.iter().zip(&limited.rows) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
    }

    #[test]
    fn unicycle_mode_reaches_root() {
        let env = mini_env();
        let tree = mini_tree();
        let policy = mini_policy(&env, &tree);
        let opts = SimOptions {
            mode: SimMode::Unicycle,
            ..Default::default()
        };
        let traj = run_closed_loop(&env, &tree, &policy, Point2::new(1.0, 0.5), 2.0, &opts)
            .unwrap();
        assert_eq!(traj.outcome, Outcome::Success);
        assert!(traj.rows.iter().all(|r| r.phi.is_some()));
    }
}
