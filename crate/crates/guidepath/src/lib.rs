//! Roadmap planning with landmark-based output-feedback control.
//!
//! The pipeline turns a sampled 2D environment into a pruned roadmap tree,
//! carves a convex cell around every tree edge, and synthesizes one constant
//! output-feedback gain matrix per cell by solving a robust linear program
//! with stability (CLF) and collision-avoidance (CBF) constraints. The
//! resulting piecewise-linear policy is executed in closed-loop simulation,
//! optionally under a limited field of view and environment deformation.
//!
//! Stages and their artifacts:
//! - [`rrt`]: tree construction, keeping the samples that landed in obstacles.
//! - [`simplify`]: rewiring, crossing removal, and leaf pruning to a fixpoint.
//! - [`cell`]: per-edge polytopes, exit directions, and collision-sample cones.
//! - [`synthesis`]: per-edge gains via the dual (robust) LP, plus a vertex
//!   oracle that re-checks every certified margin.
//! - [`sim`]: closed-loop integration producing trajectory records.

pub mod cell;
pub mod environment;
pub mod geometry;
pub mod lp;
pub mod rrt;
pub mod runtime;
pub mod sim;
pub mod simplify;
pub mod synthesis;

pub use cell::{build_cbf_cone, build_cell, exit_direction, CbfCone, ConeApex, EdgeCell};
pub use synthesis::{synthesize_all, Dynamics, EdgeGains, SynthesisParams};

pub use environment::{Deformation, EnvironmentModel, Landmark, Obstacle};
pub use geometry::{Halfspace, Point2, Polytope2};
pub use rrt::{build_rrt, near_radius, steer, NodeId, PlannerParams, RoadmapTree};
pub use simplify::{cut_leaves, post_process_rewiring, remove_crossing, simplify, LeafRule};
