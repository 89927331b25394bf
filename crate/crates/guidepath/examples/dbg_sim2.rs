// temporary diagnostic
use guidepath::cell::ConeApex;
use guidepath::environment::{EnvironmentModel, Landmark};
use guidepath::geometry::{Point2, Polytope2};
use guidepath::rrt::RoadmapTree;
use guidepath::sim::{run_closed_loop, Policy, SimOptions};
use guidepath::synthesis::{synthesize_all, Dynamics, SynthesisParams};

fn main() {
    let env = EnvironmentModel {
        bounds: Polytope2::axis_box(-1.2, 1.2, -1.2, 1.2),
        obstacles: vec![],
        landmarks: vec![
            Landmark { id: "l0".into(), pos: Point2::new(-0.9, 0.4), group: None },
            Landmark { id: "l1".into(), pos: Point2::new(0.8, 0.7), group: None },
            Landmark { id: "l2".into(), pos: Point2::new(0.2, -0.9), group: None },
        ],
        seed: 7,
        deformations: Default::default(),
        start_presets: vec![],
    };
    let mut tree = RoadmapTree::new(Point2::new(0.0, 0.0));
    let a = tree.add_node(Point2::new(0.6, 0.1), 0);
    tree.add_node(Point2::new(1.0, 0.5), a);
    tree.add_node(Point2::new(-0.7, -0.3), 0);

    let dynamics = Dynamics::single_integrator();
    let params = SynthesisParams::default();
    let result = synthesize_all(&tree, &env, &dynamics, &params, ConeApex::Child, Some(1)).unwrap();
    let policy = Policy::from_synthesis(&result, dynamics, params.c_v);
    let opts = SimOptions::default();
    let traj = run_closed_loop(&env, &tree, &policy, Point2::new(-0.65, -0.25), 0.0, &opts).unwrap();
    println!("outcome {:?} dur {:.2} len {:.2}", traj.outcome, traj.duration, traj.path_length);
    for (k, r) in traj.rows.iter().enumerate() {
        if k % 20 == 0 || k + 3 > traj.rows.len() {
            println!("t={:.2} x=({:.4},{:.4}) edge={:?} u={:?} ev={:?}", r.t, r.x, r.y, r.edge, r.u, r.events);
        }
        if k > 300 { break; }
    }
}
