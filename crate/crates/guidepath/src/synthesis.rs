//! Per-edge gain synthesis. The controller `u = K y` acts on stacked
//! landmark displacements `y = stack(l_k - x)`, so the closed-loop field is
//! affine in `x`: `u(x) = K Lv - K Istack x` with `Lv` the stacked landmark
//! coordinates and `Istack = 1 (x) I_2` the stacking matrix.
//!
//! Every constraint (CBF rows, the CLF row, input-limit rows) must hold for
//! all `x` in the edge cell. Each such row is affine in `x`, so the inner
//! maximization over the cell dualizes into one nonnegative multiplier
//! vector per row plus linear equalities tying it to the row coefficients,
//! leaving a single finite LP over the gains, the margins, and the
//! multipliers. [`verify_gains`] re-checks the result by brute force over
//! the enumerated cell vertices, which is an independent path: a linear
//! function attains its maximum over a polytope at a vertex.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, RowDVector, Vector2};
use rayon::prelude::*;
use thiserror::Error;

use crate::cell::{build_cbf_cone, build_cell, CbfCone, CellError, ConeApex, EdgeCell};
use crate::environment::EnvironmentModel;
use crate::geometry::Point2;
use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::rrt::{NodeId, RoadmapTree};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("dynamics matrix A must be {n}x{n}, got {rows}x{cols}", n = 2)]
    BadStateDim { rows: usize, cols: usize },
    #[error("dynamics matrix B must have 2 rows, got {0}")]
    BadInputDim(usize),
    #[error("the pair (A, B) is not controllable")]
    Uncontrollable,
    #[error("edge ({0}, {1}): CBF row has zero input sensitivity (relative degree > 1)")]
    CbfRelativeDegree(NodeId, NodeId),
    #[error("edge ({0}, {1}): exit direction has zero input sensitivity (relative degree > 1)")]
    ClfRelativeDegree(NodeId, NodeId),
    #[error("edge ({0}, {1}): robust LP infeasible ({cell_rows} cell rows, {cone_rows} cone rows, {landmarks} landmarks)", cell_rows = .2, cone_rows = .3, landmarks = .4)]
    Infeasible(NodeId, NodeId, usize, usize, usize),
    #[error("edge ({0}, {1}): robust LP unbounded (margin bounds or input limits missing)")]
    Unbounded(NodeId, NodeId),
    #[error("cell construction failed: {0}")]
    Cell(#[from] CellError),
    #[error("LP solver failed: {0}")]
    Lp(#[from] LpError),
    #[error("synthesis failed for {} edge(s): {}", .0.len(), format_failures(.0))]
    Aggregate(Vec<(NodeId, NodeId, String)>),
    #[error("no landmarks available for synthesis")]
    NoLandmarks,
}

fn format_failures(failures: &[(NodeId, NodeId, String)]) -> String {
    failures
        .iter()
        .map(|(i, j, msg)| format!("({i},{j}): {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Linear dynamics `xdot = A x + B u` with `x` planar.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Dynamics {
    /// Single integrator: `A = 0`, `B = I`.
    pub fn single_integrator() -> Self {
        Self {
            a: DMatrix::zeros(2, 2),
            b: DMatrix::identity(2, 2),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.a.nrows() != 2 || self.a.ncols() != 2 {
            return Err(SynthesisError::BadStateDim {
                rows: self.a.nrows(),
                cols: self.a.ncols(),
            });
        }
        if self.b.nrows() != 2 {
            return Err(SynthesisError::BadInputDim(self.b.nrows()));
        }
        // Controllability: rank [B, AB] = 2.
        let m = self.b.ncols();
        let mut ctrb = DMatrix::zeros(2, 2 * m);
        ctrb.view_mut((0, 0), (2, m)).copy_from(&self.b);
        let ab = &self.a * &self.b;
        ctrb.view_mut((0, m), (2, m)).copy_from(&ab);
        if ctrb.rank(1e-9) < 2 {
            return Err(SynthesisError::Uncontrollable);
        }
        Ok(())
    }
}

/// Input limits and constraint weights for the per-edge LP.
#[derive(Clone, Debug)]
pub struct SynthesisParams {
    /// CLF decrease rate.
    pub c_v: f64,
    /// CBF decay rate.
    pub c_h: f64,
    pub w_v: f64,
    pub w_h: [f64; 2],
    /// Input limit rows `a_u . u <= b_u`.
    pub input_rows: Vec<(Vec<f64>, f64)>,
    /// Lower bound on margin magnitude: `S in [-margin_cap, 0]`. Margins are
    /// still certified worst-case values; the cap keeps the optimizer from
    /// trading all of the field's aim for margin depth. An uncapped margin
    /// forces `z . u <= S_V` even on the exit face, which parks the
    /// closed-loop fixed point `|S_V| / kappa` beyond the switching target
    /// and makes small switching balls unreachable.
    pub margin_cap: f64,
    /// Diagnostic mode: allow positive CBF margins. Taints the output.
    pub relax: bool,
}

impl SynthesisParams {
    /// Infinity-norm input limit `|u|_inf <= limit` for an m-dimensional input.
    pub fn inf_norm_input_rows(m: usize, limit: f64) -> Vec<(Vec<f64>, f64)> {
        let mut rows = Vec::with_capacity(2 * m);
        for k in 0..m {
            for sign in [1.0, -1.0] {
                let mut a = vec![0.0; m];
                a[k] = sign;
                rows.push((a, limit));
            }
        }
        rows
    }
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            c_v: 1.0,
            c_h: 1.0,
            w_v: 1.0,
            w_h: [1.0, 1.0],
            input_rows: Self::inf_norm_input_rows(2, 2.0),
            margin_cap: 0.25,
            relax: false,
        }
    }
}

/// Landmarks in stacking order (ascending id), with the stacked coordinate
/// vector `Lv`.
#[derive(Clone, Debug)]
pub struct LandmarkStack {
    pub ids: Vec<String>,
    pub positions: Vec<Point2>,
}

impl LandmarkStack {
    pub fn from_env(env: &EnvironmentModel) -> Self {
        let table: BTreeMap<&str, Point2> = env
            .landmarks
            .iter()
            .map(|lm| (lm.id.as_str(), lm.pos))
            .collect();
        Self {
            ids: table.keys().map(|s| s.to_string()).collect(),
            positions: table.values().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Stacked coordinates, two entries per landmark.
    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(2 * self.len());
        for (k, p) in self.positions.iter().enumerate() {
            v[2 * k] = p.x;
            v[2 * k + 1] = p.y;
        }
        v
    }

    /// Stacked displacement measurement `y = stack(l_k - x)`.
    pub fn measure(&self, x: Point2) -> DVector<f64> {
        let mut v = DVector::zeros(2 * self.len());
        for (k, p) in self.positions.iter().enumerate() {
            v[2 * k] = p.x - x.x;
            v[2 * k + 1] = p.y - x.y;
        }
        v
    }
}

/// Synthesized gains and certified worst-case margins for one edge.
#[derive(Clone, Debug)]
pub struct EdgeGains {
    pub edge: (NodeId, NodeId),
    /// `m x (2 n_l)` gain matrix over the stacked displacements.
    pub k: DMatrix<f64>,
    /// Certified CBF margins, one per cone row (nonpositive unless relaxed).
    pub s_h: Vec<f64>,
    /// Certified CLF margin (nonpositive).
    pub s_v: f64,
    pub landmark_ids: Vec<String>,
}

impl EdgeGains {
    /// Constant part of the affine field: `K Lv`.
    pub fn field_constant(&self, stack: &LandmarkStack) -> DVector<f64> {
        &self.k * stack.stacked()
    }

    /// State coefficient of the affine field: `K Istack`, i.e. the sum of
    /// the per-landmark gain blocks.
    pub fn field_state_coeff(&self) -> DMatrix<f64> {
        let m = self.k.nrows();
        let n_l = self.k.ncols() / 2;
        let mut sum = DMatrix::zeros(m, 2);
        for l in 0..n_l {
            sum += self.k.view((0, 2 * l), (m, 2));
        }
        sum
    }

    /// Evaluate the feedback `u = K stack(l_k - x)` at a state.
    pub fn control_at(&self, x: Point2, stack: &LandmarkStack) -> DVector<f64> {
        &self.k * stack.measure(x)
    }
}

/// Index bookkeeping for the assembled LP.
pub struct LpLayout {
    pub input_dim: usize,
    pub num_landmarks: usize,
    pub num_cone_rows: usize,
    pub num_cell_rows: usize,
    pub num_robust_rows: usize,
    pub num_vars: usize,
}

impl LpLayout {
    pub fn k_index(&self, r: usize, c: usize) -> usize {
        r * (2 * self.num_landmarks) + c
    }

    pub fn num_k(&self) -> usize {
        self.input_dim * 2 * self.num_landmarks
    }

    pub fn sh_index(&self, cone_row: usize) -> usize {
        self.num_k() + cone_row
    }

    pub fn sv_index(&self) -> usize {
        self.num_k() + self.num_cone_rows
    }

    pub fn lambda_index(&self, robust_row: usize, cell_row: usize) -> usize {
        self.sv_index() + 1 + robust_row * self.num_cell_rows + cell_row
    }
}

/// One robustified constraint row, written as
/// `max_{x in cell} cx(K) . x <= rhs(K, S)` with both sides affine in the
/// decision variables.
struct RobustRow {
    /// Constant part of the state coefficient vector (length 2).
    cx_const: [f64; 2],
    /// Linear part: contribution of `K[r][c]` to `cx[d]` is
    /// `k_state[r] * [c mod 2 == d]`.
    k_state: Vec<f64>,
    /// Margin variable on the right-hand side, if any.
    margin: Option<usize>,
    rhs_const: f64,
    /// Contribution of `K[r][c]` to the right-hand side:
    /// `k_rhs[r] * Lv[c]`.
    k_rhs: Vec<f64>,
}

/// Assemble the finite LP for one edge. Fails when a CBF row or the exit
/// direction has no first-order input sensitivity.
pub fn assemble_robust_lp(
    cell: &EdgeCell,
    cone: &CbfCone,
    dynamics: &Dynamics,
    stack: &LandmarkStack,
    params: &SynthesisParams,
) -> Result<(LinearProgram, LpLayout), SynthesisError> {
    let m = dynamics.input_dim();
    let n_l = stack.len();
    if n_l == 0 {
        return Err(SynthesisError::NoLandmarks);
    }
    let cell_rows = &cell.polytope.halfspaces;
    let layout = LpLayout {
        input_dim: m,
        num_landmarks: n_l,
        num_cone_rows: cone.rows.len(),
        num_cell_rows: cell_rows.len(),
        num_robust_rows: cone.rows.len() + 1 + params.input_rows.len(),
        num_vars: 0,
    };
    let num_vars = layout.lambda_index(layout.num_robust_rows, 0) - layout.num_cell_rows
        + layout.num_robust_rows * layout.num_cell_rows;
    let layout = LpLayout { num_vars, ..layout };

    let z = RowDVector::from_row_slice(&[cell.exit_dir.x, cell.exit_dir.y]);
    let lv = stack.stacked();

    let mut robust_rows: Vec<RobustRow> = Vec::with_capacity(layout.num_robust_rows);

    // CBF rows: max -( (a_h A + c_h a_h - a_h B K Istack) x )
    //           <= S_h + c_h b_h + a_h B K Lv
    for (ri, row) in cone.rows.iter().enumerate() {
        let a_h = RowDVector::from_row_slice(&[row.normal.x, row.normal.y]);
        let ah_a = &a_h * &dynamics.a;
        let ah_b = &a_h * &dynamics.b;
        if ah_b.norm() < 1e-9 {
            return Err(SynthesisError::CbfRelativeDegree(cell.edge.0, cell.edge.1));
        }
        robust_rows.push(RobustRow {
            cx_const: [
                -ah_a[0] - params.c_h * a_h[0],
                -ah_a[1] - params.c_h * a_h[1],
            ],
            k_state: ah_b.iter().copied().collect(),
            margin: Some(layout.sh_index(ri)),
            rhs_const: params.c_h * row.offset,
            k_rhs: ah_b.iter().copied().collect(),
        });
    }

    // CLF row: max ( (z A + c_v z - z B K Istack) x )
    //          <= S_V + c_v z . x_j - z B K Lv
    {
        let z_a = &z * &dynamics.a;
        let z_b = &z * &dynamics.b;
        if z_b.norm() < 1e-9 {
            return Err(SynthesisError::ClfRelativeDegree(cell.edge.0, cell.edge.1));
        }
        robust_rows.push(RobustRow {
            cx_const: [z_a[0] + params.c_v * z[0], z_a[1] + params.c_v * z[1]],
            k_state: z_b.iter().map(|v| -v).collect(),
            margin: Some(layout.sv_index()),
            rhs_const: params.c_v * (z[0] * cell.target.x + z[1] * cell.target.y),
            k_rhs: z_b.iter().map(|v| -v).collect(),
        });
    }

    // Input rows: max ( -a_u K Istack x ) <= b_u - a_u K Lv
    for (a_u, b_u) in &params.input_rows {
        debug_assert_eq!(a_u.len(), m);
        robust_rows.push(RobustRow {
            cx_const: [0.0, 0.0],
            k_state: a_u.iter().map(|v| -v).collect(),
            margin: None,
            rhs_const: *b_u,
            k_rhs: a_u.iter().map(|v| -v).collect(),
        });
    }
    debug_assert_eq!(robust_rows.len(), layout.num_robust_rows);

    // Build the LP.
    let mut lp = LinearProgram {
        objective: vec![0.0; num_vars],
        bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
        ..Default::default()
    };
    for ri in 0..cone.rows.len() {
        lp.objective[layout.sh_index(ri)] = params.w_h[ri.min(1)];
        lp.bounds[layout.sh_index(ri)] = if params.relax {
            (-params.margin_cap, f64::INFINITY)
        } else {
            (-params.margin_cap, 0.0)
        };
    }
    lp.objective[layout.sv_index()] = params.w_v;
    lp.bounds[layout.sv_index()] = (-params.margin_cap, 0.0);
    for rr in 0..layout.num_robust_rows {
        for q in 0..layout.num_cell_rows {
            lp.bounds[layout.lambda_index(rr, q)] = (0.0, f64::INFINITY);
        }
    }

    for (rr, row) in robust_rows.iter().enumerate() {
        // Equalities: for d = 0, 1:  sum_q n_q[d] lambda_q - (K part) = const.
        for d in 0..2 {
            let mut eq = vec![0.0; num_vars];
            for (q, hs) in cell_rows.iter().enumerate() {
                eq[layout.lambda_index(rr, q)] = hs.normal[d];
            }
            for (r, &coeff) in row.k_state.iter().enumerate() {
                if coeff != 0.0 {
                    for l in 0..n_l {
                        eq[layout.k_index(r, 2 * l + d)] = -coeff;
                    }
                }
            }
            lp.a_eq.push(eq);
            lp.b_eq.push(row.cx_const[d]);
        }
        // Inequality: sum_q b_q lambda_q - margin - (K rhs part) <= rhs_const.
        let mut ub = vec![0.0; num_vars];
        for (q, hs) in cell_rows.iter().enumerate() {
            ub[layout.lambda_index(rr, q)] = hs.offset;
        }
        if let Some(mi) = row.margin {
            ub[mi] = -1.0;
        }
        for (r, &coeff) in row.k_rhs.iter().enumerate() {
            if coeff != 0.0 {
                for c in 0..2 * n_l {
                    ub[layout.k_index(r, c)] -= coeff * lv[c];
                }
            }
        }
        lp.a_ub.push(ub);
        lp.b_ub.push(row.rhs_const);
    }

    Ok((lp, layout))
}

/// Solve the per-edge LP and extract the gains and certified margins.
///
/// The margin LP usually has a whole face of optimal gain matrices: the
/// objective only sees the worst-case constraint values, so the dynamics
/// transverse to the exit direction is left completely free and an arbitrary
/// optimal vertex can be a constant field that never funnels trajectories
/// through the switching balls. A second lexicographic solve fixes the
/// optimal margin objective and, among margin-optimal gains, picks the field
/// closest (in L1 over the cell vertices) to a pure pursuit of the cell
/// target. The certified margins are unchanged: all dual rows stay active.
pub fn synthesize_edge_controller(
    cell: &EdgeCell,
    cone: &CbfCone,
    dynamics: &Dynamics,
    stack: &LandmarkStack,
    params: &SynthesisParams,
) -> Result<EdgeGains, SynthesisError> {
    let (lp, layout) = assemble_robust_lp(cell, cone, dynamics, stack, params)?;
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Infeasible => Err(SynthesisError::Infeasible(
            cell.edge.0,
            cell.edge.1,
            layout.num_cell_rows,
            layout.num_cone_rows,
            layout.num_landmarks,
        )),
        LpStatus::Unbounded => Err(SynthesisError::Unbounded(cell.edge.0, cell.edge.1)),
        LpStatus::Optimal => {
            let refined = refine_toward_pursuit(&lp, &layout, cell, stack, &sol, params);
            let values = refined.as_ref().map_or(&sol.values, |r| &r.values);
            let m = layout.input_dim;
            let n_l = layout.num_landmarks;
            let mut k = DMatrix::zeros(m, 2 * n_l);
            for r in 0..m {
                for c in 0..2 * n_l {
                    k[(r, c)] = values[layout.k_index(r, c)];
                }
            }
            let s_h = (0..layout.num_cone_rows)
                .map(|ri| values[layout.sh_index(ri)])
                .collect();
            let s_v = values[layout.sv_index()];
            Ok(EdgeGains {
                edge: cell.edge,
                k,
                s_h,
                s_v,
                landmark_ids: stack.ids.clone(),
            })
        }
    }
}

/// Second-stage solve on the optimal face of the margin LP: minimize
/// `sum |u(v) - kappa (x_j - v)|` over the cell vertices `v`, with
/// `kappa >= 0` free and the stage-one objective pinned. Returns `None`
/// (falling back to the stage-one solution) when the refinement cannot be
/// set up or solved; margins certified by stage one are never weakened.
fn refine_toward_pursuit(
    base: &LinearProgram,
    layout: &LpLayout,
    cell: &EdgeCell,
    stack: &LandmarkStack,
    stage_one: &crate::lp::LpSolution,
    params: &SynthesisParams,
) -> Option<crate::lp::LpSolution> {
    let vertices = cell.polytope.vertices().ok()?;
    let m = layout.input_dim;
    let n_l = layout.num_landmarks;
    let old_vars = base.objective.len();
    let kappa = old_vars;
    let t0 = old_vars + 1;
    let num_vars = t0 + vertices.len() * m;

    let widen = |row: &Vec<f64>| {
        let mut w = row.clone();
        w.resize(num_vars, 0.0);
        w
    };
    let mut lp = LinearProgram {
        objective: vec![0.0; num_vars],
        a_eq: base.a_eq.iter().map(widen).collect(),
        b_eq: base.b_eq.clone(),
        a_ub: base.a_ub.iter().map(widen).collect(),
        b_ub: base.b_ub.clone(),
        bounds: base.bounds.clone(),
    };
    lp.bounds.push((0.0, f64::INFINITY)); // kappa
    lp.bounds.extend(std::iter::repeat((0.0, f64::INFINITY)).take(vertices.len() * m));
    for t in t0..num_vars {
        lp.objective[t] = 1.0;
    }

    // Pin the stage-one objective. Optimality makes the reverse inequality
    // implicit, so one row suffices and rounding slack keeps it feasible.
    let mut pin = vec![0.0; num_vars];
    for ri in 0..layout.num_cone_rows {
        pin[layout.sh_index(ri)] = params.w_h[ri.min(1)];
    }
    pin[layout.sv_index()] = params.w_v;
    lp.a_ub.push(pin);
    lp.b_ub.push(stage_one.objective_value + 1e-9);

    // |u(v)_c - kappa (x_j - v)_c| <= t_{v,c} with
    // u(v)_c = sum_col K[c][col] (Lv[col] - v[col mod 2]).
    let lv = stack.stacked();
    for (vi, &v) in vertices.iter().enumerate() {
        let d = [cell.target.x - v.x, cell.target.y - v.y];
        for c in 0..m {
            let t_idx = t0 + vi * m + c;
            let mut row = vec![0.0; num_vars];
            for col in 0..2 * n_l {
                let y_col = lv[col] - if col % 2 == 0 { v.x } else { v.y };
                row[layout.k_index(c, col)] = y_col;
            }
            if c < 2 {
                row[kappa] = -d[c];
            }
            row[t_idx] = -1.0;
            let mut neg = row.iter().map(|x| -x).collect::<Vec<_>>();
            neg[t_idx] = -1.0;
            lp.a_ub.push(row);
            lp.b_ub.push(0.0);
            lp.a_ub.push(neg);
            lp.b_ub.push(0.0);
        }
    }

    let sol = solve_lp(&lp).ok()?;
    (sol.status == LpStatus::Optimal).then_some(sol)
}

/// One verified constraint row: its worst value over the cell vertices and
/// the margin it was certified against.
#[derive(Clone, Debug)]
pub struct RowCheck {
    pub label: String,
    pub worst: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub edge: (NodeId, NodeId),
    pub rows: Vec<RowCheck>,
    pub pass: bool,
}

const VERIFY_TOL: f64 = 1e-6;

/// Vertex oracle: enumerate the cell polytope's vertices and evaluate every
/// primal constraint row at each one. Every affine row attains its maximum
/// over the cell at a vertex, so this certifies the same bounds the dual LP
/// claimed, through an independent computation.
pub fn verify_gains(
    cell: &EdgeCell,
    cone: &CbfCone,
    gains: &EdgeGains,
    dynamics: &Dynamics,
    stack: &LandmarkStack,
    params: &SynthesisParams,
) -> VerificationReport {
    let vertices = match cell.polytope.vertices() {
        Ok(v) => v,
        Err(e) => {
            return VerificationReport {
                edge: cell.edge,
                rows: vec![RowCheck {
                    label: format!("vertex enumeration failed: {e}"),
                    worst: f64::INFINITY,
                    bound: 0.0,
                    pass: false,
                }],
                pass: false,
            }
        }
    };

    let field = |x: Point2| -> DVector<f64> { gains.control_at(x, stack) };
    let xdot = |x: Point2| -> Vector2<f64> {
        let u = field(x);
        let ax = &dynamics.a * DVector::from_column_slice(&[x.x, x.y]);
        let bu = &dynamics.b * u;
        Vector2::new(ax[0] + bu[0], ax[1] + bu[1])
    };

    let mut rows = Vec::new();
    for (ri, row) in cone.rows.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        for &v in &vertices {
            let h = row.eval(v);
            let hdot = row.normal.dot(&xdot(v));
            worst = worst.max(-(hdot + params.c_h * h));
        }
        let bound = gains.s_h[ri];
        rows.push(RowCheck {
            label: format!("cbf[{ri}]"),
            worst,
            bound,
            pass: worst <= bound + VERIFY_TOL,
        });
    }
    {
        let mut worst = f64::NEG_INFINITY;
        for &v in &vertices {
            let vdot = cell.exit_dir.dot(&xdot(v));
            let lyap = cell.exit_dir.dot(&(v - cell.target));
            worst = worst.max(vdot + params.c_v * lyap);
        }
        rows.push(RowCheck {
            label: "clf".into(),
            worst,
            bound: gains.s_v,
            pass: worst <= gains.s_v + VERIFY_TOL,
        });
    }
    for (ru, (a_u, b_u)) in params.input_rows.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        for &v in &vertices {
            let u = field(v);
            let val: f64 = a_u.iter().zip(u.iter()).map(|(a, ui)| a * ui).sum();
            worst = worst.max(val - b_u);
        }
        rows.push(RowCheck {
            label: format!("input[{ru}]"),
            worst,
            bound: 0.0,
            pass: worst <= VERIFY_TOL,
        });
    }

    let pass = rows.iter().all(|r| r.pass);
    VerificationReport {
        edge: cell.edge,
        rows,
        pass,
    }
}

/// Everything produced for one edge.
#[derive(Clone, Debug)]
pub struct EdgeRecord {
    pub cell: EdgeCell,
    pub cone: CbfCone,
    pub gains: EdgeGains,
    pub report: VerificationReport,
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub records: Vec<EdgeRecord>,
    pub stack: LandmarkStack,
}

impl SynthesisResult {
    pub fn gains_by_child(&self) -> BTreeMap<NodeId, &EdgeRecord> {
        self.records.iter().map(|r| (r.gains.edge.0, r)).collect()
    }
}

/// Synthesize and verify gains for every non-root edge of the tree. Edge
/// solves run in parallel (capped by `threads` when given) and failures are
/// collected rather than failing fast.
pub fn synthesize_all(
    tree: &RoadmapTree,
    env: &EnvironmentModel,
    dynamics: &Dynamics,
    params: &SynthesisParams,
    apex: ConeApex,
    threads: Option<usize>,
) -> Result<SynthesisResult, SynthesisError> {
    dynamics.validate()?;
    let stack = LandmarkStack::from_env(env);
    if stack.is_empty() {
        return Err(SynthesisError::NoLandmarks);
    }
    let edges = tree.edges();

    let solve_edge = |&(i, j): &(NodeId, NodeId)| -> Result<EdgeRecord, (NodeId, NodeId, String)> {
        let to_msg = |e: SynthesisError| (i, j, e.to_string());
        let cell = build_cell(tree, (i, j), &env.bounds)
            .map_err(|e| (i, j, e.to_string()))?;
        let cone = build_cbf_cone(tree, (i, j), &tree.collision_samples, apex)
            .map_err(|e| (i, j, e.to_string()))?;
        let gains =
            synthesize_edge_controller(&cell, &cone, dynamics, &stack, params).map_err(to_msg)?;
        let report = verify_gains(&cell, &cone, &gains, dynamics, &stack, params);
        Ok(EdgeRecord {
            cell,
            cone,
            gains,
            report,
        })
    };

    let results: Vec<Result<EdgeRecord, (NodeId, NodeId, String)>> = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .expect("thread pool")
            .install(|| edges.par_iter().map(solve_edge).collect()),
        None => edges.par_iter().map(solve_edge).collect(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        failures.sort();
        return Err(SynthesisError::Aggregate(failures));
    }
    // Deterministic merge order regardless of scheduling.
    records.sort_by_key(|r| r.gains.edge);
    Ok(SynthesisResult { records, stack })
}
