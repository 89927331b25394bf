//! Dense linear-program solver: minimize `c . v` subject to equality rows,
//! `<=` rows, and per-variable bounds (infinite bounds allowed).
//!
//! Two-phase simplex on a full tableau with Bland's anti-cycling rule.
//! Problem sizes here are tens of variables and rows per solve, so the dense
//! tableau is the simplest correct choice. Infeasible and unbounded are
//! ordinary statuses, not errors; errors are reserved for malformed input
//! and numerical breakdown.

use thiserror::Error;

const RC_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite coefficient in LP data")]
    NonFinite,
    #[error("numerically singular basis (worst scaled residual {residual:.3e})")]
    SingularBasis { residual: f64 },
    #[error("iteration limit exceeded after {0} pivots")]
    IterationLimit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    /// Minimized objective coefficients, one per variable.
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    /// Per-variable `(lower, upper)`; use `f64::NEG_INFINITY` / `f64::INFINITY`
    /// for free sides.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values; empty unless `status == Optimal`.
    pub values: Vec<f64>,
    /// `NaN` when infeasible, `-inf` when unbounded.
    pub objective_value: f64,
    /// Duals of the equality rows (optimal solves only).
    pub dual_eq: Vec<f64>,
    /// Duals of the `<=` rows (nonpositive for a minimization).
    pub dual_ub: Vec<f64>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::Dimension(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        if self.a_eq.len() != self.b_eq.len() || self.a_ub.len() != self.b_ub.len() {
            return Err(LpError::Dimension("row/rhs count mismatch".into()));
        }
        for row in self.a_eq.iter().chain(self.a_ub.iter()) {
            if row.len() != n {
                return Err(LpError::Dimension(format!(
                    "row of width {} for {} variables",
                    row.len(),
                    n
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite);
            }
        }
        if self
            .objective
            .iter()
            .chain(self.b_eq.iter())
            .chain(self.b_ub.iter())
            .any(|v| !v.is_finite())
        {
            return Err(LpError::NonFinite);
        }
        for &(l, u) in &self.bounds {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::NonFinite);
            }
        }
        Ok(())
    }
}

/// How each input variable maps onto nonnegative tableau columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// `x = shift + v[col]`
    Shifted { col: usize, shift: f64 },
    /// `x = shift - v[col]`
    Negated { col: usize, shift: f64 },
    /// `x = v[pos] - v[neg]`
    Split { pos: usize, neg: usize },
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();

    // Bound contradictions make the LP trivially infeasible.
    if lp.bounds.iter().any(|&(l, u)| l > u) {
        return Ok(infeasible());
    }

    // Substitute bounds so every tableau variable is nonnegative.
    let mut maps = Vec::with_capacity(n);
    let mut num_structural = 0usize;
    for &(l, u) in &lp.bounds {
        let map = match (l.is_finite(), u.is_finite()) {
            (true, _) => VarMap::Shifted {
                col: num_structural,
                shift: l,
            },
            (false, true) => VarMap::Negated {
                col: num_structural,
                shift: u,
            },
            (false, false) => {
                let m = VarMap::Split {
                    pos: num_structural,
                    neg: num_structural + 1,
                };
                num_structural += 1;
                m
            }
        };
        num_structural += 1;
        maps.push(map);
    }

    // Assemble rows in standard form over the structural columns. `mult`
    // records the scale factor applied to each input row so duals can be
    // mapped back; the upper-bound rows appended for two-sided bounds carry
    // no input index.
    struct StdRow {
        coeffs: Vec<f64>,
        rhs: f64,
        is_eq: bool,
        input: Option<(bool, usize)>, // (is_eq, index)
        mult: f64,
    }
    let mut rows: Vec<StdRow> = Vec::new();
    let mut push_row = |a: &[f64], b: f64, is_eq: bool, input: Option<(bool, usize)>| {
        let mut coeffs = vec![0.0; num_structural];
        let mut rhs = b;
        for (i, &aij) in a.iter().enumerate() {
            match maps[i] {
                VarMap::Shifted { col, shift } => {
                    coeffs[col] += aij;
                    rhs -= aij * shift;
                }
                VarMap::Negated { col, shift } => {
                    coeffs[col] -= aij;
                    rhs -= aij * shift;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += aij;
                    coeffs[neg] -= aij;
                }
            }
        }
        rows.push(StdRow {
            coeffs,
            rhs,
            is_eq,
            input,
            mult: 1.0,
        });
    };
    for (r, row) in lp.a_eq.iter().enumerate() {
        push_row(row, lp.b_eq[r], true, Some((true, r)));
    }
    for (r, row) in lp.a_ub.iter().enumerate() {
        push_row(row, lp.b_ub[r], false, Some((false, r)));
    }
    // Two-sided bounds become extra rows `v <= u - l` on the shifted column.
    for (i, &(l, u)) in lp.bounds.iter().enumerate() {
        if l.is_finite() && u.is_finite() {
            let VarMap::Shifted { col, .. } = maps[i] else {
                unreachable!()
            };
            let mut coeffs = vec![0.0; num_structural];
            coeffs[col] = 1.0;
            rows.push(StdRow {
                coeffs,
                rhs: u - l,
                is_eq: false,
                input: None,
                mult: 1.0,
            });
        }
    }

    // Scale rows to unit max coefficient, then flip rows with negative rhs.
    for row in rows.iter_mut() {
        let maxabs = row
            .coeffs
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(row.rhs.abs());
        if maxabs > 0.0 {
            let s = 1.0 / maxabs;
            for v in row.coeffs.iter_mut() {
                *v *= s;
            }
            row.rhs *= s;
            row.mult = s;
        }
        if row.rhs < 0.0 {
            for v in row.coeffs.iter_mut() {
                *v = -*v;
            }
            row.rhs = -row.rhs;
            row.mult = -row.mult;
        }
    }

    // Objective over structural columns (the constant offset from shifts is
    // irrelevant for pivoting; the reported objective is recomputed exactly).
    let mut obj = vec![0.0; num_structural];
    for (i, &ci) in lp.objective.iter().enumerate() {
        match maps[i] {
            VarMap::Shifted { col, .. } => obj[col] += ci,
            VarMap::Negated { col, .. } => obj[col] -= ci,
            VarMap::Split { pos, neg } => {
                obj[pos] += ci;
                obj[neg] -= ci;
            }
        }
    }

    // Tableau layout: structural | slack (one per <= row) | artificial (one
    // per row). Artificials never enter the basis once they leave; they also
    // provide the identity columns that expose the duals.
    let m = rows.len();
    let num_slack = rows.iter().filter(|r| !r.is_eq).count();
    let slack_start = num_structural;
    let art_start = num_structural + num_slack;
    let ncols = art_start + m;

    let mut t = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    {
        let mut slack_idx = 0usize;
        for (r, row) in rows.iter().enumerate() {
            t[r][..num_structural].copy_from_slice(&row.coeffs);
            t[r][ncols] = row.rhs;
            t[r][art_start + r] = 1.0;
            if !row.is_eq {
                let s = slack_start + slack_idx;
                slack_idx += 1;
                // mult < 0 means the row was flipped, taking the slack to -1.
                t[r][s] = if row.mult < 0.0 { -1.0 } else { 1.0 };
                basis[r] = if row.mult < 0.0 { art_start + r } else { s };
            } else {
                basis[r] = art_start + r;
            }
        }
    }

    let iter_cap = 20_000 + 200 * (m + ncols);
    let mut pivots = 0usize;

    // Shared pivoting loop; `costs` has one entry per column.
    let run_phase = |t: &mut Vec<Vec<f64>>,
                         basis: &mut Vec<usize>,
                         costs: &[f64],
                         allow_enter: &dyn Fn(usize) -> bool,
                         pivots: &mut usize|
     -> Result<bool, LpError> {
        loop {
            // Reduced costs via the basis cost row.
            let mut entering = None;
            for j in 0..ncols {
                if !allow_enter(j) {
                    continue;
                }
                let mut rc = costs[j];
                for r in 0..m {
                    let bc = costs[basis[r]];
                    if bc != 0.0 {
                        rc -= bc * t[r][j];
                    }
                }
                if rc < -RC_TOL {
                    entering = Some(j); // Bland: first (lowest) index
                    break;
                }
            }
            let Some(j) = entering else {
                return Ok(true);
            };

            // Ratio test; ties resolved by the lowest basic variable index.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = t[r][j];
                if a > PIVOT_TOL {
                    let ratio = t[r][ncols] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || ((ratio - lratio).abs() <= 1e-12 && basis[r] < basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false); // unbounded in this phase
            };

            // Pivot on (r, j).
            let piv = t[r][j];
            if !piv.is_finite() || piv.abs() <= PIVOT_TOL {
                return Err(LpError::SingularBasis { residual: piv });
            }
            let inv = 1.0 / piv;
            for v in t[r].iter_mut() {
                *v *= inv;
            }
            for rr in 0..m {
                if rr == r {
                    continue;
                }
                let f = t[rr][j];
                if f != 0.0 {
                    for k in 0..=ncols {
                        t[rr][k] -= f * t[r][k];
                    }
                }
            }
            basis[r] = j;
            *pivots += 1;
            if *pivots > iter_cap {
                return Err(LpError::IterationLimit(*pivots));
            }
        }
    };

    // Phase 1: minimize the sum of artificials.
    let mut phase1_costs = vec![0.0; ncols];
    for j in art_start..ncols {
        phase1_costs[j] = 1.0;
    }
    let bounded = run_phase(
        &mut t,
        &mut basis,
        &phase1_costs,
        &|j| j < art_start,
        &mut pivots,
    )?;
    debug_assert!(bounded, "phase 1 objective is bounded below by zero");
    let infeas: f64 = (0..m)
        .filter(|&r| basis[r] >= art_start)
        .map(|r| t[r][ncols])
        .sum();
    if infeas > FEAS_TOL {
        return Ok(infeasible());
    }

    // Drive artificials out of the basis where possible; rows that cannot be
    // pivoted are redundant and stay inert (their structural coefficients are
    // all ~zero, so later pivots never touch them).
    for r in 0..m {
        if basis[r] < art_start {
            continue;
        }
        if let Some(j) = (0..art_start).find(|&j| t[r][j].abs() > PIVOT_TOL) {
            let piv = t[r][j];
            let inv = 1.0 / piv;
            for v in t[r].iter_mut() {
                *v *= inv;
            }
            for rr in 0..m {
                if rr != r && t[rr][j] != 0.0 {
                    let f = t[rr][j];
                    for k in 0..=ncols {
                        t[rr][k] -= f * t[r][k];
                    }
                }
            }
            basis[r] = j;
        }
    }

    // Phase 2: original objective.
    let mut phase2_costs = vec![0.0; ncols];
    phase2_costs[..num_structural].copy_from_slice(&obj);
    let bounded = run_phase(
        &mut t,
        &mut basis,
        &phase2_costs,
        &|j| j < art_start,
        &mut pivots,
    )?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: Vec::new(),
            objective_value: f64::NEG_INFINITY,
            dual_eq: Vec::new(),
            dual_ub: Vec::new(),
        });
    }

    // Recover the structural solution, then the input variables.
    let mut v = vec![0.0; num_structural];
    for r in 0..m {
        if basis[r] < num_structural {
            v[basis[r]] = t[r][ncols];
        }
    }
    let mut x = vec![0.0; n];
    for (i, map) in maps.iter().enumerate() {
        x[i] = match *map {
            VarMap::Shifted { col, shift } => shift + v[col],
            VarMap::Negated { col, shift } => shift - v[col],
            VarMap::Split { pos, neg } => v[pos] - v[neg],
        };
    }

    // Feasibility audit on the scaled rows; failure here means the tableau
    // degraded numerically.
    let mut worst = 0.0f64;
    for (r, row) in lp.a_eq.iter().enumerate() {
        let lhs: f64 = row.iter().zip(&x).map(|(a, xi)| a * xi).sum();
        let scale = row.iter().fold(1.0f64, |s, a| s.max(a.abs()));
        worst = worst.max((lhs - lp.b_eq[r]).abs() / scale);
    }
    for (r, row) in lp.a_ub.iter().enumerate() {
        let lhs: f64 = row.iter().zip(&x).map(|(a, xi)| a * xi).sum();
        let scale = row.iter().fold(1.0f64, |s, a| s.max(a.abs()));
        worst = worst.max(((lhs - lp.b_ub[r]) / scale).max(0.0));
    }
    for (i, &(l, u)) in lp.bounds.iter().enumerate() {
        if l.is_finite() {
            worst = worst.max(l - x[i]);
        }
        if u.is_finite() {
            worst = worst.max(x[i] - u);
        }
    }
    if worst > FEAS_TOL {
        return Err(LpError::SingularBasis { residual: worst });
    }

    // Duals: reduced cost of row r's artificial column is -y_r under the
    // standard-form data; unwind the per-row scale/flip factor.
    let mut dual_eq = vec![0.0; lp.a_eq.len()];
    let mut dual_ub = vec![0.0; lp.a_ub.len()];
    for (r_std, row) in rows.iter().enumerate() {
        let Some((is_eq, idx)) = row.input else {
            continue;
        };
        let col = art_start + r_std;
        let mut y = 0.0;
        for r in 0..m {
            let bc = phase2_costs[basis[r]];
            if bc != 0.0 {
                y += bc * t[r][col];
            }
        }
        let unscaled = y * row.mult;
        if is_eq {
            dual_eq[idx] = unscaled;
        } else {
            dual_ub[idx] = unscaled;
        }
    }

    let objective_value: f64 = lp.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values: x,
        objective_value,
        dual_eq,
        dual_ub,
    })
}

fn infeasible() -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        values: Vec::new(),
        objective_value: f64::NAN,
        dual_eq: Vec::new(),
        dual_ub: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn lp(
        objective: Vec<f64>,
        a_ub: Vec<Vec<f64>>,
        b_ub: Vec<f64>,
        bounds: Vec<(f64, f64)>,
    ) -> LinearProgram {
        LinearProgram {
            objective,
            a_eq: vec![],
            b_eq: vec![],
            a_ub,
            b_ub,
            bounds,
        }
    }

    #[test]
    fn min_x_above_one() {
        let p = lp(vec![1.0], vec![], vec![], vec![(1.0, f64::INFINITY)]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 1.0).abs() < 1e-9);
        assert!((s.objective_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_face_optimum() {
        // min -x-y st x+y <= 1, x,y >= 0: optimum value -1 anywhere on the face.
        let p = lp(
            vec![-1.0, -1.0],
            vec![vec![1.0, 1.0]],
            vec![1.0],
            vec![(0.0, f64::INFINITY), (0.0, f64::INFINITY)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 1.0).abs() < 1e-9);
        // Dual of the single row: -1 (strong duality: b^T y = -1).
        assert!((s.dual_ub[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let p = lp(vec![-1.0], vec![], vec![], vec![(0.0, f64::INFINITY)]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn infeasible_detected() {
        // x <= -1 with x >= 0.
        let p = lp(
            vec![1.0],
            vec![vec![1.0]],
            vec![-1.0],
            vec![(0.0, f64::INFINITY)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min x + y st x - y = 2, x + y <= 10, both free.
        let p = LinearProgram {
            objective: vec![1.0, 1.0],
            a_eq: vec![vec![1.0, -1.0]],
            b_eq: vec![2.0],
            a_ub: vec![vec![1.0, 1.0]],
            b_ub: vec![10.0],
            bounds: vec![
                (f64::NEG_INFINITY, f64::INFINITY),
                (f64::NEG_INFINITY, f64::INFINITY),
            ],
        };
        let s = solve_lp(&p).unwrap();
        // x + y = 2x - 2 is unbounded below as x -> -inf... but x - y = 2
        // keeps x = y + 2, objective = 2y + 2 -> unbounded below.
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn two_sided_bounds() {
        let p = lp(vec![-1.0, 2.0], vec![], vec![], vec![(-1.0, 3.0), (-5.0, -2.0)]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 3.0).abs() < 1e-9);
        assert!((s.values[1] + 5.0).abs() < 1e-9);
        assert!((s.objective_value + 13.0).abs() < 1e-9);
    }

    /// Brute-force oracle: enumerate all basic points from row subsets
    /// (constraints plus active bounds) and take the best feasible one.
    fn oracle_best_vertex(p: &LinearProgram) -> Option<f64> {
        let n = p.num_vars();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for (r, row) in p.a_ub.iter().enumerate() {
            rows.push((row.clone(), p.b_ub[r]));
        }
        for (i, &(l, u)) in p.bounds.iter().enumerate() {
            if l.is_finite() {
                let mut a = vec![0.0; n];
                a[i] = -1.0;
                rows.push((a, -l));
            }
            if u.is_finite() {
                let mut a = vec![0.0; n];
                a[i] = 1.0;
                rows.push((a, u));
            }
        }
        let feasible = |x: &[f64]| -> bool {
            rows.iter().all(|(a, b)| {
                let lhs: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
                lhs <= b + 1e-7
            })
        };
        let k = rows.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        // Iterate over all n-subsets of the rows via odometer increment.
        loop {
            // Solve the n x n system for this subset by Gaussian elimination.
            let mut a: Vec<Vec<f64>> = idx.iter().map(|&r| rows[r].0.clone()).collect();
            let mut b: Vec<f64> = idx.iter().map(|&r| rows[r].1).collect();
            if let Some(x) = gauss_solve(&mut a, &mut b) {
                if feasible(&x) {
                    let val: f64 = p.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum();
                    best = Some(best.map_or(val, |b: f64| b.min(val)));
                }
            }
            // Next combination.
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] != i + k - n {
                    idx[i] += 1;
                    for j in (i + 1)..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if a[piv][col].abs() < 1e-10 {
                return None;
            }
            a.swap(col, piv);
            b.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        Some((0..n).map(|i| b[i] / a[i][i]).collect())
    }

    fn random_bounded_lp(rng: &mut StdRng) -> LinearProgram {
        let n = 2 + rng.random_range(0..4); // 2..=5 variables
        let rows = 1 + rng.random_range(0..4);
        let objective: Vec<f64> = (0..n).map(|_| -2.0 + 4.0 * rng.random::<f64>()).collect();
        let a_ub: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..n).map(|_| -1.5 + 3.0 * rng.random::<f64>()).collect())
            .collect();
        let b_ub: Vec<f64> = (0..rows).map(|_| -0.5 + 3.0 * rng.random::<f64>()).collect();
        // Box bounds keep every instance bounded.
        let bounds = vec![(-4.0, 4.0); n];
        LinearProgram {
            objective,
            a_eq: vec![],
            b_eq: vec![],
            a_ub,
            b_ub,
            bounds,
        }
    }

    #[test]
    fn random_lps_match_vertex_oracle() {
        let mut rng = StdRng::seed_from_u64(2024);
        let mut solved = 0usize;
        let mut infeasible_count = 0usize;
        for _ in 0..50 {
            let p = random_bounded_lp(&mut rng);
            let s = solve_lp(&p).unwrap();
            match oracle_best_vertex(&p) {
                Some(best) => {
                    assert_eq!(s.status, LpStatus::Optimal);
                    assert!(
                        (s.objective_value - best).abs() < 1e-6,
                        "simplex {} vs oracle {}",
                        s.objective_value,
                        best
                    );
                    solved += 1;
                }
                None => {
                    assert_eq!(s.status, LpStatus::Infeasible);
                    infeasible_count += 1;
                }
            }
        }
        assert_eq!(solved + infeasible_count, 50);
        assert!(solved >= 40, "want mostly feasible instances, got {solved}");
    }

    #[test]
    fn row_scaling_never_changes_status() {
        let mut rng = StdRng::seed_from_u64(5150);
        for _ in 0..25 {
            let p = random_bounded_lp(&mut rng);
            let base = solve_lp(&p).unwrap();
            let mut scaled = p.clone();
            for (row, b) in scaled.a_ub.iter_mut().zip(scaled.b_ub.iter_mut()) {
                let s = 0.01 + 100.0 * rng.random::<f64>();
                for v in row.iter_mut() {
                    *v *= s;
                }
                *b *= s;
            }
            let after = solve_lp(&scaled).unwrap();
            assert_eq!(base.status, after.status);
            if base.status == LpStatus::Optimal {
                assert!((base.objective_value - after.objective_value).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn determinism() {
        let mut rng = StdRng::seed_from_u64(99);
        let p = random_bounded_lp(&mut rng);
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.objective_value.to_bits() == b.objective_value.to_bits());
    }

    #[test]
    fn weak_duality_and_complementary_slackness() {
        // For min c.x st A x <= b, x >= 0 the dual is max b.y st A^T y <= c,
        // y <= 0. With no other bounds, b.y is the whole dual objective, so
        // the returned certificate must bound the primal from below (weak
        // duality) and match it at the optimum (strong duality).
        let mut rng = StdRng::seed_from_u64(7777);
        for _ in 0..30 {
            let n = 2 + rng.random_range(0..3);
            let rows = 1 + rng.random_range(0..3);
            let mut a_ub: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..n).map(|_| -1.0 + 2.0 * rng.random::<f64>()).collect())
                .collect();
            let mut b_ub: Vec<f64> = (0..rows).map(|_| 0.1 + 2.0 * rng.random::<f64>()).collect();
            // Budget row keeps the instance bounded without upper bounds.
            a_ub.push(vec![1.0; n]);
            b_ub.push(3.0);
            let p = LinearProgram {
                objective: (0..n).map(|_| -1.0 + 3.0 * rng.random::<f64>()).collect(),
                a_eq: vec![],
                b_eq: vec![],
                a_ub,
                b_ub,
                bounds: vec![(0.0, f64::INFINITY); n],
            };
            let s = solve_lp(&p).unwrap();
            // x = 0 is feasible by construction.
            assert_eq!(s.status, LpStatus::Optimal);
            for &y in &s.dual_ub {
                assert!(y <= 1e-9, "ub dual must be nonpositive, got {y}");
            }
            // Dual feasibility: A^T y <= c.
            for j in 0..n {
                let col: f64 = p.a_ub.iter().zip(&s.dual_ub).map(|(row, y)| row[j] * y).sum();
                assert!(col <= p.objective[j] + 1e-7);
            }
            let dual_obj: f64 = s.dual_ub.iter().zip(&p.b_ub).map(|(y, b)| y * b).sum();
            assert!(dual_obj <= s.objective_value + 1e-6, "weak duality violated");
            assert!(
                (dual_obj - s.objective_value).abs() < 1e-6,
                "strong duality gap: {} vs {}",
                dual_obj,
                s.objective_value
            );
            for (r, row) in p.a_ub.iter().enumerate() {
                let slack: f64 =
                    p.b_ub[r] - row.iter().zip(&s.values).map(|(a, x)| a * x).sum::<f64>();
                assert!(
                    (s.dual_ub[r] * slack).abs() < 1e-6,
                    "complementary slackness violated: y={} slack={}",
                    s.dual_ub[r],
                    slack
                );
            }
        }
    }

    #[test]
    fn degenerate_cycling_guard() {
        // Classic degenerate instance; Bland's rule must terminate.
        let p = LinearProgram {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            a_eq: vec![],
            b_eq: vec![],
            a_ub: vec![
                vec![0.25, -60.0, -0.04, 9.0],
                vec![0.5, -90.0, -0.02, 3.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            b_ub: vec![0.0, 0.0, 1.0],
            bounds: vec![(0.0, f64::INFINITY); 4],
        };
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 0.05).abs() < 1e-9);
    }
}
