//! Exact 2D primitives: projections, oriented angles, proper segment
//! crossings, and halfspace polytopes with vertex enumeration.
//!
//! Conventions
//! - Halfspace membership is `normal · x <= offset` with a unit normal.
//! - Geometric predicates use an absolute tolerance of [`GEOM_TOL`] in
//!   environment units; orientation tests compare perpendicular distances,
//!   not raw cross products, so the tolerance stays scale-consistent.
//! - Segment intersection reports proper crossings only: shared endpoints
//!   and collinear overlaps return `None`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for geometric predicates, in environment units.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,
    #[error("zero-length direction")]
    ZeroDirection,
    #[error("polytope is unbounded")]
    UnboundedPolytope,
    #[error("polytope is empty or has no interior")]
    EmptyPolytope,
    #[error("halfspace normal has zero length")]
    ZeroNormal,
}

/// A point in the plane. Coordinates are finite by construction when loaded
/// from files; in-process code is trusted to keep them finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn vec(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    #[inline]
    pub fn from_vec(v: Vector2<f64>) -> Self {
        Self { x: v.x, y: v.y }
    }

    #[inline]
    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl TryFrom<[f64; 2]> for Point2 {
    type Error = String;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        if v[0].is_finite() && v[1].is_finite() {
            Ok(Point2::new(v[0], v[1]))
        } else {
            Err(format!("non-finite coordinates [{}, {}]", v[0], v[1]))
        }
    }
}

impl std::ops::Sub for Point2 {
    type Output = Vector2<f64>;

    fn sub(self, rhs: Point2) -> Vector2<f64> {
        Vector2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add<Vector2<f64>> for Point2 {
    type Output = Point2;

    fn add(self, rhs: Vector2<f64>) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

/// z-component of the 2D cross product `a x b`.
#[inline]
pub fn cross2(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Rotate a vector by 90 degrees counterclockwise.
#[inline]
pub fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Closed halfspace `normal · x <= offset` with `||normal|| = 1`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Halfspace {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl Halfspace {
    /// Build from an arbitrary (nonzero) normal; rescales to unit length.
    pub fn new(normal: Vector2<f64>, offset: f64) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(Self {
            normal: [normal.x / n, normal.y / n],
            offset: offset / n,
        })
    }

    #[inline]
    pub fn normal_vec(&self) -> Vector2<f64> {
        Vector2::new(self.normal[0], self.normal[1])
    }

    /// Signed constraint value `normal · p - offset`; nonpositive inside.
    #[inline]
    pub fn eval(&self, p: Point2) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y - self.offset
    }

    #[inline]
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        self.eval(p) <= tol
    }
}

/// Intersection of finitely many halfspaces, kept in insertion order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Polytope2 {
    pub halfspaces: Vec<Halfspace>,
}

impl Polytope2 {
    pub fn new(halfspaces: Vec<Halfspace>) -> Self {
        Self { halfspaces }
    }

    /// Axis-aligned box `[xmin, xmax] x [ymin, ymax]`.
    pub fn axis_box(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        let rows = [
            (Vector2::new(1.0, 0.0), xmax),
            (Vector2::new(-1.0, 0.0), -xmin),
            (Vector2::new(0.0, 1.0), ymax),
            (Vector2::new(0.0, -1.0), -ymin),
        ];
        Self::new(
            rows.iter()
                .map(|&(n, c)| Halfspace::new(n, c).expect("axis normal"))
                .collect(),
        )
    }

    #[inline]
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.contains(p, tol))
    }

    /// Largest constraint value over all rows; nonpositive inside.
    pub fn max_violation(&self, p: Point2) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.eval(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Enumerate the vertices of a bounded, full-dimensional polytope,
    /// ordered counterclockwise. Pairwise boundary intersections are kept
    /// when they satisfy every row within [`GEOM_TOL`], then deduplicated.
    pub fn vertices(&self) -> Result<Vec<Point2>, GeometryError> {
        // An opposite-parallel slab contradiction means the region is empty
        // no matter what the remaining rows do.
        if self.has_parallel_contradiction() {
            return Err(GeometryError::EmptyPolytope);
        }
        if self.is_direction_unbounded() {
            return Err(GeometryError::UnboundedPolytope);
        }

        let hs = &self.halfspaces;
        let mut candidates: Vec<Point2> = Vec::new();
        for i in 0..hs.len() {
            for j in (i + 1)..hs.len() {
                let Some(p) = boundary_intersection(&hs[i], &hs[j]) else {
                    continue;
                };
                if self.contains(p, GEOM_TOL) {
                    candidates.push(p);
                }
            }
        }
        if candidates.is_empty() {
            return Err(GeometryError::EmptyPolytope);
        }

        // Dedup within tolerance, keeping first occurrences.
        let mut verts: Vec<Point2> = Vec::new();
        for p in candidates {
            if !verts.iter().any(|q| p.dist(*q) <= GEOM_TOL) {
                verts.push(p);
            }
        }
        if verts.len() < 3 {
            return Err(GeometryError::EmptyPolytope);
        }

        let cx = verts.iter().map(|p| p.x).sum::<f64>() / verts.len() as f64;
        let cy = verts.iter().map(|p| p.y).sum::<f64>() / verts.len() as f64;
        verts.sort_by(|a, b| {
            let aa = (a.y - cy).atan2(a.x - cx);
            let bb = (b.y - cy).atan2(b.x - cx);
            aa.partial_cmp(&bb).unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(verts)
    }

    /// True when the normals leave an angular gap >= pi, i.e. the recession
    /// cone contains a nonzero direction.
    fn is_direction_unbounded(&self) -> bool {
        let mut angles: Vec<f64> = self
            .halfspaces
            .iter()
            .map(|h| h.normal[1].atan2(h.normal[0]))
            .collect();
        if angles.is_empty() {
            return true;
        }
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let mut max_gap: f64 = 0.0;
        for k in 1..angles.len() {
            max_gap = max_gap.max(angles[k] - angles[k - 1]);
        }
        max_gap = max_gap.max(angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1]);
        max_gap >= std::f64::consts::PI - 1e-12
    }

    /// Detects a pair of opposite parallel rows whose slabs contradict.
    fn has_parallel_contradiction(&self) -> bool {
        let hs = &self.halfspaces;
        for i in 0..hs.len() {
            for j in (i + 1)..hs.len() {
                let ni = hs[i].normal_vec();
                let nj = hs[j].normal_vec();
                if (ni + nj).norm() < 1e-9 && -hs[j].offset > hs[i].offset + GEOM_TOL {
                    return true;
                }
            }
        }
        false
    }
}

/// Intersection of the boundary lines of two halfspaces, if unique.
fn boundary_intersection(a: &Halfspace, b: &Halfspace) -> Option<Point2> {
    let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
    if det.abs() < 1e-12 {
        return None;
    }
    let x = (a.offset * b.normal[1] - b.offset * a.normal[1]) / det;
    let y = (a.normal[0] * b.offset - b.normal[0] * a.offset) / det;
    Some(Point2::new(x, y))
}

/// Normalized scalar projection of `p` onto segment `a-b`:
/// `t = (p-a)·(b-a)/||b-a||^2`, so `t` in `[0, 1]` exactly when the foot of
/// the perpendicular lies on the segment.
pub fn scalar_projection(a: Point2, b: Point2, p: Point2) -> Result<f64, GeometryError> {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 < 1e-24 {
        return Err(GeometryError::DegenerateSegment);
    }
    Ok((p - a).dot(&d) / len2)
}

/// Signed angle from `base` to `other` in `(-pi, pi]`; positive when `other`
/// is counterclockwise of `base`.
pub fn oriented_angle(base: Vector2<f64>, other: Vector2<f64>) -> Result<f64, GeometryError> {
    if base.norm_squared() < 1e-24 || other.norm_squared() < 1e-24 {
        return Err(GeometryError::ZeroDirection);
    }
    let angle = cross2(base, other).atan2(base.dot(&other));
    if angle == -std::f64::consts::PI {
        Ok(std::f64::consts::PI)
    } else {
        Ok(angle)
    }
}

/// Unique interior intersection of two segments, or `None` for disjoint,
/// endpoint-touching, and collinear-overlap configurations.
pub fn segment_intersection(
    p1: Point2,
    p2: Point2,
    q1: Point2,
    q2: Point2,
) -> Option<Point2> {
    let r = p2 - p1;
    let s = q2 - q1;
    let rn = r.norm();
    let sn = s.norm();
    if rn < 1e-12 || sn < 1e-12 {
        return None;
    }
    // Perpendicular distances of each endpoint from the other segment's
    // supporting line; a proper crossing needs strict straddling on both.
    let dq1 = cross2(r, q1 - p1) / rn;
    let dq2 = cross2(r, q2 - p1) / rn;
    let dp1 = cross2(s, p1 - q1) / sn;
    let dp2 = cross2(s, p2 - q1) / sn;
    let straddle = |a: f64, b: f64| (a > GEOM_TOL && b < -GEOM_TOL) || (a < -GEOM_TOL && b > GEOM_TOL);
    if !straddle(dq1, dq2) || !straddle(dp1, dp2) {
        return None;
    }
    let denom = cross2(r, s);
    let t = cross2(q1 - p1, s) / denom;
    Some(p1 + r * t)
}

/// Distance from point `p` to segment `a-b`.
pub fn point_segment_distance(a: Point2, b: Point2, p: Point2) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 < 1e-24 {
        return p.dist(a);
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}
