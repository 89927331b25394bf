//! Explicit environment model: bounding polytope, obstacles, landmark table,
//! deformation presets, and the collision / visibility predicates the planner
//! and simulator query.
//!
//! Collision tests are analytic (no edge sub-sampling): circles use the
//! distance from the center to the segment, convex polygons use parametric
//! clipping of the segment against the polygon halfplanes. Obstacles are
//! closed sets, so tangency counts as a collision.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cross2, point_segment_distance, Point2, Polytope2, GEOM_TOL};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment file parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("environment bounds must be bounded: {0}")]
    UnboundedBounds(String),
    #[error("environment must contain at least one landmark")]
    NoLandmarks,
    #[error("duplicate landmark id {0:?}")]
    DuplicateLandmark(String),
    #[error("landmark {0:?} lies outside the environment bounds")]
    LandmarkOutOfBounds(String),
    #[error("obstacle {index}: {reason}")]
    BadObstacle { index: usize, reason: String },
    #[error("deformation references unknown obstacle group {0:?}")]
    UnknownGroup(String),
    #[error("deformed landmark {0:?} exits the environment bounds")]
    DeformedLandmarkOutOfBounds(String),
    #[error("deformation scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("unknown deformation preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Circle {
        center: Point2,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group: Option<String>,
    },
    Polygon {
        /// Convex, counterclockwise vertex list.
        vertices: Vec<Point2>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group: Option<String>,
    },
}

impl Obstacle {
    pub fn group(&self) -> Option<&str> {
        match self {
            Obstacle::Circle { group, .. } | Obstacle::Polygon { group, .. } => group.as_deref(),
        }
    }

    /// Representative point used when computing a deformation group centroid.
    fn reference_point(&self) -> Point2 {
        match self {
            Obstacle::Circle { center, .. } => *center,
            Obstacle::Polygon { vertices, .. } => {
                let n = vertices.len() as f64;
                Point2::new(
                    vertices.iter().map(|p| p.x).sum::<f64>() / n,
                    vertices.iter().map(|p| p.y).sum::<f64>() / n,
                )
            }
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        match self {
            Obstacle::Circle { center, radius, .. } => p.dist(*center) <= *radius,
            Obstacle::Polygon { vertices, .. } => {
                (0..vertices.len()).all(|k| {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % vertices.len()];
                    cross2(b - a, p - a) >= -GEOM_TOL
                })
            }
        }
    }

    pub fn intersects_segment(&self, p: Point2, q: Point2) -> bool {
        match self {
            Obstacle::Circle { center, radius, .. } => {
                point_segment_distance(p, q, *center) <= *radius
            }
            Obstacle::Polygon { vertices, .. } => {
                segment_meets_convex_polygon(vertices, p, q)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Obstacle::Circle { radius, .. } => std::f64::consts::PI * radius * radius,
            Obstacle::Polygon { vertices, .. } => polygon_area(vertices).abs(),
        }
    }
}

/// Clip the segment `p + t (q - p)`, `t in [0, 1]`, against the polygon's
/// halfplanes; a nonempty parameter interval means contact.
fn segment_meets_convex_polygon(vertices: &[Point2], p: Point2, q: Point2) -> bool {
    let d = q - p;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for k in 0..vertices.len() {
        let a = vertices[k];
        let b = vertices[(k + 1) % vertices.len()];
        let edge = b - a;
        // Inward halfplane for a CCW polygon: cross(edge, x - a) >= 0.
        let num = cross2(edge, p - a);
        let den = cross2(edge, d);
        if den.abs() < 1e-15 {
            if num < -GEOM_TOL {
                return false; // parallel and fully outside this halfplane
            }
            continue;
        }
        let t = -num / den;
        if den > 0.0 {
            // entering: constraint satisfied for t >= t
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 + GEOM_TOL {
            return false;
        }
    }
    true
}

fn polygon_area(v: &[Point2]) -> f64 {
    let mut area = 0.0;
    for k in 0..v.len() {
        let a = v[k];
        let b = v[(k + 1) % v.len()];
        area += a.x * b.y - b.x * a.y;
    }
    area / 2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub id: String,
    pub pos: Point2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// Rigid transform (rotation about the group centroid, then translation) with
/// an optional uniform scale, applied to one named obstacle group and its
/// attached landmarks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupTransform {
    pub group: String,
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub translation: [f64; 2],
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deformation {
    pub groups: Vec<GroupTransform>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    pub bounds: Polytope2,
    pub obstacles: Vec<Obstacle>,
    pub landmarks: Vec<Landmark>,
    pub seed: u64,
    /// Named deformation presets shipped with the environment.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub deformations: BTreeMap<String, Deformation>,
    /// Start poses `[x, y, phi]` used by the batch experiments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub start_presets: Vec<[f64; 3]>,
}

impl EnvironmentModel {
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let env: EnvironmentModel = serde_json::from_str(text)?;
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.bounds
            .vertices()
            .map_err(|e| EnvError::UnboundedBounds(e.to_string()))?;
        if self.landmarks.is_empty() {
            return Err(EnvError::NoLandmarks);
        }
        let mut seen = std::collections::BTreeSet::new();
        for lm in &self.landmarks {
            if !seen.insert(lm.id.clone()) {
                return Err(EnvError::DuplicateLandmark(lm.id.clone()));
            }
            if !self.bounds.contains(lm.pos, GEOM_TOL) {
                return Err(EnvError::LandmarkOutOfBounds(lm.id.clone()));
            }
        }
        for (index, ob) in self.obstacles.iter().enumerate() {
            match ob {
                Obstacle::Circle { radius, .. } => {
                    if !(*radius > 0.0) {
                        return Err(EnvError::BadObstacle {
                            index,
                            reason: format!("radius must be positive, got {radius}"),
                        });
                    }
                }
                Obstacle::Polygon { vertices, .. } => {
                    if vertices.len() < 3 {
                        return Err(EnvError::BadObstacle {
                            index,
                            reason: "polygon needs at least 3 vertices".into(),
                        });
                    }
                    if polygon_area(vertices) <= 0.0 {
                        return Err(EnvError::BadObstacle {
                            index,
                            reason: "polygon must be counterclockwise with positive area".into(),
                        });
                    }
                    for k in 0..vertices.len() {
                        let a = vertices[k];
                        let b = vertices[(k + 1) % vertices.len()];
                        let c = vertices[(k + 2) % vertices.len()];
                        if cross2(b - a, c - b) < -GEOM_TOL {
                            return Err(EnvError::BadObstacle {
                                index,
                                reason: "polygon must be convex".into(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// True when `p` sits inside any obstacle (closed sets) or outside the
    /// environment bounds.
    pub fn is_sample_collision(&self, p: Point2) -> bool {
        if !self.bounds.contains(p, GEOM_TOL) {
            return true;
        }
        self.obstacles.iter().any(|ob| ob.contains(p))
    }

    /// True when segment `p-q` meets any obstacle or leaves the bounds.
    /// Because the bounds are convex, the segment stays inside exactly when
    /// both endpoints do.
    pub fn is_edge_collision(&self, p: Point2, q: Point2) -> bool {
        if !self.bounds.contains(p, GEOM_TOL) || !self.bounds.contains(q, GEOM_TOL) {
            return true;
        }
        self.obstacles.iter().any(|ob| ob.intersects_segment(p, q))
    }

    /// Area of the bounds polygon minus the obstacle areas. Assumes obstacles
    /// are disjoint and inside the bounds.
    pub fn free_area(&self) -> f64 {
        let verts = self.bounds.vertices().expect("validated bounds");
        let total = polygon_area(&verts).abs();
        let blocked: f64 = self.obstacles.iter().map(|ob| ob.area()).sum();
        (total - blocked).max(0.0)
    }

    pub fn landmark_table(&self) -> BTreeMap<String, Point2> {
        self.landmarks
            .iter()
            .map(|lm| (lm.id.clone(), lm.pos))
            .collect()
    }

    /// Apply a deformation, returning a new environment. Obstacles in each
    /// named group and the landmarks attached to that group move together;
    /// everything else (bounds, seed, unattached landmarks) is unchanged.
    pub fn deform(&self, d: &Deformation) -> Result<EnvironmentModel, EnvError> {
        let mut out = self.clone();
        for gt in &d.groups {
            if !(gt.scale > 0.0) {
                return Err(EnvError::NonPositiveScale(gt.scale));
            }
            let members: Vec<usize> = self
                .obstacles
                .iter()
                .enumerate()
                .filter(|(_, ob)| ob.group() == Some(gt.group.as_str()))
                .map(|(k, _)| k)
                .collect();
            if members.is_empty() {
                return Err(EnvError::UnknownGroup(gt.group.clone()));
            }
            let centroid = {
                let pts: Vec<Point2> = members
                    .iter()
                    .map(|&k| self.obstacles[k].reference_point())
                    .collect();
                let n = pts.len() as f64;
                Point2::new(
                    pts.iter().map(|p| p.x).sum::<f64>() / n,
                    pts.iter().map(|p| p.y).sum::<f64>() / n,
                )
            };
            let map_point = |p: Point2| -> Point2 {
                let r = p - centroid;
                let (s, c) = (gt.rotation.sin(), gt.rotation.cos());
                let rotated = Vector2::new(c * r.x - s * r.y, s * r.x + c * r.y) * gt.scale;
                Point2::new(
                    centroid.x + rotated.x + gt.translation[0],
                    centroid.y + rotated.y + gt.translation[1],
                )
            };
            for &k in &members {
                match &mut out.obstacles[k] {
                    Obstacle::Circle { center, radius, .. } => {
                        *center = map_point(*center);
                        *radius *= gt.scale;
                    }
                    Obstacle::Polygon { vertices, .. } => {
                        for v in vertices.iter_mut() {
                            *v = map_point(*v);
                        }
                    }
                }
            }
            for lm in out.landmarks.iter_mut() {
                if lm.group.as_deref() == Some(gt.group.as_str()) {
                    lm.pos = map_point(lm.pos);
                    if !self.bounds.contains(lm.pos, GEOM_TOL) {
                        return Err(EnvError::DeformedLandmarkOutOfBounds(lm.id.clone()));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn deformation_preset(&self, name: &str) -> Result<&Deformation, EnvError> {
        self.deformations
            .get(name)
            .ok_or_else(|| EnvError::UnknownPreset(name.to_string()))
    }

    /// Landmarks within `range` of `position` whose bearing relative to
    /// `heading` lies inside the closed sector `[-fov_half_angle,
    /// +fov_half_angle]`, sorted by ascending distance (ties by id).
    pub fn visible_landmarks(
        &self,
        position: Point2,
        heading: f64,
        fov_half_angle: f64,
        range: f64,
    ) -> Vec<String> {
        let mut hits: Vec<(f64, &str)> = Vec::new();
        for lm in &self.landmarks {
            let d = lm.pos - position;
            let dist = d.norm();
            if dist > range {
                continue;
            }
            if dist < 1e-12 {
                hits.push((dist, &lm.id));
                continue;
            }
            let bearing = wrap_angle(d.y.atan2(d.x) - heading);
            if bearing.abs() <= fov_half_angle + 1e-12 {
                hits.push((dist, &lm.id));
            }
        }
        hits.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(b.1))
        });
        hits.into_iter().map(|(_, id)| id.to_string()).collect()
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * std::f64::consts::PI);
    if x > std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    x
}
