//! Points, obstacle primitives and the punctured ball `B(0, R) - K`.
//!
//! Every obstacle primitive has an exact distance function; walk-on-spheres
//! relies on that to pick step radii without ever stepping into `K`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest and largest supported ambient dimension.
pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 10;

const CONTAINMENT_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension {0} outside supported range 2..=10")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in point")]
    NonFinite,
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("obstacle {index} is not contained in the closed ball of radius {radius}")]
    ObstacleOutsideBall { index: usize, radius: f64 },
    #[error("point at radius {radius} lies outside the closed ball of radius {outer}")]
    OutsideBall { radius: f64, outer: f64 },
    #[error("cone half-angle {0} outside (0, pi/2]")]
    InvalidHalfAngle(f64),
    #[error("cone axis {axis} out of range for dimension {dim}")]
    InvalidAxis { axis: usize, dim: usize },
}

/// A point of `R^d`, `2 <= d <= 10`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        check_dim(coords.len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// The point `t * e_axis`.
    pub fn on_axis(dim: usize, axis: usize, t: f64) -> Self {
        let mut c = vec![0.0; dim];
        c[axis] = t;
        Self(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        dist(&self.0, &other.0)
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<[f64; 2]> for Point {
    fn from(c: [f64; 2]) -> Self {
        Self(c.to_vec())
    }
}

impl From<[f64; 3]> for Point {
    fn from(c: [f64; 3]) -> Self {
        Self(c.to_vec())
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ";")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

fn check_dim(d: usize) -> Result<(), GeometryError> {
    if (MIN_DIM..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(GeometryError::UnsupportedDimension(d))
    }
}

#[inline]
pub fn norm(p: &[f64]) -> f64 {
    p.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Closest point of the segment `[a, b]` to `p`.
fn segment_foot(p: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) {
    let mut len2 = 0.0;
    let mut proj = 0.0;
    for k in 0..p.len() {
        let e = b[k] - a[k];
        len2 += e * e;
        proj += (p[k] - a[k]) * e;
    }
    let t = if len2 > 0.0 {
        (proj / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    for k in 0..p.len() {
        out[k] = a[k] + t * (b[k] - a[k]);
    }
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut len2 = 0.0;
    let mut proj = 0.0;
    for k in 0..p.len() {
        let e = b[k] - a[k];
        len2 += e * e;
        proj += (p[k] - a[k]) * e;
    }
    let t = if len2 > 0.0 {
        (proj / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut s = 0.0;
    for k in 0..p.len() {
        let q = a[k] + t * (b[k] - a[k]);
        s += (p[k] - q) * (p[k] - q);
    }
    s.sqrt()
}

/// Push `core` (a closest point of the skeleton) out to the surface of its
/// `half_width` neighbourhood in the direction of `p`.
fn inflate(p: &[f64], core: &mut [f64], half_width: f64) {
    if half_width <= 0.0 {
        return;
    }
    let r = dist(p, core);
    if r <= half_width {
        core.copy_from_slice(p);
    } else {
        let s = half_width / r;
        for k in 0..p.len() {
            core[k] += s * (p[k] - core[k]);
        }
    }
}

/// One closed obstacle primitive. Thicknesses are full widths, so a segment
/// of thickness `t` is the set of points within `t / 2` of the segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleShape {
    Ball {
        center: Point,
        radius: f64,
    },
    Segment {
        a: Point,
        b: Point,
        #[serde(default)]
        thickness: f64,
    },
    Polyline {
        vertices: Vec<Point>,
        #[serde(default)]
        thickness: f64,
    },
    /// The flat annulus `{z : z_axis = c_axis, inner_radius <= |z - c| <= radius}`.
    HyperplaneDisc {
        center: Point,
        axis: usize,
        radius: f64,
        #[serde(default)]
        inner_radius: f64,
    },
}

impl ObstacleShape {
    pub fn ball(center: impl Into<Point>, radius: f64) -> Self {
        Self::Ball {
            center: center.into(),
            radius,
        }
    }

    pub fn segment(a: impl Into<Point>, b: impl Into<Point>, thickness: f64) -> Self {
        Self::Segment {
            a: a.into(),
            b: b.into(),
            thickness,
        }
    }

    pub fn polyline(vertices: Vec<Point>, thickness: f64) -> Self {
        Self::Polyline {
            vertices,
            thickness,
        }
    }

    /// `(B(center, radius) ∩ {z_axis = c_axis}) - B(center, inner_radius)`.
    pub fn hyperplane_disc(center: Point, axis: usize, radius: f64, inner_radius: f64) -> Self {
        Self::HyperplaneDisc {
            center,
            axis,
            radius,
            inner_radius,
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            Self::Ball { center, .. } | Self::HyperplaneDisc { center, .. } => vec![center.dim()],
            Self::Segment { a, b, .. } => vec![a.dim(), b.dim()],
            Self::Polyline { vertices, .. } => vertices.iter().map(Point::dim).collect(),
        }
    }

    /// Checks shape parameters and that the shape lies in the closed ball
    /// `B(0, outer)`.
    pub fn validate(&self, dim: usize, outer: f64, index: usize) -> Result<(), GeometryError> {
        for got in self.dims() {
            if got != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, got });
            }
        }
        let bad = |msg: &str| Err(GeometryError::InvalidObstacle(msg.to_string()));
        let lim = outer * (1.0 + CONTAINMENT_SLACK) + CONTAINMENT_SLACK;
        let inside = match self {
            Self::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad("ball radius must be finite and positive");
                }
                center.norm() + radius <= lim
            }
            Self::Segment { a, b, thickness } => {
                if !(thickness.is_finite() && *thickness >= 0.0) {
                    return bad("thickness must be finite and non-negative");
                }
                a.norm() + thickness / 2.0 <= lim && b.norm() + thickness / 2.0 <= lim
            }
            Self::Polyline {
                vertices,
                thickness,
            } => {
                if vertices.len() < 2 {
                    return bad("polyline needs at least two vertices");
                }
                if !(thickness.is_finite() && *thickness >= 0.0) {
                    return bad("thickness must be finite and non-negative");
                }
                vertices.iter().all(|v| v.norm() + thickness / 2.0 <= lim)
            }
            Self::HyperplaneDisc {
                center,
                axis,
                radius,
                inner_radius,
            } => {
                if *axis >= dim {
                    return Err(GeometryError::InvalidAxis { axis: *axis, dim });
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad("disc radius must be finite and positive");
                }
                if !(inner_radius.is_finite() && *inner_radius >= 0.0 && inner_radius < radius) {
                    return bad("inner radius must lie in [0, radius)");
                }
                // Farthest point of a flat disc from the origin.
                let c_off: f64 = center
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| k != axis)
                    .map(|(_, c)| c * c)
                    .sum::<f64>()
                    .sqrt();
                let far = (center[*axis].powi(2) + (c_off + radius).powi(2)).sqrt();
                far <= lim
            }
        };
        if inside {
            Ok(())
        } else {
            Err(GeometryError::ObstacleOutsideBall {
                index,
                radius: outer,
            })
        }
    }

    /// Exact Euclidean distance from `p` to the shape (0 inside it).
    pub fn distance(&self, p: &[f64]) -> f64 {
        match self {
            Self::Ball { center, radius } => (dist(p, center) - radius).max(0.0),
            Self::Segment { a, b, thickness } => {
                (segment_distance(p, a, b) - thickness / 2.0).max(0.0)
            }
            Self::Polyline {
                vertices,
                thickness,
            } => {
                let d = vertices
                    .windows(2)
                    .map(|w| segment_distance(p, &w[0], &w[1]))
                    .fold(f64::INFINITY, f64::min);
                (d - thickness / 2.0).max(0.0)
            }
            Self::HyperplaneDisc {
                center,
                axis,
                radius,
                inner_radius,
            } => {
                let h = p[*axis] - center[*axis];
                let rho2: f64 = p
                    .iter()
                    .zip(center.iter())
                    .enumerate()
                    .filter(|(k, _)| k != axis)
                    .map(|(_, (x, c))| (x - c) * (x - c))
                    .sum();
                let rho = rho2.sqrt();
                let radial = rho - rho.clamp(*inner_radius, *radius);
                (h * h + radial * radial).sqrt()
            }
        }
    }

    /// A point of the shape nearest to `p` (`p` itself when inside).
    pub fn closest_point(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        match self {
            Self::Ball { center, radius } => {
                out.copy_from_slice(center);
                inflate(p, &mut out, *radius);
            }
            Self::Segment { a, b, thickness } => {
                segment_foot(p, a, b, &mut out);
                inflate(p, &mut out, *thickness / 2.0);
            }
            Self::Polyline {
                vertices,
                thickness,
            } => {
                let mut best = f64::INFINITY;
                let mut tmp = vec![0.0; p.len()];
                for w in vertices.windows(2) {
                    segment_foot(p, &w[0], &w[1], &mut tmp);
                    let d = dist(p, &tmp);
                    if d < best {
                        best = d;
                        out.copy_from_slice(&tmp);
                    }
                }
                inflate(p, &mut out, *thickness / 2.0);
            }
            Self::HyperplaneDisc {
                center,
                axis,
                radius,
                inner_radius,
            } => {
                let mut rho2 = 0.0;
                for k in 0..p.len() {
                    if k != *axis {
                        rho2 += (p[k] - center[k]).powi(2);
                    }
                }
                let rho = rho2.sqrt();
                let target = rho.clamp(*inner_radius, *radius);
                for k in 0..p.len() {
                    out[k] = center[k];
                }
                if rho > 0.0 {
                    let s = target / rho;
                    for k in 0..p.len() {
                        if k != *axis {
                            out[k] = center[k] + s * (p[k] - center[k]);
                        }
                    }
                } else {
                    // Any in-plane direction is nearest; take the first free axis.
                    let free = if *axis == 0 { 1 } else { 0 };
                    out[free] += target;
                }
            }
        }
        out
    }
}

/// Bounded region with a computable distance to its boundary.
pub trait Region: Sync {
    fn dim(&self) -> usize;

    /// `d(p, ∂Ω)` for `p ∈ Ω`; 0 for points outside `Ω`.
    fn boundary_distance(&self, p: &[f64]) -> f64;

    /// Axis-aligned box `(lo, hi)` containing the region.
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);
}

/// `D = B(0, outer_radius) - K`, with `K` a finite union of primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    dim: usize,
    obstacles: Vec<ObstacleShape>,
    outer_radius: f64,
}

impl Domain {
    pub fn new(
        dim: usize,
        obstacles: Vec<ObstacleShape>,
        outer_radius: f64,
    ) -> Result<Self, GeometryError> {
        check_dim(dim)?;
        if !(outer_radius.is_finite() && outer_radius > 0.0) {
            return Err(GeometryError::InvalidObstacle(
                "outer radius must be finite and positive".into(),
            ));
        }
        for (i, o) in obstacles.iter().enumerate() {
            o.validate(dim, outer_radius, i)?;
        }
        Ok(Self {
            dim,
            obstacles,
            outer_radius,
        })
    }

    /// The unit ball without obstacles.
    pub fn unit_ball(dim: usize) -> Result<Self, GeometryError> {
        Self::new(dim, Vec::new(), 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn obstacles(&self) -> &[ObstacleShape] {
        &self.obstacles
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// A copy with extra obstacles appended.
    pub fn with_obstacles(&self, extra: Vec<ObstacleShape>) -> Result<Self, GeometryError> {
        let mut obstacles = self.obstacles.clone();
        obstacles.extend(extra);
        Self::new(self.dim, obstacles, self.outer_radius)
    }

    fn check_point(&self, p: &[f64]) -> Result<(), GeometryError> {
        if p.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Distance from `p` to `K`; `+inf` when there are no obstacles.
    #[inline]
    pub fn obstacle_distance(&self, p: &[f64]) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Exact distance from `p` to `K`, or an error on dimension mismatch or
    /// when `p` is outside the closed outer ball.
    pub fn dist_to_obstacles(&self, p: &[f64]) -> Result<f64, GeometryError> {
        self.check_point(p)?;
        self.check_in_ball(p)?;
        Ok(self.obstacle_distance(p))
    }

    fn check_in_ball(&self, p: &[f64]) -> Result<(), GeometryError> {
        let r = norm(p);
        if r > self.outer_radius * (1.0 + CONTAINMENT_SLACK) {
            return Err(GeometryError::OutsideBall {
                radius: r,
                outer: self.outer_radius,
            });
        }
        Ok(())
    }

    /// Radius of the largest ball centred at `p` inside `D`.
    pub fn wos_radius(&self, p: &[f64]) -> Result<f64, GeometryError> {
        self.check_point(p)?;
        self.check_in_ball(p)?;
        Ok(self.boundary_distance(p))
    }

    /// Nearest point of `K` to `p`, if `K` is non-empty.
    pub fn nearest_obstacle_point(&self, p: &[f64]) -> Option<Vec<f64>> {
        self.obstacles
            .iter()
            .map(|o| (o.distance(p), o))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, o)| o.closest_point(p))
    }

    /// `true` iff `p ∈ D` (open ball, off `K`).
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim && self.boundary_distance(p) > 0.0
    }
}

impl Region for Domain {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn boundary_distance(&self, p: &[f64]) -> f64 {
        (self.outer_radius - norm(p))
            .min(self.obstacle_distance(p))
            .max(0.0)
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![-self.outer_radius; self.dim],
            vec![self.outer_radius; self.dim],
        )
    }
}

/// `B(center, radius) - K` for the obstacles of some domain; used for the
/// local complements around roots.
#[derive(Clone, Debug)]
pub struct BallRegion<'a> {
    pub center: Point,
    pub radius: f64,
    pub obstacles: &'a [ObstacleShape],
}

impl Region for BallRegion<'_> {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn boundary_distance(&self, p: &[f64]) -> f64 {
        let k = self
            .obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(f64::INFINITY, f64::min);
        (self.radius - dist(p, &self.center)).min(k).max(0.0)
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.radius).collect(),
            self.center.iter().map(|c| c + self.radius).collect(),
        )
    }
}

/// The circular cone `W_α = {z : |z - π(z)| < z_axis tan α}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    half_angle: f64,
    axis: usize,
}

impl ConeSpec {
    /// Cone about the first coordinate axis.
    pub fn new(half_angle: f64) -> Result<Self, GeometryError> {
        Self::with_axis(half_angle, 0)
    }

    pub fn with_axis(half_angle: f64, axis: usize) -> Result<Self, GeometryError> {
        if !(half_angle > 0.0 && half_angle <= std::f64::consts::FRAC_PI_2) {
            return Err(GeometryError::InvalidHalfAngle(half_angle));
        }
        if axis >= MAX_DIM {
            return Err(GeometryError::InvalidAxis {
                axis,
                dim: MAX_DIM,
            });
        }
        Ok(Self { half_angle, axis })
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Strict membership test.
    #[inline]
    pub fn contains(&self, p: &[f64]) -> bool {
        let z = p[self.axis];
        if z <= 0.0 {
            return false;
        }
        let perp2: f64 = p
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != self.axis)
            .map(|(_, c)| c * c)
            .sum();
        perp2.sqrt() < z * self.half_angle.tan()
    }
}

pub fn in_cone(p: &[f64], cone: &ConeSpec) -> bool {
    cone.contains(p)
}

/// Orthogonal projection onto the first coordinate axis.
pub fn project_pi1(p: &Point) -> Point {
    let mut c = vec![0.0; p.dim()];
    c[0] = p[0];
    Point(c)
}

/// Angle between `p` and the positive first axis.
pub fn polar_angle(p: &[f64]) -> f64 {
    let r = norm(p);
    if r == 0.0 {
        return 0.0;
    }
    (p[0] / r).clamp(-1.0, 1.0).acos()
}
