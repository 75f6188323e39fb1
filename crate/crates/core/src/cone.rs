//! Geometry of the cone over the unit interval.
//!
//! The cone over `M = [0, 1]` is the quotient `(M x [0, inf)) / (M x {0})`:
//! points are written `[x, r]` and every point with `r = 0` is the same
//! point, the apex. The metric tensor is `r^2 dx^2 + dr^2`, which gives the
//! distance
//!
//! ```text
//! d([x1,r1],[x2,r2])^2 = r1^2 + r2^2 - 2 r1 r2 cos(min(|x1-x2|, pi))
//! ```
//!
//! Because the base interval has diameter 1 < pi, the clamp never activates
//! for valid points; it is kept so the formula stays correct for any base
//! distance. The development map `[x, r] -> (r cos x, r sin x)` is an
//! isometry onto a planar sector, under which geodesics become straight
//! segments; it doubles as the oracle for all geodesic computations here.

use crate::error::{Error, Result};

/// Canonical apex base coordinate. Any `[x, 0]` is stored as `[0, 0]`.
const APEX_BASE: f64 = 0.0;

/// Default absolute tolerance for approximate point comparisons.
pub const DEFAULT_POINT_TOL: f64 = 1e-12;

/// A point `[x, r]` on the cone over `[0, 1]`.
///
/// Invariants: `x` in `[0, 1]`, `r >= 0`, both finite. Points with `r = 0`
/// are canonicalized to the apex `[0, 0]`, so `==` respects apex
/// equivalence exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint {
    x: f64,
    r: f64,
}

impl ConePoint {
    pub fn new(x: f64, r: f64) -> Result<Self> {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(Error::BaseCoordinate(x));
        }
        if !r.is_finite() || r < 0.0 {
            return Err(Error::Radius(r));
        }
        Ok(if r == 0.0 {
            Self { x: APEX_BASE, r: 0.0 }
        } else {
            Self { x, r }
        })
    }

    /// The apex `[_, 0]`.
    pub const fn apex() -> Self {
        Self { x: APEX_BASE, r: 0.0 }
    }

    pub fn is_apex(&self) -> bool {
        self.r == 0.0
    }

    /// Base projection; returns the canonical base point for the apex.
    pub fn x(&self) -> f64 {
        self.x
    }

    /// Radial projection.
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Componentwise comparison with absolute tolerance `tol`
    /// (apex equivalence is still exact: two apexes always compare equal).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.is_apex() && other.is_apex() {
            return true;
        }
        (self.x - other.x).abs() <= tol && (self.r - other.r).abs() <= tol
    }
}

/// Tangent data `(dx, dr)` at a cone point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeVelocity {
    pub dx: f64,
    pub dr: f64,
}

impl ConeVelocity {
    pub fn new(dx: f64, dr: f64) -> Result<Self> {
        if !dx.is_finite() || !dr.is_finite() {
            return Err(Error::NonFinite("cone velocity"));
        }
        Ok(Self { dx, dr })
    }
}

/// Euclidean distance on the base interval `[0, 1]`.
pub fn base_distance(x1: f64, x2: f64) -> Result<f64> {
    for x in [x1, x2] {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(Error::BaseCoordinate(x));
        }
    }
    Ok((x1 - x2).abs())
}

/// Squared cone distance.
///
/// Evaluated as `(r1 - r2)^2 + 4 r1 r2 sin^2(theta/2)` with
/// `theta = min(|x1 - x2|, pi)`, which is algebraically identical to the
/// law-of-cosines form but avoids cancellation for nearby points.
pub fn cone_distance_sq(p: &ConePoint, q: &ConePoint) -> f64 {
    cone_distance_sq_coords(p.x, p.r, q.x, q.r)
}

/// Squared cone distance from raw coordinates. Unlike [`cone_distance_sq`]
/// this accepts base coordinates outside `[0, 1]` (the angular part is
/// still clamped at pi); radii must be nonnegative.
pub fn cone_distance_sq_coords(x1: f64, r1: f64, x2: f64, r2: f64) -> f64 {
    debug_assert!(r1 >= 0.0 && r2 >= 0.0);
    let theta = (x1 - x2).abs().min(std::f64::consts::PI);
    let s = (0.5 * theta).sin();
    let dr = r1 - r2;
    dr * dr + 4.0 * r1 * r2 * s * s
}

/// Distance on the cone. Symmetric, zero exactly when the canonical
/// representations coincide (so any two apexes are at distance zero).
pub fn cone_distance(p: &ConePoint, q: &ConePoint) -> f64 {
    cone_distance_sq(p, q).sqrt()
}

/// Development map onto the plane: `[x, r] -> (r cos x, r sin x)`.
///
/// For base coordinates in `[0, 1]` the planar Euclidean distance between
/// developed images equals the cone distance.
pub fn develop(p: &ConePoint) -> (f64, f64) {
    if p.is_apex() {
        (0.0, 0.0)
    } else {
        (p.r * p.x.cos(), p.r * p.x.sin())
    }
}

/// Interior point of the planar sector mapped back to the cone.
///
/// Returns the apex when the planar point is the origin. The angle of any
/// convex combination of two developed points with base coordinates in
/// `[0, 1]` stays in `[0, 1]`, so the inverse is well defined on geodesic
/// segments; the coordinate is clamped to absorb roundoff at the ends.
fn undevelop(u: f64, v: f64) -> ConePoint {
    let r = u.hypot(v);
    if r == 0.0 {
        return ConePoint::apex();
    }
    let x = v.atan2(u).clamp(0.0, 1.0);
    ConePoint { x, r }
}

/// Point at parameter `s` in `[0, 1]` on the minimizing geodesic from `p`
/// to `q`.
///
/// The geodesic is the straight segment between the developed images; its
/// chord lengths therefore add up exactly to `cone_distance(p, q)`. If the
/// segment passes through the planar origin the crossing parameter maps to
/// the apex, which is the degenerate (apex-crossing) geodesic.
pub fn cone_geodesic(p: &ConePoint, q: &ConePoint, s: f64) -> Result<ConePoint> {
    if !s.is_finite() || !(0.0..=1.0).contains(&s) {
        return Err(Error::NonFinite("geodesic parameter"));
    }
    // Reproduce endpoints exactly rather than through the development
    // round-trip.
    if s == 0.0 {
        return Ok(*p);
    }
    if s == 1.0 {
        return Ok(*q);
    }
    let (u0, v0) = develop(p);
    let (u1, v1) = develop(q);
    let u = (1.0 - s) * u0 + s * u1;
    let v = (1.0 - s) * v0 + s * v1;
    Ok(undevelop(u, v))
}

/// Squared metric norm `r^2 dx^2 + dr^2` of a velocity at a point.
pub fn metric_norm_sq(p: &ConePoint, vel: &ConeVelocity) -> f64 {
    p.r * p.r * vel.dx * vel.dx + vel.dr * vel.dr
}
