//! Coordinate systems and angular distance measures.
//!
//! Scan locations live on a plate in Cartesian millimetre coordinates; the
//! wave-propagation models work in polar coordinates about the source. Angular
//! kernels need distances that respect wrap-around (359 degrees is close to
//! 1 degree), which is what the chordal and geodesic measures provide.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// A location on the plate in Cartesian coordinates (mm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A location in polar coordinates about a source: radius `rho >= 0` (mm) and
/// angle `theta` normalized into `[0, 2*pi)` at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarPoint {
    rho: f64,
    theta: f64,
}

impl PolarPoint {
    /// Builds a polar point, normalizing the angle. Rejects negative or
    /// non-finite radii.
    pub fn new(rho: f64, theta: f64) -> Result<Self> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::Domain(format!("polar radius must be >= 0, got {rho}")));
        }
        if !theta.is_finite() {
            return Err(Error::Domain(format!("polar angle must be finite, got {theta}")));
        }
        Ok(Self {
            rho,
            theta: normalize_angle(theta),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Wraps an angle into `[0, 2*pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid of a tiny negative can round up to exactly 2*pi.
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Converts a Cartesian point to polar coordinates about `origin`.
///
/// A point coincident with the origin maps to `(rho = 0, theta = 0)`.
pub fn cart_to_polar(p: CartesianPoint, origin: CartesianPoint) -> PolarPoint {
    let dx = p.x - origin.x;
    let dy = p.y - origin.y;
    let rho = dx.hypot(dy);
    let theta = if rho == 0.0 { 0.0 } else { dy.atan2(dx) };
    PolarPoint {
        rho,
        theta: normalize_angle(theta),
    }
}

/// Converts a polar point back to Cartesian coordinates about `origin`.
pub fn polar_to_cart(p: PolarPoint, origin: CartesianPoint) -> CartesianPoint {
    CartesianPoint {
        x: origin.x + p.rho * p.theta.cos(),
        y: origin.y + p.rho * p.theta.sin(),
    }
}

/// Chordal distance `d1 = |2 sin((theta - theta') / 2)|`, in `[0, 2]`.
///
/// The absolute value keeps the measure nonnegative for any argument order.
pub fn chordal_distance(theta: f64, theta2: f64) -> f64 {
    (2.0 * ((theta - theta2) / 2.0).sin()).abs()
}

/// Geodesic (arc) distance `d2 = arccos(cos(theta - theta'))`, in `[0, pi]`.
pub fn geodesic_distance(theta: f64, theta2: f64) -> f64 {
    (theta - theta2).cos().clamp(-1.0, 1.0).acos()
}

/// Geodesic distance evaluated on angles scaled by `2n`, collapsing points
/// separated by a symmetry period: `arccos(cos(2n (theta - theta')))`.
///
/// `n` is the number of symmetry axes and must be at least 1.
pub fn modified_geodesic_distance(theta: f64, theta2: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidHyper {
            name: "n_sym".into(),
            reason: "symmetry count must be >= 1".into(),
        });
    }
    let scale = 2.0 * f64::from(n);
    Ok((scale * (theta - theta2)).cos().clamp(-1.0, 1.0).acos())
}

/// A scan location carrying both coordinate representations, so kernels can
/// pull whichever component they consume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub cart: CartesianPoint,
    pub polar: PolarPoint,
}

impl Location {
    pub fn from_cartesian(cart: CartesianPoint, origin: CartesianPoint) -> Self {
        Self {
            cart,
            polar: cart_to_polar(cart, origin),
        }
    }

    pub fn from_polar(polar: PolarPoint, origin: CartesianPoint) -> Self {
        Self {
            cart: polar_to_cart(polar, origin),
            polar,
        }
    }

    pub fn rho(&self) -> f64 {
        self.polar.rho()
    }

    pub fn theta(&self) -> f64 {
        self.polar.theta()
    }
}
