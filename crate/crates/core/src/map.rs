//! The collision map on the boundary phase space: specular reflection off
//! circular scatterers on the torus, with its inverse (via time reversal),
//! analytic derivative, and the cone-field and invariant-measure identities
//! used as correctness oracles.
//!
//! Coordinates: a phase point is (scatterer, r, phi) with r the clockwise
//! arc length from the scatterer's positive-x point and phi in
//! [-pi/2, pi/2] the angle from the outward normal to the outgoing
//! velocity, positive toward the (clockwise) tangent. In these coordinates
//! the boundary angle is psi = -r/rho, the derivative of the map is the
//! standard dispersing-billiard matrix in (tau, curvatures, cos phi), and
//! det DT = cos phi / cos phi', which is the preservation of the smooth
//! measure cos phi dr dphi.

use crate::table::{RayError, Table, Vec2};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

/// Collisions with |cos phi'| below this are flagged as grazing; orbits
/// through them are excluded from derivative-based statistics.
pub const GRAZING_COS_TOL: f64 = 1e-8;

/// Sampled tau_max from the certification sweep is a lower bound of the
/// true supremum; flight-bound assertions allow this much headroom.
pub const TAU_SCAN_SLACK: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("invalid phase point: {0}")]
    InvalidPoint(String),
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error("derivative at a grazing collision: cos phi' = {cos_phi_next:.3e}")]
    GrazingDerivative { cos_phi_next: f64 },
}

/// Failure of an orbit computation, with the index of the failing step.
#[derive(Debug, Error, PartialEq)]
#[error("orbit failed at step {index}: {source}")]
pub struct OrbitError {
    pub index: usize,
    pub source: MapError,
}

/// Collision coordinate: scatterer index, arc position, outgoing angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub scatterer: usize,
    pub r: f64,
    pub phi: f64,
}

impl PhasePoint {
    pub fn new(scatterer: usize, r: f64, phi: f64) -> Self {
        Self { scatterer, r, phi }
    }

    /// Time reversal I(r, phi) = (r, -phi).
    pub fn reversed(self) -> Self {
        Self {
            phi: -self.phi,
            ..self
        }
    }
}

/// Outcome of one collision step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionResult {
    pub next: PhasePoint,
    pub tau: f64,
    /// Lattice translate of the scatterer copy hit by the underlying ray;
    /// together with `next.scatterer` this identifies the continuity
    /// branch of the map.
    pub shift: (i64, i64),
    /// Set when |cos phi'| < the grazing tolerance.
    pub grazing: bool,
}

/// Tangent vector at a phase point, in (dr, dphi) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub dr: f64,
    pub dphi: f64,
}

impl TangentVector {
    pub fn new(dr: f64, dphi: f64) -> Self {
        Self { dr, dphi }
    }

    pub fn slope(self) -> f64 {
        self.dphi / self.dr
    }

    pub fn norm(self) -> f64 {
        (self.dr * self.dr + self.dphi * self.dphi).sqrt()
    }
}

/// Closed slope band [lo, hi] defining a cone dphi/dr in the band.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConeBand {
    pub lo: f64,
    pub hi: f64,
}

impl ConeBand {
    pub fn contains(&self, slope: f64) -> bool {
        (self.lo..=self.hi).contains(&slope)
    }

    /// Distance of a slope from the nearest band edge; positive inside.
    pub fn margin(&self, slope: f64) -> f64 {
        (slope - self.lo).min(self.hi - slope)
    }
}

/// The global unstable cone: slopes in [k_min, k_max + 1/tau_min], dr > 0.
pub fn unstable_cone(table: &Table) -> ConeBand {
    let d = table.derived();
    ConeBand {
        lo: d.k_min,
        hi: d.k_max + 1.0 / d.tau_min,
    }
}

/// The stable cone is the time reversal of the unstable one.
pub fn stable_cone(table: &Table) -> ConeBand {
    let u = unstable_cone(table);
    ConeBand {
        lo: -u.hi,
        hi: -u.lo,
    }
}

/// 2x2 real matrix acting on tangent vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn apply(&self, v: TangentVector) -> TangentVector {
        TangentVector {
            dr: self.0[0][0] * v.dr + self.0[0][1] * v.dphi,
            dphi: self.0[1][0] * v.dr + self.0[1][1] * v.dphi,
        }
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j];
            }
        }
        Mat2(out)
    }
}

fn check_point(table: &Table, x: PhasePoint) -> Result<(), MapError> {
    if x.scatterer >= table.scatterers().len() {
        return Err(MapError::InvalidPoint(format!(
            "scatterer {} out of range",
            x.scatterer
        )));
    }
    if !x.r.is_finite() || !x.phi.is_finite() {
        return Err(MapError::InvalidPoint(format!(
            "non-finite coordinates ({}, {})",
            x.r, x.phi
        )));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    if x.phi.abs() > half_pi + 1e-12 {
        return Err(MapError::InvalidPoint(format!(
            "phi {} outside [-pi/2, pi/2]",
            x.phi
        )));
    }
    Ok(())
}

/// Position, outward normal, clockwise tangent, and unit velocity of a
/// phase point.
pub fn unit_velocity(table: &Table, x: PhasePoint) -> (Vec2, Vec2) {
    let (pos, normal) = table.boundary_point(x.scatterer, x.r);
    let tangent = Vec2::new(normal.y, -normal.x);
    let dir = normal * x.phi.cos() + tangent * x.phi.sin();
    (pos, dir)
}

/// One application of the collision map.
pub fn step(table: &Table, x: PhasePoint) -> Result<CollisionResult, MapError> {
    check_point(table, x)?;
    let (pos, dir) = unit_velocity(table, x);
    let hit = table.first_hit(pos, dir, Some(x.scatterer))?;
    let disk = &table.scatterers()[hit.disk];
    let copy_center = disk.center + Vec2::new(hit.shift.0 as f64, hit.shift.1 as f64);
    let normal = (hit.point - copy_center) / disk.radius;
    let tangent = Vec2::new(normal.y, -normal.x);
    let reflected = dir - normal * (2.0 * dir.dot(normal));
    let cos_phi_next = reflected.dot(normal);
    let phi_next = reflected
        .dot(tangent)
        .atan2(cos_phi_next)
        .clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let r_next = table.arc_of_point(hit.disk, hit.shift, hit.point);
    Ok(CollisionResult {
        next: PhasePoint::new(hit.disk, r_next, phi_next),
        tau: hit.t,
        shift: hit.shift,
        grazing: cos_phi_next.abs() < GRAZING_COS_TOL,
    })
}

/// One application of the inverse map, as I compose step compose I.
pub fn step_inverse(table: &Table, x: PhasePoint) -> Result<CollisionResult, MapError> {
    let back = step(table, x.reversed())?;
    Ok(CollisionResult {
        next: back.next.reversed(),
        tau: back.tau,
        shift: back.shift,
        grazing: back.grazing,
    })
}

/// The analytic derivative of the map at `x`, with the collision it
/// belongs to. In (dr, dphi) coordinates,
///
/// DT = -1/cos phi' * | tau k + cos phi                   tau            |
///                    | tau k k' + k' cos phi + k cos phi'  tau k' + cos phi' |
///
/// with k, k' the curvatures at the point and its image.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeReport {
    pub matrix: Mat2,
    pub collision: CollisionResult,
    pub cos_phi: f64,
    pub cos_phi_next: f64,
}

pub fn derivative(table: &Table, x: PhasePoint) -> Result<DerivativeReport, MapError> {
    let collision = step(table, x)?;
    let cos_phi = x.phi.cos();
    let cos_phi_next = collision.next.phi.cos();
    if cos_phi_next < GRAZING_COS_TOL {
        return Err(MapError::GrazingDerivative { cos_phi_next });
    }
    let k = table.curvature(x.scatterer);
    let k_next = table.curvature(collision.next.scatterer);
    let tau = collision.tau;
    let s = -1.0 / cos_phi_next;
    let matrix = Mat2([
        [s * (tau * k + cos_phi), s * tau],
        [
            s * (tau * k * k_next + k_next * cos_phi + k * cos_phi_next),
            s * (tau * k_next + cos_phi_next),
        ],
    ]);
    Ok(DerivativeReport {
        matrix,
        collision,
        cos_phi,
        cos_phi_next,
    })
}

/// An orbit segment: n+1 phase points and the n flights between them.
#[derive(Debug, Clone, Serialize)]
pub struct Orbit {
    pub points: Vec<PhasePoint>,
    pub flights: Vec<f64>,
}

pub fn orbit(table: &Table, x: PhasePoint, n: usize) -> Result<Orbit, OrbitError> {
    let mut points = Vec::with_capacity(n + 1);
    let mut flights = Vec::with_capacity(n);
    points.push(x);
    let mut current = x;
    for index in 0..n {
        let c = step(table, current).map_err(|source| OrbitError { index, source })?;
        current = c.next;
        points.push(current);
        flights.push(c.tau);
    }
    Ok(Orbit { points, flights })
}

/// Draws a phase point from the smooth invariant law cos phi dr dphi:
/// arc length uniform over the total boundary, phi = arcsin(2u - 1).
pub fn sample_phase_point<R: Rng>(table: &Table, rng: &mut R) -> PhasePoint {
    let total = table.total_boundary_length();
    let mut pick = rng.random_range(0.0..total);
    let mut scatterer = 0;
    while pick >= table.perimeter(scatterer) && scatterer + 1 < table.scatterers().len() {
        pick -= table.perimeter(scatterer);
        scatterer += 1;
    }
    let u: f64 = rng.random();
    PhasePoint::new(scatterer, pick, (2.0 * u - 1.0).asin())
}
