//! Exact event-driven billiard map on the ℤ²-lifted scatterer lattice.
//!
//! Phase points live on outgoing collision states `(scatterer, θ, φ)` plus
//! the integer translate of the scatterer copy, so planar positions are
//! reconstructed exactly as `center + lift + r·(cos θ, sin θ)` and never
//! accumulate floating drift. Free flights are traced cell by cell through
//! the lift (integer grid walking) and resolved against the ≤ 9·s disk
//! copies near each visited cell.

use crate::geometry::ScattererLattice;
use crate::tolerances::{DEFAULT_MAX_CELLS, GRAZING_DISCRIMINANT, MIN_FLIGHT_PARAM};
use crate::vec2::{v2, V2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Outgoing boundary phase point: position angle `theta` on the scatterer
/// circle, velocity direction `phi` (global frame, `|v| = 1` by
/// construction), and the integer translate of the scatterer copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub scatterer: usize,
    pub theta: f64,
    pub phi: f64,
    pub lift: [i64; 2],
}

impl PhasePoint {
    /// Planar position `q̃` of the collision point.
    pub fn position(&self, lattice: &ScattererLattice) -> V2 {
        let s = lattice.scatterers()[self.scatterer];
        s.center + v2(self.lift[0] as f64, self.lift[1] as f64)
            + V2::from_angle(self.theta) * s.radius
    }

    /// Cell index ι of the current position.
    pub fn lift_cell(&self, lattice: &ScattererLattice) -> [i64; 2] {
        lattice.cell_index(self.position(lattice))
    }

    pub fn velocity(&self) -> V2 {
        V2::from_angle(self.phi)
    }

    /// Velocity direction relative to the outward normal, in `(−π, π]`.
    pub fn angle_from_normal(&self) -> f64 {
        let mut a = self.phi - self.theta;
        while a > std::f64::consts::PI {
            a -= std::f64::consts::TAU;
        }
        while a <= -std::f64::consts::PI {
            a += std::f64::consts::TAU;
        }
        a
    }

    /// Time-reversal involution: reflect the velocity about the tangent line
    /// and reverse it. Conjugates the billiard map to its inverse.
    pub fn time_reverse(&self) -> PhasePoint {
        let n = V2::from_angle(self.theta);
        let p = self.velocity();
        let w = n * (2.0 * p.dot(n)) - p;
        PhasePoint { phi: w.angle(), ..*self }
    }
}

/// One collision step: the planar displacement ψ, the integer cell
/// displacement κ = ι(Tx̃) − ι(x̃), and the flight length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlightRecord {
    pub psi: V2,
    pub kappa: [i64; 2],
    pub path_length: f64,
    pub merged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("no collision within {max_cells} traversed cells")]
    HorizonEscape { max_cells: u64 },
    #[error("grazing collision: discriminant {discriminant:.3e} within tolerance of zero")]
    NumericalDegeneracy { discriminant: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("orbit failed at step {step}: {source}")]
pub struct OrbitError {
    pub step: u64,
    pub source: DynamicsError,
}

/// Next collision with the default cell-walk cap.
pub fn next_collision(
    lattice: &ScattererLattice,
    x: &PhasePoint,
) -> Result<(PhasePoint, FlightRecord), DynamicsError> {
    next_collision_capped(lattice, x, DEFAULT_MAX_CELLS)
}

/// Traces the outgoing ray to its first scatterer intersection and applies
/// specular reflection. Tangential candidates (ray–circle discriminant within
/// `GRAZING_DISCRIMINANT` of zero) that would precede the first clean hit
/// surface as `NumericalDegeneracy`.
pub fn next_collision_capped(
    lattice: &ScattererLattice,
    x: &PhasePoint,
    max_cells: u64,
) -> Result<(PhasePoint, FlightRecord), DynamicsError> {
    let source = lattice.scatterers()[x.scatterer];
    // Work in the frame translated by -lift; all geometry is ℤ²-periodic.
    let p0 = source.center + V2::from_angle(x.theta) * source.radius;
    let v = x.velocity();

    let mut best_t = f64::INFINITY;
    let mut best_hit: Option<(usize, V2)> = None;
    let mut graze_t = f64::INFINITY;
    let mut graze_disc = 0.0;

    let mut gx = p0.x.floor() as i64;
    let mut gy = p0.y.floor() as i64;
    let (step_x, mut t_max_x, t_delta_x) = axis_walk(p0.x, gx, v.x);
    let (step_y, mut t_max_y, t_delta_y) = axis_walk(p0.y, gy, v.y);

    let candidates = lattice.cell_candidates();
    let scatterers = lattice.scatterers();
    let mut cells: u64 = 0;
    loop {
        let cell = v2(gx as f64, gy as f64);
        for &(idx, base) in candidates {
            let center = base + cell;
            let d = p0 - center;
            let r = scatterers[idx].radius;
            let b = d.dot(v);
            if b >= 0.0 && d.norm_sq() > r * r {
                continue; // receding from this copy
            }
            let disc = b * b - (d.norm_sq() - r * r);
            if disc >= GRAZING_DISCRIMINANT {
                let t = -b - disc.sqrt();
                if t > MIN_FLIGHT_PARAM && t < best_t {
                    best_t = t;
                    best_hit = Some((idx, center));
                }
            } else if disc > -GRAZING_DISCRIMINANT {
                let t = -b;
                if t > MIN_FLIGHT_PARAM && t < graze_t {
                    graze_t = t;
                    graze_disc = disc;
                }
            }
        }
        let t_next = t_max_x.min(t_max_y);
        if t_next > best_t.min(graze_t) {
            break;
        }
        if t_max_x < t_max_y {
            gx += step_x;
            t_max_x += t_delta_x;
        } else {
            gy += step_y;
            t_max_y += t_delta_y;
        }
        cells += 1;
        if cells > max_cells {
            return Err(DynamicsError::HorizonEscape { max_cells });
        }
    }

    if graze_t < best_t {
        return Err(DynamicsError::NumericalDegeneracy { discriminant: graze_disc });
    }
    let (idx, center) = match best_hit {
        Some(h) => h,
        None => return Err(DynamicsError::HorizonEscape { max_cells }),
    };

    let radius = scatterers[idx].radius;
    let theta = (p0 + v * best_t - center).angle();
    let normal = V2::from_angle(theta);
    let reflected = v - normal * (2.0 * v.dot(normal));
    // Snap the hit point onto the circle before deriving ψ and κ; the stored
    // state is exact-on-circle by construction.
    let hit = center + normal * radius;
    let psi = hit - p0;
    let translate = [
        (center.x - scatterers[idx].center.x).round() as i64,
        (center.y - scatterers[idx].center.y).round() as i64,
    ];
    let old_cell = lattice.cell_index(p0);
    let new_cell = lattice.cell_index(hit);
    let next = PhasePoint {
        scatterer: idx,
        theta,
        phi: reflected.angle(),
        lift: [x.lift[0] + translate[0], x.lift[1] + translate[1]],
    };
    let record = FlightRecord {
        psi,
        kappa: [new_cell[0] - old_cell[0], new_cell[1] - old_cell[1]],
        path_length: psi.norm(),
        merged: false,
    };
    Ok((next, record))
}

fn axis_walk(p: f64, g: i64, v: f64) -> (i64, f64, f64) {
    if v > 0.0 {
        (1, ((g + 1) as f64 - p) / v, 1.0 / v)
    } else if v < 0.0 {
        (-1, (g as f64 - p) / v, -1.0 / v)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// `n` consecutive collisions. The cumulative κ equals the difference of the
/// first and last cell indices.
pub fn billiard_orbit(
    lattice: &ScattererLattice,
    x0: &PhasePoint,
    n: u64,
) -> Result<Vec<(PhasePoint, FlightRecord)>, OrbitError> {
    let mut out = Vec::with_capacity(n as usize);
    let mut x = *x0;
    for step in 0..n {
        let (next, rec) =
            next_collision(lattice, &x).map_err(|source| OrbitError { step, source })?;
        out.push((next, rec));
        x = next;
    }
    Ok(out)
}

/// Section change for sliding corridor flights: when a short hop
/// (`path_length < threshold`, cell displacement at most one) is immediately
/// followed by a long crossing (`|κ|_∞ ≥ 2`), the two flights merge into a
/// single record with summed ψ and κ.
pub fn merged_step(
    lattice: &ScattererLattice,
    x: &PhasePoint,
    threshold: f64,
) -> Result<(PhasePoint, FlightRecord), DynamicsError> {
    let (x1, rec1) = next_collision(lattice, x)?;
    if rec1.path_length >= threshold || rec1.kappa[0].abs().max(rec1.kappa[1].abs()) > 1 {
        return Ok((x1, rec1));
    }
    let (x2, rec2) = next_collision(lattice, &x1)?;
    if rec2.kappa[0].abs().max(rec2.kappa[1].abs()) < 2 {
        return Ok((x1, rec1));
    }
    let psi = rec1.psi + rec2.psi;
    let record = FlightRecord {
        psi,
        kappa: [rec1.kappa[0] + rec2.kappa[0], rec1.kappa[1] + rec2.kappa[1]],
        path_length: psi.norm(),
        merged: true,
    };
    Ok((x2, record))
}
