//! Periodic scatterer configurations on the unit torus, corridor enumeration
//! and horizon classification.
//!
//! A configuration is a finite set of disjoint closed disks in the unit cell,
//! repeated over ℤ². A *corridor* is a maximal open strip in the plane,
//! parallel to a primitive lattice direction, that meets no scatterer; its
//! existence decides whether free flights are bounded (finite horizon) or not.

use crate::tolerances::CORRIDOR_GAP_TOL;
use crate::vec2::{v2, V2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scatterer {
    pub center: V2,
    pub radius: f64,
}

/// Validated periodic configuration: disjoint disks plus the translation of
/// the fundamental cell used for cell-index bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScattererLattice {
    scatterers: Vec<Scatterer>,
    cell_offset: V2,
    /// Disk copies `center + offset` for offsets in the 3×3 block; every disk
    /// meeting a unit cell appears here relative to that cell.
    #[serde(skip)]
    candidates: Vec<(usize, V2)>,
    min_radius: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("configuration has no scatterers")]
    EmptyConfig,
    #[error("scatterer {index} has non-positive radius {radius}")]
    NonPositiveRadius { index: usize, radius: f64 },
    #[error("scatterers {first} and {second} overlap (periodic distance {distance:.6} ≤ radii sum {radii_sum:.6})")]
    OverlappingScatterers { first: usize, second: usize, distance: f64, radii_sum: f64 },
    #[error("scatterer {index} touches the cell boundary (clearance {clearance:.3e})")]
    BoundaryTouchesCell { index: usize, clearance: f64 },
    #[error("horizon is finite: no corridor geometry to report")]
    FiniteHorizon,
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOpts {
    /// Require every scatterer boundary to stay clear of the translated cell
    /// boundary. Finite-horizon configurations can never satisfy this (their
    /// axis projections cover the circle), so drivers targeting them opt out.
    pub require_clear_cell_boundary: bool,
}

impl Default for ValidateOpts {
    fn default() -> Self {
        ValidateOpts { require_clear_cell_boundary: true }
    }
}

fn fract(x: f64) -> f64 {
    x - x.floor()
}

/// Distance from a coordinate to the nearest integer-translated line family
/// `offset + ℤ`.
fn dist_to_lines(x: f64, offset: f64) -> f64 {
    let f = fract(x - offset);
    f.min(1.0 - f)
}

/// Translation of the cell maximizing the minimum clearance between
/// scatterer boundaries and cell lines. The objective separates per axis, so
/// each coordinate is optimized independently (coarse grid, then refinement).
pub fn auto_cell_offset(scatterers: &[Scatterer]) -> V2 {
    let best_axis = |coord: &dyn Fn(&Scatterer) -> f64| -> f64 {
        let clearance = |o: f64| {
            scatterers
                .iter()
                .map(|s| dist_to_lines(coord(s), o) - s.radius)
                .fold(f64::INFINITY, f64::min)
        };
        let mut best = 0.0;
        let mut best_val = clearance(0.0);
        for i in 0..64 {
            let o = i as f64 / 64.0;
            let val = clearance(o);
            if val > best_val {
                best_val = val;
                best = o;
            }
        }
        let mut step = 1.0 / 64.0;
        for _ in 0..20 {
            step *= 0.5;
            for cand in [best - step, best + step] {
                let c = fract(cand);
                let val = clearance(c);
                if val > best_val {
                    best_val = val;
                    best = c;
                }
            }
        }
        best
    };
    v2(best_axis(&|s| s.center.x), best_axis(&|s| s.center.y))
}

/// Validates a raw configuration: positive radii, pairwise disjointness under
/// the torus metric (against all periodic images over the 3×3 block) and,
/// unless opted out, clearance from the cell boundary. Centers are folded
/// into `[0,1)²`; a missing `cell_offset` is chosen automatically.
pub fn validate_config(
    raw: &[(V2, f64)],
    cell_offset: Option<V2>,
    opts: ValidateOpts,
) -> Result<ScattererLattice, GeometryError> {
    if raw.is_empty() {
        return Err(GeometryError::EmptyConfig);
    }
    let mut scatterers = Vec::with_capacity(raw.len());
    for (index, &(center, radius)) in raw.iter().enumerate() {
        if !(radius > 0.0) {
            return Err(GeometryError::NonPositiveRadius { index, radius });
        }
        scatterers.push(Scatterer { center: v2(fract(center.x), fract(center.y)), radius });
    }

    for i in 0..scatterers.len() {
        for j in i..scatterers.len() {
            for ox in -1..=1 {
                for oy in -1..=1 {
                    if i == j && ox == 0 && oy == 0 {
                        continue;
                    }
                    let shift = v2(ox as f64, oy as f64);
                    let distance = (scatterers[j].center + shift - scatterers[i].center).norm();
                    let radii_sum = scatterers[i].radius + scatterers[j].radius;
                    if distance - radii_sum <= CORRIDOR_GAP_TOL {
                        return Err(GeometryError::OverlappingScatterers {
                            first: i,
                            second: j,
                            distance,
                            radii_sum,
                        });
                    }
                }
            }
        }
    }

    let cell_offset = cell_offset.unwrap_or_else(|| auto_cell_offset(&scatterers));
    if opts.require_clear_cell_boundary {
        for (index, s) in scatterers.iter().enumerate() {
            let clearance = (dist_to_lines(s.center.x, cell_offset.x) - s.radius)
                .min(dist_to_lines(s.center.y, cell_offset.y) - s.radius);
            if clearance <= CORRIDOR_GAP_TOL {
                return Err(GeometryError::BoundaryTouchesCell { index, clearance });
            }
        }
    }

    // Keep only copies that actually meet the unit cell; the ray walker
    // tests this list translated to each visited cell.
    let mut candidates = Vec::with_capacity(9 * scatterers.len());
    for (i, s) in scatterers.iter().enumerate() {
        for ox in -1..=1 {
            for oy in -1..=1 {
                let c = s.center + v2(ox as f64, oy as f64);
                let dx = (0.0f64 - c.x).max(c.x - 1.0).max(0.0);
                let dy = (0.0f64 - c.y).max(c.y - 1.0).max(0.0);
                if dx * dx + dy * dy < s.radius * s.radius + 1e-9 {
                    candidates.push((i, c));
                }
            }
        }
    }
    let min_radius = scatterers.iter().map(|s| s.radius).fold(f64::INFINITY, f64::min);
    Ok(ScattererLattice { scatterers, cell_offset, candidates, min_radius })
}

impl ScattererLattice {
    pub fn scatterers(&self) -> &[Scatterer] {
        &self.scatterers
    }

    pub fn cell_offset(&self) -> V2 {
        self.cell_offset
    }

    pub fn min_radius(&self) -> f64 {
        self.min_radius
    }

    /// Disk copies near a unit cell: centers of all lifts that can intersect
    /// the cell at integer translate `g` are `center + g` for the 3×3 block
    /// entries stored here (radii stay below the period).
    pub(crate) fn cell_candidates(&self) -> &[(usize, V2)] {
        &self.candidates
    }

    /// Cell index ι of a planar point: componentwise floor of the point in
    /// offset-translated cell coordinates.
    pub fn cell_index(&self, q: V2) -> [i64; 2] {
        [(q.x - self.cell_offset.x).floor() as i64, (q.y - self.cell_offset.y).floor() as i64]
    }

    /// Rebuilds derived lookup tables after deserialization.
    pub fn rebuild(self) -> Result<ScattererLattice, GeometryError> {
        let raw: Vec<(V2, f64)> = self.scatterers.iter().map(|s| (s.center, s.radius)).collect();
        validate_config(&raw, Some(self.cell_offset), ValidateOpts { require_clear_cell_boundary: false })
    }
}

/// A corridor class modulo lattice translations: the primitive direction, the
/// open-strip width, the anchor of the strip's lower edge along the unit
/// normal (normalized to `[0, 1/|w|)`) and the tangency points bounding it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corridor {
    pub direction: [i64; 2],
    pub width: f64,
    pub anchor: f64,
    pub bounding_points: Vec<BoundingPoint>,
}

/// A point where a strip edge is tangent to a scatterer, folded to the torus.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundingPoint {
    pub scatterer: usize,
    pub point: [f64; 2],
    /// `false` for the lower strip edge (at `anchor`), `true` for the upper.
    pub upper_edge: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum HorizonClass {
    Finite,
    Infinite { corridors: Vec<Corridor> },
    ParallelOnly { direction: [i64; 2], corridors: Vec<Corridor> },
}

impl HorizonClass {
    pub fn tag(&self) -> &'static str {
        match self {
            HorizonClass::Finite => "finite",
            HorizonClass::Infinite { .. } => "infinite",
            HorizonClass::ParallelOnly { .. } => "parallel-only",
        }
    }
}

/// Primitive directions `w` with `|w| < limit`, canonicalized so that
/// `w.x > 0`, or `w = (0, 1)`. Ordered by `|w|²`, then lexicographically.
pub fn primitive_directions(limit: f64) -> Vec<[i64; 2]> {
    let max_c = limit.ceil() as i64;
    let mut dirs = Vec::new();
    for a in 0..=max_c {
        for b in -max_c..=max_c {
            if a == 0 && b != 1 {
                continue;
            }
            if a > 0 || b > 0 {
                let norm_sq = (a * a + b * b) as f64;
                if norm_sq < limit * limit && gcd(a.unsigned_abs(), b.unsigned_abs()) == 1 {
                    dirs.push([a, b]);
                }
            }
        }
    }
    dirs.sort_by_key(|w| (w[0] * w[0] + w[1] * w[1], w[0], w[1]));
    dirs
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Covered arcs and gaps on a circle of circumference `period`.
///
/// Returns maximal uncovered gaps as `(start, length)` with `start`
/// normalized to `[0, period)`; gaps no wider than `CORRIDOR_GAP_TOL` are
/// discarded.
fn circle_gaps(arcs: &[(f64, f64)], period: f64) -> Vec<(f64, f64)> {
    if arcs.is_empty() {
        return vec![(0.0, period)];
    }
    if arcs.iter().any(|&(_, len)| len >= period) {
        return Vec::new();
    }
    // Fold starts into [0, period) and split arcs crossing the seam, so the
    // linear sweep below sees no piece extending past the period.
    let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(arcs.len() + 4);
    for &(s, len) in arcs {
        let s = s.rem_euclid(period);
        if s + len > period {
            pieces.push((s, period - s));
            pieces.push((0.0, s + len - period));
        } else {
            pieces.push((s, len));
        }
    }
    pieces.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pieces.len();
    let mut gaps = Vec::new();
    let (first_start, first_len) = pieces[0];
    let mut covered_end = first_start + first_len;
    for k in 1..=n {
        let (mut start, len) = pieces[k % n];
        if k == n {
            start += period;
        }
        if start > covered_end + CORRIDOR_GAP_TOL {
            gaps.push(((covered_end).rem_euclid(period), start - covered_end));
        }
        covered_end = covered_end.max(start + len);
    }
    gaps
}

/// Enumerates all corridor classes of a validated lattice.
///
/// Lattice lines in a primitive direction `w` are spaced `1/|w|` apart along
/// the unit normal, so once `1/|w| ≤ 2·min radius` every strip is blocked;
/// the search over `|w| < 1/(2·min radius)` is therefore complete. For each
/// remaining direction the scatterer lifts project onto the normal as
/// periodic arcs; every maximal uncovered gap is a corridor.
pub fn find_corridors(lattice: &ScattererLattice) -> Vec<Corridor> {
    let limit = 1.0 / (2.0 * lattice.min_radius());
    let mut corridors = Vec::new();
    for w in primitive_directions(limit) {
        corridors.extend(corridors_in_direction(lattice, w));
    }
    corridors
}

/// Corridors of one primitive direction (empty when the projections cover
/// the normal circle).
pub fn corridors_in_direction(lattice: &ScattererLattice, w: [i64; 2]) -> Vec<Corridor> {
    let wv = v2(w[0] as f64, w[1] as f64);
    let period = 1.0 / wv.norm();
    let normal = wv.perp() * period; // unit normal
    let arcs: Vec<(f64, f64)> = lattice
        .scatterers()
        .iter()
        .map(|s| (s.center.dot(normal) - s.radius, 2.0 * s.radius))
        .collect();
    let mut gaps = circle_gaps(&arcs, period);
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gaps.into_iter()
        .map(|(anchor, width)| {
            let mut bounding_points = Vec::new();
            for (idx, s) in lattice.scatterers().iter().enumerate() {
                let pos = s.center.dot(normal);
                let at_lower = (pos + s.radius - anchor).rem_euclid(period);
                if at_lower < 1e-9 || period - at_lower < 1e-9 {
                    let p = s.center + normal * s.radius;
                    bounding_points.push(BoundingPoint {
                        scatterer: idx,
                        point: [fract(p.x), fract(p.y)],
                        upper_edge: false,
                    });
                }
                let at_upper = (pos - s.radius - (anchor + width)).rem_euclid(period);
                if at_upper < 1e-9 || period - at_upper < 1e-9 {
                    let p = s.center - normal * s.radius;
                    bounding_points.push(BoundingPoint {
                        scatterer: idx,
                        point: [fract(p.x), fract(p.y)],
                        upper_edge: true,
                    });
                }
            }
            Corridor { direction: w, width, anchor, bounding_points }
        })
        .collect()
}

/// Finite iff no corridor exists; parallel-only iff all corridor directions
/// coincide; infinite otherwise.
pub fn classify_horizon(corridors: &[Corridor]) -> HorizonClass {
    if corridors.is_empty() {
        return HorizonClass::Finite;
    }
    let first = corridors[0].direction;
    let parallel = corridors
        .iter()
        .all(|c| c.direction[0] * first[1] - c.direction[1] * first[0] == 0);
    if parallel {
        HorizonClass::ParallelOnly { direction: first, corridors: corridors.to_vec() }
    } else {
        HorizonClass::Infinite { corridors: corridors.to_vec() }
    }
}

/// The finite geometric data attached to an unbounded-horizon configuration:
/// corridor directions, widths and the bounding tangency points with the
/// scatterer curvature there. No closed-form covariance is derived from it;
/// the report supports comparison across configurations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceGeometry {
    pub corridors: Vec<CorridorGeometry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorridorGeometry {
    pub direction: [i64; 2],
    pub width: f64,
    pub anchor: f64,
    pub bounding_points: Vec<BoundingPointGeometry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundingPointGeometry {
    pub scatterer: usize,
    pub point: [f64; 2],
    pub curvature: f64,
    pub upper_edge: bool,
}

pub fn covariance_geometry(
    corridors: &[Corridor],
    lattice: &ScattererLattice,
) -> Result<CovarianceGeometry, GeometryError> {
    if corridors.is_empty() {
        return Err(GeometryError::FiniteHorizon);
    }
    let corridors = corridors
        .iter()
        .map(|c| CorridorGeometry {
            direction: c.direction,
            width: c.width,
            anchor: c.anchor,
            bounding_points: c
                .bounding_points
                .iter()
                .map(|b| BoundingPointGeometry {
                    scatterer: b.scatterer,
                    point: b.point,
                    curvature: 1.0 / lattice.scatterers()[b.scatterer].radius,
                    upper_edge: b.upper_edge,
                })
                .collect(),
        })
        .collect();
    Ok(CovarianceGeometry { corridors })
}

/// On-disk configuration: scatterers as `[center_x, center_y, radius]`
/// triples plus an optional cell offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub scatterers: Vec<[f64; 3]>,
    #[serde(default)]
    pub cell_offset: Option<[f64; 2]>,
    /// Permit scatterers to cross cell-boundary lines. Required for
    /// finite-horizon configurations, where the axis projections necessarily
    /// cover the circle.
    #[serde(default)]
    pub allow_boundary_crossing: bool,
}

impl LatticeConfig {
    pub fn build(&self) -> Result<ScattererLattice, GeometryError> {
        let raw: Vec<(V2, f64)> =
            self.scatterers.iter().map(|s| (v2(s[0], s[1]), s[2])).collect();
        validate_config(
            &raw,
            self.cell_offset.map(V2::from),
            ValidateOpts { require_clear_cell_boundary: !self.allow_boundary_crossing },
        )
    }
}
