//! A laboratory for the planar Lorentz process.
//!
//! The crate simulates point particles bouncing elastically among a
//! ℤ²-periodic array of disjoint circular scatterers, lifted from the unit
//! torus to the plane, and turns large collision ensembles into verdicts on
//! the classical limit theorems for that process:
//!
//! - [`geometry`] — scatterer configurations, corridor enumeration and
//!   horizon classification (finite / infinite / parallel-only);
//! - [`dynamics`] — the exact event-driven billiard map on the lifted
//!   lattice, producing per-collision free-flight data (ψ, κ, path length);
//! - [`sampling`] — invariant-measure sampling on the collision space and
//!   reproducible parallel Birkhoff-sum ensembles;
//! - [`stats`] — CLT / local-CLT / superdiffusive-scaling checks, free-flight
//!   tail fits, recurrence statistics and lattice-minimality evidence;
//! - [`rw_oracle`] — exact lattice random-walk distributions, the classical
//!   four-term characteristic-function decomposition of the local CLT, and a
//!   heavy-tailed i.i.d. comparison model;
//! - [`tower`] — a first-return tower over an expanding interval map with an
//!   Ulam-discretized transfer operator, weighted norms and leading-eigenvalue
//!   perturbation fits.

pub mod dynamics;
pub mod geometry;
pub mod numerics;
pub mod rw_oracle;
pub mod sampling;
pub mod stats;
pub mod tolerances;
pub mod tower;
pub mod vec2;

pub use vec2::V2;
