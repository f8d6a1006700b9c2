//! Centralized numeric tolerances and fixed test thresholds.
//!
//! Every tolerance that an estimator or validator cites lives here, so that
//! reports can name the threshold they were judged against.

/// Corridor gaps narrower than this are rejected (conservative toward a
/// finite-horizon verdict).
pub const CORRIDOR_GAP_TOL: f64 = 1e-12;

/// Ray–circle discriminants with absolute value below this are treated as
/// grazing and surfaced as `NumericalDegeneracy`.
pub const GRAZING_DISCRIMINANT: f64 = 1e-14;

/// Minimum admissible flight parameter; excludes the departure root of the
/// quadratic on the source scatterer.
pub const MIN_FLIGHT_PARAM: f64 = 1e-12;

/// Default cap on traversed cells per free flight before `HorizonEscape`.
pub const DEFAULT_MAX_CELLS: u64 = 1_000_000;

/// Ensemble runs abort when more than this fraction of trajectories is
/// dropped for numerical degeneracy.
pub const MAX_DROP_FRACTION: f64 = 1e-4;

/// Column sums of an Ulam transfer matrix must match 1 to this accuracy.
pub const STOCHASTICITY_TOL: f64 = 1e-10;

/// Tower columns with relative base measure below this are discarded during
/// truncation accounting.
pub const TOWER_MASS_FLOOR: f64 = 1e-10;

/// `build_tower` fails when the truncated tail mass exceeds this bound.
pub const TOWER_TRUNCATION_MAX: f64 = 1e-6;

/// Leading-eigenvalue iteration convergence target.
pub const EIGEN_TOL: f64 = 1e-13;

/// Fitted quadratic variance below this is reported as a coboundary
/// (`DegenerateVariance`).
pub const DEGENERATE_VARIANCE: f64 = 1e-4;

/// Default truncation-ledger bound for exact heavy-tail convolutions.
pub const PMF_TRUNCATION_DEFAULT: f64 = 1e-10;

/// Quadrature target for characteristic-function integrals.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// KS p-values below this fail a normality check.
pub const KS_P_MIN: f64 = 1e-3;

/// Standardized third/fourth moment z-scores above this fail a normality
/// check.
pub const MOMENT_Z_MAX: f64 = 6.0;

/// Pairwise recurrence-correlation ratio must stay below this bound.
pub const LAMPERTI_RATIO_MAX: f64 = 4.0;

/// |κ| threshold above which tail statistics (histogram fits, successive
/// flight conditioning) are collected.
pub const TAIL_MIN_KAPPA: f64 = 8.0;
