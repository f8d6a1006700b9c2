//! Estimators turning collision ensembles into verdicts on the limit
//! theorems: central and local limit checks under diffusive, superdiffusive
//! and anisotropic scalings, free-flight tail fits, successive-flight
//! statistics, the Lamperti recurrence criterion, and lattice-minimality
//! evidence via Smith normal form.

use crate::numerics::{fit_line, ks_distance_sorted, ks_p_value, normal_cdf, LineFit};
use crate::sampling::{CovAcc, PairStats, ReturnStats, TailStats, PAIR_DELTAS};
use crate::tolerances::{KS_P_MIN, MOMENT_Z_MAX, TAIL_MIN_KAPPA};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },
    #[error("bounded |κ|: no heavy tail to analyze")]
    FiniteHorizonNoTail,
}

/// Normalizing sequence for S_n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScalingKind {
    /// √n (finite horizon)
    Diffusive,
    /// √(n log n) (infinite horizon, spanning corridor directions)
    Superdiffusive,
    /// √(n log n) along `w`, √n across (all corridors parallel to `w`)
    Anisotropic { w: [f64; 2] },
}

impl ScalingKind {
    /// Rescales a Birkhoff sum recorded at time n into the limit frame.
    pub fn rescale(&self, s: [f64; 2], n: u64) -> [f64; 2] {
        let nf = n as f64;
        match self {
            ScalingKind::Diffusive => {
                let b = nf.sqrt();
                [s[0] / b, s[1] / b]
            }
            ScalingKind::Superdiffusive => {
                let b = (nf * nf.ln()).sqrt();
                [s[0] / b, s[1] / b]
            }
            ScalingKind::Anisotropic { w } => {
                let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
                let u = (s[0] * w[0] + s[1] * w[1]) / norm;
                let v = (-s[0] * w[1] + s[1] * w[0]) / norm;
                [u / (nf * nf.ln()).sqrt(), v / nf.sqrt()]
            }
        }
    }
}

/// A named threshold comparison; every verdict cites the tolerance it used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// true: pass iff value < threshold; false: pass iff value > threshold
    pub upper_bound: bool,
    pub pass: bool,
}

impl Check {
    pub fn upper(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, upper_bound: true, pass: value < threshold }
    }
    pub fn lower(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check { name: name.into(), value, threshold, upper_bound: false, pass: value > threshold }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltRow {
    pub n: u64,
    /// covariance of the rescaled sums
    pub covariance: [[f64; 2]; 2],
    /// rough confidence radius for the diagonal entries
    pub covariance_se: [f64; 2],
    pub ks_p: [f64; 2],
    pub skew_z: [f64; 2],
    pub excess_kurtosis_z: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltReport {
    pub scaling: ScalingKind,
    pub rows: Vec<CltRow>,
    /// max relative drift of the rescaled covariance trace across the
    /// schedule, measured against the last entry
    pub stability: f64,
    pub checks: Vec<Check>,
}

/// Minimum ensemble size for distribution-level tests.
pub const CLT_MIN_SAMPLES: u64 = 10_000;

/// Rescales S_n by the scaling law, estimates the limit covariance, and runs
/// per-axis KS plus standardized moment checks against the fitted normal.
pub fn clt_check(
    samples_per_n: &[(u64, Vec<[f64; 2]>)],
    scaling: ScalingKind,
    stability_tol: f64,
) -> Result<CltReport, StatsError> {
    for (_, samples) in samples_per_n {
        if (samples.len() as u64) < CLT_MIN_SAMPLES {
            return Err(StatsError::InsufficientSamples {
                needed: CLT_MIN_SAMPLES,
                got: samples.len() as u64,
            });
        }
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut checks = Vec::new();
    for (n, samples) in samples_per_n {
        let rescaled: Vec<[f64; 2]> = samples.iter().map(|&s| scaling.rescale(s, *n)).collect();
        let mut acc = CovAcc::default();
        for z in &rescaled {
            acc.push(z[0], z[1]);
        }
        let cov = acc.covariance();
        traces.push(cov[0][0] + cov[1][1]);
        let m = rescaled.len() as f64;
        let mut ks_p = [0.0; 2];
        let mut skew_z = [0.0; 2];
        let mut kurt_z = [0.0; 2];
        for axis in 0..2 {
            let mean = acc.mean[axis];
            let sigma = cov[axis][axis].sqrt();
            let mut vals: Vec<f64> = rescaled.iter().map(|z| z[axis]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let d = ks_distance_sorted(&vals, |x| normal_cdf((x - mean) / sigma));
            ks_p[axis] = ks_p_value(d, vals.len());
            let (mut m3, mut m4) = (0.0, 0.0);
            for &x in &vals {
                let c = (x - mean) / sigma;
                m3 += c * c * c;
                m4 += c * c * c * c;
            }
            skew_z[axis] = (m3 / m) * (m / 6.0).sqrt();
            kurt_z[axis] = (m4 / m - 3.0) * (m / 24.0).sqrt();
            checks.push(Check::lower(format!("ks_p[n={n},axis={axis}]"), ks_p[axis], KS_P_MIN));
            checks.push(Check::upper(
                format!("|skew_z|[n={n},axis={axis}]"),
                skew_z[axis].abs(),
                MOMENT_Z_MAX,
            ));
            checks.push(Check::upper(
                format!("|kurt_z|[n={n},axis={axis}]"),
                kurt_z[axis].abs(),
                MOMENT_Z_MAX,
            ));
        }
        rows.push(CltRow {
            n: *n,
            covariance: cov,
            covariance_se: [
                cov[0][0] * (2.0 / m).sqrt(),
                cov[1][1] * (2.0 / m).sqrt(),
            ],
            ks_p,
            skew_z,
            excess_kurtosis_z: kurt_z,
        });
    }
    let last = *traces.last().unwrap();
    let stability = traces.iter().map(|t| (t / last - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::upper("covariance stability", stability, stability_tol));
    Ok(CltReport { scaling, rows, stability, checks })
}

/// Max relative drift of the rescaled covariance trace across consecutive
/// schedule entries; the true scaling minimizes it.
///
/// The rescaled samples are winsorized at their own 99% radius before the
/// covariance is taken. Raw second moments of an infinite-variance
/// observable are dominated by the single largest jump in the whole sample
/// and grow with the ensemble size at any fixed n, which would leave the
/// score unable to separate the scalings at accessible n; clipping the 1%
/// tail restores a finite-variance functional of the rescaled law.
pub fn scaling_stability_score(samples_per_n: &[(u64, Vec<[f64; 2]>)], kind: ScalingKind) -> f64 {
    let mut traces = Vec::new();
    for (n, samples) in samples_per_n {
        let mut rescaled: Vec<[f64; 2]> =
            samples.iter().map(|&s| kind.rescale(s, *n)).collect();
        let mut radii: Vec<f64> =
            rescaled.iter().map(|z| (z[0] * z[0] + z[1] * z[1]).sqrt()).collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let clip = radii[(radii.len() - 1) * 99 / 100].max(1e-300);
        let mut acc = CovAcc::default();
        for z in rescaled.iter_mut() {
            let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
            let s = if r > clip { clip / r } else { 1.0 };
            acc.push(z[0] * s, z[1] * s);
        }
        let cov = acc.covariance();
        traces.push(cov[0][0] + cov[1][1]);
    }
    traces
        .windows(2)
        .map(|w| (w[1] / w[0] - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn select_scaling(samples_per_n: &[(u64, Vec<[f64; 2]>)]) -> (ScalingKind, [f64; 2]) {
    let d = scaling_stability_score(samples_per_n, ScalingKind::Diffusive);
    let s = scaling_stability_score(samples_per_n, ScalingKind::Superdiffusive);
    if d <= s {
        (ScalingKind::Diffusive, [d, s])
    } else {
        (ScalingKind::Superdiffusive, [d, s])
    }
}

// ---------------------------------------------------------------------------
// Local limit theorem: point masses
// ---------------------------------------------------------------------------

/// Local-limit normalizer by horizon class (d = 2 throughout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointMassNormalizer {
    /// n (finite horizon)
    FiniteHorizon,
    /// n log n (spanning corridors)
    InfiniteHorizon,
    /// n √(log n) (parallel corridors)
    ParallelOnly,
}

impl PointMassNormalizer {
    pub fn value(&self, n: u64) -> f64 {
        let nf = n as f64;
        match self {
            PointMassNormalizer::FiniteHorizon => nf,
            PointMassNormalizer::InfiniteHorizon => nf * nf.ln(),
            PointMassNormalizer::ParallelOnly => nf * nf.ln().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointMassRow {
    pub n: u64,
    pub k: [i64; 2],
    pub hits: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub p_se: f64,
    pub normalized: f64,
    pub normalized_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointMassReport {
    pub normalizer: PointMassNormalizer,
    pub rows: Vec<PointMassRow>,
    /// max relative drift of the normalized origin estimate across n
    pub stability: Option<f64>,
    pub checks: Vec<Check>,
}

/// Estimates `normalizer(n) · ν̂(S_n = k)` with binomial standard errors.
/// Point masses decay like 1/normalizer, so the ensemble must outnumber the
/// normalizer by a wide margin.
pub fn lclt_pointmass(
    counts: &[(u64, [i64; 2], u64, u64)],
    normalizer: PointMassNormalizer,
    stability_tol: f64,
) -> Result<PointMassReport, StatsError> {
    let mut rows = Vec::new();
    for &(n, k, hits, trials) in counts {
        let needed = (10.0 * normalizer.value(n)).ceil() as u64;
        if trials < needed {
            return Err(StatsError::InsufficientSamples { needed, got: trials });
        }
        let p_hat = hits as f64 / trials as f64;
        let p_se = (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
        let norm = normalizer.value(n);
        rows.push(PointMassRow {
            n,
            k,
            hits,
            trials,
            p_hat,
            p_se,
            normalized: norm * p_hat,
            normalized_se: norm * p_se,
        });
    }
    let origin: Vec<&PointMassRow> = rows.iter().filter(|r| r.k == [0, 0]).collect();
    let mut checks = Vec::new();
    let stability = if origin.len() >= 2 {
        let last = origin.last().unwrap().normalized;
        let s = origin.iter().map(|r| (r.normalized / last - 1.0).abs()).fold(0.0, f64::max);
        checks.push(Check::upper("pointmass stability", s, stability_tol));
        Some(s)
    } else {
        None
    };
    Ok(PointMassReport { normalizer, rows, stability, checks })
}

/// Consistency of a drifting target against the fitted covariance: the ratio
/// `ν̂(S_n = k)/ν̂(S_n = 0)` should approach `exp(−½ kᵀ(nΣ)⁻¹ k)` where Σ is
/// the per-step covariance.
pub fn pointmass_ratio_check(
    row_k: &PointMassRow,
    row_zero: &PointMassRow,
    per_step_cov: [[f64; 2]; 2],
) -> Check {
    assert_eq!(row_k.n, row_zero.n);
    let n = row_k.n as f64;
    let det = per_step_cov[0][0] * per_step_cov[1][1] - per_step_cov[0][1] * per_step_cov[1][0];
    let k = [row_k.k[0] as f64, row_k.k[1] as f64];
    // kᵀ Σ⁻¹ k / n
    let quad = (k[0] * k[0] * per_step_cov[1][1] - 2.0 * k[0] * k[1] * per_step_cov[0][1]
        + k[1] * k[1] * per_step_cov[0][0])
        / det
        / n;
    let expected = (-0.5 * quad).exp();
    let observed = row_k.p_hat / row_zero.p_hat;
    let rel_se = ((row_k.p_se / row_k.p_hat).powi(2) + (row_zero.p_se / row_zero.p_hat).powi(2))
        .sqrt();
    let se = observed * rel_se;
    Check::upper(
        format!("|ratio({:?})/ratio(0) − gaussian|", row_k.k),
        (observed - expected).abs(),
        3.0 * se,
    )
}

// ---------------------------------------------------------------------------
// Tail fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailFitReport {
    pub exponent: f64,
    pub constant: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    /// (u, survival probability) points used by the fit
    pub points: Vec<(f64, f64)>,
}

/// Fits `P(|κ| > u) ≈ C·u^{−α}` by log–log regression. The lower cutoff is
/// chosen by scanning candidate knees and keeping the best-R² window unless
/// an explicit window is forced.
pub fn tail_fit(tail: &TailStats, window: Option<(f64, f64)>) -> Result<TailFitReport, StatsError> {
    let max_kappa = (tail.max_kappa_sq as f64).sqrt();
    if max_kappa <= TAIL_MIN_KAPPA {
        return Err(StatsError::FiniteHorizonNoTail);
    }
    let hist = tail.histogram();
    let total: u64 = hist.iter().map(|&(_, c)| c).sum();
    let survival = |u: f64| -> u64 {
        let u2 = u * u;
        hist.iter().filter(|&&(k2, _)| (k2 as f64) > u2).map(|&(_, c)| c).sum()
    };
    let grid_points = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        let mut u = lo;
        while u <= hi {
            let s = survival(u);
            if s >= 30 {
                pts.push((u, s as f64 / total as f64));
            }
            u *= std::f64::consts::SQRT_2;
        }
        pts
    };
    let fit_window = |pts: &[(f64, f64)]| -> Option<LineFit> {
        if pts.len() < 4 {
            return None;
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        Some(fit_line(&xs, &ys))
    };
    let (points, fit, window) = match window {
        Some((lo, hi)) => {
            let pts = grid_points(lo, hi);
            let fit = fit_window(&pts).ok_or(StatsError::FiniteHorizonNoTail)?;
            (pts, fit, (lo, hi))
        }
        None => {
            let hi = max_kappa;
            let mut best: Option<(Vec<(f64, f64)>, LineFit, (f64, f64))> = None;
            for lo in [4.0, 5.66, 8.0, 11.3, 16.0, 22.6, 32.0] {
                let pts = grid_points(lo, hi);
                if let Some(fit) = fit_window(&pts) {
                    if best.as_ref().map_or(true, |b| fit.r_squared > b.1.r_squared) {
                        best = Some((pts, fit, (lo, hi)));
                    }
                }
            }
            best.ok_or(StatsError::FiniteHorizonNoTail)?
        }
    };
    Ok(TailFitReport {
        exponent: -fit.slope,
        constant: fit.intercept.exp(),
        r_squared: fit.r_squared,
        window,
        points,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncatedVarianceReport {
    /// (x, Var(κ 1_{|κ|≤x})) over the dyadic grid
    pub points: Vec<(f64, f64)>,
    pub fit: LineFitOut,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LineFitOut {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl From<LineFit> for LineFitOut {
    fn from(f: LineFit) -> Self {
        LineFitOut { slope: f.slope, intercept: f.intercept, r_squared: f.r_squared }
    }
}

/// Regression of the truncated variance `Var(κ·1{|κ| ≤ x})` on `log x` over
/// the dyadic grid `x = 2^j`, `j ∈ [lo_log2, hi_log2]`. Total variance
/// (trace) of the 2-vector observable.
pub fn truncated_variance_curve(
    tail: &TailStats,
    lo_log2: usize,
    hi_log2: usize,
) -> Result<TruncatedVarianceReport, StatsError> {
    if (tail.max_kappa_sq as f64) < 4f64.powi(lo_log2 as i32) {
        return Err(StatsError::FiniteHorizonNoTail);
    }
    let mut points = Vec::new();
    for j in lo_log2..=hi_log2 {
        let t = tail.truncated(j);
        if t.count == 0 {
            continue;
        }
        let n = t.count as f64;
        let mean = [t.sum_x as f64 / n, t.sum_y as f64 / n];
        let var = t.sum_sq as f64 / n - mean[0] * mean[0] - mean[1] * mean[1];
        points.push(((1u64 << j) as f64, var));
    }
    if points.len() < 3 {
        return Err(StatsError::FiniteHorizonNoTail);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = fit_line(&xs, &ys);
    Ok(TruncatedVarianceReport { points, fit: fit.into() })
}

// ---------------------------------------------------------------------------
// Successive flights
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub delta: f64,
    /// (u, conditional exceedance probability, events)
    pub points: Vec<(f64, f64, u64)>,
    pub slope_vs_log_u: f64,
    pub decreasing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlightEnvelope {
    /// min |κ∘T| / √|κ| over large-|κ| events
    pub c_lower: f64,
    /// max |κ∘T| / |κ|² over large-|κ| events
    pub c_upper: f64,
    pub events: u64,
}

/// Envelope constants and conditional exceedance curves over large-|κ|
/// steps. Fails on bounded-|κ| data.
pub fn successive_envelope_and_exceedance(
    pairs: &PairStats,
) -> Result<(FlightEnvelope, Vec<ExceedanceCurve>), StatsError> {
    if pairs.envelope_events == 0 {
        return Err(StatsError::FiniteHorizonNoTail);
    }
    let envelope = FlightEnvelope {
        c_lower: pairs.envelope_lo,
        c_upper: pairs.envelope_hi,
        events: pairs.envelope_events,
    };
    let mut curves = Vec::new();
    for (di, &delta) in PAIR_DELTAS.iter().enumerate() {
        let mut points = Vec::new();
        for (j, bin) in pairs.bins.iter().enumerate() {
            if bin.count >= 30 {
                // events in this bin have 2^{j−1} < |κ| ≤ 2^j
                let u = 2f64.powi(j as i32) / std::f64::consts::SQRT_2;
                points.push((u, bin.exceed[di] as f64 / bin.count as f64, bin.count));
            }
        }
        let (slope, decreasing) = if points.len() >= 3 {
            let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
            let fit = fit_line(&xs, &ys);
            (fit.slope, fit.slope < 0.0 && points.last().unwrap().1 < points[0].1)
        } else {
            (f64::NAN, false)
        };
        curves.push(ExceedanceCurve { delta, points, slope_vs_log_u: slope, decreasing });
    }
    Ok((envelope, curves))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DotConvergenceReport {
    /// running estimate of E[κ·(κ∘T)] at dyadic trajectory counts
    pub estimates: Vec<(u64, f64)>,
    /// consecutive absolute differences
    pub diffs: Vec<f64>,
    pub converged: bool,
}

/// Cauchy-criterion convergence of the autocorrelation `E[κ·(κ∘T)]` over
/// dyadic prefixes of the trajectory list.
pub fn dot_convergence(pairs: &PairStats) -> DotConvergenceReport {
    let mut estimates = Vec::new();
    let mut cum_count: i64 = 0;
    let mut cum_sum: i128 = 0;
    let mut next = 1;
    for (i, &(count, sum)) in pairs.dot_sums.iter().enumerate() {
        cum_count += count;
        cum_sum += sum;
        if i + 1 == next || i + 1 == pairs.dot_sums.len() {
            if cum_count > 0 {
                estimates.push(((i + 1) as u64, cum_sum as f64 / cum_count as f64));
            }
            next *= 2;
        }
    }
    let diffs: Vec<f64> =
        estimates.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let converged = match (diffs.first(), diffs.last(), estimates.last()) {
        (Some(&first), Some(&last), Some(&(_, m))) => {
            last <= first.max(1e-12) && last < 0.1 * (1.0 + m.abs())
        }
        _ => false,
    };
    DotConvergenceReport { estimates, diffs, converged }
}

// ---------------------------------------------------------------------------
// Lamperti recurrence statistic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LampertiReport {
    /// (n, Σ_{k≤n} ν̂(A_k), standard error)
    pub partial_sums: Vec<(u64, f64, f64)>,
    /// (n, pairwise ratio Σν̂(A_jA_k)/(Σν̂(A_k))² over the dyadic grid)
    pub ratios: Vec<(u64, f64)>,
    /// (n, fraction of trajectories returned by n)
    pub return_frequency: Vec<(u64, f64)>,
    /// fit of the partial sums against log n (checkpoints ≥ 32)
    pub log_fit: Option<LineFitOut>,
}

pub fn lamperti_statistic(returns: &ReturnStats) -> Result<LampertiReport, StatsError> {
    let n_traj = returns.trajectories;
    if n_traj == 0 {
        return Err(StatsError::InsufficientSamples { needed: 1, got: 0 });
    }
    let nf = n_traj as f64;
    let mut partial_sums = Vec::new();
    let mut return_frequency = Vec::new();
    for (i, &cp) in returns.checkpoints.iter().enumerate() {
        let mean = returns.sum_returns[i] as f64 / nf;
        let var = returns.sum_returns_sq[i] as f64 / nf - mean * mean;
        partial_sums.push((cp, mean, (var.max(0.0) / nf).sqrt()));
        return_frequency.push((cp, returns.returned_by[i] as f64 / nf));
    }
    // Pairwise ratio over the dyadic grid: Σ_{j,k≤n} ν̂(A_{g_j} A_{g_k})
    // against the squared single-event sum on the same grid.
    let mut ratios = Vec::new();
    for (i, &cp) in returns.checkpoints.iter().enumerate() {
        let mut single = 0.0;
        let mut joint = 0.0;
        for a in 0..=i {
            single += returns.counts_per_k[(returns.checkpoints[a] - 1) as usize] as f64 / nf;
            for b in 0..=i {
                joint += returns.joint[a][b] as f64 / nf;
            }
        }
        if single > 0.0 {
            ratios.push((cp, joint / (single * single)));
        }
    }
    let fit_pts: Vec<&(u64, f64, f64)> =
        partial_sums.iter().filter(|&&(n, _, _)| n >= 32).collect();
    let log_fit = if fit_pts.len() >= 3 {
        let xs: Vec<f64> = fit_pts.iter().map(|p| (p.0 as f64).ln()).collect();
        let ys: Vec<f64> = fit_pts.iter().map(|p| p.1).collect();
        Some(fit_line(&xs, &ys).into())
    } else {
        None
    };
    Ok(LampertiReport { partial_sums, ratios, return_frequency, log_fit })
}

// ---------------------------------------------------------------------------
// Minimality via Smith normal form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimalityReport {
    /// index of the subgroup generated by the observed values in ℤ²
    /// (None when the values do not span the plane)
    pub index: Option<u64>,
    /// Smith invariant factors (d₁ | d₂) of the generator matrix
    pub invariant_factors: Option<(u64, u64)>,
    /// index of the lattice generated by pairwise differences
    pub difference_index: Option<u64>,
    /// true when the values sit on a proper coset of the difference lattice
    pub coset_drift: bool,
    pub distinct_values: usize,
}

fn gcd_u(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd_u(b, a % b)
    }
}

/// Index in ℤ² of the lattice generated by `values`: the gcd of all 2×2
/// minors of the generator matrix (zero means rank < 2).
fn lattice_index(values: &[[i64; 2]]) -> u64 {
    let mut g: u64 = 0;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let det = values[i][0] * values[j][1] - values[i][1] * values[j][0];
            g = gcd_u(g, det.unsigned_abs());
            if g == 1 {
                return 1;
            }
        }
    }
    g
}

/// Smith-normal-form evidence that the observed κ values generate all of ℤ²:
/// reports the subgroup index, the invariant factors, and whether the values
/// drift on a coset of their difference lattice.
pub fn minimality_check(values: &[[i64; 2]]) -> MinimalityReport {
    let mut distinct: Vec<[i64; 2]> = values.to_vec();
    distinct.sort();
    distinct.dedup();
    let nonzero: Vec<[i64; 2]> = distinct.iter().copied().filter(|v| *v != [0, 0]).collect();
    let index_raw = lattice_index(&nonzero);
    let (index, invariant_factors) = if index_raw == 0 {
        (None, None)
    } else {
        let d1 = nonzero
            .iter()
            .flat_map(|v| v.iter())
            .fold(0u64, |g, &x| gcd_u(g, x.unsigned_abs()));
        (Some(index_raw), Some((d1, index_raw / d1)))
    };
    // Coset structure: differences against a base point.
    let (difference_index, coset_drift) = if distinct.len() >= 2 {
        let base = distinct[0];
        let diffs: Vec<[i64; 2]> = distinct
            .iter()
            .skip(1)
            .map(|v| [v[0] - base[0], v[1] - base[1]])
            .collect();
        let di = lattice_index(&diffs);
        if di == 0 {
            (None, base != [0, 0])
        } else {
            // base ∈ difference lattice iff adjoining it keeps the index
            let mut extended = diffs.clone();
            extended.push(base);
            let with_base = lattice_index(&extended);
            (Some(di), with_base != di)
        }
    } else {
        (None, false)
    };
    MinimalityReport {
        index,
        invariant_factors,
        difference_index,
        coset_drift,
        distinct_values: distinct.len(),
    }
}
