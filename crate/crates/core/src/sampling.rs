//! Invariant-measure sampling on the collision space and reproducible
//! parallel Birkhoff-sum ensembles.
//!
//! The collision invariant measure has density ∝ |⟨v, n⟩| dq dv: scatterers
//! weighted by circumference, uniform boundary angle, and outgoing angle
//! relative to the normal with cosine density. Trajectory RNG streams are
//! keyed by `(seed, trajectory index)` on a counter-based generator, and all
//! aggregation happens in fixed chunk order, so results are bit-identical
//! for any worker count.

use crate::dynamics::{merged_step, next_collision, DynamicsError, PhasePoint};
use crate::geometry::{classify_horizon, find_corridors, ScattererLattice};
use crate::tolerances::{MAX_DROP_FRACTION, TAIL_MIN_KAPPA};
use crate::vec2::V2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Kappa,
    Psi,
}

/// What an ensemble run tracks beyond the scheduled Birkhoff sums.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrackOpts {
    /// Keep per-trajectory samples (needed for distribution-level tests).
    pub samples: bool,
    /// Track returns to the starting cell at every step.
    pub returns: bool,
    /// Track the per-step |κ| histogram and truncated moments.
    pub tail: bool,
    /// Track consecutive-flight pairs (κ, κ∘T).
    pub pairs: bool,
    /// Count exact point masses S_n = k at each scheduled n.
    pub point_targets: Vec<[i64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub trajectories: u64,
    /// Strictly increasing collision counts at which sums are recorded.
    pub n_schedule: Vec<u64>,
    pub seed: u64,
    pub observable: Observable,
    pub merged_section: bool,
    pub merge_threshold: f64,
    pub track: TrackOpts,
}

impl EnsembleSpec {
    pub fn new(trajectories: u64, n_schedule: Vec<u64>, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            trajectories,
            n_schedule,
            seed,
            observable: Observable::Kappa,
            merged_section: false,
            merge_threshold: 1.0,
            track: TrackOpts::default(),
        }
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        if self.trajectories == 0 {
            return Err(EnsembleError::InvalidSpec("trajectories must be ≥ 1".into()));
        }
        if self.n_schedule.is_empty() || self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EnsembleError::InvalidSpec(
                "n_schedule must be nonempty and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),
    #[error("{dropped} of {total} trajectories dropped for numerical degeneracy (budget {budget})")]
    TooManyDropped { dropped: u64, total: u64, budget: u64 },
}

/// Scheduled Birkhoff sums of one trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BirkhoffSample {
    pub trajectory: u64,
    pub s_kappa: Vec<[i64; 2]>,
    pub s_psi: Vec<[f64; 2]>,
}

/// Online bivariate moments with pairwise-stable merging.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CovAcc {
    pub count: u64,
    pub mean: [f64; 2],
    m2: [f64; 2],
    cross: f64,
}

impl CovAcc {
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        self.mean[0] += dx / n;
        self.mean[1] += dy / n;
        self.m2[0] += dx * (x - self.mean[0]);
        self.m2[1] += dy * (y - self.mean[1]);
        self.cross += dx * (y - self.mean[1]);
    }

    pub fn merge(&mut self, o: &CovAcc) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.count as f64, o.count as f64);
        let n = na + nb;
        let dx = o.mean[0] - self.mean[0];
        let dy = o.mean[1] - self.mean[1];
        self.mean[0] += dx * nb / n;
        self.mean[1] += dy * nb / n;
        self.m2[0] += o.m2[0] + dx * dx * na * nb / n;
        self.m2[1] += o.m2[1] + dy * dy * na * nb / n;
        self.cross += o.cross + dx * dy * na * nb / n;
        self.count += o.count;
    }

    /// Population covariance matrix `[[var_x, cov], [cov, var_y]]`.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        if self.count == 0 {
            return [[0.0; 2]; 2];
        }
        let n = self.count as f64;
        [[self.m2[0] / n, self.cross / n], [self.cross / n, self.m2[1] / n]]
    }
}

/// Per-step |κ| statistics: exact histogram over |κ|², dyadic truncated
/// moments (`bin j` holds steps with `2^{j-1} < |κ| ≤ 2^j`), and extremes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TailStats {
    pub steps: u64,
    /// counts indexed by |κ|² for |κ|² < 4096, map above
    dense: Vec<u64>,
    sparse: BTreeMap<u64, u64>,
    pub bins: Vec<TailBin>,
    pub max_kappa_sq: u64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TailBin {
    pub count: u64,
    pub sum_x: i64,
    pub sum_y: i64,
    pub sum_sq: u128,
}

const TAIL_BINS: usize = 24;
const TAIL_DENSE: usize = 4096;

impl TailStats {
    pub fn new() -> TailStats {
        TailStats { bins: vec![TailBin::default(); TAIL_BINS], dense: vec![0; TAIL_DENSE], ..Default::default() }
    }

    #[inline]
    pub fn push(&mut self, kx: i64, ky: i64) {
        let k2 = (kx * kx + ky * ky) as u64;
        self.steps += 1;
        self.max_kappa_sq = self.max_kappa_sq.max(k2);
        if (k2 as usize) < TAIL_DENSE {
            self.dense[k2 as usize] += 1;
        } else {
            *self.sparse.entry(k2).or_insert(0) += 1;
        }
        let bin = dyadic_bin(k2).min(TAIL_BINS - 1);
        let b = &mut self.bins[bin];
        b.count += 1;
        b.sum_x += kx;
        b.sum_y += ky;
        b.sum_sq += k2 as u128;
    }

    pub fn merge_from(&mut self, o: &TailStats) {
        self.steps += o.steps;
        self.max_kappa_sq = self.max_kappa_sq.max(o.max_kappa_sq);
        for (a, b) in self.dense.iter_mut().zip(&o.dense) {
            *a += b;
        }
        for (&k, &c) in &o.sparse {
            *self.sparse.entry(k).or_insert(0) += c;
        }
        for (a, b) in self.bins.iter_mut().zip(&o.bins) {
            a.count += b.count;
            a.sum_x += b.sum_x;
            a.sum_y += b.sum_y;
            a.sum_sq += b.sum_sq;
        }
    }

    /// Histogram over |κ|² as sorted (|κ|², count) pairs.
    pub fn histogram(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = self
            .dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k as u64, c))
            .collect();
        out.extend(self.sparse.iter().map(|(&k, &c)| (k, c)));
        out
    }

    /// Count of steps with |κ| > u.
    pub fn survival_count(&self, u: f64) -> u64 {
        let u2 = (u * u).floor() as u64;
        self.histogram().iter().filter(|&&(k2, _)| k2 as f64 > u * u || k2 > u2).map(|&(_, c)| c).sum()
    }

    /// Truncated statistics over steps with |κ| ≤ 2^j.
    pub fn truncated(&self, j: usize) -> TailBin {
        let mut acc = TailBin::default();
        for b in self.bins.iter().take(j + 1) {
            acc.count += b.count;
            acc.sum_x += b.sum_x;
            acc.sum_y += b.sum_y;
            acc.sum_sq += b.sum_sq;
        }
        acc
    }
}

/// Smallest j with |κ|² ≤ 4^j.
#[inline]
fn dyadic_bin(k2: u64) -> usize {
    if k2 <= 1 {
        return 0;
    }
    let bits = 64 - (k2 - 1).leading_zeros() as usize;
    bits.div_ceil(2)
}

/// Return-to-start events A_k = {S_k^κ = 0}.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReturnStats {
    /// counts_per_k[k-1] = #trajectories with S_k = 0
    pub counts_per_k: Vec<u64>,
    /// dyadic checkpoints (plus the final step)
    pub checkpoints: Vec<u64>,
    /// per checkpoint: Σ over trajectories of the return count up to it
    pub sum_returns: Vec<u64>,
    /// per checkpoint: Σ of squared return counts (for standard errors)
    pub sum_returns_sq: Vec<u128>,
    /// per checkpoint: #trajectories with at least one return by it
    pub returned_by: Vec<u64>,
    /// joint counts over the checkpoint grid: both A_{g_i} and A_{g_j}
    pub joint: Vec<Vec<u64>>,
    pub trajectories: u64,
}

impl ReturnStats {
    pub fn new(n_max: u64) -> ReturnStats {
        let mut checkpoints: Vec<u64> = (0..)
            .map(|j| 1u64 << j)
            .take_while(|&c| c < n_max)
            .collect();
        checkpoints.push(n_max);
        let g = checkpoints.len();
        ReturnStats {
            counts_per_k: vec![0; n_max as usize],
            sum_returns: vec![0; g],
            sum_returns_sq: vec![0; g],
            returned_by: vec![0; g],
            joint: vec![vec![0; g]; g],
            checkpoints,
            trajectories: 0,
        }
    }

    pub fn push_trajectory(&mut self, return_steps: &[u32]) {
        self.trajectories += 1;
        for &k in return_steps {
            self.counts_per_k[(k - 1) as usize] += 1;
        }
        let mut mask: u64 = 0;
        for (i, &cp) in self.checkpoints.iter().enumerate() {
            let x = return_steps.iter().filter(|&&k| (k as u64) <= cp).count() as u64;
            self.sum_returns[i] += x;
            self.sum_returns_sq[i] += (x as u128) * (x as u128);
            if x > 0 {
                self.returned_by[i] += 1;
            }
            if return_steps.iter().any(|&k| k as u64 == cp) {
                mask |= 1 << i;
            }
        }
        for i in 0..self.checkpoints.len() {
            if mask & (1 << i) != 0 {
                for j in 0..self.checkpoints.len() {
                    if mask & (1 << j) != 0 {
                        self.joint[i][j] += 1;
                    }
                }
            }
        }
    }

    pub fn merge_from(&mut self, o: &ReturnStats) {
        self.trajectories += o.trajectories;
        for (a, b) in self.counts_per_k.iter_mut().zip(&o.counts_per_k) {
            *a += b;
        }
        for i in 0..self.checkpoints.len() {
            self.sum_returns[i] += o.sum_returns[i];
            self.sum_returns_sq[i] += o.sum_returns_sq[i];
            self.returned_by[i] += o.returned_by[i];
            for j in 0..self.checkpoints.len() {
                self.joint[i][j] += o.joint[i][j];
            }
        }
    }
}

/// Consecutive-flight statistics (κ, κ∘T) for the corridor analysis.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairStats {
    /// per dyadic |κ| bin: events and exceedances |κ∘T| > |κ|^δ
    pub bins: Vec<PairBin>,
    /// tightest envelope constants over events with |κ| ≥ TAIL_MIN_KAPPA
    pub envelope_lo: f64,
    pub envelope_hi: f64,
    pub envelope_events: u64,
    /// per-trajectory Σ κ·(κ∘T) and pair counts, in trajectory order
    pub dot_sums: Vec<(i64, i128)>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PairBin {
    pub count: u64,
    pub exceed: [u64; 3],
}

pub const PAIR_DELTAS: [f64; 3] = [0.6, 0.75, 0.9];

impl PairStats {
    pub fn new() -> PairStats {
        PairStats {
            bins: vec![PairBin::default(); TAIL_BINS],
            envelope_lo: f64::INFINITY,
            envelope_hi: 0.0,
            ..Default::default()
        }
    }

    pub fn push(&mut self, prev: [i64; 2], cur: [i64; 2]) {
        let p2 = (prev[0] * prev[0] + prev[1] * prev[1]) as u64;
        let pn = (p2 as f64).sqrt();
        if pn >= TAIL_MIN_KAPPA {
            let cn = (((cur[0] * cur[0] + cur[1] * cur[1]) as u64) as f64).sqrt();
            let bin = dyadic_bin(p2).min(TAIL_BINS - 1);
            let b = &mut self.bins[bin];
            b.count += 1;
            for (slot, delta) in b.exceed.iter_mut().zip(PAIR_DELTAS) {
                if cn > pn.powf(delta) {
                    *slot += 1;
                }
            }
            self.envelope_lo = self.envelope_lo.min(cn / pn.sqrt());
            self.envelope_hi = self.envelope_hi.max(cn / (pn * pn));
            self.envelope_events += 1;
        }
    }

    pub fn merge_from(&mut self, o: &PairStats) {
        for (a, b) in self.bins.iter_mut().zip(&o.bins) {
            a.count += b.count;
            for (x, y) in a.exceed.iter_mut().zip(&b.exceed) {
                *x += y;
            }
        }
        self.envelope_lo = self.envelope_lo.min(o.envelope_lo);
        self.envelope_hi = self.envelope_hi.max(o.envelope_hi);
        self.envelope_events += o.envelope_events;
        self.dot_sums.extend_from_slice(&o.dot_sums);
    }
}

/// Scheduled-point aggregates kept even when per-trajectory samples are not.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub n: u64,
    pub kappa: CovAcc,
    pub psi: CovAcc,
    /// count of S_n^κ equal to each tracked point target
    pub target_hits: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub spec: EnsembleSpec,
    pub horizon: String,
    pub samples: Vec<BirkhoffSample>,
    pub schedule_stats: Vec<ScheduleStats>,
    pub tail: Option<TailStats>,
    pub returns: Option<ReturnStats>,
    pub pairs: Option<PairStats>,
    pub dropped: Vec<u64>,
}

/// Draws an initial phase point from the collision invariant measure,
/// restricted to the fundamental cell (`lift = 0`).
pub fn sample_mu1(lattice: &ScattererLattice, rng: &mut impl Rng) -> PhasePoint {
    let total: f64 = lattice.scatterers().iter().map(|s| s.radius).sum();
    let mut pick = rng.gen::<f64>() * total;
    let mut scatterer = lattice.scatterers().len() - 1;
    for (i, s) in lattice.scatterers().iter().enumerate() {
        if pick < s.radius {
            scatterer = i;
            break;
        }
        pick -= s.radius;
    }
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    // outgoing angle relative to the normal with cosine density
    let phi_rel = (2.0 * rng.gen::<f64>() - 1.0).asin();
    let phi = (theta + phi_rel).rem_euclid(std::f64::consts::TAU);
    PhasePoint { scatterer, theta, phi, lift: [0, 0] }
}

pub fn trajectory_rng(seed: u64, trajectory: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory);
    rng
}

struct ChunkAgg {
    samples: Vec<BirkhoffSample>,
    schedule: Vec<ScheduleStats>,
    tail: Option<TailStats>,
    returns: Option<ReturnStats>,
    pairs: Option<PairStats>,
    dropped: Vec<u64>,
}

const CHUNK: u64 = 2048;

/// Runs the ensemble. Deterministic for fixed `(lattice, spec)`: trajectory
/// RNG streams are independent of scheduling and partial aggregates merge in
/// fixed chunk order.
pub fn run_ensemble(
    lattice: &ScattererLattice,
    spec: &EnsembleSpec,
) -> Result<EnsembleResult, EnsembleError> {
    spec.validate()?;
    let n_max = *spec.n_schedule.last().unwrap();
    let chunks: Vec<(u64, u64)> = (0..spec.trajectories)
        .step_by(CHUNK as usize)
        .map(|lo| (lo, (lo + CHUNK).min(spec.trajectories)))
        .collect();

    let aggs: Vec<ChunkAgg> = chunks
        .par_iter()
        .map(|&(lo, hi)| run_chunk(lattice, spec, n_max, lo, hi))
        .collect();

    let mut samples = Vec::new();
    let mut schedule: Vec<ScheduleStats> = spec
        .n_schedule
        .iter()
        .map(|&n| ScheduleStats {
            n,
            target_hits: vec![0; spec.track.point_targets.len()],
            ..Default::default()
        })
        .collect();
    let mut tail = spec.track.tail.then(TailStats::new);
    let mut returns = spec.track.returns.then(|| ReturnStats::new(n_max));
    let mut pairs = spec.track.pairs.then(PairStats::new);
    let mut dropped = Vec::new();
    for agg in aggs {
        samples.extend(agg.samples);
        for (dst, src) in schedule.iter_mut().zip(&agg.schedule) {
            dst.kappa.merge(&src.kappa);
            dst.psi.merge(&src.psi);
            for (a, b) in dst.target_hits.iter_mut().zip(&src.target_hits) {
                *a += b;
            }
        }
        if let (Some(t), Some(s)) = (tail.as_mut(), agg.tail.as_ref()) {
            t.merge_from(s);
        }
        if let (Some(t), Some(s)) = (returns.as_mut(), agg.returns.as_ref()) {
            t.merge_from(s);
        }
        if let (Some(t), Some(s)) = (pairs.as_mut(), agg.pairs.as_ref()) {
            t.merge_from(s);
        }
        dropped.extend(agg.dropped);
    }

    let budget = ((spec.trajectories as f64) * MAX_DROP_FRACTION).floor() as u64;
    if dropped.len() as u64 > budget.max(0) {
        return Err(EnsembleError::TooManyDropped {
            dropped: dropped.len() as u64,
            total: spec.trajectories,
            budget,
        });
    }

    let horizon = classify_horizon(&find_corridors(lattice)).tag().to_string();
    Ok(EnsembleResult {
        spec: spec.clone(),
        horizon,
        samples,
        schedule_stats: schedule,
        tail,
        returns,
        pairs,
        dropped,
    })
}

fn run_chunk(
    lattice: &ScattererLattice,
    spec: &EnsembleSpec,
    n_max: u64,
    lo: u64,
    hi: u64,
) -> ChunkAgg {
    let mut agg = ChunkAgg {
        samples: Vec::new(),
        schedule: spec
            .n_schedule
            .iter()
            .map(|&n| ScheduleStats {
                n,
                target_hits: vec![0; spec.track.point_targets.len()],
                ..Default::default()
            })
            .collect(),
        tail: spec.track.tail.then(TailStats::new),
        returns: spec.track.returns.then(|| ReturnStats::new(n_max)),
        pairs: spec.track.pairs.then(PairStats::new),
        dropped: Vec::new(),
    };
    for traj in lo..hi {
        let mut rng = trajectory_rng(spec.seed, traj);
        let mut x = sample_mu1(lattice, &mut rng);
        let mut s_kappa = [0i64; 2];
        let mut s_psi = V2::ZERO;
        let mut sample = spec.track.samples.then(|| BirkhoffSample {
            trajectory: traj,
            s_kappa: Vec::with_capacity(spec.n_schedule.len()),
            s_psi: Vec::with_capacity(spec.n_schedule.len()),
        });
        let mut schedule_idx = 0;
        let mut return_steps: Vec<u32> = Vec::new();
        let mut prev_kappa: Option<[i64; 2]> = None;
        let mut dot_sum: i128 = 0;
        let mut dot_count: i64 = 0;
        let mut failed = false;

        let mut partial: Vec<(usize, [i64; 2], V2)> = Vec::new();
        for k in 1..=n_max {
            let step = if spec.merged_section {
                merged_step(lattice, &x, spec.merge_threshold)
            } else {
                next_collision(lattice, &x)
            };
            let (next, rec) = match step {
                Ok(v) => v,
                Err(DynamicsError::NumericalDegeneracy { .. })
                | Err(DynamicsError::HorizonEscape { .. }) => {
                    failed = true;
                    break;
                }
            };
            x = next;
            s_kappa[0] += rec.kappa[0];
            s_kappa[1] += rec.kappa[1];
            s_psi += rec.psi;
            if let Some(t) = agg.tail.as_mut() {
                t.push(rec.kappa[0], rec.kappa[1]);
            }
            if let Some(p) = agg.pairs.as_mut() {
                if let Some(prev) = prev_kappa {
                    p.push(prev, rec.kappa);
                    dot_sum += (prev[0] * rec.kappa[0] + prev[1] * rec.kappa[1]) as i128;
                    dot_count += 1;
                }
                prev_kappa = Some(rec.kappa);
            }
            if spec.track.returns && s_kappa == [0, 0] {
                return_steps.push(k as u32);
            }
            if schedule_idx < spec.n_schedule.len() && k == spec.n_schedule[schedule_idx] {
                partial.push((schedule_idx, s_kappa, s_psi));
                schedule_idx += 1;
            }
        }
        if failed {
            agg.dropped.push(traj);
            continue;
        }
        for &(idx, sk, sp) in &partial {
            let st = &mut agg.schedule[idx];
            st.kappa.push(sk[0] as f64, sk[1] as f64);
            st.psi.push(sp.x, sp.y);
            for (hit, target) in st.target_hits.iter_mut().zip(&spec.track.point_targets) {
                if sk == *target {
                    *hit += 1;
                }
            }
            if let Some(s) = sample.as_mut() {
                s.s_kappa.push(sk);
                s.s_psi.push([sp.x, sp.y]);
            }
        }
        if let Some(s) = sample {
            agg.samples.push(s);
        }
        if let Some(r) = agg.returns.as_mut() {
            r.push_trajectory(&return_steps);
        }
        if let Some(p) = agg.pairs.as_mut() {
            p.dot_sums.push((dot_count, dot_sum));
        }
    }
    agg
}

/// Pushes `n_samples` invariant-measure draws through `steps` collisions and
/// returns the evolved `(theta, angle-from-normal)` marginals next to fresh
/// draws, for stationarity tests. Degenerate trajectories are skipped and
/// counted.
pub struct PushforwardResult {
    pub evolved_theta: Vec<f64>,
    pub evolved_rel: Vec<f64>,
    pub fresh_theta: Vec<f64>,
    pub fresh_rel: Vec<f64>,
    pub dropped: u64,
}

pub fn pushforward_phase_samples(
    lattice: &ScattererLattice,
    n_samples: u64,
    steps: u64,
    seed: u64,
) -> PushforwardResult {
    let chunks: Vec<(u64, u64)> = (0..n_samples)
        .step_by(CHUNK as usize)
        .map(|lo| (lo, (lo + CHUNK).min(n_samples)))
        .collect();
    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, u64)> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut et = Vec::new();
            let mut er = Vec::new();
            let mut ft = Vec::new();
            let mut fr = Vec::new();
            let mut dropped = 0;
            for i in lo..hi {
                let mut rng = trajectory_rng(seed, i);
                let mut x = sample_mu1(lattice, &mut rng);
                let mut fresh_rng = trajectory_rng(seed ^ 0x9e37_79b9_7f4a_7c15, i);
                let fresh = sample_mu1(lattice, &mut fresh_rng);
                let mut ok = true;
                for _ in 0..steps {
                    match next_collision(lattice, &x) {
                        Ok((next, _)) => x = next,
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    et.push(x.theta);
                    er.push(x.angle_from_normal());
                    ft.push(fresh.theta);
                    fr.push(fresh.angle_from_normal());
                } else {
                    dropped += 1;
                }
            }
            (et, er, ft, fr, dropped)
        })
        .collect();
    let mut out = PushforwardResult {
        evolved_theta: Vec::new(),
        evolved_rel: Vec::new(),
        fresh_theta: Vec::new(),
        fresh_rel: Vec::new(),
        dropped: 0,
    };
    for (et, er, ft, fr, d) in parts {
        out.evolved_theta.extend(et);
        out.evolved_rel.extend(er);
        out.fresh_theta.extend(ft);
        out.fresh_rel.extend(fr);
        out.dropped += d;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{validate_config, ValidateOpts};
    use crate::numerics::{ks_distance_sorted, ks_two_sample_sorted};
    use crate::vec2::v2;

    fn single_disk(r: f64) -> ScattererLattice {
        validate_config(&[(v2(0.5, 0.5), r)], Some(V2::ZERO), ValidateOpts::default()).unwrap()
    }

    fn finite_lattice() -> ScattererLattice {
        validate_config(
            &[(v2(0.25, 0.25), 0.36), (v2(0.75, 0.75), 0.30)],
            Some(V2::ZERO),
            ValidateOpts { require_clear_cell_boundary: false },
        )
        .unwrap()
    }

    #[test]
    fn mu1_marginals() {
        let lat = single_disk(0.4);
        let mut rng = trajectory_rng(7, 0);
        let n = 1_000_000;
        let mut thetas = Vec::with_capacity(n);
        let mut cos_sum = 0.0;
        for _ in 0..n {
            let x = sample_mu1(&lat, &mut rng);
            thetas.push(x.theta);
            cos_sum += x.angle_from_normal().cos();
        }
        // E[cos φ_rel] = π/4 under the cosine density
        let mean_cos = cos_sum / n as f64;
        assert!((mean_cos - std::f64::consts::FRAC_PI_4).abs() < 0.002, "{mean_cos}");
        thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_distance_sorted(&thetas, |t| t / std::f64::consts::TAU);
        assert!(d < 0.002, "theta KS {d}");
    }

    #[test]
    fn degenerate_ensemble_is_single_step() {
        let lat = finite_lattice();
        let mut spec = EnsembleSpec::new(1, vec![1], 3);
        spec.track.samples = true;
        let result = run_ensemble(&lat, &spec).unwrap();
        assert_eq!(result.samples.len(), 1);
        // one collision from the seeded initial point
        let mut rng = trajectory_rng(3, 0);
        let x = sample_mu1(&lat, &mut rng);
        let (_, rec) = next_collision(&lat, &x).unwrap();
        assert_eq!(result.samples[0].s_kappa[0], rec.kappa);
    }

    #[test]
    fn symmetric_config_has_zero_mean_first_step() {
        let lat = single_disk(0.4);
        let mut spec = EnsembleSpec::new(20_000, vec![1], 11);
        spec.track.samples = false;
        let result = run_ensemble(&lat, &spec).unwrap();
        let st = &result.schedule_stats[0];
        let cov = st.kappa.covariance();
        for axis in 0..2 {
            let se = (cov[axis][axis] / st.kappa.count as f64).sqrt();
            assert!(st.kappa.mean[axis].abs() < 3.0 * se, "axis {axis} mean {}", st.kappa.mean[axis]);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let lat = single_disk(0.4);
        let mut spec = EnsembleSpec::new(600, vec![4, 16], 99);
        spec.track.samples = true;
        spec.track.returns = true;
        spec.track.tail = true;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_ensemble(&lat, &spec).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| run_ensemble(&lat, &spec).unwrap());
        assert_eq!(one.samples.len(), many.samples.len());
        for (a, b) in one.samples.iter().zip(&many.samples) {
            assert_eq!(a.s_kappa, b.s_kappa);
            assert_eq!(a.s_psi, b.s_psi);
        }
        assert_eq!(
            one.returns.as_ref().unwrap().counts_per_k,
            many.returns.as_ref().unwrap().counts_per_k
        );
        assert_eq!(one.tail.as_ref().unwrap().histogram(), many.tail.as_ref().unwrap().histogram());
        let (ka, kb) = (&one.schedule_stats[1].kappa, &many.schedule_stats[1].kappa);
        assert_eq!(ka.mean, kb.mean);
        assert_eq!(ka.covariance(), kb.covariance());
    }

    #[test]
    fn tail_merge_is_order_independent() {
        let mut a = TailStats::new();
        let mut b = TailStats::new();
        let mut c = TailStats::new();
        for i in 0..300i64 {
            a.push(i % 17, (i * 3) % 29);
            b.push((i * 7) % 101, i % 5);
            c.push(i % 2, (i * 11) % 230);
        }
        let mut ab_c = a.clone();
        ab_c.merge_from(&b);
        ab_c.merge_from(&c);
        let mut c_ba = c.clone();
        c_ba.merge_from(&b);
        c_ba.merge_from(&a);
        assert_eq!(ab_c.histogram(), c_ba.histogram());
        assert_eq!(ab_c.truncated(5).count, c_ba.truncated(5).count);
        assert_eq!(ab_c.truncated(5).sum_sq, c_ba.truncated(5).sum_sq);
    }

    #[test]
    fn covacc_merge_matches_sequential() {
        let mut whole = CovAcc::default();
        let mut left = CovAcc::default();
        let mut right = CovAcc::default();
        for i in 0..1000 {
            let x = ((i * 37) % 101) as f64 * 0.13;
            let y = ((i * 53) % 89) as f64 * 0.07 - 3.0;
            whole.push(x, y);
            if i < 400 {
                left.push(x, y);
            } else {
                right.push(x, y);
            }
        }
        left.merge(&right);
        let (ca, cb) = (left.covariance(), whole.covariance());
        for r in 0..2 {
            for c in 0..2 {
                assert!((ca[r][c] - cb[r][c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stationarity_smoke() {
        let lat = finite_lattice();
        let push = pushforward_phase_samples(&lat, 20_000, 30, 5);
        assert_eq!(push.dropped, 0);
        let mut a = push.evolved_rel.clone();
        let mut b = push.fresh_rel.clone();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let d = ks_two_sample_sorted(&a, &b);
        assert!(d < 0.03, "relative-angle KS {d}");
    }

    #[test]
    fn dyadic_bin_boundaries() {
        assert_eq!(dyadic_bin(0), 0);
        assert_eq!(dyadic_bin(1), 0);
        assert_eq!(dyadic_bin(2), 1);
        assert_eq!(dyadic_bin(4), 1);
        assert_eq!(dyadic_bin(5), 2);
        assert_eq!(dyadic_bin(16), 2);
        assert_eq!(dyadic_bin(17), 3);
        assert_eq!(dyadic_bin(64), 3);
    }
}
