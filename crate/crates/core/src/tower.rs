//! First-return tower over a piecewise-affine expanding interval map, with
//! an Ulam discretization of the quotient transfer operator.
//!
//! The base set Λ is an interval whose first-return decomposition under the
//! map is exactly Markov (every return maps its column onto Λ). The tower
//! `Δ = {(x, l) : x ∈ Λ, l < R(x)}` carries Lebesgue-per-level measure; the
//! transfer operator moves mass up columns with unit Jacobian and spreads it
//! over the base at returns. Weighted sup/Lipschitz norms with an `e^{−εl}`
//! level factor (or a per-cell replacement for unbounded observables), the
//! Doeblin–Fortet envelope, Fourier perturbations `P_t = P(e^{itf̄}·)` and
//! leading-eigenvalue expansions all operate on this discretization.

use crate::numerics::{adaptive_simpson, fit_line, LineFit};
use crate::tolerances::{
    DEGENERATE_VARIANCE, EIGEN_TOL, STOCHASTICITY_TOL, TOWER_TRUNCATION_MAX,
};
use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const INTERVAL_EPS: f64 = 1e-12;
/// Pieces narrower than this are dropped during symbolic iteration and
/// booked as truncated mass.
const PIECE_DROP: f64 = 1e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TowerError {
    #[error("invalid map or base: {0}")]
    InvalidSpec(String),
    #[error("return at step {step} covers [{lo:.6}, {hi:.6}) but not the base: non-Markov base")]
    NonMarkovBase { step: usize, lo: f64, hi: f64 },
    #[error("truncated tail mass {mass:.3e} exceeds {bound:.3e}")]
    TruncationTooHeavy { mass: f64, bound: f64 },
    #[error("resolution {resolution} leaves fewer than 2 cells per branch image")]
    ResolutionTooCoarse { resolution: u32 },
    #[error("no spectral gap: |λ₂| = {lambda2:.9} within tolerance of the leading eigenvalue")]
    NoGap { lambda2: f64 },
    #[error("degenerate variance {sigma_sq:.3e}: observable is a coboundary at this tolerance")]
    DegenerateVariance { sigma_sq: f64 },
    #[error("iteration failed to converge")]
    NoConvergence,
}

/// Full-branch piecewise-affine expanding map of `[0,1)`: branch `i` maps
/// `[b_i, b_{i+1})` affinely and increasingly onto `[0,1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalMapSpec {
    pub breakpoints: Vec<f64>,
}

impl IntervalMapSpec {
    pub fn new(breakpoints: Vec<f64>) -> Result<IntervalMapSpec, TowerError> {
        if breakpoints.len() < 3
            || breakpoints[0] != 0.0
            || *breakpoints.last().unwrap() != 1.0
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(TowerError::InvalidSpec(
                "breakpoints must increase strictly from 0 to 1 with ≥ 2 branches".into(),
            ));
        }
        Ok(IntervalMapSpec { breakpoints })
    }

    pub fn doubling() -> IntervalMapSpec {
        IntervalMapSpec { breakpoints: vec![0.0, 0.5, 1.0] }
    }

    pub fn branches(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn branch_of(&self, x: f64) -> usize {
        match self.breakpoints.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.branches() - 1),
            Err(i) => i - 1,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        let i = self.branch_of(x);
        let (lo, hi) = (self.breakpoints[i], self.breakpoints[i + 1]);
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0 - f64::EPSILON)
    }

    pub fn min_slope(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| 1.0 / (w[1] - w[0]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One first-return column: the source interval `Λ_i ⊂ Λ`, its return time,
/// and the image interval `T^l(Λ_i)` per level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerColumn {
    pub source: (f64, f64),
    pub return_time: usize,
    pub images: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerModel {
    pub map: IntervalMapSpec,
    pub base: (f64, f64),
    pub columns: Vec<TowerColumn>,
    /// Tail mass `μ{R > max_level}` relative to the base measure.
    pub truncated_mass: f64,
    pub max_level: usize,
}

/// First-return decomposition of the base by symbolic branch iteration.
/// Pending image pieces are split at branch boundaries every step; a piece
/// meeting the base must cover it entirely (Markov return), otherwise the
/// base is rejected.
pub fn build_tower(
    map: &IntervalMapSpec,
    base: (f64, f64),
    max_level: usize,
) -> Result<TowerModel, TowerError> {
    let (blo, bhi) = base;
    if !(0.0..1.0).contains(&blo) || bhi <= blo || bhi > 1.0 {
        return Err(TowerError::InvalidSpec(format!("bad base [{blo}, {bhi})")));
    }
    // (image lo, image hi, source lo, source hi)
    let mut pending: Vec<(f64, f64, f64, f64)> = vec![(blo, bhi, blo, bhi)];
    let mut columns: Vec<TowerColumn> = Vec::new();
    for step in 1..=max_level {
        let mut mapped: Vec<(f64, f64, f64, f64)> = Vec::new();
        for &(ilo, ihi, slo, shi) in &pending {
            // split at branch boundaries, then apply the branch maps
            let src_at = |x: f64| slo + (x - ilo) / (ihi - ilo) * (shi - slo);
            let b0 = map.branch_of(ilo + INTERVAL_EPS);
            let b1 = map.branch_of(ihi - INTERVAL_EPS);
            for b in b0..=b1 {
                let lo = ilo.max(map.breakpoints[b]);
                let hi = ihi.min(map.breakpoints[b + 1]);
                if hi - lo < PIECE_DROP {
                    continue;
                }
                let w = map.breakpoints[b + 1] - map.breakpoints[b];
                let out_lo = (lo - map.breakpoints[b]) / w;
                let out_hi = (hi - map.breakpoints[b]) / w;
                mapped.push((out_lo, out_hi, src_at(lo), src_at(hi)));
            }
        }
        pending.clear();
        for (ilo, ihi, slo, shi) in mapped {
            if ihi <= blo + INTERVAL_EPS || ilo >= bhi - INTERVAL_EPS {
                pending.push((ilo, ihi, slo, shi));
                continue;
            }
            // the piece meets the base: it must contain it
            if ilo > blo + INTERVAL_EPS || ihi < bhi - INTERVAL_EPS {
                return Err(TowerError::NonMarkovBase { step, lo: ilo, hi: ihi });
            }
            let src_at = |x: f64| slo + (x - ilo) / (ihi - ilo) * (shi - slo);
            let source = (src_at(blo), src_at(bhi));
            let mut images = Vec::with_capacity(step);
            let mut cur = source;
            for _ in 0..step {
                images.push(cur);
                let b = map.branch_of(0.5 * (cur.0 + cur.1));
                let (lo, hi) = (map.breakpoints[b], map.breakpoints[b + 1]);
                cur = ((cur.0 - lo) / (hi - lo), (cur.1 - lo) / (hi - lo));
            }
            columns.push(TowerColumn { source, return_time: step, images });
            if ilo < blo - INTERVAL_EPS {
                pending.push((ilo, blo, slo, src_at(blo)));
            }
            if ihi > bhi + INTERVAL_EPS {
                pending.push((bhi, ihi, src_at(bhi), shi));
            }
        }
    }
    let base_len = bhi - blo;
    let truncated: f64 = pending.iter().map(|p| p.3 - p.2).sum::<f64>() / base_len;
    if truncated > TOWER_TRUNCATION_MAX {
        return Err(TowerError::TruncationTooHeavy { mass: truncated, bound: TOWER_TRUNCATION_MAX });
    }
    columns.sort_by(|a, b| a.source.partial_cmp(&b.source).unwrap());
    Ok(TowerModel { map: map.clone(), base, columns, truncated_mass: truncated, max_level })
}

impl TowerModel {
    pub fn base_len(&self) -> f64 {
        self.base.1 - self.base.0
    }

    /// `μ{R > n}` relative to the base measure.
    pub fn tail_measure(&self, n: usize) -> f64 {
        let above: f64 = self
            .columns
            .iter()
            .filter(|c| c.return_time > n)
            .map(|c| c.source.1 - c.source.0)
            .sum();
        above / self.base_len() + self.truncated_mass
    }

    /// Fit of `ln μ{R > n}` against n; the slope estimates `ln θ₀ < 0`.
    pub fn tail_fit(&self) -> LineFit {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for n in 0..self.max_level {
            let t = self.tail_measure(n);
            if t > 0.0 {
                xs.push(n as f64);
                ys.push(t.ln());
            }
        }
        fit_line(&xs, &ys)
    }

    /// Total tower measure Σ R_i |Λ_i|; equals the measure of the whole
    /// interval when the base sweeps it (Kac).
    pub fn kac_total(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.return_time as f64 * (c.source.1 - c.source.0))
            .sum()
    }

    pub fn min_return(&self) -> usize {
        self.columns.iter().map(|c| c.return_time).min().unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Ulam discretization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellMeta {
    pub column: u32,
    pub level: u32,
    /// sub-interval of the column source, in base coordinates
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
struct CylNode {
    piece_lo: usize,
    piece_hi: usize, // inclusive
    sep: u32,
    children: Vec<CylNode>,
}

#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub tower: TowerModel,
    pub resolution: u32,
    pub eps: f64,
    pub beta: f64,
    pub cells: Vec<CellMeta>,
    /// invariant masses, normalized to Σ = 1
    pub masses: Vec<f64>,
    row_ptr: Vec<u32>,
    dst_idx: Vec<u32>,
    frac: Vec<f64>,
    /// source partition per column
    col_pieces: Vec<Vec<(f64, f64)>>,
    cell_start: Vec<u32>,
    cyl_roots: Vec<CylNode>,
}

/// Ulam discretization at `resolution` cells per unit length (levels of one
/// column share the source partition, so climbing the tower is the identity
/// on cell indices). Entries are mass fractions; every column of the matrix
/// sums to one.
pub fn transfer_matrix(
    tower: &TowerModel,
    resolution: u32,
    eps: f64,
    beta: f64,
) -> Result<TransferMatrix, TowerError> {
    let h = 1.0 / resolution as f64;
    if tower.base_len() < 2.0 * h {
        return Err(TowerError::ResolutionTooCoarse { resolution });
    }
    // grid-aligned partition of each column source
    let mut col_pieces: Vec<Vec<(f64, f64)>> = Vec::with_capacity(tower.columns.len());
    for c in &tower.columns {
        let (lo, hi) = c.source;
        let mut pieces = Vec::new();
        let mut x = lo;
        let mut next = (x / h).floor() * h + h;
        while x < hi - INTERVAL_EPS {
            let end = next.min(hi);
            if end - x > INTERVAL_EPS {
                pieces.push((x, end));
            }
            x = end;
            next += h;
        }
        if pieces.is_empty() {
            pieces.push((lo, hi));
        }
        col_pieces.push(pieces);
    }
    let mut cell_start = Vec::with_capacity(tower.columns.len());
    let mut cells = Vec::new();
    for (ci, c) in tower.columns.iter().enumerate() {
        cell_start.push(cells.len() as u32);
        for level in 0..c.return_time {
            for &(lo, hi) in &col_pieces[ci] {
                cells.push(CellMeta { column: ci as u32, level: level as u32, lo, hi });
            }
        }
    }
    let n = cells.len();
    let total_mass: f64 = cells.iter().map(|c| c.hi - c.lo).sum();
    let masses: Vec<f64> = cells.iter().map(|c| (c.hi - c.lo) / total_mass).collect();

    // level-0 cells across columns, ordered by position
    let mut base_cells: Vec<(f64, f64, u32)> = Vec::new();
    for (ci, pieces) in col_pieces.iter().enumerate() {
        for (pi, &(lo, hi)) in pieces.iter().enumerate() {
            base_cells.push((lo, hi, cell_start[ci] + pi as u32));
        }
    }
    base_cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut dst_idx = Vec::new();
    let mut frac = Vec::new();
    row_ptr.push(0u32);
    for (i, cell) in cells.iter().enumerate() {
        let ci = cell.column as usize;
        let col = &tower.columns[ci];
        let pieces = col_pieces[ci].len();
        if (cell.level as usize) + 1 < col.return_time {
            // move up: same piece, next level
            dst_idx.push(i as u32 + pieces as u32);
            frac.push(1.0);
        } else {
            // return: affine image of the source sub-interval onto the base
            let (slo, shi) = col.source;
            let scale = tower.base_len() / (shi - slo);
            let jlo = tower.base.0 + (cell.lo - slo) * scale;
            let jhi = tower.base.0 + (cell.hi - slo) * scale;
            let jlen = jhi - jlo;
            let mut acc = 0.0;
            let mut entries = Vec::new();
            for &(blo, bhi, id) in &base_cells {
                let ov = (jhi.min(bhi) - jlo.max(blo)).max(0.0);
                if ov > 0.0 {
                    entries.push((id, ov / jlen));
                    acc += ov / jlen;
                }
            }
            // the truncated sliver of the base (mass ≤ the tower truncation
            // budget) is reassigned proportionally to keep columns stochastic
            for (id, f) in entries {
                dst_idx.push(id);
                frac.push(f / acc);
            }
        }
        row_ptr.push(dst_idx.len() as u32);
    }

    // separation-time cylinder tree per column
    let base = tower.base;
    let base_len = tower.base_len();
    let sources: Vec<(f64, f64, u32)> = tower
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.source.0, c.source.1, i as u32))
        .collect();
    fn build_node(
        interval: (f64, f64),
        sep: u32,
        col: usize,
        pieces: &[(f64, f64)],
        sources: &[(f64, f64, u32)],
        base: (f64, f64),
        base_len: f64,
        h: f64,
        tower: &TowerModel,
    ) -> CylNode {
        let piece_lo = pieces
            .iter()
            .position(|&(_, hi)| hi > interval.0 + INTERVAL_EPS)
            .unwrap_or(pieces.len() - 1);
        let piece_hi = pieces
            .iter()
            .rposition(|&(lo, _)| lo < interval.1 - INTERVAL_EPS)
            .unwrap_or(piece_lo);
        let mut node = CylNode { piece_lo, piece_hi, sep, children: Vec::new() };
        if piece_hi <= piece_lo || interval.1 - interval.0 < h {
            return node;
        }
        // children: preimages of the return sets under the affine word map
        let ratio = (interval.1 - interval.0) / base_len;
        for &(slo, shi, ci) in sources {
            let clo = interval.0 + (slo - base.0) * ratio;
            let chi = interval.0 + (shi - base.0) * ratio;
            if chi - clo < INTERVAL_EPS {
                continue;
            }
            let r = tower.columns[ci as usize].return_time as u32;
            node.children.push(build_node(
                (clo, chi),
                sep + r,
                col,
                pieces,
                sources,
                base,
                base_len,
                h,
                tower,
            ));
        }
        node
    }
    let cyl_roots: Vec<CylNode> = tower
        .columns
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            build_node(
                c.source,
                c.return_time as u32,
                ci,
                &col_pieces[ci],
                &sources,
                base,
                base_len,
                h,
                tower,
            )
        })
        .collect();

    let tm = TransferMatrix {
        tower: tower.clone(),
        resolution,
        eps,
        beta,
        cells,
        masses,
        row_ptr,
        dst_idx,
        frac,
        col_pieces,
        cell_start,
        cyl_roots,
    };
    debug_assert!(tm.max_column_sum_defect() < STOCHASTICITY_TOL);
    Ok(tm)
}

impl TransferMatrix {
    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    /// Largest deviation of a matrix column sum from 1.
    pub fn max_column_sum_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            let s: f64 = (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(|e| self.frac[e as usize])
                .sum();
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }

    fn cell_id(&self, column: usize, level: usize, piece: usize) -> usize {
        self.cell_start[column] as usize + level * self.col_pieces[column].len() + piece
    }

    /// Transfer operator on densities: `(P̄φ)` with mass transport along the
    /// stored fractions. `phases`, when given, multiplies each source by
    /// `e^{i t f̄(source)}` first (the Fourier perturbation `P_t`).
    pub fn apply(&self, density: &[Complex64], phases: Option<&[Complex64]>) -> Vec<Complex64> {
        let n = self.dim();
        let mut mass = vec![Complex64::new(0.0, 0.0); n];
        for src in 0..n {
            let mut m = density[src] * self.masses[src];
            if let Some(ph) = phases {
                m *= ph[src];
            }
            for e in self.row_ptr[src]..self.row_ptr[src + 1] {
                mass[self.dst_idx[e as usize] as usize] += m * self.frac[e as usize];
            }
        }
        for i in 0..n {
            mass[i] /= self.masses[i];
        }
        mass
    }

    /// Adjoint action used for left eigenvectors.
    pub fn apply_transpose(
        &self,
        v: &[Complex64],
        phases: Option<&[Complex64]>,
    ) -> Vec<Complex64> {
        let n = self.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for src in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for e in self.row_ptr[src]..self.row_ptr[src + 1] {
                acc += v[self.dst_idx[e as usize] as usize] * self.frac[e as usize]
                    / self.masses[self.dst_idx[e as usize] as usize];
            }
            acc *= self.masses[src];
            if let Some(ph) = phases {
                acc *= ph[src].conj();
            }
            out[src] = acc;
        }
        out
    }

    pub fn integral(&self, density: &[Complex64]) -> Complex64 {
        density
            .iter()
            .zip(&self.masses)
            .map(|(d, &m)| d * m)
            .sum()
    }

    /// Level weights `e^{−εl}` per cell.
    pub fn level_weights(&self) -> Vec<f64> {
        self.cells.iter().map(|c| (-self.eps * c.level as f64).exp()).collect()
    }

    /// Weighted sup norm `sup |φ| w`.
    pub fn norm_c(&self, v: &[Complex64], weights: &[f64]) -> f64 {
        v.iter().zip(weights).map(|(x, &w)| x.norm() * w).fold(0.0, f64::max)
    }

    /// Lipschitz part: sup over elements (column × level) and over cylinder
    /// nodes of the oscillation divided by `β^{s−l}`, times the element
    /// weight (minimum cell weight within the element).
    pub fn lip_part(&self, v: &[Complex64], weights: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (ci, col) in self.tower.columns.iter().enumerate() {
            let pieces = self.col_pieces[ci].len();
            if pieces < 2 {
                continue;
            }
            for level in 0..col.return_time {
                let first = self.cell_id(ci, level, 0);
                let w_el = (0..pieces)
                    .map(|p| weights[first + p])
                    .fold(f64::INFINITY, f64::min);
                let mut stack = vec![&self.cyl_roots[ci]];
                while let Some(node) = stack.pop() {
                    if node.piece_hi > node.piece_lo {
                        let (mut re_lo, mut re_hi) = (f64::INFINITY, f64::NEG_INFINITY);
                        let (mut im_lo, mut im_hi) = (f64::INFINITY, f64::NEG_INFINITY);
                        for p in node.piece_lo..=node.piece_hi {
                            let x = v[first + p];
                            re_lo = re_lo.min(x.re);
                            re_hi = re_hi.max(x.re);
                            im_lo = im_lo.min(x.im);
                            im_hi = im_hi.max(x.im);
                        }
                        let osc = ((re_hi - re_lo).powi(2) + (im_hi - im_lo).powi(2)).sqrt();
                        let s_rel = node.sep as i64 - level as i64;
                        let val = osc / self.beta.powi(s_rel as i32) * w_el;
                        worst = worst.max(val);
                        for ch in &node.children {
                            stack.push(ch);
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn norm_l(&self, v: &[Complex64], weights: &[f64]) -> f64 {
        self.norm_c(v, weights) + self.lip_part(v, weights)
    }

    /// Discretized observable: per-cell mean of `f` over the cell's image
    /// interval `T^level(cell)`.
    pub fn observable(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, cell) in self.cells.iter().enumerate() {
            let col = &self.tower.columns[cell.column as usize];
            let (slo, shi) = col.source;
            let (ilo, ihi) = col.images[cell.level as usize];
            let a = ilo + (cell.lo - slo) / (shi - slo) * (ihi - ilo);
            let b = ilo + (cell.hi - slo) / (shi - slo) * (ihi - ilo);
            out[i] = adaptive_simpson(&|x| f(x), a, b, 1e-12) / (b - a);
        }
        out
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.masses).map(|(v, m)| v * m).sum()
    }

    pub fn phases(&self, values: &[f64], t: f64) -> Vec<Complex64> {
        values.iter().map(|&v| Complex64::from_polar(1.0, t * v)).collect()
    }

    /// `∫ P_t^n 1 dν̄`, the characteristic function of the Birkhoff sum
    /// `S_n^f̄` of the discretized observable.
    pub fn charfn_via_operator(&self, values: &[f64], t: f64, n: usize) -> Complex64 {
        let phases = self.phases(values, t);
        let mut v = vec![Complex64::new(1.0, 0.0); self.dim()];
        for _ in 0..n {
            v = self.apply(&v, Some(&phases));
        }
        self.integral(&v)
    }

    /// Characteristic function of the same discretized observable by direct
    /// tower-orbit simulation (independent of the operator route).
    pub fn charfn_via_orbits(
        &self,
        values: &[f64],
        t: f64,
        n: usize,
        orbits: u64,
        seed: u64,
    ) -> Complex64 {
        let mut cum = Vec::with_capacity(self.dim());
        let mut acc = 0.0;
        for &m in &self.masses {
            acc += m;
            cum.push(acc);
        }
        let chunk = 4096u64;
        let ranges: Vec<(u64, u64)> = (0..orbits)
            .step_by(chunk as usize)
            .map(|lo| (lo, (lo + chunk).min(orbits)))
            .collect();
        let sums: Vec<Complex64> = ranges
            .par_iter()
            .map(|&(lo, hi)| {
                let mut total = Complex64::new(0.0, 0.0);
                for o in lo..hi {
                    let mut rng = crate::sampling::trajectory_rng(seed, o);
                    let u: f64 = rng.gen();
                    let start = cum.partition_point(|&c| c < u).min(self.dim() - 1);
                    let cell = self.cells[start];
                    let mut col = cell.column as usize;
                    let mut level = cell.level as usize;
                    let mut x = cell.lo + rng.gen::<f64>() * (cell.hi - cell.lo);
                    let mut s = 0.0;
                    for _ in 0..n {
                        // value of the containing cell
                        let pieces = &self.col_pieces[col];
                        let p = pieces
                            .partition_point(|&(_, hi)| hi <= x)
                            .min(pieces.len() - 1);
                        s += values[self.cell_id(col, level, p)];
                        let c = &self.tower.columns[col];
                        if level + 1 < c.return_time {
                            level += 1;
                        } else {
                            let (slo, shi) = c.source;
                            x = self.tower.base.0
                                + (x - slo) / (shi - slo) * self.tower.base_len();
                            level = 0;
                            col = self
                                .tower
                                .columns
                                .partition_point(|cc| cc.source.1 <= x + INTERVAL_EPS)
                                .min(self.tower.columns.len() - 1);
                        }
                    }
                    total += Complex64::from_polar(1.0, t * s);
                }
                total
            })
            .collect();
        sums.into_iter().sum::<Complex64>() / orbits as f64
    }
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// modulus of the second eigenvalue from deflated iteration
    pub second_modulus: f64,
    /// |λ₂| / |λ₁|
    pub gap_ratio: f64,
    pub iterations: usize,
}

impl EigenEstimate {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.lambda_re, self.lambda_im)
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn power_iterate(
    dim: usize,
    mut apply: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Complex64, Vec<Complex64>, usize), TowerError> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|i| Complex64::new(1.0 + 1e-3 * ((i * 2654435761) % 97) as f64 / 97.0, 0.0))
        .collect();
    let mut lambda = Complex64::new(0.0, 0.0);
    let mut stable = 0;
    for it in 0..max_iter {
        let w = apply(&v);
        let vv = dot(&v, &v);
        let new_lambda = dot(&v, &w) / vv;
        let scale = w.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(TowerError::NoConvergence);
        }
        v = w.into_iter().map(|x| x / scale).collect();
        if (new_lambda - lambda).norm() < tol * (1.0 + new_lambda.norm()) {
            stable += 1;
            if stable >= 3 {
                return Ok((new_lambda, v, it + 1));
            }
        } else {
            stable = 0;
        }
        lambda = new_lambda;
    }
    Err(TowerError::NoConvergence)
}

/// Dominant eigenvalue of `P_t` (phases = `e^{itf̄}` per cell, `None` for
/// `P_0 = P`) with a spectral-gap estimate from one deflation step.
pub fn leading_eigenvalue(
    matrix: &TransferMatrix,
    phases: Option<&[Complex64]>,
) -> Result<EigenEstimate, TowerError> {
    let dim = matrix.dim();
    let (lambda, right, iters) =
        power_iterate(dim, |v| matrix.apply(v, phases), EIGEN_TOL, 100_000)?;
    let (_, left, _) =
        power_iterate(dim, |v| matrix.apply_transpose(v, phases), EIGEN_TOL.max(1e-12), 100_000)?;
    let uv = dot(&left, &right);
    let deflate = |w: &mut Vec<Complex64>| {
        let c = dot(&left, w) / uv;
        for (wi, ri) in w.iter_mut().zip(&right) {
            *wi -= c * ri;
        }
    };
    // Second-eigenvalue modulus from the geometric mean of the deflated
    // iteration's growth; insensitive to complex-pair rotation.
    let mut w: Vec<Complex64> = (0..dim)
        .map(|i| {
            Complex64::new(
                ((i * 37) % 23) as f64 / 23.0 - 0.5,
                ((i * 61) % 17) as f64 / 17.0 - 0.5,
            )
        })
        .collect();
    deflate(&mut w);
    let burn_in = 120;
    let total = 520;
    let mut log_sum = 0.0;
    let mut counted = 0usize;
    let mut second_modulus = 0.0;
    for it in 0..total {
        let mut x = matrix.apply(&w, phases);
        deflate(&mut x);
        let scale = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale < 1e-280 {
            counted = 0;
            break;
        }
        for xi in x.iter_mut() {
            *xi /= scale;
        }
        if it >= burn_in {
            log_sum += scale.ln();
            counted += 1;
        }
        w = x;
    }
    if counted > 0 {
        second_modulus = (log_sum / counted as f64).exp();
    }
    let gap_ratio = second_modulus / lambda.norm();
    if gap_ratio > 1.0 - 1e-6 {
        return Err(TowerError::NoGap { lambda2: second_modulus });
    }
    Ok(EigenEstimate {
        lambda_re: lambda.re,
        lambda_im: lambda.im,
        second_modulus,
        gap_ratio,
        iterations: iters + total,
    })
}

/// Quadratic expansion fit `λ_t ≈ 1 + i a t − ((σ² + a²)/2) t²` over a small
/// t-grid; `σ²` is the limit variance of the Birkhoff sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub a_fit: f64,
    pub sigma_sq_fit: f64,
    pub residual: f64,
}

pub fn eigenvalue_expansion_fit(
    samples: &[(f64, Complex64)],
) -> Result<ExpansionFit, TowerError> {
    assert!(samples.len() >= 3);
    // odd fit: Im λ = a t + b t³
    let (mut s11, mut s13, mut s33, mut r1, mut r3) = (0.0, 0.0, 0.0, 0.0, 0.0);
    // even fit: 1 − Re λ = q t² + r t⁴
    let (mut e22, mut e24, mut e44, mut q2, mut q4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, l) in samples {
        let (t1, t2, t3, t4) = (t, t * t, t * t * t, t * t * t * t);
        s11 += t1 * t1;
        s13 += t1 * t3;
        s33 += t3 * t3;
        r1 += t1 * l.im;
        r3 += t3 * l.im;
        e22 += t2 * t2;
        e24 += t2 * t4;
        e44 += t4 * t4;
        q2 += t2 * (1.0 - l.re);
        q4 += t4 * (1.0 - l.re);
    }
    let det_odd = s11 * s33 - s13 * s13;
    let a = (r1 * s33 - r3 * s13) / det_odd;
    let det_even = e22 * e44 - e24 * e24;
    let q = (q2 * e44 - q4 * e24) / det_even;
    let sigma_sq = 2.0 * q - a * a;
    let mut residual = 0.0f64;
    for &(t, l) in samples {
        let model = Complex64::new(1.0 - q * t * t, a * t);
        residual = residual.max((l - model).norm() / (t * t));
    }
    if sigma_sq < DEGENERATE_VARIANCE {
        return Err(TowerError::DegenerateVariance { sigma_sq });
    }
    Ok(ExpansionFit { a_fit: a, sigma_sq_fit: sigma_sq, residual })
}

/// Green–Kubo variance `σ² = ∫f² + 2 Σ_{k≥1} ∫ f·(f∘T^k)` of a zero-mean
/// observable on the interval map, by per-branch-word quadrature. Serves as
/// the independent route against the eigenvalue-expansion fit.
pub fn green_kubo_sigma_sq(map: &IntervalMapSpec, f: impl Fn(f64) -> f64, k_max: usize) -> f64 {
    let mean = adaptive_simpson(&|x| f(x), 0.0, 1.0, 1e-12);
    let g = |x: f64| f(x) - mean;
    let mut sigma = adaptive_simpson(&|x| g(x) * g(x), 0.0, 1.0, 1e-12);
    // words of depth k: intervals on which T^k is affine
    let mut words: Vec<(f64, f64, f64, f64)> = vec![(0.0, 1.0, 0.0, 1.0)]; // (lo, hi, img_lo, img_hi)
    for _k in 1..=k_max {
        let mut next = Vec::with_capacity(words.len() * map.branches());
        for &(lo, hi, ilo, ihi) in &words {
            for b in 0..map.branches() {
                let (blo, bhi) = (map.breakpoints[b], map.breakpoints[b + 1]);
                let cut_lo = ilo.max(blo);
                let cut_hi = ihi.min(bhi);
                if cut_hi - cut_lo < 1e-15 {
                    continue;
                }
                let src_at = |y: f64| lo + (y - ilo) / (ihi - ilo) * (hi - lo);
                next.push((
                    src_at(cut_lo),
                    src_at(cut_hi),
                    (cut_lo - blo) / (bhi - blo),
                    (cut_hi - blo) / (bhi - blo),
                ));
            }
        }
        words = next;
        let mut corr = 0.0;
        for &(lo, hi, ilo, ihi) in &words {
            let scale = (ihi - ilo) / (hi - lo);
            corr += adaptive_simpson(&|x| g(x) * g(ilo + (x - lo) * scale), lo, hi, 1e-13);
        }
        sigma += 2.0 * corr;
    }
    sigma
}

// ---------------------------------------------------------------------------
// Doeblin–Fortet envelope
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoeblinFortetReport {
    pub n_steps: usize,
    pub tau: f64,
    pub k_const: f64,
    pub pass: bool,
    /// per test function: (‖P^Nφ‖_L, ‖φ‖_L, ‖φ‖_C)
    pub rows: Vec<(f64, f64, f64)>,
}

/// Standard oscillating test suite: Fourier-like modes across the base at
/// several frequencies with level-dependent phases, plus seeded random
/// Lipschitz fields.
pub fn default_test_suite(matrix: &TransferMatrix) -> Vec<Vec<Complex64>> {
    let mut suite = Vec::new();
    let (blo, _) = matrix.tower.base;
    let blen = matrix.tower.base_len();
    for &q in &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        for &phase in &[0.0, 0.7] {
            let v: Vec<Complex64> = matrix
                .cells
                .iter()
                .map(|c| {
                    let x = (0.5 * (c.lo + c.hi) - blo) / blen;
                    Complex64::new(
                        (std::f64::consts::TAU * q * x + phase * c.level as f64).cos(),
                        0.0,
                    )
                })
                .collect();
            suite.push(v);
        }
    }
    // top-level indicators of tall columns: these are the functions that
    // expose norm inflation when ε exceeds the expansion rate
    for &r in &[4usize, 6, 8, 10] {
        if let Some((ci, col)) =
            matrix.tower.columns.iter().enumerate().find(|(_, c)| c.return_time == r)
        {
            let v: Vec<Complex64> = matrix
                .cells
                .iter()
                .map(|c| {
                    if c.column as usize == ci && c.level as usize == col.return_time - 1 {
                        let x = (0.5 * (c.lo + c.hi) - blo) / blen;
                        Complex64::new(1.0 + (std::f64::consts::TAU * 8.0 * x).cos(), 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            suite.push(v);
        }
    }
    for seed in 0..8u64 {
        let mut rng = crate::sampling::trajectory_rng(0xD0E8, seed);
        let mut acc = 0.0;
        let v: Vec<Complex64> = matrix
            .cells
            .iter()
            .map(|_| {
                acc += rng.gen::<f64>() - 0.5;
                Complex64::new(acc, 0.0)
            })
            .collect();
        suite.push(v);
    }
    suite
}

/// Best (τ, K) envelope for `‖P^N φ‖_L ≤ τ‖φ‖_L + K‖φ‖_C` over the suite:
/// τ from the Lipschitz contraction, K from the sup-norm growth. Passing
/// means some τ < 1 works uniformly.
pub fn doeblin_fortet_check(
    matrix: &TransferMatrix,
    n_steps: usize,
    suite: &[Vec<Complex64>],
) -> DoeblinFortetReport {
    let weights = matrix.level_weights();
    let mut tau: f64 = 0.0;
    let mut k_const: f64 = 0.0;
    let mut rows = Vec::new();
    for phi in suite {
        let mut v = phi.clone();
        for _ in 0..n_steps {
            v = matrix.apply(&v, None);
        }
        let c_in = matrix.norm_c(phi, &weights);
        let l_in = matrix.norm_l(phi, &weights);
        let c_out = matrix.norm_c(&v, &weights);
        let lip_out = matrix.lip_part(&v, &weights);
        rows.push((c_out + lip_out, l_in, c_in));
        if l_in > 0.0 {
            tau = tau.max(lip_out / l_in);
        }
        if c_in > 0.0 {
            k_const = k_const.max(c_out / c_in);
        }
    }
    DoeblinFortetReport { n_steps, tau, k_const, pass: tau < 1.0, rows }
}

// ---------------------------------------------------------------------------
// Heavy-tail weights
// ---------------------------------------------------------------------------

/// Per-cell weights `Π_{k=1}^{l} min(e^{−ε}, κ̄(x, l−k)^{−δ})` replacing the
/// plain `e^{−εl}` level factor. For bounded κ̄ with `max κ̄^{−δ} ≥ e^{−ε}`
/// the product collapses back to `e^{−εl}`.
pub fn heavy_tail_weights(
    matrix: &TransferMatrix,
    kappa_bar: &[f64],
    eps: f64,
    delta: f64,
) -> Vec<f64> {
    let mut out = vec![1.0; matrix.dim()];
    for (ci, col) in matrix.tower.columns.iter().enumerate() {
        let pieces = matrix.col_pieces[ci].len();
        for p in 0..pieces {
            let mut w = 1.0;
            for level in 1..col.return_time {
                let below = matrix.cell_id(ci, level - 1, p);
                w *= (-eps).exp().min(kappa_bar[below].powf(-delta));
                out[matrix.cell_id(ci, level, p)] = w;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Correlation decay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// C(n) = ∫(φ∘F̄ⁿ)ψ dν̄ − ∫φ∫ψ
    pub correlations: Vec<f64>,
    /// exponential fit of |C(n)| where it stays above the floor
    pub tau: Option<f64>,
    pub super_exponential: bool,
}

/// `floor_rel` sets the relative level below which correlations count as
/// zero; the Ulam discretization itself leaves noise of order `1/resolution`
/// relative to C(0), so verdicts below that level are not meaningful.
pub fn correlation_decay_check(
    matrix: &TransferMatrix,
    phi: &[f64],
    psi: &[f64],
    n_max: usize,
    floor_rel: f64,
) -> CorrelationReport {
    let mean_phi = matrix.mean(phi);
    let mean_psi = matrix.mean(psi);
    let mut v: Vec<Complex64> = psi.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let scale0: f64 = phi
        .iter()
        .zip(&matrix.masses)
        .map(|(p, m)| p * p * m)
        .sum::<f64>()
        .max(1e-300);
    let mut correlations = Vec::with_capacity(n_max);
    for _n in 1..=n_max {
        v = matrix.apply(&v, None);
        let c: f64 = phi
            .iter()
            .zip(v.iter().zip(&matrix.masses))
            .map(|(p, (x, m))| p * x.re * m)
            .sum::<f64>()
            - mean_phi * mean_psi;
        correlations.push(c);
    }
    let floor = floor_rel * scale0;
    let pts: Vec<(f64, f64)> = correlations
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > floor)
        .map(|(i, c)| ((i + 1) as f64, c.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return CorrelationReport { correlations, tau: None, super_exponential: true };
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = fit_line(&xs, &ys);
    CorrelationReport {
        correlations,
        tau: Some(fit.slope.exp()),
        super_exponential: false,
    }
}
