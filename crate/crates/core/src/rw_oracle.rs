//! Exact lattice random-walk oracles.
//!
//! Independent comparison objects for the billiard estimators: exact simple
//! random walk distributions in d = 1, 2 (plus the d = 3 return probability
//! used as a transient control), the four-term characteristic-function
//! decomposition behind the classical local CLT, and a heavy-tailed i.i.d.
//! step law `p(±u) = c/u³` with `c = 1/(2ζ(3))` whose Fourier transform
//! carries the `1 + c t² log|t|` singularity responsible for the
//! `√(n log n)` scaling.

use crate::numerics::adaptive_simpson;
use crate::tolerances::{PMF_TRUNCATION_DEFAULT, QUADRATURE_TOL};
use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Apéry's constant ζ(3).
pub const ZETA3: f64 = 1.202_056_903_159_594_2;

/// Normalization of the heavy-tail step law: `p(±u) = HEAVY_C / u³`.
pub const HEAVY_C: f64 = 1.0 / (2.0 * ZETA3);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("truncation ledger {mass:.3e} exceeds the bound {bound:.3e}; enlarge the window")]
    WindowOverflow { mass: f64, bound: f64 },
    #[error("point {k} is off the support of W_{n} (parity)")]
    ParityViolation { n: u64, k: i64 },
    #[error("parameter order violated: need A < ε√n, got A={a}, ε√n={eps_sqrt_n:.3}")]
    ParameterOrder { a: f64, eps_sqrt_n: f64 },
    #[error("unsupported query: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkSpec {
    /// Simple symmetric walk on ℤ^d, steps ±e_j with probability 1/(2d).
    Ssrw { d: usize },
    /// Heavy-tailed walk on ℤ, step pmf `c/|u|³`.
    HeavyTail,
}

fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Exact pmf of the d = 1 simple walk: `P(W_n = k) = C(n, (n+k)/2) 2^{−n}`.
/// The support is the span-2 lattice `{−n, −n+2, …, n}`.
pub fn ssrw1_prob(n: u64, k: i64) -> f64 {
    if k.unsigned_abs() > n || (n as i64 + k) % 2 != 0 {
        return 0.0;
    }
    if k == 0 {
        // central value as an exact product Π (2j−1)/(2j)
        let m = n / 2;
        let mut p = 1.0;
        for j in 1..=m {
            p *= (2 * j - 1) as f64 / (2 * j) as f64;
        }
        return p;
    }
    let m = ((n as i64 + k) / 2) as u64;
    (ln_factorial(n) - ln_factorial(m) - ln_factorial(n - m) - n as f64 * std::f64::consts::LN_2)
        .exp()
}

/// Dense d = 1 pmf over the support, via the central value and the binomial
/// ratio recurrence.
pub fn ssrw1_dense(n: u64) -> Vec<(i64, f64)> {
    let start = if n % 2 == 0 { 0i64 } else { 1i64 };
    let mut out = Vec::new();
    let p_start = ssrw1_prob(n, start);
    // upward: C(n, m+1)/C(n, m) = (n−m)/(m+1)
    let mut k = start;
    let mut p = p_start;
    while k <= n as i64 {
        out.push((k, p));
        let m = ((n as i64 + k) / 2) as f64;
        p *= (n as f64 - m) / (m + 1.0);
        k += 2;
    }
    if start == 0 {
        let mirrored: Vec<(i64, f64)> = out.iter().skip(1).map(|&(k, p)| (-k, p)).collect();
        out.extend(mirrored);
    } else {
        let mirrored: Vec<(i64, f64)> = out.iter().map(|&(k, p)| (-k, p)).collect();
        out.extend(mirrored);
    }
    out.sort_by_key(|&(k, _)| k);
    out
}

/// Exact pmf of the d = 2 simple walk. The rotated coordinates `x+y` and
/// `x−y` perform independent d = 1 walks, so the pmf factorizes.
pub fn ssrw2_prob(n: u64, k: [i64; 2]) -> f64 {
    ssrw1_prob(n, k[0] + k[1]) * ssrw1_prob(n, k[0] - k[1])
}

/// Return probability of the d = 3 simple walk by exact multinomial
/// summation (transient control case; only the origin is exposed).
pub fn ssrw3_return_prob(n: u64) -> f64 {
    if n % 2 != 0 {
        return 0.0;
    }
    let m = n / 2;
    let ln6 = 6.0f64.ln();
    let lf: Vec<f64> = (0..=n).map(ln_factorial).collect();
    let mut sum = 0.0;
    for a in 0..=m {
        for b in 0..=(m - a) {
            let c = m - a - b;
            let lg = lf[n as usize]
                - 2.0 * lf[a as usize]
                - 2.0 * lf[b as usize]
                - 2.0 * lf[c as usize]
                - n as f64 * ln6;
            sum += lg.exp();
        }
    }
    sum
}

/// `P(W_n = k)` for the d = 1 walk by inverting the characteristic function
/// over the half-period `|t| ≤ π/2` of the span-2 lattice. Quadrature-based;
/// serves as an independent route to `ssrw1_prob`.
pub fn ssrw1_prob_by_inversion(n: u64, k: i64) -> f64 {
    if (n as i64 + k) % 2 != 0 {
        return 0.0;
    }
    let f = |t: f64| (t.cos().powi(n as i32)) * (t * k as f64).cos();
    adaptive_simpson(&f, 0.0, std::f64::consts::FRAC_PI_2, QUADRATURE_TOL)
        * (2.0 / std::f64::consts::PI)
}

// ---------------------------------------------------------------------------
// Heavy-tail characteristic function
// ---------------------------------------------------------------------------

/// Bernoulli numbers B_2, B_4, …, B_40.
const BERNOULLI_2N: [f64; 20] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
    -7709321041217.0 / 510.0,
    2577687858367.0 / 6.0,
    -26315271553053477373.0 / 1919190.0,
    2929993913841559.0 / 6.0,
    -261082718496449122051.0 / 13530.0,
];

/// ζ at negative odd integers: ζ(−(2n−1)) = −B_{2n}/(2n).
fn zeta_neg_odd(two_n: usize) -> f64 {
    -BERNOULLI_2N[two_n / 2 - 1] / two_n as f64
}

/// Characteristic function `ξ(t) = Σ_u p(u) e^{itu}` of the heavy-tail step
/// law, evaluated through the polylogarithm expansion of `Re Li₃(e^{it})`
/// around t = 0 (valid on a full period):
///
/// `Re Li₃(e^{it}) = ζ(3) + (t²/2)(ln|t| − 3/2) + Σ_{m≥2} ζ(3−2m)(−1)^m t^{2m}/(2m)!`
///
/// The `t² log|t|` term is the hallmark of the nonnormal domain of
/// attraction: `ξ(t) = 1 + c t² ln|t| + O(t²)` with the same `c` as the pmf.
pub fn heavy_tail_charfn(t: f64) -> f64 {
    let mut t = t.abs() % std::f64::consts::TAU;
    if t > std::f64::consts::PI {
        t = std::f64::consts::TAU - t;
    }
    if t == 0.0 {
        return 1.0;
    }
    let mut re_li3 = ZETA3 + 0.5 * t * t * (t.ln() - 1.5);
    let t2 = t * t;
    let mut t_pow = t2 * t2; // t^{2m} starting at m = 2
    let mut factorial = 24.0; // (2m)!
    for m in 2..=21 {
        let two_m = 2 * m;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let term = zeta_neg_odd(two_m - 2) * sign * t_pow / factorial;
        re_li3 += term;
        if term.abs() < 1e-18 && m > 6 {
            break;
        }
        t_pow *= t2;
        factorial *= ((two_m + 1) * (two_m + 2)) as f64;
    }
    re_li3 / ZETA3
}

/// Direct series evaluation `Σ_{u≤U} 2c·cos(tu)/u³` with the analytic tail
/// bound; slow but independent of the polylog route.
pub fn heavy_tail_charfn_series(t: f64, terms: u64) -> f64 {
    let mut sum = 0.0;
    for u in (1..=terms).rev() {
        let uf = u as f64;
        sum += (t * uf).cos() / (uf * uf * uf);
    }
    sum / ZETA3
}

/// Slope/intercept fit of `(ξ(t) − 1)/t²` against `ln(1/t)`.
///
/// For the heavy-tail law the points are asymptotically linear with slope
/// `−c` (variance-like sign: the effective variance grows like `|ln t|`);
/// bounded-support laws flatten to the constant `−σ²/2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharFnFit {
    pub c_fit: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn charfn_log_fit(charfn: impl Fn(f64) -> f64, t_lo: f64, t_hi: f64, points: usize) -> CharFnFit {
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    let mut pts = Vec::with_capacity(points);
    for i in 0..points {
        let f = i as f64 / (points - 1) as f64;
        let t = t_lo * (t_hi / t_lo).powf(f);
        let y = (charfn(t) - 1.0) / (t * t);
        xs.push((1.0 / t).ln());
        ys.push(y);
        pts.push((t, y));
    }
    let fit = crate::numerics::fit_line(&xs, &ys);
    CharFnFit { c_fit: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared, points: pts }
}

pub fn heavy_tail_charfn_fit() -> CharFnFit {
    charfn_log_fit(heavy_tail_charfn, 1e-4, 1e-1, 41)
}

// ---------------------------------------------------------------------------
// Heavy-tail exact pmf by FFT convolution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct PmfOptions {
    /// log2 of the circular window size.
    pub window_log2: usize,
    /// Abort with `WindowOverflow` once the truncation ledger exceeds this.
    pub max_truncation_mass: f64,
}

impl Default for PmfOptions {
    fn default() -> Self {
        PmfOptions { window_log2: 22, max_truncation_mass: PMF_TRUNCATION_DEFAULT }
    }
}

/// Step-law support cutoff: `|u| ≤ 2^20`. The discarded step mass
/// `2c Σ_{u>2^20} u^{−3} ≈ 3.8·10^{−13}` seeds the truncation ledger.
pub const HEAVY_STEP_CUTOFF: u64 = 1 << 20;

/// Exact (up to the tracked ledger) distribution of the n-fold heavy-tail
/// convolution on a circular window.
#[derive(Debug, Clone)]
pub struct HeavyPmf {
    pub n: u64,
    probs: Vec<f64>,
    /// Total unaccounted mass: step-law cutoff plus window trims.
    pub truncation_ledger: f64,
}

impl HeavyPmf {
    pub fn prob(&self, k: i64) -> f64 {
        let w = self.probs.len() as i64;
        if k >= -w / 2 && k < w / 2 {
            self.probs[k.rem_euclid(w) as usize]
        } else {
            0.0
        }
    }

    pub fn window_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// One checkpoint of the doubling convolution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DyadicPmfPoint {
    pub n: u64,
    pub prob_zero: f64,
    pub truncation_ledger: f64,
    pub window_mass: f64,
}

struct ConvolutionEngine {
    window: usize,
    trim_radius: usize,
    planner: FftPlanner<f64>,
}

impl ConvolutionEngine {
    fn new(window_log2: usize) -> ConvolutionEngine {
        let window = 1 << window_log2;
        ConvolutionEngine { window, trim_radius: window / 4 - 1, planner: FftPlanner::new() }
    }

    /// Step pmf on the window plus the analytic cutoff mass.
    fn step_pmf(&self) -> (Vec<f64>, f64) {
        let w = self.window;
        let cutoff = HEAVY_STEP_CUTOFF.min(self.trim_radius as u64);
        let mut p = vec![0.0; w];
        for u in 1..=cutoff {
            let v = HEAVY_C / (u as f64).powi(3);
            p[u as usize] = v;
            p[w - u as usize] = v;
        }
        // Euler–Maclaurin tail of Σ u^{−3} past the cutoff.
        let uc = cutoff as f64;
        let tail = 0.5 / (uc * uc) - 0.5 / (uc * uc * uc) + 0.25 / (uc * uc * uc * uc);
        (p, 2.0 * HEAVY_C * tail)
    }

    /// Circular convolution of two trimmed pmfs; supports stay within half
    /// the window so no aliasing occurs. Returns the trimmed-off mass.
    /// Passing `None` squares `a`.
    fn convolve(&mut self, a: &[f64], b: Option<&[f64]>) -> (Vec<f64>, f64) {
        let w = self.window;
        let fft = self.planner.plan_fft_forward(w);
        let ifft = self.planner.plan_fft_inverse(w);
        let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.process(&mut fa);
        match b {
            None => {
                for x in fa.iter_mut() {
                    *x = *x * *x;
                }
            }
            Some(b) => {
                let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                fft.process(&mut fb);
                for (x, y) in fa.iter_mut().zip(&fb) {
                    *x *= *y;
                }
            }
        }
        ifft.process(&mut fa);
        let scale = 1.0 / w as f64;
        let mut out = vec![0.0; w];
        let mut trimmed = 0.0;
        for (i, x) in fa.iter().enumerate() {
            let v = (x.re * scale).max(0.0);
            let u = if i <= w / 2 { i } else { w - i };
            if u <= self.trim_radius {
                out[i] = v;
            } else {
                trimmed += v;
            }
        }
        (out, trimmed)
    }
}

/// Distribution of `W_n` for the heavy-tail walk by FFT-accelerated iterated
/// convolution (binary decomposition of `n`) on a truncated window with a
/// tracked truncation ledger.
pub fn heavy_tail_pmf(n: u64, opts: PmfOptions) -> Result<HeavyPmf, OracleError> {
    assert!(n >= 1);
    let mut eng = ConvolutionEngine::new(opts.window_log2);
    let (step, step_loss) = eng.step_pmf();
    let mut ledger_sq = step_loss; // loss fraction of the running square
    let mut sq = step;
    let mut acc: Option<(Vec<f64>, f64)> = None;
    let mut bits = n;
    loop {
        if bits & 1 == 1 {
            acc = Some(match acc {
                None => (sq.clone(), ledger_sq),
                Some((a, la)) => {
                    let (c, trimmed) = eng.convolve(&a, Some(&sq));
                    let loss = la + ledger_sq - la * ledger_sq + trimmed;
                    (c, loss)
                }
            });
        }
        bits >>= 1;
        if bits == 0 {
            break;
        }
        let (c, trimmed) = eng.convolve(&sq, None);
        ledger_sq = 2.0 * ledger_sq - ledger_sq * ledger_sq + trimmed;
        sq = c;
    }
    let (probs, ledger) = acc.unwrap();
    if ledger > opts.max_truncation_mass {
        return Err(OracleError::WindowOverflow { mass: ledger, bound: opts.max_truncation_mass });
    }
    Ok(HeavyPmf { n, probs, truncation_ledger: ledger })
}

/// Doubling convolution with a checkpoint after every squaring: exact pmfs of
/// `W_n` at `n = 2^j` for `j = 0..=max_log2`.
pub fn heavy_tail_dyadic(max_log2: usize, opts: PmfOptions) -> Result<Vec<DyadicPmfPoint>, OracleError> {
    let mut eng = ConvolutionEngine::new(opts.window_log2);
    let (mut p, mut ledger) = eng.step_pmf();
    let mut out = vec![DyadicPmfPoint {
        n: 1,
        prob_zero: p[0],
        truncation_ledger: ledger,
        window_mass: p.iter().sum(),
    }];
    for j in 1..=max_log2 {
        let (c, trimmed) = eng.convolve(&p, None);
        ledger = 2.0 * ledger - ledger * ledger + trimmed;
        p = c;
        if ledger > opts.max_truncation_mass {
            return Err(OracleError::WindowOverflow {
                mass: ledger,
                bound: opts.max_truncation_mass,
            });
        }
        out.push(DyadicPmfPoint {
            n: 1 << j,
            prob_zero: p[0],
            truncation_ledger: ledger,
            window_mass: p.iter().sum(),
        });
    }
    Ok(out)
}

/// `P(W_n = 0)` for the heavy-tail walk by characteristic-function inversion
/// (span-1 lattice): `(1/π) ∫_0^π ξ(t)^n dt`. Independent of the FFT route.
pub fn heavy_tail_return_by_inversion(n: u64) -> f64 {
    let f = |t: f64| {
        let xi = heavy_tail_charfn(t);
        let mag = xi.abs().powf(n as f64);
        if xi < 0.0 && n % 2 == 1 {
            -mag
        } else {
            mag
        }
    };
    // ξ is real and even; fold to [0, π].
    adaptive_simpson(&f, 0.0, std::f64::consts::PI, QUADRATURE_TOL) / std::f64::consts::PI
}

// ---------------------------------------------------------------------------
// Gnedenko four-term decomposition
// ---------------------------------------------------------------------------

/// The four integrals bounding `π·|√n P(W_n = k_n) − 2φ(k_n/√n)|` for the
/// d = 1 simple walk, with `γ(s) = e^{−s²/2}` and `ξ(t) = cos t`:
///
/// - `I    = ∫_{|s|≤A} |ξ^n(s/√n) − γ(s)| ds`
/// - `II   = ∫_{|s|≥A} γ(s) ds`
/// - `III  = ∫_{A≤|s|≤ε√n} |ξ^n(s/√n)| ds`
/// - `IIII = ∫_{ε√n≤|s|≤√n·π/2} |ξ^n(s/√n)| ds`
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GnedenkoTerms {
    pub term_i: f64,
    pub term_ii: f64,
    pub term_iii: f64,
    pub term_iiii: f64,
    /// Analytic bound `∫_{|s|≥A} e^{−s²/4} ds` that III must respect.
    pub term_iii_bound: f64,
}

impl GnedenkoTerms {
    pub fn total(&self) -> f64 {
        self.term_i + self.term_ii + self.term_iii + self.term_iiii
    }
}

fn cos_pow_n(s: f64, sqrt_n: f64, n: f64) -> f64 {
    let c = (s / sqrt_n).cos();
    if c <= 0.0 {
        0.0
    } else {
        (n * c.ln()).exp()
    }
}

pub fn gnedenko_terms(n: u64, a: f64, eps: f64) -> Result<GnedenkoTerms, OracleError> {
    let sqrt_n = (n as f64).sqrt();
    // A = ε√n is admissible: the III range degenerates to a point and the
    // covering of [A, √n·π/2] by III ∪ IIII still holds.
    if a > eps * sqrt_n {
        return Err(OracleError::ParameterOrder { a, eps_sqrt_n: eps * sqrt_n });
    }
    let nf = n as f64;
    let diff = move |s: f64| cos_pow_n(s, sqrt_n, nf) - (-0.5 * s * s).exp();

    // Term I: split |ξⁿ − γ| at sign changes located on a scan grid.
    let mut roots = vec![0.0];
    let grid = 4096;
    let mut prev = diff(0.0);
    for i in 1..=grid {
        let s = a * i as f64 / grid as f64;
        let cur = diff(s);
        if prev != 0.0 && cur != 0.0 && prev.signum() != cur.signum() {
            let (mut lo, mut hi) = (a * (i - 1) as f64 / grid as f64, s);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if diff(mid).signum() == diff(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    roots.push(a);
    let mut term_i = 0.0;
    for seg in roots.windows(2) {
        term_i += adaptive_simpson(&|s| diff(s).abs(), seg[0], seg[1], QUADRATURE_TOL).abs();
    }
    term_i *= 2.0;

    let sqrt_half_pi = (std::f64::consts::PI / 2.0).sqrt();
    let term_ii = 2.0 * sqrt_half_pi * erfc(a / std::f64::consts::SQRT_2);
    let term_iii = 2.0
        * adaptive_simpson(&|s| cos_pow_n(s, sqrt_n, nf), a, eps * sqrt_n, QUADRATURE_TOL);
    let term_iiii = 2.0
        * adaptive_simpson(
            &|s| cos_pow_n(s, sqrt_n, nf),
            eps * sqrt_n,
            sqrt_n * std::f64::consts::FRAC_PI_2,
            QUADRATURE_TOL,
        );
    let term_iii_bound = 2.0 * std::f64::consts::PI.sqrt() * erfc(a / 2.0);
    Ok(GnedenkoTerms { term_i, term_ii, term_iii, term_iiii, term_iii_bound })
}

/// Left side of the decomposition bound: `π·|√n P(W_n = k_n) − 2φ(k_n/√n)|`.
/// The factor 2 is the covolume of the span-2 support lattice; the prefactor
/// π comes with the half-period inversion formula.
pub fn gnedenko_lhs(n: u64, k: i64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let phi = (-0.5 * (k as f64 / sqrt_n).powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt();
    std::f64::consts::PI * (sqrt_n * ssrw1_prob(n, k) - 2.0 * phi).abs()
}

// ---------------------------------------------------------------------------
// LCLT comparison tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcltRow {
    pub n: u64,
    pub k: Vec<i64>,
    pub exact: f64,
    pub normalizer: f64,
    pub normalized: f64,
    pub limit: f64,
}

/// Tabulates `normalizer(n) · P(W_n = k)` against the limiting Gaussian
/// density times the lattice covolume. Off-support targets are rejected.
pub fn lclt_limit_check(
    spec: WalkSpec,
    schedule: &[u64],
    k: &[i64],
) -> Result<Vec<LcltRow>, OracleError> {
    let mut rows = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let row = match spec {
            WalkSpec::Ssrw { d: 1 } => {
                let kk = k[0];
                if (n as i64 + kk) % 2 != 0 {
                    return Err(OracleError::ParityViolation { n, k: kk });
                }
                let sqrt_n = (n as f64).sqrt();
                let z = kk as f64 / sqrt_n;
                LcltRow {
                    n,
                    k: vec![kk],
                    exact: ssrw1_prob(n, kk),
                    normalizer: sqrt_n,
                    normalized: sqrt_n * ssrw1_prob(n, kk),
                    limit: 2.0 * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt(),
                }
            }
            WalkSpec::Ssrw { d: 2 } => {
                let kk = [k[0], k[1]];
                if (n as i64 + kk[0] + kk[1]) % 2 != 0 {
                    return Err(OracleError::ParityViolation { n, k: kk[0] + kk[1] });
                }
                let exact = ssrw2_prob(n, kk);
                let z2 = (kk[0] * kk[0] + kk[1] * kk[1]) as f64 / n as f64;
                // per-component variance 1/2 ⇒ density 1/π at the origin
                LcltRow {
                    n,
                    k: kk.to_vec(),
                    exact,
                    normalizer: n as f64,
                    normalized: n as f64 * exact,
                    limit: 2.0 * (-z2).exp() / std::f64::consts::PI,
                }
            }
            WalkSpec::Ssrw { d: 3 } => {
                if k.iter().any(|&x| x != 0) {
                    return Err(OracleError::Unsupported(
                        "d = 3 oracle exposes the origin only".into(),
                    ));
                }
                if n % 2 != 0 {
                    return Err(OracleError::ParityViolation { n, k: 0 });
                }
                let exact = ssrw3_return_prob(n);
                let norm = (n as f64).powf(1.5);
                LcltRow {
                    n,
                    k: vec![0, 0, 0],
                    exact,
                    normalizer: norm,
                    normalized: norm * exact,
                    limit: 2.0 * (3.0 / (2.0 * std::f64::consts::PI)).powf(1.5),
                }
            }
            WalkSpec::Ssrw { d } => {
                return Err(OracleError::Unsupported(format!("unsupported dimension {d}")))
            }
            WalkSpec::HeavyTail => {
                let kk = k[0];
                let opts = PmfOptions { max_truncation_mass: 1e-7, ..Default::default() };
                let pmf = heavy_tail_pmf(n, opts)?;
                let norm = (n as f64 * (n as f64).ln()).sqrt();
                let z = kk as f64 / norm;
                LcltRow {
                    n,
                    k: vec![kk],
                    exact: pmf.prob(kk),
                    normalizer: norm,
                    normalized: norm * pmf.prob(kk),
                    limit: (-0.5 * z * z / HEAVY_C).exp()
                        / (2.0 * std::f64::consts::PI * HEAVY_C).sqrt(),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// i.i.d. samplers
// ---------------------------------------------------------------------------

/// One simple-walk step for d ∈ {1, 2} (the second component stays zero in
/// d = 1).
pub fn sample_ssrw_step(d: usize, rng: &mut impl Rng) -> [i64; 2] {
    debug_assert!(d == 1 || d == 2);
    let dir = rng.gen_range(0..2 * d as u32);
    let sign = if dir % 2 == 0 { 1 } else { -1 };
    let mut out = [0i64; 2];
    out[(dir / 2) as usize] = sign;
    out
}

/// One d = 3 simple-walk step (transient control case).
pub fn sample_ssrw3_step(rng: &mut impl Rng) -> [i64; 3] {
    let dir = rng.gen_range(0..6u32);
    let sign = if dir % 2 == 0 { 1 } else { -1 };
    let mut out = [0i64; 3];
    out[(dir / 2) as usize] = sign;
    out
}

/// Inverse-CDF sampler for the heavy-tail magnitude law `P(|X| = u) ∝ u^{−3}`
/// (support truncated at `HEAVY_STEP_CUTOFF`; the clipped probability is
/// below `4·10^{−13}`).
pub struct HeavyTailSampler {
    cdf: Vec<f64>,
}

impl Default for HeavyTailSampler {
    fn default() -> Self {
        Self::new()
    }
}

impl HeavyTailSampler {
    pub fn new() -> HeavyTailSampler {
        let n = HEAVY_STEP_CUTOFF as usize;
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for u in 1..=n {
            acc += 1.0 / (u as f64).powi(3) / ZETA3;
            cdf.push(acc);
        }
        HeavyTailSampler { cdf }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> i64 {
        let r: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c < r);
        let u = (idx + 1).min(self.cdf.len()) as i64;
        if rng.gen::<bool>() {
            u
        } else {
            -u
        }
    }
}

// ---------------------------------------------------------------------------
// Walk ensemble drivers (deterministic, chunked like the billiard ensembles)
// ---------------------------------------------------------------------------

fn walk_chunks(trajectories: u64) -> Vec<(u64, u64)> {
    const CHUNK: u64 = 4096;
    (0..trajectories)
        .step_by(CHUNK as usize)
        .map(|lo| (lo, (lo + CHUNK).min(trajectories)))
        .collect()
}

/// Return-event statistics of an i.i.d. simple walk in dimension 2 or 3.
pub fn simulate_walk_returns(
    dim: usize,
    trajectories: u64,
    n_max: u64,
    seed: u64,
) -> crate::sampling::ReturnStats {
    use rayon::prelude::*;
    assert!(dim == 2 || dim == 3);
    let parts: Vec<crate::sampling::ReturnStats> = walk_chunks(trajectories)
        .par_iter()
        .map(|&(lo, hi)| {
            let mut stats = crate::sampling::ReturnStats::new(n_max);
            for traj in lo..hi {
                let mut rng = crate::sampling::trajectory_rng(seed, traj);
                let mut pos = [0i64; 3];
                let mut returns = Vec::new();
                for k in 1..=n_max {
                    if dim == 2 {
                        let s = sample_ssrw_step(2, &mut rng);
                        pos[0] += s[0];
                        pos[1] += s[1];
                    } else {
                        let s = sample_ssrw3_step(&mut rng);
                        for (p, d) in pos.iter_mut().zip(s) {
                            *p += d;
                        }
                    }
                    if pos == [0, 0, 0] {
                        returns.push(k as u32);
                    }
                }
                stats.push_trajectory(&returns);
            }
            stats
        })
        .collect();
    let mut total = crate::sampling::ReturnStats::new(n_max);
    for p in parts {
        total.merge_from(&p);
    }
    total
}

/// Scheduled partial sums of a planar i.i.d. walk: simple symmetric steps or
/// two independent heavy-tail components.
pub fn simulate_walk_samples(
    spec: WalkSpec,
    trajectories: u64,
    schedule: &[u64],
    seed: u64,
) -> Vec<(u64, Vec<[f64; 2]>)> {
    use rayon::prelude::*;
    let n_max = *schedule.last().unwrap();
    let sampler = match spec {
        WalkSpec::HeavyTail => Some(HeavyTailSampler::new()),
        _ => None,
    };
    let parts: Vec<Vec<Vec<[f64; 2]>>> = walk_chunks(trajectories)
        .par_iter()
        .map(|&(lo, hi)| {
            let mut out: Vec<Vec<[f64; 2]>> = schedule.iter().map(|_| Vec::new()).collect();
            for traj in lo..hi {
                let mut rng = crate::sampling::trajectory_rng(seed, traj);
                let mut s = [0i64; 2];
                let mut idx = 0;
                for k in 1..=n_max {
                    match (&sampler, spec) {
                        (Some(h), _) => {
                            s[0] += h.sample(&mut rng);
                            s[1] += h.sample(&mut rng);
                        }
                        (None, WalkSpec::Ssrw { d }) => {
                            let st = sample_ssrw_step(d.min(2), &mut rng);
                            s[0] += st[0];
                            s[1] += st[1];
                        }
                        _ => unreachable!(),
                    }
                    if k == schedule[idx] {
                        out[idx].push([s[0] as f64, s[1] as f64]);
                        idx += 1;
                        if idx == schedule.len() {
                            break;
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut merged: Vec<(u64, Vec<[f64; 2]>)> =
        schedule.iter().map(|&n| (n, Vec::new())).collect();
    for part in parts {
        for (slot, vals) in merged.iter_mut().zip(part) {
            slot.1.extend(vals);
        }
    }
    merged
}

/// Per-step tail statistics of the heavy-tail step stream (for estimator
/// calibration).
pub fn simulate_heavy_tail_stats(steps: u64, seed: u64) -> crate::sampling::TailStats {
    use rayon::prelude::*;
    let sampler = HeavyTailSampler::new();
    let parts: Vec<crate::sampling::TailStats> = walk_chunks(steps)
        .par_iter()
        .map(|&(lo, hi)| {
            let mut tail = crate::sampling::TailStats::new();
            let mut rng = crate::sampling::trajectory_rng(seed, lo);
            for _ in lo..hi {
                tail.push(sampler.sample(&mut rng), 0);
            }
            tail
        })
        .collect();
    let mut total = crate::sampling::TailStats::new();
    for p in parts {
        total.merge_from(&p);
    }
    total
}
