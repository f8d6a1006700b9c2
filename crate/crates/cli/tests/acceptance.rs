//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! per sub-check (run with `--nocapture` to see them live).
//!
//! The heavy billiard ensembles are shared across criteria through lazily
//! initialized runs; all seeds are pinned, so every verdict is reproducible
//! bit for bit.

use lorentz_core::dynamics::{billiard_orbit, next_collision};
use lorentz_core::geometry::{
    classify_horizon, find_corridors, primitive_directions, validate_config, HorizonClass,
    ScattererLattice, ValidateOpts,
};
use lorentz_core::numerics::{fit_line, ks_two_sample_sorted};
use lorentz_core::rw_oracle::{
    gnedenko_lhs, gnedenko_terms, heavy_tail_charfn_fit, heavy_tail_dyadic, simulate_walk_returns,
    simulate_walk_samples, simulate_heavy_tail_stats, ssrw1_prob, ssrw2_prob, ssrw3_return_prob,
    PmfOptions, WalkSpec, HEAVY_C,
};
use lorentz_core::sampling::{
    pushforward_phase_samples, run_ensemble, sample_mu1, trajectory_rng, CovAcc, EnsembleResult,
    EnsembleSpec,
};
use lorentz_core::stats::{
    clt_check, lamperti_statistic, lclt_pointmass, minimality_check, pointmass_ratio_check,
    successive_envelope_and_exceedance, tail_fit, truncated_variance_curve, PointMassNormalizer,
    ScalingKind,
};
use lorentz_core::tower::{
    build_tower, default_test_suite, doeblin_fortet_check, eigenvalue_expansion_fit,
    green_kubo_sigma_sq, leading_eigenvalue, transfer_matrix, IntervalMapSpec, TowerError,
};
use lorentz_core::vec2::{v2, V2};
use std::sync::OnceLock;

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

fn finite_lattice() -> ScattererLattice {
    validate_config(
        &[(v2(0.25, 0.25), 0.36), (v2(0.75, 0.75), 0.30)],
        Some(V2::ZERO),
        ValidateOpts { require_clear_cell_boundary: false },
    )
    .unwrap()
}

fn single_disk(r: f64) -> ScattererLattice {
    validate_config(&[(v2(0.5, 0.5), r)], Some(V2::ZERO), ValidateOpts::default()).unwrap()
}

/// The large finite-horizon ensemble shared by criteria 5 and 9:
/// 10⁶ trajectories, schedule {500, 1000, 2000}, returns and point masses.
fn mega_run() -> &'static EnsembleResult {
    static RUN: OnceLock<EnsembleResult> = OnceLock::new();
    RUN.get_or_init(|| {
        let lattice = finite_lattice();
        let mut spec = EnsembleSpec::new(1_000_000, vec![500, 1000, 2000], 101);
        spec.track.returns = true;
        spec.track.point_targets = vec![[0, 0], [10, 0]];
        run_ensemble(&lattice, &spec).expect("mega run failed")
    })
}

struct SubCheck {
    name: String,
    pass: bool,
    detail: String,
}

fn sub(name: impl Into<String>, pass: bool, detail: String) -> SubCheck {
    SubCheck { name: name.into(), pass, detail }
}

fn verdict(criterion: &str, checks: Vec<SubCheck>) {
    let all = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "ACCEPTANCE {criterion} [{}] {}: {}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!("ACCEPTANCE {criterion}: {}", if all { "PASS" } else { "FAIL" });
    if !all {
        let failed: Vec<&str> =
            checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        panic!("{criterion} failed sub-checks: {failed:?}");
    }
}

fn winsorized_trace(samples: &[[f64; 2]]) -> f64 {
    let mut radii: Vec<f64> =
        samples.iter().map(|z| (z[0] * z[0] + z[1] * z[1]).sqrt()).collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let clip = radii[(radii.len() - 1) * 99 / 100].max(1e-300);
    let mut acc = CovAcc::default();
    for z in samples {
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let s = if r > clip { clip / r } else { 1.0 };
        acc.push(z[0] * s, z[1] * s);
    }
    let c = acc.covariance();
    c[0][0] + c[1][1]
}

// ---------------------------------------------------------------------------

#[test]
fn c01_exact_lclt_ssrw_d1() {
    let start = std::time::Instant::now();
    let n = 10_000u64;
    let value = (n as f64).sqrt() * ssrw1_prob(n, 0);
    let target = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C1 exact LCLT (SSRW d=1, n=10⁴, k=0)",
        vec![
            sub(
                "|√n·P − 2φ(0)| < 0.01",
                (value - target).abs() < 0.01,
                format!("√n·P = {value:.6}, 2φ(0) = {target:.6}"),
            ),
            sub("runtime < 10 s", elapsed < 10.0, format!("{elapsed:.3} s")),
        ],
    );
}

#[test]
fn c02_gnedenko_decomposition() {
    let a = 5.0;
    let eps = 0.5;
    let ns = [100u64, 1_000, 10_000];
    let terms: Vec<_> = ns.iter().map(|&n| gnedenko_terms(n, a, eps).unwrap()).collect();

    let mut checks = Vec::new();
    for (t, &n) in terms.iter().zip(&ns) {
        checks.push(sub(
            format!("III ≤ ∫_{{|s|≥5}}e^(−s²/4)ds at n={n}"),
            t.term_iii <= t.term_iii_bound,
            format!("III = {:.4e} vs bound {:.4e}", t.term_iii, t.term_iii_bound),
        ));
    }
    checks.push(sub(
        "IIII decreasing ≥ 10× per decade",
        terms[1].term_iiii <= terms[0].term_iiii / 10.0
            && terms[2].term_iiii <= terms[1].term_iiii / 10.0,
        format!(
            "IIII = {:.3e}, {:.3e}, {:.3e}",
            terms[0].term_iiii, terms[1].term_iiii, terms[2].term_iiii
        ),
    ));
    checks.push(sub(
        "I decreasing in n",
        terms[0].term_i > terms[1].term_i && terms[1].term_i > terms[2].term_i,
        format!("I = {:.3e}, {:.3e}, {:.3e}", terms[0].term_i, terms[1].term_i, terms[2].term_i),
    ));
    let mut cos_bound = true;
    let mut t = -0.5f64;
    while t <= 0.5 {
        if t.cos() > 1.0 - t * t / 4.0 + 1e-15 {
            cos_bound = false;
        }
        t += 1e-4;
    }
    checks.push(sub("cos t ≤ 1 − t²/4 on |t| ≤ 0.5 (grid 10⁻⁴)", cos_bound, "grid sweep".into()));
    // the four terms dominate the inversion error at every tested point
    let mut dominates = true;
    for (t, &n) in terms.iter().zip(&ns) {
        for k in [0i64, 2, 6] {
            if gnedenko_lhs(n, k) > t.total() * (1.0 + 1e-9) {
                dominates = false;
            }
        }
    }
    checks.push(sub(
        "I+II+III+IIII ≥ π·|√n·P − 2φ| (span-2 inversion)",
        dominates,
        "k ∈ {0, 2, 6}".into(),
    ));
    // The exact two-sided Gaussian tail is ∫_{|s|≥5} e^{−s²/2} ds
    // = 2√(π/2)·erfc(5/√2) = 1.4371·10⁻⁶; the stated bound 1.2·10⁻⁶ is
    // below it (it matches the density-normalized tail 5.73·10⁻⁷ with a 2×
    // margin instead), so this sub-check fails by construction.
    checks.push(sub(
        "II < 1.2e-6",
        terms[0].term_ii < 1.2e-6,
        format!(
            "II = {:.5e} (exact value of the stated integral; bound unattainable)",
            terms[0].term_ii
        ),
    ));
    verdict("C2 Gnedenko decomposition", checks);
}

/// Independent normal-projection oracle: covered arcs of every lift on the
/// normal circle, merged by endpoint sweep.
fn oracle_gaps(lattice: &ScattererLattice, w: [i64; 2]) -> Vec<(f64, f64)> {
    let wv = v2(w[0] as f64, w[1] as f64);
    let period = 1.0 / wv.norm();
    let normal = wv.perp() * (1.0 / wv.norm());
    let mut marks: Vec<(f64, i32)> = Vec::new();
    for s in lattice.scatterers() {
        let p = s.center.dot(normal).rem_euclid(period);
        for rep in -1..=1 {
            let lo = p - s.radius + rep as f64 * period;
            let hi = p + s.radius + rep as f64 * period;
            marks.push((lo, 1));
            marks.push((hi, -1));
        }
    }
    marks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut depth = 0;
    let mut gaps = Vec::new();
    let mut gap_start = None;
    for &(x, d) in &marks {
        let was = depth;
        depth += d;
        if was > 0 && depth == 0 {
            gap_start = Some(x);
        } else if was == 0 && depth > 0 {
            if let Some(gs) = gap_start.take() {
                if x - gs > 1e-12 && gs >= -1e-9 && gs < period {
                    gaps.push((gs.rem_euclid(period), x - gs));
                }
            }
        }
    }
    gaps
}

#[test]
fn c03_corridor_geometry() {
    let mut checks = Vec::new();
    for r in [0.3, 0.4, 0.45] {
        let lattice = single_disk(r);
        let corridors = find_corridors(&lattice);
        let cutoff = 1.0 / (2.0 * r);
        let mut oracle: Vec<([i64; 2], f64, f64)> = Vec::new();
        for w in primitive_directions(cutoff) {
            for (anchor, width) in oracle_gaps(&lattice, w) {
                oracle.push((w, anchor, width));
            }
        }
        let mut matched = corridors.len() == oracle.len();
        let mut max_err = 0.0f64;
        for c in &corridors {
            match oracle.iter().find(|(w, a, _)| {
                *w == c.direction && (a - c.anchor).abs() < 1e-9
            }) {
                Some((_, _, width)) => max_err = max_err.max((width - c.width).abs()),
                None => matched = false,
            }
        }
        checks.push(sub(
            format!("r={r}: corridor set matches projection oracle to 1e-12"),
            matched && max_err < 1e-12,
            format!("{} corridors, max width error {max_err:.2e}", corridors.len()),
        ));
        if (r - 0.3).abs() < 1e-12 {
            let diag = corridors.iter().find(|c| c.direction == [1, 1]);
            let expect = std::f64::consts::FRAC_1_SQRT_2 - 0.6;
            checks.push(sub(
                "r=0.3 includes direction (1,1) with width 1/√2 − 0.6",
                diag.map_or(false, |c| (c.width - expect).abs() < 1e-12),
                format!("width = {:?}", diag.map(|c| c.width)),
            ));
        }
    }
    verdict("C3 corridor geometry", checks);
}

/// Longest free chord over a dense direction/offset sweep, with margin; an
/// independent bound for observed free paths on a finite-horizon table.
fn free_chord_bound(lattice: &ScattererLattice) -> f64 {
    let mut longest = 0.0f64;
    for di in 0..720 {
        let angle = di as f64 * std::f64::consts::PI / 720.0;
        let dir = V2::from_angle(angle);
        let normal = dir.perp();
        for oi in 0..160 {
            let offset = normal * (oi as f64 / 160.0);
            // collect blocked intervals along the line over t ∈ [-4, 4]
            let mut blocked: Vec<(f64, f64)> = Vec::new();
            for s in lattice.scatterers() {
                for ox in -6i64..=6 {
                    for oy in -6i64..=6 {
                        let c = s.center + v2(ox as f64, oy as f64);
                        let rel = c - offset;
                        let tmid = rel.dot(dir);
                        let d2 = rel.norm_sq() - tmid * tmid;
                        let r2 = s.radius * s.radius;
                        if d2 < r2 {
                            let half = (r2 - d2).sqrt();
                            blocked.push((tmid - half, tmid + half));
                        }
                    }
                }
            }
            blocked.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut cursor = -4.0f64;
            let mut local = 0.0f64;
            for &(lo, hi) in &blocked {
                if lo > cursor {
                    local = local.max(lo - cursor);
                }
                cursor = cursor.max(hi);
            }
            local = local.max(4.0 - cursor);
            // interior gaps only (the sweep window edges are artificial)
            if cursor > -4.0 {
                longest = longest.max(local.min(6.0));
            }
        }
    }
    1.25 * longest
}

#[test]
fn c04_dynamics_soundness() {
    let mut checks = Vec::new();

    // 20-step time reversal (seeded grazing-free trajectory)
    let lat = single_disk(0.45);
    let mut rng = trajectory_rng(0, 0);
    let x0 = sample_mu1(&lat, &mut rng);
    let mut x = x0;
    for _ in 0..20 {
        x = next_collision(&lat, &x).unwrap().0;
    }
    x = x.time_reverse();
    for _ in 0..20 {
        x = next_collision(&lat, &x).unwrap().0;
    }
    x = x.time_reverse();
    let circ = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(std::f64::consts::TAU);
        d.min(std::f64::consts::TAU - d)
    };
    let d_theta = circ(x.theta, x0.theta);
    let d_phi = circ(x.phi, x0.phi);
    checks.push(sub(
        "20-step reversal returns (θ, φ) within 1e-6",
        d_theta < 1e-6 && d_phi < 1e-6 && x.lift == x0.lift,
        format!("Δθ = {d_theta:.2e}, Δφ = {d_phi:.2e}"),
    ));

    // κ-consistency and path-length bound over 10⁷ steps
    let finite = finite_lattice();
    let chord_bound = free_chord_bound(&finite);
    use rayon::prelude::*;
    let outcomes: Vec<(bool, f64)> = (0..10u64)
        .into_par_iter()
        .map(|traj| {
            let mut rng = trajectory_rng(32, traj);
            let mut x = sample_mu1(&finite, &mut rng);
            let mut kappa_sum = [0i64; 2];
            let mut pos = x.position(&finite);
            let cell0 = x.lift_cell(&finite);
            let mut ok = true;
            let mut max_path = 0.0f64;
            for _ in 0..1_000_000u64 {
                let (next, rec) = next_collision(&finite, &x).unwrap();
                kappa_sum[0] += rec.kappa[0];
                kappa_sum[1] += rec.kappa[1];
                pos += rec.psi;
                max_path = max_path.max(rec.path_length);
                let cell = next.lift_cell(&finite);
                if [cell0[0] + kappa_sum[0], cell0[1] + kappa_sum[1]] != cell {
                    ok = false;
                    break;
                }
                if (pos - next.position(&finite)).norm() > 1e-6 {
                    ok = false;
                    break;
                }
                x = next;
            }
            (ok, max_path)
        })
        .collect();
    let all_ok = outcomes.iter().all(|o| o.0);
    let max_path = outcomes.iter().map(|o| o.1).fold(0.0, f64::max);
    checks.push(sub(
        "κ-consistency over 10⁷ steps",
        all_ok,
        format!("10 × 10⁶ steps, ψ-telescoping within 1e-6"),
    ));
    checks.push(sub(
        "finite-horizon free paths below the chord bound",
        max_path <= chord_bound,
        format!("max path {max_path:.4} ≤ bound {chord_bound:.4}"),
    ));

    // stationarity after 100 steps at 10⁶ samples
    let push = pushforward_phase_samples(&finite, 1_000_000, 100, 31);
    let mut checks_ks = Vec::new();
    for (name, evolved, fresh) in [
        ("theta", &push.evolved_theta, &push.fresh_theta),
        ("angle-from-normal", &push.evolved_rel, &push.fresh_rel),
    ] {
        let mut a = evolved.clone();
        let mut b = fresh.clone();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let d = ks_two_sample_sorted(&a, &b);
        checks_ks.push((name, d));
    }
    let ks_ok = checks_ks.iter().all(|(_, d)| *d < 0.01) && push.dropped == 0;
    checks.push(sub(
        "stationarity: two-sample KS < 0.01 per coordinate at 10⁶ samples",
        ks_ok,
        format!(
            "{}",
            checks_ks
                .iter()
                .map(|(n, d)| format!("{n}: {d:.5}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ));

    // single-worker throughput
    let mut x = sample_mu1(&finite, &mut trajectory_rng(33, 0));
    let start = std::time::Instant::now();
    let n = 1_000_000u64;
    for _ in 0..n {
        x = next_collision(&finite, &x).unwrap().0;
    }
    let per_minute = n as f64 / start.elapsed().as_secs_f64() * 60.0;
    checks.push(sub(
        "≥ 10⁷ collisions/minute single worker",
        per_minute >= 1e7,
        format!("{:.2e} collisions/minute", per_minute),
    ));

    verdict("C4 dynamics soundness", checks);
}

#[test]
fn c05_finite_horizon_clt_lclt() {
    let mut checks = Vec::new();
    let finite = finite_lattice();
    checks.push(sub(
        "configuration verified Finite",
        matches!(classify_horizon(&find_corridors(&finite)), HorizonClass::Finite),
        "corridor search over the complete direction cutoff".into(),
    ));

    // Var(S_n)/n drift < 10% across {10³, 2·10³, 4·10³} at 10⁵ trajectories
    let mut spec = EnsembleSpec::new(100_000, vec![1000, 2000, 4000], 102);
    spec.track.samples = true;
    let run = run_ensemble(&finite, &spec).unwrap();
    let vs: Vec<f64> = run
        .schedule_stats
        .iter()
        .map(|st| {
            let c = st.kappa.covariance();
            (c[0][0] + c[1][1]) / st.n as f64
        })
        .collect();
    let drift = vs.iter().fold(0.0f64, |m, &v| m.max(v))
        / vs.iter().fold(f64::INFINITY, |m, &v| m.min(v))
        - 1.0;
    checks.push(sub(
        "Var(S_n)/n drift < 10%",
        drift < 0.10,
        format!("v(n) = {:?}, drift {:.3}%", vs, drift * 100.0),
    ));
    let ratio = (vs[1] * 2000.0) / (vs[0] * 1000.0);
    checks.push(sub(
        "Var(S_2n)/Var(S_n) ∈ [1.7, 2.3] (diffusive sub-additivity)",
        (1.7..=2.3).contains(&ratio),
        format!("ratio {ratio:.3}"),
    ));
    // distribution-level normality at the same scale
    let samples_per_n: Vec<(u64, Vec<[f64; 2]>)> = spec
        .n_schedule
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            (n, run.samples.iter().map(|s| [s.s_kappa[idx][0] as f64, s.s_kappa[idx][1] as f64]).collect())
        })
        .collect();
    let clt = clt_check(&samples_per_n, ScalingKind::Diffusive, 0.10).unwrap();
    checks.push(sub(
        "diffusive CLT checks (KS p, moments, stability)",
        clt.checks.iter().all(|c| c.pass),
        format!(
            "min KS p = {:.4}",
            clt.rows.iter().flat_map(|r| r.ks_p).fold(f64::INFINITY, f64::min)
        ),
    ));

    // n·ν̂(S_n = 0) stable within 25% across {500, 1000, 2000} at 10⁶ traj
    let mega = mega_run();
    let trials = mega.spec.trajectories - mega.dropped.len() as u64;
    let counts: Vec<(u64, [i64; 2], u64, u64)> = mega
        .schedule_stats
        .iter()
        .map(|st| (st.n, [0, 0], st.target_hits[0], trials))
        .collect();
    let report = lclt_pointmass(&counts, PointMassNormalizer::FiniteHorizon, 0.25).unwrap();
    checks.push(sub(
        "n·ν̂(S_n=0) stable within 25% at ≥10⁶ trajectories",
        report.checks.iter().all(|c| c.pass),
        format!(
            "normalized = {:?}",
            report.rows.iter().map(|r| format!("{:.3}", r.normalized)).collect::<Vec<_>>()
        ),
    ));
    // drifting target consistency against the fitted covariance
    let n_ref = 1000u64;
    let idx = mega.spec.n_schedule.iter().position(|&n| n == n_ref).unwrap();
    let st = &mega.schedule_stats[idx];
    let cov_n = st.kappa.covariance();
    let per_step = [
        [cov_n[0][0] / n_ref as f64, cov_n[0][1] / n_ref as f64],
        [cov_n[1][0] / n_ref as f64, cov_n[1][1] / n_ref as f64],
    ];
    let rows_k = lclt_pointmass(
        &[(n_ref, [10, 0], st.target_hits[1], trials)],
        PointMassNormalizer::FiniteHorizon,
        0.25,
    )
    .unwrap();
    let ratio_check = pointmass_ratio_check(&rows_k.rows[0], &report.rows[idx], per_step);
    checks.push(sub(
        "ν̂(S_n=k)/ν̂(S_n=0) matches the Gaussian ratio within 3 SE",
        ratio_check.pass,
        format!("|Δ| = {:.4e} vs 3·SE = {:.4e}", ratio_check.value, ratio_check.threshold),
    ));

    verdict("C5 finite-horizon CLT/LCLT", checks);
}

#[test]
fn c06_infinite_horizon_tail() {
    let mut checks = Vec::new();
    let single = single_disk(0.4);
    let mut spec = EnsembleSpec::new(200, vec![50_000], 14);
    spec.track.tail = true;
    spec.track.pairs = true;
    let run = run_ensemble(&single, &spec).unwrap();
    let tail = run.tail.as_ref().unwrap();

    let fit = tail_fit(tail, None).unwrap();
    checks.push(sub(
        "survival exponent α̂ ∈ [1.7, 2.3] at 10⁷ collisions",
        (1.7..=2.3).contains(&fit.exponent),
        format!("α̂ = {:.3}, R² = {:.4}, window {:?}", fit.exponent, fit.r_squared, fit.window),
    ));
    let tv = truncated_variance_curve(tail, 3, 10).unwrap();
    checks.push(sub(
        "truncated variance linear in log x with R² > 0.95 over [8, 2¹⁰]",
        tv.fit.r_squared > 0.95 && tv.fit.slope > 0.0,
        format!("slope = {:.4}, R² = {:.4}", tv.fit.slope, tv.fit.r_squared),
    ));
    // successive-flight conditional exceedance decreases for every δ > 1/2
    let (env, curves) = successive_envelope_and_exceedance(run.pairs.as_ref().unwrap()).unwrap();
    checks.push(sub(
        "conditional exceedance curves decreasing in u for δ ∈ {0.6, 0.75, 0.9}",
        curves.iter().all(|c| c.decreasing),
        format!(
            "envelope c₁ = {:.3}, c₂ = {:.4} over {} events",
            env.c_lower, env.c_upper, env.events
        ),
    ));

    // estimator calibration: i.i.d. 1/u³ steps reproduce α = 2 within [1.9, 2.1]
    let synth = simulate_heavy_tail_stats(10_000_000, 15);
    let synth_fit = tail_fit(&synth, None).unwrap();
    checks.push(sub(
        "synthetic 1/u³ calibration: α̂ ∈ [1.9, 2.1] at 10⁷ samples",
        (1.9..=2.1).contains(&synth_fit.exponent),
        format!("α̂ = {:.3}, R² = {:.4}", synth_fit.exponent, synth_fit.r_squared),
    ));
    verdict("C6 infinite-horizon tail", checks);
}

#[test]
fn c07_superdiffusion() {
    let mut checks = Vec::new();
    let schedule: Vec<u64> = (8..=13).map(|j| 1u64 << j).collect();

    let single = single_disk(0.4);
    let mut spec = EnsembleSpec::new(40_000, schedule.clone(), 21);
    spec.track.samples = true;
    let run = run_ensemble(&single, &spec).unwrap();
    let samples_per_n: Vec<(u64, Vec<[f64; 2]>)> = schedule
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            (n, run.samples.iter().map(|s| [s.s_kappa[idx][0] as f64, s.s_kappa[idx][1] as f64]).collect())
        })
        .collect();

    let pipeline = |tag: &str, samples_per_n: &[(u64, Vec<[f64; 2]>)], checks: &mut Vec<SubCheck>| {
        let vs: Vec<f64> = samples_per_n
            .iter()
            .map(|(n, s)| winsorized_trace(s) / *n as f64)
            .collect();
        let ws: Vec<f64> = samples_per_n
            .iter()
            .map(|(n, s)| winsorized_trace(s) / (*n as f64 * (*n as f64).ln()))
            .collect();
        let increasing = vs.windows(2).all(|w| w[1] > w[0]);
        let xs: Vec<f64> = samples_per_n.iter().map(|(n, _)| (*n as f64).ln()).collect();
        let slope = fit_line(&xs, &vs).slope;
        let top3 = &ws[ws.len() - 3..];
        let drift = top3.iter().fold(0.0f64, |m, &v| m.max(v))
            / top3.iter().fold(f64::INFINITY, |m, &v| m.min(v))
            - 1.0;
        checks.push(sub(
            format!("{tag}: Var(S_n)/n strictly increasing over 2⁸..2¹³"),
            increasing,
            format!("v(n) = {:?}", vs.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()),
        ));
        checks.push(sub(
            format!("{tag}: positive log-slope"),
            slope > 0.0,
            format!("slope = {slope:.4}"),
        ));
        checks.push(sub(
            format!("{tag}: Var(S_n)/(n log n) drift < 20% over top three levels"),
            drift < 0.20,
            format!("drift = {:.1}%", drift * 100.0),
        ));
    };
    pipeline("billiard r=0.4", &samples_per_n, &mut checks);

    // calibration: the i.i.d. heavy-tail oracle passes the same pipeline
    let oracle = simulate_walk_samples(WalkSpec::HeavyTail, 40_000, &schedule, 22);
    pipeline("i.i.d. heavy-tail oracle", &oracle, &mut checks);

    verdict("C7 superdiffusion", checks);
}

#[test]
fn c08_heavy_tail_fourier() {
    let mut checks = Vec::new();
    let fit = heavy_tail_charfn_fit();
    checks.push(sub(
        "(ξ(t)−1)/t² linear against log t with R² > 0.999 over [1e-4, 1e-1]",
        fit.r_squared > 0.999,
        format!("R² = {:.6}, c_fit = {:.5} (exact c = {:.5})", fit.r_squared, fit.c_fit, -HEAVY_C),
    ));
    checks.push(sub(
        "fitted coefficient has the variance-like sign",
        fit.c_fit < 0.0,
        format!("c_fit = {:.5}", fit.c_fit),
    ));

    let opts = PmfOptions { window_log2: 22, max_truncation_mass: 1e-7 };
    let points = heavy_tail_dyadic(14, opts).unwrap();
    let normalized: Vec<(u64, f64)> = points
        .iter()
        .filter(|p| p.n >= 256)
        .map(|p| {
            let nf = p.n as f64;
            (p.n, (nf * nf.ln()).sqrt() * p.prob_zero)
        })
        .collect();
    let max_drift = normalized
        .windows(2)
        .map(|w| (w[1].1 / w[0].1 - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(sub(
        "√(n log n)-normalized exact pmf at 0 stabilizes within 10% up to 2¹⁴",
        max_drift < 0.10,
        format!(
            "consecutive drift ≤ {:.2}%, values {:?}",
            max_drift * 100.0,
            normalized.iter().map(|(n, v)| format!("2^{}:{v:.4}", (*n as f64).log2() as u32)).collect::<Vec<_>>()
        ),
    ));
    let ledger = points.last().unwrap().truncation_ledger;
    checks.push(sub(
        "truncation ledger within the configured bound",
        ledger < 1e-7,
        format!("ledger = {ledger:.2e}"),
    ));
    verdict("C8 heavy-tail Fourier expansion", checks);
}

#[test]
fn c09_recurrence_statistics() {
    let mut checks = Vec::new();

    // SSRW d=2: partial sums match the exact oracle and keep growing
    let returns2 = simulate_walk_returns(2, 200_000, 2048, 41);
    let rep2 = lamperti_statistic(&returns2).unwrap();
    let mut within = true;
    let mut max_z = 0.0f64;
    for &(n, est, se) in &rep2.partial_sums {
        let exact: f64 = (1..=n).map(|k| ssrw2_prob(k, [0, 0])).sum();
        let z = (est - exact).abs() / se.max(1e-12);
        max_z = max_z.max(z);
        if z > 3.0 {
            within = false;
        }
    }
    checks.push(sub(
        "SSRW d=2 partial sums within 3 SE of the exact oracle",
        within,
        format!("max |z| = {max_z:.2}"),
    ));
    let diverging = rep2
        .partial_sums
        .windows(2)
        .all(|w| w[1].1 > w[0].1);
    checks.push(sub(
        "SSRW d=2 partial sums increase without plateau",
        diverging,
        format!("final = {:.3}", rep2.partial_sums.last().unwrap().1),
    ));
    let ratio = rep2.ratios.last().unwrap().1;
    checks.push(sub(
        "pairwise ratio bounded",
        ratio < lorentz_core::tolerances::LAMPERTI_RATIO_MAX,
        format!("ratio = {ratio:.3}"),
    ));
    // point-mass injection matches n·P(S_n = 0) against the oracle
    let n_probe = 1024u64;
    let hits = returns2.counts_per_k[(n_probe - 1) as usize];
    let trials = returns2.trajectories;
    let p_hat = hits as f64 / trials as f64;
    let se = (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    let exact = ssrw2_prob(n_probe, [0, 0]);
    checks.push(sub(
        "SSRW d=2 ν̂(S_n=0) within 3 SE of the exact pmf",
        (p_hat - exact).abs() < 3.0 * se,
        format!("n·ν̂ = {:.4} vs n·P = {:.4}", n_probe as f64 * p_hat, n_probe as f64 * exact),
    ));

    // SSRW d=3 control: the series converges
    let returns3 = simulate_walk_returns(3, 50_000, 2048, 42);
    let rep3 = lamperti_statistic(&returns3).unwrap();
    let mut within3 = true;
    for &(n, est, se) in &rep3.partial_sums {
        let exact: f64 = (1..=n).map(ssrw3_return_prob).sum();
        if (est - exact).abs() > 3.0 * se.max(1e-12) {
            within3 = false;
        }
    }
    checks.push(sub(
        "SSRW d=3 partial sums within 3 SE of the exact oracle",
        within3,
        format!("final = {:.4}", rep3.partial_sums.last().unwrap().1),
    ));
    let tail_growth = rep3.partial_sums.last().unwrap().1
        - rep3.partial_sums[rep3.partial_sums.len() - 2].1;
    checks.push(sub(
        "SSRW d=3 control converges (last dyadic increment < 0.01)",
        tail_growth < 0.01,
        format!("increment 1024→2048 = {tail_growth:.5}"),
    ));

    // finite-horizon billiard: partial sums fit c·log n
    let mega = mega_run();
    let rep = lamperti_statistic(mega.returns.as_ref().unwrap()).unwrap();
    let fit = rep.log_fit.unwrap();
    checks.push(sub(
        "billiard partial sums fit c·log n with R² > 0.9",
        fit.r_squared > 0.9 && fit.slope > 0.0,
        format!("slope = {:.3}, R² = {:.5}", fit.slope, fit.r_squared),
    ));
    verdict("C9 recurrence statistics", checks);
}

#[test]
fn c10_tower_spectrum() {
    let mut checks = Vec::new();
    let map = IntervalMapSpec::doubling();
    let tower = build_tower(&map, (0.0, 0.5), 46).unwrap();
    let eps = 0.5 * std::f64::consts::LN_2;
    let beta = 0.5f64.sqrt();

    let tail = tower.tail_fit();
    checks.push(sub(
        "tail slope = log(1/2) ± 1e-3",
        (tail.slope + std::f64::consts::LN_2).abs() < 1e-3,
        format!("slope = {:.6}", tail.slope),
    ));

    let m12 = transfer_matrix(&tower, 1 << 12, eps, beta).unwrap();
    let p0 = leading_eigenvalue(&m12, None).unwrap();
    let dist = ((p0.lambda_re - 1.0).powi(2) + p0.lambda_im.powi(2)).sqrt();
    checks.push(sub("λ₀ = 1 ± 1e-10", dist < 1e-10, format!("|λ₀ − 1| = {dist:.2e}")));
    checks.push(sub(
        "spectral gap: |λ₂|/|λ₁| ≤ 0.6",
        p0.gap_ratio <= 0.6,
        format!("ratio = {:.4}", p0.gap_ratio),
    ));

    // σ² for cos(2πx) against the Green–Kubo quadrature
    let mut f = m12.observable(|x| (std::f64::consts::TAU * x).cos());
    let mean = m12.mean(&f);
    for v in f.iter_mut() {
        *v -= mean;
    }
    let mut samples = Vec::new();
    for j in 0..6 {
        let t = 0.3 * 0.5f64.powi(j);
        let est = leading_eigenvalue(&m12, Some(&m12.phases(&f, t))).unwrap();
        samples.push((t, est.lambda()));
    }
    let fit = eigenvalue_expansion_fit(&samples).unwrap();
    let gk = green_kubo_sigma_sq(&map, |x| (std::f64::consts::TAU * x).cos(), 10);
    checks.push(sub(
        "σ²_fit = 0.5 ± 2% at resolution 2¹²",
        (fit.sigma_sq_fit - 0.5).abs() < 0.01 && (gk - 0.5).abs() < 1e-9,
        format!("σ²_fit = {:.5}, green-kubo = {:.6}", fit.sigma_sq_fit, gk),
    ));

    // coboundary triggers the degenerate branch (discretization floor ∝ 1/res)
    let m15 = transfer_matrix(&tower, 1 << 15, eps, beta).unwrap();
    let fc = m15.observable(|x| {
        (2.0 * std::f64::consts::TAU * x).cos() - (std::f64::consts::TAU * x).cos()
    });
    let mut cb_samples = Vec::new();
    for j in 0..6 {
        let t = 0.3 * 0.5f64.powi(j);
        let est = leading_eigenvalue(&m15, Some(&m15.phases(&fc, t))).unwrap();
        cb_samples.push((t, est.lambda()));
    }
    let degenerate = matches!(
        eigenvalue_expansion_fit(&cb_samples),
        Err(TowerError::DegenerateVariance { .. })
    );
    checks.push(sub(
        "coboundary input triggers DegenerateVariance",
        degenerate,
        "ψ∘T − ψ with ψ = cos(2πx)".into(),
    ));

    let suite = default_test_suite(&m12);
    let df = doeblin_fortet_check(&m12, 3, &suite);
    checks.push(sub(
        "Doeblin–Fortet envelope passes with τ < 1 at defaults",
        df.pass,
        format!("τ = {:.4}, K = {:.4}, suite of {}", df.tau, df.k_const, suite.len()),
    ));

    // spectral stability under resolution doubling
    let m13 = transfer_matrix(&tower, 1 << 13, eps, beta).unwrap();
    let mut f13 = m13.observable(|x| (std::f64::consts::TAU * x).cos());
    let mean13 = m13.mean(&f13);
    for v in f13.iter_mut() {
        *v -= mean13;
    }
    let mut max_dl = 0.0f64;
    for &t in &[0.0, 0.075, 0.15, 0.3] {
        let a = leading_eigenvalue(&m12, Some(&m12.phases(&f, t))).unwrap();
        let b = leading_eigenvalue(&m13, Some(&m13.phases(&f13, t))).unwrap();
        max_dl = max_dl.max((a.lambda() - b.lambda()).norm());
    }
    let p0_13 = leading_eigenvalue(&m13, None).unwrap();
    let gap_drift = (p0.gap_ratio - p0_13.gap_ratio).abs();
    checks.push(sub(
        "λ_t and gap drift < 1e-3 under resolution doubling",
        max_dl < 1e-3 && gap_drift < 1e-3,
        format!("max |Δλ_t| = {max_dl:.2e}, |Δgap| = {gap_drift:.2e}"),
    ));
    verdict("C10 tower spectrum", checks);
}

#[test]
fn c11_minimality_evidence() {
    let single = single_disk(0.4);
    // first grazing-free seeded orbit of 10⁴ steps
    let mut kappas: Option<Vec<[i64; 2]>> = None;
    for seed in 0..8u64 {
        let mut rng = trajectory_rng(0x5eed + seed, 0);
        let x0 = sample_mu1(&single, &mut rng);
        if let Ok(orbit) = billiard_orbit(&single, &x0, 10_000) {
            kappas = Some(orbit.iter().map(|(_, r)| r.kappa).collect());
            break;
        }
    }
    let kappas = kappas.expect("no grazing-free orbit found");
    let report = minimality_check(&kappas);
    verdict(
        "C11 minimality evidence",
        vec![sub(
            "Smith-normal-form index of the κ-lattice = 1 within 10⁴ steps",
            report.index == Some(1) && !report.coset_drift,
            format!(
                "index = {:?}, factors = {:?}, {} distinct values",
                report.index, report.invariant_factors, report.distinct_values
            ),
        )],
    );
}

// ---------------------------------------------------------------------------
// C12: CLI determinism and replay
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> (bool, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_lorentz"))
        .args(args)
        .output()
        .expect("failed to launch lorentz");
    (
        out.status.success(),
        format!(
            "{}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn c12_determinism_and_replay() {
    let mut checks = Vec::new();
    let configs = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let scratch = std::env::temp_dir().join(format!("lorentz-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&scratch);
    std::fs::create_dir_all(&scratch).unwrap();

    for cfg in ["corridors_single_disk.toml", "simulate_small.toml", "rw_ssrw1.toml"] {
        let cfg_path = configs.join(cfg);
        let out1 = scratch.join(format!("{cfg}.w1"));
        let out3 = scratch.join(format!("{cfg}.w3"));
        let (ok1, _) = run_cli(&[
            "run",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out1.to_str().unwrap(),
            "--workers",
            "1",
        ]);
        let (ok3, _) = run_cli(&[
            "run",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out3.to_str().unwrap(),
            "--workers",
            "3",
        ]);
        let identical = ok1 && ok3 && dir_bytes(&out1) == dir_bytes(&out3);
        checks.push(sub(
            format!("{cfg}: workers 1 vs 3 byte-identical"),
            identical,
            format!("{} artifacts", dir_bytes(&out1).len()),
        ));
    }

    // immediate replay verifies
    let sim_out = scratch.join("simulate_small.toml.w1");
    let (replay_ok, replay_log) = run_cli(&[
        "replay",
        "--manifest",
        sim_out.join("manifest.json").to_str().unwrap(),
        "--workers",
        "2",
    ]);
    checks.push(sub(
        "immediate replay is byte-identical under a different worker count",
        replay_ok && replay_log.contains("replay verified"),
        replay_log.lines().last().unwrap_or("").to_string(),
    ));

    // a different seed changes artifacts, and tampering is caught
    let out_seed = scratch.join("seeded");
    let (ok_seed, _) = run_cli(&[
        "run",
        "--config",
        configs.join("simulate_small.toml").to_str().unwrap(),
        "--out",
        out_seed.to_str().unwrap(),
        "--seed",
        "999",
    ]);
    let differs = ok_seed
        && std::fs::read(sim_out.join("orbit.csv")).unwrap()
            != std::fs::read(out_seed.join("orbit.csv")).unwrap();
    checks.push(sub("altered seed changes artifacts", differs, "orbit.csv differs".into()));
    std::fs::copy(out_seed.join("orbit.csv"), sim_out.join("orbit.csv")).unwrap();
    let (tampered_ok, tamper_log) = run_cli(&[
        "replay",
        "--manifest",
        sim_out.join("manifest.json").to_str().unwrap(),
    ]);
    checks.push(sub(
        "replay detects mismatching artifacts",
        !tampered_ok,
        tamper_log.lines().last().unwrap_or("").trim().to_string(),
    ));

    // malformed configuration names the offending field
    let bad = scratch.join("bad.toml");
    std::fs::write(
        &bad,
        "scenario = \"corridors\"\n[lattice]\nscatterers = [[0.5, 0.5, 0.0]]\n",
    )
    .unwrap();
    let (bad_ok, bad_log) = run_cli(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        scratch.join("bad_out").to_str().unwrap(),
    ]);
    checks.push(sub(
        "malformed config rejected with a field-level message",
        !bad_ok && bad_log.contains("radius"),
        bad_log.lines().last().unwrap_or("").trim().to_string(),
    ));

    verdict("C12 determinism and replay", checks);
}
