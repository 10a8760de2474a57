//! Acceptance criteria, one line each. Runs without the libtest harness so
//! every criterion is attempted and reported even when an earlier one fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;

use preview_regret::invariance::{
    cmax_p_co, check_contractive, max_invariant_set, max_rcis_preview, pre, pre_k, theorem1_bounds, InvariantOptions,
};
use preview_regret::models::{build_1d, build_2d_random};
use preview_regret::mpc::{feasible_domain, sample_disturbances, simulate_batch, theorem9_certificate, MpcConfig};
use preview_regret::polytope::{containment_ratio, hausdorff_nested, HPolytope};
use preview_regret::regret::{algorithm1, algorithm2, algorithm3, true_dp, RegretCertificate, RegretInputs, DEFAULT_LADDER_TAU};
use preview_regret::systems::{collaborative, collaborative_augmented, Dynamics, LinearSystem};

// scalar example a = 2, x̄ = 10, ū = 1, d̄ = 0.5
const A: f64 = 2.0;
const XB: f64 = 10.0;
const UB: f64 = 1.0;
const DB: f64 = 0.5;

fn co_bound() -> f64 {
    (UB + DB) / (A - 1.0)
}

fn dp_closed(p: usize) -> f64 {
    2.0 * DB / ((A - 1.0) * A.powi(p as i32))
}

fn opts() -> InvariantOptions {
    InvariantOptions::default()
}

fn cmax_co(sys: &LinearSystem) -> HPolytope {
    let co = collaborative(sys);
    max_invariant_set(&co, &co.s, &opts()).unwrap().set
}

fn interval(p: &HPolytope) -> (f64, f64) {
    let b = p.bounding_box().unwrap();
    (b.lower[0], b.upper[0])
}

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn criterion_1() -> Check {
    let (sys, _) = build_1d(A, XB, UB, DB).map_err(|e| e.to_string())?;
    let cco = cmax_co(&sys);
    let (lo, hi) = interval(&cco);
    ensure((lo + co_bound()).abs() <= 1e-9 && (hi - co_bound()).abs() <= 1e-9, format!("C_max,co = [{lo}, {hi}]"))?;
    let mut worst: f64 = 0.0;
    for p in 1..=6 {
        let cp = max_rcis_preview(&sys, p, Some(&cco), &opts()).unwrap().set;
        let (plo, phi) = interval(&cp.project_auto(1).unwrap());
        let want = co_bound() - dp_closed(p);
        worst = worst.max((phi - want).abs()).max((plo + want).abs());
        let d = true_dp(&sys, p, &cco, usize::MAX).unwrap();
        worst = worst.max((d - dp_closed(p)).abs());
    }
    ensure(worst <= 1e-9, format!("max error {worst:.2e}"))?;
    Ok(format!("max error {worst:.2e}"))
}

fn criterion_2() -> Check {
    let (sys, _) = build_1d(A, XB, UB, DB).map_err(|e| e.to_string())?;
    let cco = cmax_co(&sys);
    let c1 = max_rcis_preview(&sys, 1, Some(&cco), &opts()).unwrap().set;
    let proj = c1.project_auto(1).unwrap();
    let inp = RegretInputs { sys: &sys, c_max_co: &cco, c_max_p0: &c1, p0: 1, projection: Some(&proj) };
    let cert = algorithm2(&inp, 1).map_err(|e| e.to_string())?;
    let gamma_want = 1.0 - 1.0 / A;
    let lambda0_want = (co_bound() - dp_closed(1)) / co_bound();
    ensure((cert.gamma - gamma_want).abs() <= 1e-9, format!("gamma_max = {}", cert.gamma))?;
    ensure((cert.lambda0 - lambda0_want).abs() <= 1e-9, format!("lambda0 = {}", cert.lambda0))?;
    let errs: Vec<f64> = (1..=10usize)
        .into_par_iter()
        .map(|p| {
            let d = true_dp(&sys, p, &cco, usize::MAX).unwrap();
            (cert.bound_dp(p).unwrap() - d).abs().max((d - dp_closed(p)).abs())
        })
        .collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    ensure(worst <= 1e-9, format!("bound vs true d_p error {worst:.2e}"))?;
    Ok(format!("gamma_max {:.12}, lambda0 {:.12}, max error {worst:.2e}", cert.gamma, cert.lambda0))
}

struct SeedReport {
    worst_slack: f64,
    refined_excess: f64,
    certs: usize,
    failures: Vec<String>,
}

fn criterion_3() -> Check {
    let reports: Vec<SeedReport> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let sys = build_2d_random(seed);
            let cco = cmax_co(&sys);
            let c1 = max_rcis_preview(&sys, 1, Some(&cco), &opts()).unwrap().set;
            let inp = RegretInputs { sys: &sys, c_max_co: &cco, c_max_p0: &c1, p0: 1, projection: None };
            let runs = [
                ("alg1", algorithm1(&inp, false)),
                ("alg1_refined", algorithm1(&inp, true)),
                ("alg2_N2", algorithm2(&inp, 2)),
                ("alg2_N8", algorithm2(&inp, 8)),
            ];
            let mut failures = Vec::new();
            let mut certs: Vec<(&str, RegretCertificate)> = Vec::new();
            for (name, r) in runs {
                match r {
                    Ok(c) => certs.push((name, c)),
                    Err(e) => failures.push(format!("seed {seed} {name}: {e}")),
                }
            }
            let mut worst_slack = f64::NEG_INFINITY;
            let mut refined_excess = f64::NEG_INFINITY;
            for p in 1..=6 {
                let Ok(d) = true_dp(&sys, p, &cco, 8) else { continue };
                for (_, c) in &certs {
                    worst_slack = worst_slack.max(d - c.bound_dp(p).unwrap());
                }
                let b = |name: &str| certs.iter().find(|(n, _)| *n == name).map(|(_, c)| c.bound_dp(p).unwrap());
                if let (Some(u), Some(r)) = (b("alg1"), b("alg1_refined")) {
                    refined_excess = refined_excess.max(r - u);
                }
            }
            SeedReport { worst_slack, refined_excess, certs: certs.len(), failures }
        })
        .collect();
    let worst = reports.iter().map(|r| r.worst_slack).fold(f64::NEG_INFINITY, f64::max);
    let excess = reports.iter().map(|r| r.refined_excess).fold(f64::NEG_INFINITY, f64::max);
    let certs: usize = reports.iter().map(|r| r.certs).sum();
    let failures: Vec<&String> = reports.iter().flat_map(|r| &r.failures).collect();
    ensure(worst <= 1e-6, format!("true d_p exceeds a bound by {worst:.2e}"))?;
    ensure(excess <= 1e-12, format!("refined bound exceeds unrefined by {excess:.2e}"))?;
    ensure(certs > 0, "no certificate produced")?;
    Ok(format!(
        "{certs} certificates on 20 instances, max(true - bound) {worst:.2e}, {} algorithm failure(s) reported",
        failures.len()
    ))
}

fn sandwich_worst(sys: &LinearSystem) -> std::result::Result<f64, String> {
    let cco = cmax_co(sys);
    let cp: Vec<HPolytope> = (0..=2).map(|p| max_rcis_preview(sys, p, Some(&cco), &opts()).unwrap().set).collect();
    let mut worst: f64 = 0.0;
    let ratio = |a: &HPolytope, b: &HPolytope| containment_ratio(a, b).unwrap();
    for p in 0..=2 {
        let direct = cmax_p_co(sys, p, &cco).unwrap();
        // delay duality: outer bound by C_max,co × D^p
        worst = worst.max(ratio(&direct, &cco.cartesian_product(&sys.d.power(p))));
        for pp in 0..=p {
            let b = theorem1_bounds(sys, p, pp, &cp[pp], &cco).unwrap();
            worst = worst.max(ratio(&b.inner, &cp[p])).max(ratio(&cp[p], &b.outer));
            // tighter as p' grows
            if pp > 0 {
                let prev = theorem1_bounds(sys, p, pp - 1, &cp[pp - 1], &cco).unwrap();
                worst = worst.max(ratio(&b.outer, &prev.outer));
            }
        }
        if p > 0 {
            let dco = collaborative_augmented(sys, p);
            let fixed = max_invariant_set(&dco, &dco.s, &opts()).unwrap().set;
            if !fixed.set_equal(&direct, 1e-6).unwrap() {
                return Err(format!("Pre^{p} formula differs from the fixed point"));
            }
        }
    }
    Ok(worst)
}

fn criterion_4() -> Check {
    let (s1, _) = build_1d(A, XB, UB, DB).map_err(|e| e.to_string())?;
    let mut systems = vec![s1];
    systems.extend((0..3).map(build_2d_random));
    let mut worst: f64 = 0.0;
    for s in &systems {
        worst = worst.max(sandwich_worst(s)?);
    }
    ensure(worst <= 1.0 + 1e-6, format!("containment ratio {worst}"))?;
    Ok(format!("max containment ratio {worst:.9} over {} systems", systems.len()))
}

fn criterion_5() -> Check {
    let results: Vec<(Option<usize>, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let sys = build_2d_random(seed);
            let cco = cmax_co(&sys);
            let c1 = max_rcis_preview(&sys, 1, Some(&cco), &opts()).unwrap().set;
            let r = algorithm3(&sys, &cco, &c1.project_auto(2).unwrap(), 1, 50, DEFAULT_LADDER_TAU).unwrap();
            let ok = match r.p_bar {
                Some(_) => r.ladder.last().unwrap().set_equal(&cco, 1e-6).unwrap(),
                None => true,
            };
            (r.p_bar, ok)
        })
        .collect();
    let finite = results.iter().filter(|r| r.0.is_some()).count();
    ensure(results.iter().all(|r| r.1), "a converged ladder differs from C_max,co")?;

    let (sys, _) = build_1d(A, XB, UB, DB).map_err(|e| e.to_string())?;
    let cco = cmax_co(&sys);
    let c1 = max_rcis_preview(&sys, 1, Some(&cco), &opts()).unwrap().set;
    let r = algorithm3(&sys, &cco, &c1.project_auto(1).unwrap(), 1, 50, DEFAULT_LADDER_TAU).unwrap();
    ensure(r.p_bar.is_none(), format!("scalar ladder stopped at {:?}", r.p_bar))?;
    let mut worst: f64 = 0.0;
    for (k, d) in r.distances.iter().enumerate() {
        let p = 1 + k;
        worst = worst.max((d - dp_closed(p)).abs());
        if p <= 6 {
            worst = worst.max((d - true_dp(&sys, p, &cco, usize::MAX).unwrap()).abs());
        }
    }
    ensure(worst <= 1e-9, format!("ladder distance error {worst:.2e}"))?;
    Ok(format!("{finite}/20 random ladders converged, all match C_max,co; scalar p_bar = inf, distance error {worst:.2e}"))
}

fn criterion_6() -> Check {
    let mut notes = Vec::new();
    for seed in [0u64, 3, 7] {
        let sys = build_2d_random(seed);
        let c = max_invariant_set(&sys, &sys.s_xu, &opts()).unwrap().set;
        let cco = cmax_co(&sys);
        for p in 1..=2 {
            let fd = feasible_domain(&sys, &c, p, true).map_err(|e| e.to_string())?;
            let full = fd.full.as_ref().ok_or("full feasible domain missing")?;
            ensure(full.project_auto(2).unwrap().set_equal(&fd.projection, 1e-6).unwrap(), format!("seed {seed}: projection identity fails at p = {p}"))?;
            let cp = max_rcis_preview(&sys, p, Some(&cco), &opts()).unwrap().set.project_auto(2).unwrap();
            ensure(cp.contains(&fd.projection, 1e-6).unwrap() && cco.contains(&cp, 1e-6).unwrap(), format!("seed {seed}: sandwich fails at p = {p}"))?;
        }
        let cert = theorem9_certificate(&sys, &c, &cco).map_err(|e| e.to_string())?;
        let co = collaborative(&sys);
        let mut proj = c.clone();
        for p in 0..=6 {
            if p > 0 {
                proj = pre(&co, &proj, &co.s).unwrap().remove_redundancy().unwrap();
            }
            let gap = hausdorff_nested(&proj, &cco).unwrap();
            let b = cert.bound_dp(p).unwrap();
            ensure(gap <= b + 1e-9, format!("seed {seed}: gap {gap} above bound {b} at p = {p}"))?;
        }
        let cfg = MpcConfig::new(&sys, 2, c.clone());
        let streams: Vec<Vec<DVector<f64>>> = (0..100).map(|s| sample_disturbances(&sys.d, 52, s).unwrap()).collect();
        let runs = simulate_batch(&sys, &cfg, &DVector::zeros(sys.n()), &streams, 50);
        let mut bad = 0;
        for r in &runs {
            bad += r.as_ref().map_err(|e| e.to_string())?.infeasible_steps();
        }
        ensure(bad == 0, format!("seed {seed}: {bad} infeasible closed-loop steps"))?;
        notes.push(format!("seed {seed} ok"));
    }
    Ok(format!("{}; 300 closed-loop runs of 50 steps, 0 infeasible", notes.join(", ")))
}

fn criterion_7() -> Check {
    let (sys, _) = build_1d(A, XB, UB, DB).map_err(|e| e.to_string())?;
    let co = collaborative(&sys);
    let cco = cmax_co(&sys);
    // γ C_max,co is one-step λ-contractive in S_xu × D iff 3γ − 1.5 ≤ 1.5γλ
    let (gamma, lambda) = (0.6, 1.0 / 3.0);
    let gc = cco.scale(gamma).unwrap();
    ensure(check_contractive(&co, &gc, &co.s, 1, lambda).unwrap(), "contraction premise fails")?;
    let lg = lambda * gamma;
    let g = |xi: f64| xi * (1.0 - gamma) / (1.0 - gamma * lambda) + gamma * (1.0 - lambda) / (1.0 - gamma * lambda);
    let mut lines = Vec::new();
    for xi in [0.5 * lg, lg, 1.5 * lg] {
        let reach = pre_k(&co, &cco.scale(xi).unwrap(), &co.s, 1).unwrap();
        let factor = if xi <= lg { xi / lambda } else { g(xi) };
        let ratio = containment_ratio(&cco.scale(factor).unwrap(), &reach).unwrap();
        // closed form: Pre(ξ C_max,co) = [−0.75(1 + ξ), 0.75(1 + ξ)]
        let (_, hi) = interval(&reach);
        ensure((hi - 0.75 * (1.0 + xi)).abs() <= 1e-9, format!("Pre of {xi} C_max,co has upper end {hi}"))?;
        ensure(ratio <= 1.0 + 1e-6, format!("inclusion fails at xi = {xi}: ratio {ratio}"))?;
        for a in [0.25, 0.5, 0.75] {
            for b in [0.25, 0.5, 0.75] {
                let c = cco.scale(xi).unwrap();
                let p1 = pre(&co, &c.scale(a).unwrap(), &co.s.scale(b).unwrap()).unwrap();
                let p2 = pre(&co, &c.scale(1.0 - a).unwrap(), &co.s.scale(1.0 - b).unwrap()).unwrap();
                let whole = pre(&co, &c, &co.s).unwrap();
                for dir in [1.0, -1.0] {
                    let w = DVector::from_element(1, dir);
                    let lhs = whole.support(&w).unwrap();
                    let rhs = p1.support(&w).unwrap() + p2.support(&w).unwrap();
                    ensure(lhs >= rhs - 1e-9, format!("superadditivity fails at xi = {xi}, a = {a}, b = {b}"))?;
                }
            }
        }
        lines.push(format!("{xi:.2}:{ratio:.6}"));
    }
    Ok(format!("gamma {gamma}, lambda {lambda:.4}, ratios {}", lines.join(" ")))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 scalar closed forms", criterion_1, Duration::from_secs(5)),
        ("2 controllable-case exactness", criterion_2, Duration::from_secs(5)),
        ("3 soundness sweep", criterion_3, Duration::from_secs(600)),
        ("4 preview sandwiches", criterion_4, Duration::from_secs(300)),
        ("5 finite convergence", criterion_5, Duration::from_secs(600)),
        ("6 preview MPC", criterion_6, Duration::from_secs(600)),
        ("7 contraction lemma", criterion_7, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let dt = t.elapsed();
        let out = match out {
            Ok(m) if dt > limit => Err(format!("{m}; took {dt:.1?}, limit {limit:?}")),
            o => o,
        };
        match out {
            Ok(m) => println!("criterion {name}: PASS ({dt:.2?}) {m}"),
            Err(m) => {
                failed += 1;
                println!("criterion {name}: FAIL ({dt:.2?}) {m}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
