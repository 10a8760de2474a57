use proptest::prelude::*;

use preview_regret::invariance::{max_invariant_set, max_rcis_preview, InvariantOptions};
use preview_regret::models::build_1d;
use preview_regret::regret::{
    algorithm2, bound_envelope, k0_of, CertificateMethod, RegretCertificate, RegretInputs,
};
use preview_regret::systems::{collaborative, Equilibrium};

/// Certificate with the burn-in and rate recomputed here from the raw
/// contraction data.
fn cert(lambda0: f64, gamma: f64, lambda: f64, n_steps: usize, p0: usize, r_co: f64) -> RegretCertificate {
    let a = (1.0 - gamma) / (1.0 - gamma * lambda);
    let k0 = k0_of(lambda0, gamma, lambda);
    let c = k0.map(|k| (1.0 - lambda0 / lambda.powi(k as i32)) * a.powi(k as i32)).unwrap_or(1.0);
    RegretCertificate {
        method: CertificateMethod::Alg1,
        lambda0,
        gamma,
        n_steps,
        lambda,
        k0,
        a,
        c,
        r_co,
        p0,
        shift: Equilibrium::zero(1, 1, 1),
        certified: true,
        notes: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn burn_in_is_the_first_admissible_step(lambda0 in 1e-4f64..1.0, gamma in 0.01f64..1.0, lambda in 0.01f64..0.99) {
        let k0 = k0_of(lambda0, gamma, lambda).unwrap();
        prop_assert!(gamma * lambda.powi(k0 as i32 + 1) <= lambda0 * (1.0 + 1e-9));
        if k0 > 0 {
            prop_assert!(gamma * lambda.powi(k0 as i32) > lambda0 * (1.0 - 1e-9));
        }
    }

    #[test]
    fn bounds_decrease_and_stay_in_range(
        lambda0 in 0.0f64..1.0,
        gamma in 0.01f64..1.0,
        lambda in 0.01f64..0.99,
        n_steps in 1usize..5,
        p0 in 0usize..3,
        r_co in 0.1f64..10.0,
    ) {
        let c = cert(lambda0, gamma, lambda, n_steps, p0, r_co);
        let mut prev = f64::INFINITY;
        for p in p0..p0 + 40 {
            let b = c.bound_dp(p).unwrap();
            prop_assert!(b >= 0.0 && b <= r_co * (1.0 + 1e-12));
            prop_assert!(b <= prev + 1e-12, "bound rises at p = {}", p);
            prev = b;
            prop_assert!(c.bound_marginal(p).unwrap() >= 0.0);
        }
        if p0 > 0 {
            prop_assert!(c.bound_dp(p0 - 1).is_err());
        }
    }

    #[test]
    fn envelope_is_pointwise_minimum(
        l1 in 0.01f64..1.0, l2 in 0.01f64..1.0, g1 in 0.05f64..1.0, g2 in 0.05f64..1.0, p in 1usize..30,
    ) {
        let a = cert(l1, g1, 0.5, 1, 1, 2.0);
        let b = cert(l2, g2, 0.3, 2, 1, 2.0);
        let e = bound_envelope(&[a.clone(), b.clone()], p).unwrap();
        prop_assert!((e - a.bound_dp(p).unwrap().min(b.bound_dp(p).unwrap())).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // x⁺ = a x + u + d with |u| <= ū, |d| <= d̄: C_max,co = ±(ū + d̄)/(a − 1)
    // and d_p = 2 d̄ / ((a − 1) aᵖ)
    #[test]
    fn scalar_closed_forms(a in 1.5f64..3.0, u_bar in 0.5f64..2.0, frac in 0.05f64..0.9, slack in 1.0f64..3.0) {
        let d_bar = frac * u_bar;
        let co_r = (u_bar + d_bar) / (a - 1.0);
        let (sys, _) = build_1d(a, co_r * slack + 0.1, u_bar, d_bar).unwrap();
        let co = collaborative(&sys);
        let o = InvariantOptions::default();
        let cco = max_invariant_set(&co, &co.s, &o).unwrap().set;
        let bb = cco.bounding_box().unwrap();
        prop_assert!((bb.upper[0] - co_r).abs() <= 1e-8 * co_r.max(1.0));
        prop_assert!((bb.lower[0] + co_r).abs() <= 1e-8 * co_r.max(1.0));
        let c1 = max_rcis_preview(&sys, 1, Some(&cco), &o).unwrap().set;
        let proj = c1.project_auto(1).unwrap();
        let dp = |p: i32| 2.0 * d_bar / ((a - 1.0) * a.powi(p));
        prop_assert!((proj.bounding_box().unwrap().upper[0] - (co_r - dp(1))).abs() <= 1e-8 * co_r.max(1.0));
        let inp = RegretInputs { sys: &sys, c_max_co: &cco, c_max_p0: &c1, p0: 1, projection: Some(&proj) };
        let cert = algorithm2(&inp, 1).unwrap();
        prop_assert!((cert.gamma - (1.0 - 1.0 / a)).abs() <= 1e-8);
        for p in 1..=4 {
            let b = cert.bound_dp(p as usize).unwrap();
            prop_assert!((b - dp(p)).abs() <= 1e-8 * co_r.max(1.0), "p = {}: {} vs {}", p, b, dp(p));
        }
    }
}
