use proptest::prelude::*;

use preview_regret::invariance::{invariance_violation, max_invariant_set, max_rcis_preview, pre, pre_k, InvariantOptions};
use preview_regret::models::{build_1d, build_2d_random};
use preview_regret::polytope::HPolytope;
use preview_regret::regret::{algorithm3, DEFAULT_LADDER_TAU};
use preview_regret::systems::{augment, collaborative, Dynamics};

fn opts() -> InvariantOptions {
    InvariantOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pre_is_monotone(seed in 0u64..200, r in 0.1f64..1.0, grow in 1.0f64..2.0) {
        let sys = build_2d_random(seed);
        let co = collaborative(&sys);
        let x = HPolytope::symmetric_box(2, r);
        let y = x.scale(grow).unwrap();
        let px = pre(&co, &x, &co.s).unwrap();
        let py = pre(&co, &y, &co.s).unwrap();
        prop_assert!(py.contains(&px, 1e-7).unwrap());
        let rx = pre(&sys, &x, &sys.s_xu).unwrap();
        let ry = pre(&sys, &y, &sys.s_xu).unwrap();
        prop_assert!(ry.contains(&rx, 1e-7).unwrap());
    }

    #[test]
    fn pre_k_composes(seed in 0u64..200, k in 1usize..4) {
        let sys = build_2d_random(seed);
        let co = collaborative(&sys);
        let x = HPolytope::symmetric_box(2, 0.5);
        let direct = pre_k(&co, &x, &co.s, k).unwrap();
        let stepped = pre(&co, &pre_k(&co, &x, &co.s, k - 1).unwrap(), &co.s).unwrap();
        prop_assert!(direct.set_equal(&stepped, 1e-7).unwrap());
    }

    #[test]
    fn converged_sets_are_invariant(seed in 0u64..200) {
        let sys = build_2d_random(seed);
        let r = max_invariant_set(&sys, &sys.s_xu, &opts()).unwrap();
        prop_assume!(r.converged);
        prop_assert!(invariance_violation(&sys, &r.set, &sys.s_xu, 1e-6).unwrap().is_none());
        let co = collaborative(&sys);
        let rc = max_invariant_set(&co, &co.s, &opts()).unwrap();
        prop_assume!(rc.converged);
        prop_assert!(invariance_violation(&co, &rc.set, &co.s, 1e-6).unwrap().is_none());
        // the set of the original system is a CIS of D(Σ) as well
        prop_assert!(rc.set.contains(&r.set, 1e-6).unwrap());
    }

    #[test]
    fn preview_projections_grow_towards_collaborative_set(seed in 0u64..200) {
        let sys = build_2d_random(seed);
        let co = collaborative(&sys);
        let cco = max_invariant_set(&co, &co.s, &opts()).unwrap().set;
        let proj = |p: usize| max_rcis_preview(&sys, p, Some(&cco), &opts()).unwrap().set.project_auto(2).unwrap();
        let p1 = proj(1);
        for k in 1..=2 {
            let pk = proj(1 + k);
            let reach = pre_k(&co, &p1, &co.s, k).unwrap();
            prop_assert!(pk.contains(&reach, 1e-6).unwrap(), "k = {}", k);
            prop_assert!(cco.contains(&pk, 1e-6).unwrap());
        }
    }

    #[test]
    fn ladder_is_nested(seed in 0u64..200) {
        let sys = build_2d_random(seed);
        let co = collaborative(&sys);
        let cco = max_invariant_set(&co, &co.s, &opts()).unwrap().set;
        let c1 = max_rcis_preview(&sys, 1, Some(&cco), &opts()).unwrap().set;
        let r = algorithm3(&sys, &cco, &c1.project_auto(2).unwrap(), 1, 12, DEFAULT_LADDER_TAU).unwrap();
        for w in r.ladder.windows(2) {
            prop_assert!(w[1].contains(&w[0], 1e-6).unwrap());
        }
        for w in r.distances.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        if let Some(p_bar) = r.p_bar {
            prop_assert!(r.ladder.last().unwrap().set_equal(&cco, 1e-6).unwrap());
            prop_assert_eq!(p_bar, r.p0 + r.ladder.len() - 1);
        }
    }
}

#[test]
fn augmented_preview_set_is_invariant() {
    let sys = build_2d_random(1);
    let r = max_rcis_preview(&sys, 1, None, &opts()).unwrap();
    assert!(r.converged);
    let sp = augment(&sys, 1);
    assert!(invariance_violation(&sp, &r.set, &sp.s_xu, 1e-6).unwrap().is_none());
}

#[test]
fn scalar_maximal_rcis() {
    let (sys, _) = build_1d(2.0, 10.0, 1.0, 0.5).unwrap();
    let r = max_invariant_set(&sys, &sys.s_xu, &opts()).unwrap();
    assert!(r.converged);
    // |2x + u + d| <= r for all |d| <= 0.5 with |u| <= 1 gives r = 0.5
    assert!(r.set.set_equal(&HPolytope::interval(-0.5, 0.5), 1e-9).unwrap());
    assert_eq!(sys.n(), 1);
}
