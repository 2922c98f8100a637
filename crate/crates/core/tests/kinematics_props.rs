mod common;

use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokeprim::{IkOptions, KinematicChain, Limits};

use common::{fd_jacobian_error, random_chain, unit};

#[test]
fn jacobian_matches_central_differences_on_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..100 {
        let n = rng.random_range(3..=8);
        let chain = random_chain(&mut rng, n);
        let r = rng.random_range(-1.0..1.0);
        let q = DVector::from_fn(n - 1, |_, _| rng.random_range(-3.0..3.0));
        let err = fd_jacobian_error(&chain, r, &q);
        assert!(err <= 1e-5, "case {case}: {err}");
    }
}

#[test]
fn wheelchair_arm_jacobian() {
    let chain = KinematicChain::wheelchair_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let q = DVector::from_fn(7, |_, _| rng.random_range(-2.0..2.0));
        assert!(fd_jacobian_error(&chain, rng.random_range(-1.0..1.0), &q) <= 1e-5);
    }
}

fn arm_limits() -> Limits {
    Limits::symmetric(-1.0, 1.0, 7, 0.6).unwrap()
}

#[test]
fn ik_reaches_targets_inside_the_limits() {
    let chain = KinematicChain::wheelchair_arm();
    let limits = arm_limits();
    let inner = limits.scaled(0.8);
    let opts = IkOptions {
        tol: 1e-4,
        ..IkOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut converged = 0;
    for case in 0..1000 {
        let seed = DVector::from_fn(7, |_, _| rng.random_range(-1.5..1.5));
        let offsets =
            DVector::from_fn(8, |i, _| rng.random_range(inner.lower()[i]..=inner.upper()[i]));
        let q_true = &seed + offsets.rows(1, 7);
        let target = chain.forward(offsets[0], &q_true).unwrap();
        let res = strokeprim::kinematics::clipped_ik(&chain, &target, &seed, &limits, &opts).unwrap();
        assert!(limits.contains(&res.offsets()), "case {case} left the limits");
        if res.converged {
            assert!(res.residual <= 1e-4);
            converged += 1;
        }
    }
    assert!(converged >= 990, "{converged}/1000 converged");
}

#[test]
fn ik_on_unreachable_targets_stays_inside_the_limits() {
    let chain = KinematicChain::wheelchair_arm();
    let limits = arm_limits();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for case in 0..1000 {
        let seed = DVector::from_fn(7, |_, _| rng.random_range(-1.5..1.5));
        let dir = unit(&mut rng);
        let target = dir * rng.random_range(3.0..50.0);
        let res = strokeprim::kinematics::clipped_ik(&chain, &target, &seed, &limits, &IkOptions::default()).unwrap();
        assert!(limits.contains(&res.offsets()), "case {case} left the limits");
        assert!(!res.converged);
        assert!(res.residual.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ik_never_leaves_random_limits(
        seed in any::<u64>(),
        n in 3usize..9,
        tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
        bound in 0.0f64..2.0,
        rail in 0.0f64..1.5,
        damping in 0.0f64..0.1,
        capped in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, n);
        let limits = Limits::symmetric(-rail, rail, n - 1, bound).unwrap();
        let q_seed = DVector::from_fn(n - 1, |_, _| rng.random_range(-3.0..3.0));
        let opts = IkOptions {
            max_iter: 50,
            tol: 1e-6,
            damping,
            step_cap: capped.then_some(0.2),
        };
        let res = strokeprim::kinematics::clipped_ik(&chain, &Vector3::new(tx, ty, tz), &q_seed, &limits, &opts).unwrap();
        prop_assert!(limits.contains(&res.offsets()));
        prop_assert!(res.iterations <= 50);
        let reached = chain.forward(res.net_dr, &res.arm_configuration(&q_seed)).unwrap();
        prop_assert!(((reached - Vector3::new(tx, ty, tz)).norm() - res.residual).abs() < 1e-9);
    }
}
