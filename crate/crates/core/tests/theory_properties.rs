mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roboss::loss::LossSpec;
use roboss::theory::{calibration_check, conditional_risk, roboss_branch_risk, ConditionalRiskQuery};

#[test]
fn branch_form_matches_generic_risk() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10_000 {
        let a = rng.gen_range(0.1..6.0);
        let lambda = rng.gen_range(0.1..2.5);
        let p = rng.gen_range(0.0..=1.0);
        let f = rng.gen_range(-4.0..4.0);
        let q = ConditionalRiskQuery::new(LossSpec::roboss(a, lambda), p);
        let generic = conditional_risk(&q, f).unwrap();
        let branch = roboss_branch_risk(a, lambda, p, f).unwrap();
        assert!((generic - branch).abs() <= 1e-12, "a={a} lambda={lambda} p={p} f={f}");
    }
}

#[test]
fn hinge_minimizer_is_sign_of_bayes() {
    for &p in &[0.2, 0.8] {
        let out = calibration_check(&ConditionalRiskQuery::new(LossSpec::Hinge, p)).unwrap();
        assert_eq!(out.sign_matches_bayes, Some(true));
        assert!((out.f_star.abs() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn invalid_queries_rejected() {
    let mut q = ConditionalRiskQuery::new(LossSpec::roboss(1.0, 1.0), 1.5);
    assert!(calibration_check(&q).is_err());
    q.p = 0.5;
    q.f_grid = (1.0, -1.0, 0.1);
    assert!(calibration_check(&q).is_err());
    q.f_grid = (-1.0, 1.0, 0.0);
    assert!(calibration_check(&q).is_err());
}
