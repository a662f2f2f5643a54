use drci_core::divergence::{rho_for_threshold, worst_case_cdf};
use drci_core::simulation::{tilt_weights, MethodSettings};
use drci_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn divergence(i: u8) -> DivergenceSpec {
    if i % 2 == 0 {
        DivergenceSpec::chi_square()
    } else {
        DivergenceSpec::kullback_leibler()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn g_is_monotone_and_below_identity(which in 0u8..2, rho in 0.0f64..3.0, b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0) {
        let div = divergence(which);
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let (g_lo, g_hi) = (eval_g(&div, rho, lo).unwrap(), eval_g(&div, rho, hi).unwrap());
        prop_assert!(g_lo <= g_hi);
        prop_assert!(g_hi <= hi);
        prop_assert!(g_lo >= 0.0);
    }

    #[test]
    fn g_shrinks_as_the_ball_grows(which in 0u8..2, r1 in 0.0f64..3.0, r2 in 0.0f64..3.0, beta in 0.0f64..=1.0) {
        let div = divergence(which);
        let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(eval_g(&div, large, beta).unwrap() <= eval_g(&div, small, beta).unwrap());
        prop_assert!(eval_g_inverse(&div, large, beta).unwrap() >= eval_g_inverse(&div, small, beta).unwrap());
    }

    #[test]
    fn inverse_round_trip(which in 0u8..2, rho in 0.001f64..2.0, tau in 0.01f64..0.99) {
        let div = divergence(which);
        let beta = eval_g_inverse(&div, rho, tau).unwrap();
        prop_assert!(beta >= tau);
        // g⁻¹ is the last base mass that still reaches τ
        prop_assert!(eval_g(&div, rho, beta).unwrap() <= tau);
        if beta < 1.0 {
            let next = f64::from_bits(beta.to_bits() + 1);
            prop_assert!(eval_g(&div, rho, next).unwrap() >= tau);
        }
    }

    #[test]
    fn worst_case_cdf_never_exceeds_empirical(seed in 0u64..1000, rho in 0.0f64..1.0, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = EmpiricalScores::new((0..40).map(|_| rng.random::<f64>()).collect()).unwrap();
        let div = DivergenceSpec::chi_square();
        let worst = worst_case_cdf(&div, rho, &scores, t).unwrap();
        prop_assert!(worst <= scores.cdf(t));
        prop_assert_eq!(worst, eval_g(&div, rho, scores.cdf(t)).unwrap());
    }

    #[test]
    fn corrected_thresholds_dominate(seed in 0u64..1000, rho in 0.0f64..0.5, n in 5usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = EmpiricalScores::new((0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
        let div = DivergenceSpec::chi_square();
        let plain = robust_threshold(&div, &scores, rho, 0.1, false).unwrap();
        let corrected = robust_threshold(&div, &scores, rho, 0.1, true).unwrap();
        prop_assert!(corrected.threshold_q >= plain.threshold_q);
        prop_assert!(corrected.corrected && !plain.corrected);
    }

    #[test]
    fn estimated_radius_reproduces_its_threshold(seed in 0u64..1000, pick in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = EmpiricalScores::new((0..80).map(|_| rng.random::<f64>()).collect()).unwrap();
        let div = DivergenceSpec::kullback_leibler();
        let lo = empirical_quantile(&scores, 0.9).unwrap();
        let q = lo + pick * (scores.max() - lo) * 0.999;
        let rho = rho_for_threshold(&div, 0.1, &scores, q).unwrap().rho;
        let back = robust_threshold(&div, &scores, rho, 0.1, false).unwrap().threshold_q;
        prop_assert_eq!(back, scores.order_statistic(scores.count_at_most(q)));
    }
}

/// For the two-bin tilt at χ² radius `rho_star`, the test coverage of any
/// threshold is at least `g_{ρ⋆}` of its base coverage.
#[test]
fn worst_case_bound_holds_trial_by_trial() {
    let div = DivergenceSpec::chi_square();
    let rho_star = 0.05;
    let (b, p0) = (0.9f64, 0.1f64);
    let pi = p0 + (2.0 * rho_star / (1.0 / b + 1.0 / p0)).sqrt();
    let weights = [(1.0 - pi) / b, pi / p0];
    // the tilt sits exactly on the ball boundary
    let realized = b * div.eval(weights[0]) + p0 * div.eval(weights[1]);
    assert!((realized - rho_star).abs() < 1e-12);
    let f_test = |t: f64| if t < b { (1.0 - pi) * t / b } else { 1.0 - pi + pi * (t - b) / p0 };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..500 {
        let scores = EmpiricalScores::new((0..200).map(|_| rng.random::<f64>()).collect()).unwrap();
        let q = robust_threshold(&div, &scores, 0.02, 0.1, false).unwrap().threshold_q.min(1.0);
        assert!(f_test(q) >= eval_g(&div, rho_star, q).unwrap() - 1e-12);
    }
}

#[test]
fn coverage_reports_round_trip_through_json() {
    let settings = MethodSettings { k: 20, ..MethodSettings::default() };
    let spec = ExperimentSpec {
        population: Population::Hetero {
            model: HeteroModel::standard(2, NoiseScale::Softplus, 0.5, ScoreKind::Absolute).unwrap(),
            n_val: 200,
            n_test: 200,
            val_shift: vec![0.0, 0.0],
            test_shift: vec![1.0, 0.0],
        },
        methods: ["sc", "chi2-s", "kl-fixed"].iter().map(|m| MethodSpec::parse(m, &settings).unwrap()).collect(),
        alpha: 0.1,
        trials: 3,
        seed: 8,
    };
    let reports = run_coverage_experiment(&spec).unwrap();
    let json = serde_json::to_string(&reports).unwrap();
    let back: Vec<CoverageReport> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, reports);
    for r in &reports {
        assert_eq!(r.coverage_deciles.len(), 9);
        assert_eq!(r.per_trial.len(), 3);
        assert!(r.per_trial.iter().enumerate().all(|(i, t)| t.trial == i && t.seed == 8 + i as u64));
    }
}

#[test]
fn tilt_weights_follow_the_projection() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
    let data = TabularDataset::from_rows(&rows, vec![0.0; 10]).unwrap();
    let tilt = TiltSpec::new(0.3, vec![1.0, 0.0], vec![4.5, 0.0]).unwrap();
    let w = tilt_weights(&data, &tilt).unwrap();
    assert!(w.windows(2).all(|p| p[1] > p[0]));
    assert!((w[1] / w[0] - 0.3f64.exp()).abs() < 1e-12);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
