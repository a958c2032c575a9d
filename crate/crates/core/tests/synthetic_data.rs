use kssvm::synth::{generate, generate_replicate, CoeffScale, SynthConfig, FEATURE_NAMES};

#[test]
fn normal_feature_means_follow_the_generator() {
    let cfg = SynthConfig {
        target_censoring: 0.0,
        ..SynthConfig::new(10_000, 1, 12)
    };
    let (train, _) = generate(&cfg).unwrap();
    let n5 = FEATURE_NAMES.iter().position(|&f| f == "n5").unwrap();
    let mean = train.x().column(n5).mean().unwrap();
    assert!((mean - 0.8).abs() < 0.05, "{mean}");
    let age = train.x().column(0).to_vec();
    assert!(age.iter().all(|a| (18.0..=89.0).contains(a)));
}

#[test]
fn censoring_band_and_uncensored_test_set() {
    for seed in 0..5 {
        let r = generate_replicate(&SynthConfig::new(1500, 300, seed)).unwrap();
        let c = r.train.censoring_fraction();
        assert!((0.15..=0.25).contains(&c), "seed {seed}: {c}");
        assert_eq!(r.test.n_events(), 300);
        assert!(r.tau.is_finite() && r.tau > 0.0);
    }
}

#[test]
fn fixed_scale_is_used_for_both_splits() {
    let cfg = SynthConfig {
        coeff_scale: CoeffScale::Fixed(0.5),
        ..SynthConfig::new(20, 20, 5)
    };
    let r = generate_replicate(&cfg).unwrap();
    assert_eq!(r.coefficient_scale, 0.5);
    assert_eq!(generate_replicate(&cfg).unwrap(), r);
}
