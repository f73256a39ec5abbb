use proptest::prelude::*;
use relu_privacy::{analyze, estimate_lambdas, margin, train, LabeledDataset, LossKind, TrainConfig};
use relu_privacy_testkit::{constructed_kkt, one_dim_pair, ConstructOptions, ConstructedKkt};

const SLACK: f64 = 0.1;

fn assert_recovers(c: &ConstructedKkt) {
    let report = estimate_lambdas(&c.net, &c.data, SLACK).unwrap();
    assert!(
        report.stationarity_residual < 1e-8,
        "residual {}",
        report.stationarity_residual
    );
    assert!((report.margin_m - c.margin).abs() <= 1e-12 * c.margin);
    for (i, (got, want)) in report.lambdas.iter().zip(&c.lambdas).enumerate() {
        assert!((got - want).abs() < 1e-6, "lambda {i}: {got} vs {want}");
    }
    let mut support = report.support_indices.clone();
    support.sort_unstable();
    assert_eq!(support, c.support);
}

#[test]
fn recovers_constructed_multipliers() {
    for seed in 0..10 {
        for (n, d) in [(2, 2), (3, 5), (5, 12), (8, 40)] {
            assert_recovers(&constructed_kkt(n, d, ConstructOptions::default(), seed));
        }
    }
}

#[test]
fn split_and_dead_units_do_not_change_multipliers() {
    let opts = ConstructOptions {
        margin: 2.5,
        split: 3,
        dead_units: 4,
        off_margin: 0,
    };
    for seed in 0..5 {
        assert_recovers(&constructed_kkt(4, 20, opts, seed));
    }
}

#[test]
fn points_off_the_margin_get_zero_multipliers() {
    let opts = ConstructOptions {
        off_margin: 3,
        ..ConstructOptions::default()
    };
    for seed in 0..5 {
        let c = constructed_kkt(4, 16, opts, seed);
        let report = estimate_lambdas(&c.net, &c.data, SLACK).unwrap();
        assert!(report.stationarity_residual < 1e-8);
        for i in 4..7 {
            assert_eq!(report.lambdas[i], 0.0);
        }
    }
}

#[test]
fn univariate_pair_is_stationary() {
    assert_recovers(&one_dim_pair(1.0));
    assert_recovers(&one_dim_pair(0.3));
}

#[test]
fn near_orthogonal_construction_meets_both_bounds() {
    for seed in 0..5 {
        let c = constructed_kkt(5, 2000, ConstructOptions::default(), seed);
        let report = analyze(&c.net, &c.data, SLACK, LossKind::Exponential).unwrap();
        let diag = report.diagnostics.unwrap();
        assert!(diag.upper_bound_sum.is_some() && diag.lower_bound_sum.is_some());
        assert!(diag.all_upper_ok, "seed {seed}: {:?}", diag.points);
        assert!(diag.all_lower_ok, "seed {seed}: {:?}", diag.points);
    }
}

#[test]
fn trained_margin_matches_trace() {
    let data = LabeledDataset::from_1d(&[(-1.0, -1.0), (0.5, 1.0), (2.0, 1.0)]).unwrap();
    let cfg = TrainConfig {
        width: 16,
        init_scale: 0.1,
        max_steps: 5000,
        rng_seed: 3,
        ..TrainConfig::default()
    };
    let (net, trace) = train(&data, &cfg).unwrap();
    let last = trace.last().unwrap();
    assert!(last.min_margin > 0.0);
    let m = margin(&net, &data).unwrap().value;
    assert!((m - last.min_margin.abs()).abs() <= 1e-12 * m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multipliers_are_scale_invariant(seed in 0u64..1000, c in 0.1f64..10.0) {
        let k = constructed_kkt(3, 8, ConstructOptions::default(), seed);
        let base = estimate_lambdas(&k.net, &k.data, SLACK).unwrap();
        let scaled = estimate_lambdas(&k.net.scaled(c), &k.data, SLACK).unwrap();
        prop_assert!(scaled.stationarity_residual < 1e-8);
        prop_assert!((scaled.margin_m - c * c * base.margin_m).abs() <= 1e-10 * scaled.margin_m);
        for (a, b) in base.lambdas.iter().zip(&scaled.lambdas) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
