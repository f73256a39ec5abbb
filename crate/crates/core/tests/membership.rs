use ndarray::Array2;
use proptest::prelude::*;
use relu_privacy::membership::{
    attack_known_margin, attack_leaked_points, evaluate_attack, membership_score, verdict_known_margin, RuleSpec,
};
use relu_privacy_testkit::{constructed_kkt, random_dataset, random_network, ConstructOptions};

#[test]
fn support_points_score_exactly_the_margin() {
    for seed in 0..5 {
        let c = constructed_kkt(
            5,
            50,
            ConstructOptions {
                margin: 1.7,
                ..ConstructOptions::default()
            },
            seed,
        );
        for &i in &c.support {
            let s = membership_score(&c.net, c.data.point(i)).unwrap();
            assert!((s - c.margin).abs() <= 1e-12 * c.margin, "point {i}: {s}");
            assert!(
                attack_known_margin(&c.net, c.margin, c.data.point(i))
                    .unwrap()
                    .is_member
            );
        }
    }
}

#[test]
fn leaked_training_point_sets_alpha_to_the_margin() {
    let c = constructed_kkt(4, 30, ConstructOptions::default(), 3);
    let leaked = c.data.x().select(ndarray::Axis(0), &[2]);
    let v = attack_leaked_points(&c.net, &leaked).unwrap();
    assert_eq!(v.len(), 1);
    assert!(v[0].is_member);
    assert!((v[0].threshold_used - 0.5 * c.margin).abs() <= 1e-12);
}

#[test]
fn constructed_network_separates_members_from_fresh_points() {
    // Fresh points in the orthogonal complement of the training span score 0.
    let c = constructed_kkt(4, 40, ConstructOptions::default(), 8);
    let members = c.data.x().to_owned();
    let mut fresh = Array2::zeros((6, 40));
    for (i, mut row) in fresh.rows_mut().into_iter().enumerate() {
        row[i] = 1.0;
    }
    let span: Vec<_> = members.rows().into_iter().collect();
    for mut row in fresh.rows_mut() {
        for _ in 0..2 {
            for m in &span {
                let p = row.dot(m) / m.dot(m);
                row.scaled_add(-p, m);
            }
        }
    }
    let eval = evaluate_attack(&c.net, &members, &fresh, RuleSpec::KnownMargin { m: c.margin }).unwrap();
    assert_eq!(eval.accuracy, 1.0);
    assert_eq!(eval.auc, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn known_margin_verdicts_survive_rescaling(seed in any::<u64>(), c in 0.1f64..10.0, m in 0.01f64..5.0) {
        let net = random_network(4, 6, seed);
        let pts = random_dataset(10, 4, seed ^ 9);
        for x in pts.x().rows() {
            let a = verdict_known_margin(membership_score(&net, x).unwrap(), m);
            let b = verdict_known_margin(membership_score(&net.scaled(c), x).unwrap(), c * c * m);
            let s = a.score;
            // Scores within rounding of the threshold may flip.
            prop_assume!((s - 0.5 * m).abs() > 1e-9 * m.max(s));
            prop_assert_eq!(a.is_member, b.is_member);
        }
    }

    #[test]
    fn evaluation_ignores_row_order_within_sets(seed in any::<u64>()) {
        let net = random_network(3, 5, seed);
        let members = random_dataset(6, 3, seed ^ 1).x().to_owned();
        let fresh = random_dataset(8, 3, seed ^ 2).x().to_owned();
        let rule = RuleSpec::LeakedPoints;
        let a = evaluate_attack(&net, &members, &fresh, rule).unwrap();
        let mut rev_m = members.clone();
        rev_m.invert_axis(ndarray::Axis(0));
        let mut rev_f = fresh.clone();
        rev_f.invert_axis(ndarray::Axis(0));
        let b = evaluate_attack(&net, &rev_m, &rev_f, rule).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!((a.auc - b.auc).abs() < 1e-12);
    }
}
