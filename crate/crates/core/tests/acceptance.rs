//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (uncaptured) before asserting.
//!
//! Run with `cargo test -p relu-privacy --test acceptance`.

use std::io::Write as _;
use std::sync::LazyLock;

use ndarray::Array2;
use rand::Rng;
use relu_privacy::distributions::{check_assumption, sample, DistributionSpec};
use relu_privacy::harness::{
    run_margin_experiment, run_reconstruction_pipeline, warm_up_single, ExperimentConfig, MarginExperiment,
    ReconstructionExperiment,
};
use relu_privacy::{estimate_lambdas, forward, gradient, Label, LossKind, TrainConfig};
use relu_privacy_testkit::{
    constructed_kkt, finite_difference_gradient, min_abs_preactivation, random_dataset, random_network, rng,
    ConstructOptions,
};

const INV_E: f64 = 1.0 / std::f64::consts::E;

fn report(n: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
}

static MARGIN_RUN: LazyLock<MarginExperiment> =
    LazyLock::new(|| run_margin_experiment(&ExperimentConfig::margin_defaults()).expect("margin experiment"));

static HIGH_DIM_RUN: LazyLock<MarginExperiment> = LazyLock::new(|| {
    let cfg = ExperimentConfig {
        dims: vec![1000],
        ..ExperimentConfig::margin_defaults()
    };
    run_margin_experiment(&cfg).expect("d=1000 experiment")
});

static RECONSTRUCTION_RUN: LazyLock<ReconstructionExperiment> = LazyLock::new(|| {
    run_reconstruction_pipeline(&ExperimentConfig::reconstruction_defaults()).expect("reconstruction pipeline")
});

#[test]
fn criterion_01_test_points_fall_below_margin_at_d100() {
    let agg = MARGIN_RUN.aggregate(100).expect("d=100 cells");
    let frac = agg.frac_test_on_or_above_margin.mean;
    let pass = agg.cells == 10 && frac <= 0.10;
    report(
        1,
        pass,
        format!(
            "d=100 mean frac on/above margin {frac:.4} over {} cells (need <= 0.10)",
            agg.cells
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_most_test_points_fall_below_margin_at_d20() {
    let agg = MARGIN_RUN.aggregate(20).expect("d=20 cells");
    let below = 1.0 - agg.frac_test_on_or_above_margin.mean;
    let pass = agg.cells == 10 && (0.60..=0.95).contains(&below);
    report(
        2,
        pass,
        format!("d=20 mean frac below margin {below:.4} (need within [0.60, 0.95])"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_training_points_concentrate_on_margin() {
    let hi = MARGIN_RUN
        .aggregate(500)
        .expect("d=500 cells")
        .frac_train_on_margin
        .mean;
    let lo = MARGIN_RUN.aggregate(5).expect("d=5 cells").frac_train_on_margin.mean;
    let pass = hi >= 0.85 && hi >= lo;
    report(
        3,
        pass,
        format!("frac train on margin d=500 {hi:.4}, d=5 {lo:.4} (need d=500 >= 0.85 and >= d=5)"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_known_margin_attack_at_d1000() {
    let agg = HIGH_DIM_RUN.aggregate(1000).expect("d=1000 cells");
    let (auc, acc) = (agg.attack_auc.mean, agg.attack_accuracy.mean);
    let pass = agg.cells == 10 && auc >= 0.99 && acc >= 0.95;
    report(
        4,
        pass,
        format!("d=1000 mean AUC {auc:.4}, accuracy {acc:.4} over {} cells", agg.cells),
    );
    assert!(pass);
}

#[test]
fn criterion_05_reconstruction_success_rate() {
    let exp = &*RECONSTRUCTION_RUN;
    let rate = exp.success_rate();
    let widest = exp.records.iter().map(|r| r.max_crossing_window()).max().unwrap_or(0);
    let pass = exp.records.len() == 25 && rate >= 0.8 && widest <= 4;
    report(
        5,
        pass,
        format!(
            "success in {rate:.2} of {} runs, widest window {widest} margin points",
            exp.records.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_warm_up_recovers_the_point() {
    let cfg = TrainConfig {
        width: 1,
        init_scale: 0.1,
        max_steps: 2000,
        ..TrainConfig::default()
    };
    let mut worst = 0.0f64;
    let mut recovered = 0;
    for seed in 0..10u64 {
        let mut r = rng(seed + 500);
        let x = r.random_range(-3.0..3.0);
        let label = if r.random_bool(0.5) { Label::Pos } else { Label::Neg };
        let res = warm_up_single(
            x,
            label,
            &TrainConfig {
                rng_seed: seed,
                ..cfg.clone()
            },
        )
        .unwrap();
        let err = (res.recovered - x).abs();
        worst = worst.max(err);
        if err < 1e-6 {
            recovered += 1;
        }
    }
    let pass = recovered == 10;
    report(6, pass, format!("{recovered}/10 recovered, worst error {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_07_kkt_machinery() {
    let mut worst_residual = 0.0f64;
    let mut worst_lambda = 0.0f64;
    for i in 0..20u64 {
        let n = 2 + (i % 5) as usize;
        let d = n + 3 * (i as usize);
        let c = constructed_kkt(n, d, ConstructOptions::default(), i);
        let rep = estimate_lambdas(&c.net, &c.data, 0.1).unwrap();
        worst_residual = worst_residual.max(rep.stationarity_residual);
        for (a, b) in rep.lambdas.iter().zip(&c.lambdas) {
            worst_lambda = worst_lambda.max((a - b).abs());
        }
    }
    let constructed_ok = worst_residual < 1e-8 && worst_lambda < 1e-6;

    let trained: Vec<f64> = RECONSTRUCTION_RUN.records.iter().map(|r| r.kkt_residual).collect();
    let under = trained.iter().filter(|&&r| r < 1e-2).count();
    let best = trained.iter().copied().fold(f64::INFINITY, f64::min);
    let trained_ok = under == trained.len();

    let pass = constructed_ok && trained_ok;
    report(
        7,
        pass,
        format!(
            "constructed: worst residual {worst_residual:.2e}, worst lambda error {worst_lambda:.2e}; \
             trained 1D: {under}/{} below 1e-2, best {best:.3e}",
            trained.len()
        ),
    );
    assert!(constructed_ok, "constructed networks");
    assert!(trained_ok, "trained 1D runs");
}

#[test]
fn criterion_08_low_loss_implies_large_margin() {
    // (loss, m, at least half the training points on the margin); the last
    // is unknown for reconstruction runs.
    let mut runs: Vec<(f64, f64, Option<bool>)> = MARGIN_RUN
        .records
        .iter()
        .chain(&HIGH_DIM_RUN.records)
        .filter(|r| !r.diverged)
        .map(|r| (r.final_loss, r.margin, Some(r.frac_train_on_margin >= 0.5)))
        .collect();
    runs.extend(
        RECONSTRUCTION_RUN
            .records
            .iter()
            .map(|r| (r.final_loss, r.margin, None)),
    );
    let low: Vec<_> = runs.iter().filter(|(l, _, _)| *l < 0.5 * INV_E).collect();
    let bad: Vec<_> = low.iter().filter(|(_, m, _)| !(*m > INV_E)).collect();
    let bad_with_half_on_margin = bad.iter().filter(|(_, _, h)| *h != Some(false)).count();
    let pass = !low.is_empty() && bad.is_empty();
    report(
        8,
        pass,
        format!(
            "{} of {} runs reached loss < 1/(2e); {} with m <= 1/e, {bad_with_half_on_margin} of them with half the points on the margin",
            low.len(),
            runs.len(),
            bad.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_gradient_matches_finite_differences() {
    let mut instances = 0;
    let mut worst = 0.0f64;
    let mut seed = 0u64;
    while instances < 20 {
        let net = random_network(3, 4, seed);
        let data = random_dataset(5, 3, seed + 10_000);
        seed += 1;
        if min_abs_preactivation(&net, &data) < 1e-2 {
            continue;
        }
        let g = gradient(&net, &data, LossKind::Exponential).unwrap().to_flat();
        let fd = finite_difference_gradient(&net, &data, LossKind::Exponential, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / a.abs().max(1e-4));
        }
        instances += 1;
    }
    let pass = worst <= 1e-5;
    report(
        9,
        pass,
        format!("{instances} kink-free instances, worst relative error {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_output_is_two_homogeneous() {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let d = 1 + (seed % 7) as usize;
        let net = random_network(d, 1 + (seed % 13) as usize, seed);
        let x = random_dataset(1, d, seed + 777).point(0).to_owned();
        let f = forward(&net, x.view()).unwrap();
        for b in [0.5, 2.0, 10.0] {
            let fb = forward(&net.scaled(b), x.view()).unwrap();
            worst = worst.max((fb - b * b * f).abs() / (b * b * f.abs()));
        }
    }
    let pass = worst <= 1e-9;
    report(10, pass, format!("100 networks, worst relative error {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_11_assumption_checker() {
    let (d, n) = (10_000, 30);
    let mut ratios: Vec<f64> = (0..100)
        .map(|seed| {
            let x = sample(&DistributionSpec::uniform_sphere(d, seed), n).unwrap().points;
            check_assumption(&x, n).unwrap().ratio
        })
        .collect();
    let below = ratios.iter().filter(|&&r| r < 0.5).count();
    ratios.sort_by(f64::total_cmp);
    let sphere_ok = below >= 95;

    let mut dup = Array2::zeros((n, 8));
    let mut r = rng(11);
    for v in dup.iter_mut() {
        *v = r.random_range(-1.0..1.0);
    }
    let first = dup.row(0).to_owned();
    dup.row_mut(1).assign(&first);
    let dup_ratio = check_assumption(&dup, n).unwrap().ratio;
    let dup_ok = dup_ratio >= n as f64;

    let pass = sphere_ok && dup_ok;
    report(
        11,
        pass,
        format!(
            "sphere: {below}/100 seeds with ratio < 0.5 (median {:.3}); duplicated point ratio {dup_ratio:.2} (need >= {n})",
            ratios[50]
        ),
    );
    assert!(dup_ok, "duplicated point");
    assert!(sphere_ok, "sphere Monte-Carlo");
}
