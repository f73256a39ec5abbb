use relu_privacy::distributions::{check_assumption, sample, DistributionSpec};

#[test]
fn independent_gaussians_are_nearly_orthogonal() {
    let d = 10_000;
    let failures = (0..100)
        .filter(|&seed| {
            let x = sample(&DistributionSpec::gaussian(d, seed), 2).unwrap().points;
            x.row(0).dot(&x.row(1)).abs() / d as f64 >= 0.05
        })
        .count();
    assert!(failures <= 2, "{failures} of 100 seeds were not near-orthogonal");
}

#[test]
fn mixture_components_have_the_configured_means() {
    let d = 20;
    let n = 20_000;
    let s = sample(&DistributionSpec::two_gaussian_mixture(d, 11), n).unwrap();
    for comp in 0..2 {
        let rows: Vec<usize> = (0..n).filter(|&i| s.assignments[i] == comp).collect();
        let frac = rows.len() as f64 / n as f64;
        assert!(
            (frac - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(),
            "component {comp} weight {frac}"
        );
        let want = if comp == 0 { 1.0 } else { -1.0 };
        let tol = 4.0 / (rows.len() as f64).sqrt();
        for k in 0..d {
            let mean = rows.iter().map(|&i| s.points[[i, k]]).sum::<f64>() / rows.len() as f64;
            let target = if k == 0 { want } else { 0.0 };
            assert!(
                (mean - target).abs() < tol,
                "component {comp} coordinate {k}: mean {mean}"
            );
        }
    }
}

#[test]
fn sphere_points_have_radius_sqrt_d() {
    for seed in 0..10 {
        let x = sample(&DistributionSpec::uniform_sphere(50, seed), 30).unwrap().points;
        for row in x.rows() {
            assert!((row.dot(&row) - 50.0).abs() < 1e-9);
        }
    }
}

#[test]
fn sphere_coordinates_have_unit_variance() {
    let d = 100;
    let x = sample(&DistributionSpec::uniform_sphere(d, 5), 5_000).unwrap().points;
    let n = x.nrows() as f64;
    for k in [0, 37, 99] {
        let col = x.column(k);
        let mean = col.sum() / n;
        let var = col.dot(&col) / n;
        assert!(mean.abs() < 4.0 / n.sqrt(), "coordinate {k} mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "coordinate {k} variance {var}");
    }
}

#[test]
fn same_seed_same_sample() {
    let spec = DistributionSpec::two_gaussian_mixture(7, 99);
    assert_eq!(sample(&spec, 40).unwrap(), sample(&spec, 40).unwrap());
    assert_ne!(sample(&spec, 40).unwrap(), sample(&spec.with_seed(100), 40).unwrap());
}

#[test]
fn assumption_report_tracks_dimension() {
    // The ratio shrinks like n / √d as the dimension grows.
    let ratio = |d: usize| {
        let x = sample(&DistributionSpec::uniform_sphere(d, 1), 10).unwrap().points;
        check_assumption(&x, 10).unwrap().ratio
    };
    assert!(ratio(40_000) < ratio(400));
}
