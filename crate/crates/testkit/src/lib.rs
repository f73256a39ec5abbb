//! Independent oracles for the test suites.
//!
//! The KKT constructions give networks whose dual variables are known in
//! closed form. Every training point `x_i` gets its own hidden unit whose
//! weight vector is parallel to `x̃_i = (x_i, 1)`. When `x̃_i·x̃_j < 0` for all
//! `i ≠ j`, that unit fires on `x_i` alone, and stationarity reduces per unit to
//! `v = λ y (u·x̃)` and `u = v λ y x̃`, which forces `λ_i = 1/‖x̃_i‖` and
//! `v_i² = m/‖x̃_i‖` for margin `m`.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use relu_privacy::{Label, LabeledDataset, LossKind, NetworkParams, Neuron};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A network at an exact KKT point of the margin problem on `data`.
#[derive(Debug, Clone)]
pub struct ConstructedKkt {
    pub net: NetworkParams,
    pub data: LabeledDataset,
    /// Dual variable of every point (zero off the support).
    pub lambdas: Vec<f64>,
    pub margin: f64,
    /// Indices of points on the margin.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstructOptions {
    pub margin: f64,
    /// Each support unit is split into this many parallel copies.
    pub split: usize,
    /// Extra all-zero units.
    pub dead_units: usize,
    /// Points `2·x_i` added off the margin (λ = 0).
    pub off_margin: usize,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        ConstructOptions {
            margin: 1.0,
            split: 1,
            dead_units: 0,
            off_margin: 0,
        }
    }
}

/// Orthonormal vectors spanning random directions in coordinates `lo..d`.
fn random_orthonormal(count: usize, lo: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut g = Array1::<f64>::zeros(d);
        for v in g.iter_mut().skip(lo) {
            *v = rng.sample(StandardNormal);
        }
        for q in &basis {
            let p = g.dot(q);
            g.scaled_add(-p, q);
        }
        let norm = g.dot(&g).sqrt();
        if norm > 1e-8 {
            basis.push(g / norm);
        }
    }
    basis
}

/// Points with pairwise inner products `-2`: scaled simplex vertices in the
/// first `n` coordinates plus, when `d ≥ 2n`, an orthogonal spike of norm
/// `√d` in the remaining coordinates so the points look near-orthogonal.
pub fn separated_points(n: usize, d: usize, seed: u64) -> Array2<f64> {
    assert!(n >= 2 && d >= n, "need n >= 2 and d >= n");
    let mut rng = rng(seed);
    let radius = (2.0 * n as f64).sqrt();
    let mut x = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..n {
            let e = if i == k { 1.0 } else { 0.0 };
            x[[i, k]] = radius * (e - 1.0 / n as f64);
        }
    }
    if d >= 2 * n {
        let spikes = random_orthonormal(n, n, d, &mut rng);
        let s = (d as f64).sqrt();
        for (i, q) in spikes.iter().enumerate() {
            x.row_mut(i).scaled_add(s, q);
        }
    }
    x
}

fn random_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<Label> {
    (0..n)
        .map(|_| if rng.random_bool(0.5) { Label::Pos } else { Label::Neg })
        .collect()
}

/// Builds the KKT network for points whose augmented vectors are pairwise obtuse.
pub fn kkt_for_points(x: &Array2<f64>, labels: &[Label], opts: ConstructOptions, seed: u64) -> ConstructedKkt {
    let (n, d) = x.dim();
    for i in 0..n {
        for j in i + 1..n {
            assert!(
                x.row(i).dot(&x.row(j)) + 1.0 < 0.0,
                "points {i} and {j} are not separated"
            );
        }
    }
    let mut rng = rng(seed ^ 0x5eed);
    let mut neurons = Vec::new();
    let mut lambdas = vec![0.0; n];
    for i in 0..n {
        let aug_norm = (x.row(i).dot(&x.row(i)) + 1.0).sqrt();
        let lambda = 1.0 / aug_norm;
        lambdas[i] = lambda;
        let a_sq = opts.margin / aug_norm;
        // Random positive shares of a² across the copies.
        let shares: Vec<f64> = (0..opts.split).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = shares.iter().sum();
        let y = labels[i].sign();
        for s in shares {
            let a = (a_sq * s / total).sqrt();
            let w: Vec<f64> = x.row(i).iter().map(|&xi| a * lambda * xi).collect();
            neurons.push(Neuron::relu(w, a * lambda, y * a));
        }
    }
    for _ in 0..opts.dead_units {
        neurons.push(Neuron::relu(vec![0.0; d], 0.0, 0.0));
    }
    neurons.shuffle(&mut rng);

    let mut points = x.clone();
    let mut all_labels = labels.to_vec();
    for i in 0..opts.off_margin.min(n) {
        let far = x.row(i).to_owned() * 2.0;
        points.push_row(far.view()).expect("row length matches");
        all_labels.push(labels[i]);
        lambdas.push(0.0);
    }
    ConstructedKkt {
        net: NetworkParams::from_neurons(&neurons).expect("finite construction"),
        data: LabeledDataset::new(points, &all_labels).expect("valid dataset"),
        lambdas,
        margin: opts.margin,
        support: (0..n).collect(),
    }
}

/// KKT network on `n` separated points in dimension `d` with random labels.
pub fn constructed_kkt(n: usize, d: usize, opts: ConstructOptions, seed: u64) -> ConstructedKkt {
    let x = separated_points(n, d, seed);
    let labels = random_labels(n, &mut rng(seed.wrapping_add(1)));
    kkt_for_points(&x, &labels, opts, seed)
}

/// Univariate KKT network on `{-2, 3}` with opposite labels. Its two
/// breakpoints, `1/2` and `-1/3`, fall between the points.
pub fn one_dim_pair(margin: f64) -> ConstructedKkt {
    let x = Array2::from_shape_vec((2, 1), vec![-2.0, 3.0]).expect("shape");
    let opts = ConstructOptions {
        margin,
        ..ConstructOptions::default()
    };
    kkt_for_points(&x, &[Label::Neg, Label::Pos], opts, 0)
}

/// Random network with Gaussian weights.
pub fn random_network(d: usize, k: usize, seed: u64) -> NetworkParams {
    let mut rng = rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let neurons: Vec<Neuron> = (0..k)
        .map(|_| {
            let w = (0..d).map(|_| normal.sample(&mut rng)).collect();
            Neuron::relu(w, normal.sample(&mut rng), normal.sample(&mut rng))
        })
        .collect();
    NetworkParams::from_neurons(&neurons).expect("finite weights")
}

/// Random Gaussian points with random labels.
pub fn random_dataset(n: usize, d: usize, seed: u64) -> LabeledDataset {
    let mut rng = rng(seed);
    let x = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
    let labels = random_labels(n, &mut rng);
    LabeledDataset::new(x, &labels).expect("valid dataset")
}

/// Smallest `|w_j·x_i + b_j|` over all units and points.
pub fn min_abs_preactivation(net: &NetworkParams, data: &LabeledDataset) -> f64 {
    let pre = data.x().dot(&net.w().t()) + &net.b();
    pre.iter().fold(f64::INFINITY, |m, p| m.min(p.abs()))
}

/// Central finite-difference gradient of the mean loss, flattened per unit as `[w.., b, v]`.
pub fn finite_difference_gradient(net: &NetworkParams, data: &LabeledDataset, kind: LossKind, h: f64) -> Vec<f64> {
    let base = net.to_flat();
    let mut grad = vec![0.0; base.len()];
    let mut probe = base.clone();
    for (p, g) in grad.iter_mut().enumerate() {
        probe[p] = base[p] + h;
        let up = relu_privacy::loss(&net.from_flat_like(&probe).expect("same shape"), data, kind).expect("loss");
        probe[p] = base[p] - h;
        let down = relu_privacy::loss(&net.from_flat_like(&probe).expect("same shape"), data, kind).expect("loss");
        probe[p] = base[p];
        *g = (up - down) / (2.0 * h);
    }
    grad
}

/// Same network with hidden units in a random order.
pub fn permute_units(net: &NetworkParams, seed: u64) -> NetworkParams {
    let mut neurons: Vec<Neuron> = net.neurons().collect();
    neurons.shuffle(&mut rng(seed));
    NetworkParams::from_neurons(&neurons).expect("same weights")
}
