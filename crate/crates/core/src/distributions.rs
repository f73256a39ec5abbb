//! Samplers for high-dimensional data distributions and an empirical check of
//! near-orthogonality (small pairwise inner products, large norms).

use ndarray::{Array1, Array2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Label, LabeledDataset};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    UniformSphere,
    Gaussian,
    GaussianMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub d: usize,
    /// Component means. Empty for the sphere; for a plain Gaussian, empty
    /// means zero mean and otherwise holds exactly one vector.
    #[serde(default)]
    pub means: Vec<Vec<f64>>,
    #[serde(default)]
    pub mixture_weights: Vec<f64>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl DistributionSpec {
    pub fn uniform_sphere(d: usize, rng_seed: u64) -> Self {
        DistributionSpec {
            kind: DistributionKind::UniformSphere,
            d,
            means: Vec::new(),
            mixture_weights: Vec::new(),
            rng_seed,
        }
    }

    pub fn gaussian(d: usize, rng_seed: u64) -> Self {
        DistributionSpec {
            kind: DistributionKind::Gaussian,
            d,
            means: Vec::new(),
            mixture_weights: Vec::new(),
            rng_seed,
        }
    }

    /// Equal mixture of two unit-covariance Gaussians with means `±e₁`.
    pub fn two_gaussian_mixture(d: usize, rng_seed: u64) -> Self {
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        if d > 0 {
            plus[0] = 1.0;
            minus[0] = -1.0;
        }
        DistributionSpec {
            kind: DistributionKind::GaussianMixture,
            d,
            means: vec![plus, minus],
            mixture_weights: vec![0.5, 0.5],
            rng_seed,
        }
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        DistributionSpec {
            rng_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("dimension d must be positive"));
        }
        if let Some(mu) = self.means.iter().find(|mu| mu.len() != self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: mu.len(),
            });
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution mean"));
        }
        match self.kind {
            DistributionKind::UniformSphere => {
                if !self.means.is_empty() || !self.mixture_weights.is_empty() {
                    return Err(Error::invalid("the sphere takes no means or weights"));
                }
            }
            DistributionKind::Gaussian => {
                if self.means.len() > 1 || !self.mixture_weights.is_empty() {
                    return Err(Error::invalid("a Gaussian takes at most one mean and no weights"));
                }
            }
            DistributionKind::GaussianMixture => {
                if self.means.is_empty() {
                    return Err(Error::invalid("a mixture needs at least one mean"));
                }
                if self.mixture_weights.len() != self.means.len() {
                    return Err(Error::invalid(format!(
                        "{} mixture weights for {} means",
                        self.mixture_weights.len(),
                        self.means.len()
                    )));
                }
                if self.mixture_weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
                    return Err(Error::invalid("mixture weights must be nonnegative"));
                }
                let sum: f64 = self.mixture_weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::invalid(format!("mixture weights sum to {sum}, not 1")));
                }
            }
        }
        Ok(())
    }
}

/// Draws from a [`DistributionSpec`]. `assignments[i]` is the mixture
/// component of row `i` (always 0 outside mixtures).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub points: Array2<f64>,
    pub assignments: Vec<usize>,
}

fn standard_normal_row(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(d, || rng.sample(StandardNormal))
}

pub fn sample(spec: &DistributionSpec, n: usize) -> Result<Sample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample size n must be at least 1"));
    }
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut points = Array2::zeros((n, d));
    let mut assignments = vec![0; n];
    match spec.kind {
        DistributionKind::UniformSphere => {
            let radius = (d as f64).sqrt();
            for mut row in points.axis_iter_mut(Axis(0)) {
                // Resample the measure-zero origin.
                let g = loop {
                    let g = standard_normal_row(&mut rng, d);
                    if g.dot(&g) > 0.0 {
                        break g;
                    }
                };
                let norm = g.dot(&g).sqrt();
                row.assign(&(g * (radius / norm)));
            }
        }
        DistributionKind::Gaussian => {
            for mut row in points.axis_iter_mut(Axis(0)) {
                let mut g = standard_normal_row(&mut rng, d);
                if let Some(mu) = spec.means.first() {
                    g += &Array1::from(mu.clone());
                }
                row.assign(&g);
            }
        }
        DistributionKind::GaussianMixture => {
            let pick = WeightedIndex::new(&spec.mixture_weights)
                .map_err(|e| Error::invalid(format!("mixture weights: {e}")))?;
            let means: Vec<Array1<f64>> = spec.means.iter().map(|m| Array1::from(m.clone())).collect();
            for (mut row, a) in points.axis_iter_mut(Axis(0)).zip(&mut assignments) {
                *a = rng.sample(&pick);
                row.assign(&(standard_normal_row(&mut rng, d) + &means[*a]));
            }
        }
    }
    Ok(Sample { points, assignments })
}

/// Labels a two-component mixture draw: component 0 is positive, component 1 negative.
pub fn label_by_component(assignments: &[usize], n_components: usize) -> Result<Vec<Label>> {
    if n_components > 2 {
        return Err(Error::TooManyComponents(n_components));
    }
    assignments
        .iter()
        .map(|&a| match a {
            0 => Ok(Label::Pos),
            1 if n_components == 2 => Ok(Label::Neg),
            other => Err(Error::invalid(format!(
                "component {other} out of range for {n_components} components"
            ))),
        })
        .collect()
}

impl Sample {
    /// Labelled dataset for a mixture draw with at most two components.
    pub fn labelled(self, n_components: usize) -> Result<LabeledDataset> {
        let labels = label_by_component(&self.assignments, n_components)?;
        LabeledDataset::new(self.points, &labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub n: usize,
    /// Largest absolute inner product between distinct points.
    pub delta: f64,
    /// Smallest squared norm.
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    pub ratio: f64,
    /// Fraction of pairs with `n · |xᵢ·xⱼ| > d^0.75`.
    pub empirical_tau_pairwise: f64,
    /// Fraction of points with `‖x‖² < d/2`.
    pub empirical_tau_norm: f64,
}

pub const PAIRWISE_EXPONENT: f64 = 0.75;
pub const NORM_FRACTION: f64 = 0.5;

pub fn check_assumption(points: &Array2<f64>, n_effective: usize) -> Result<AssumptionReport> {
    let n_pts = points.nrows();
    if n_pts < 2 {
        return Err(Error::invalid(format!(
            "the assumption check needs at least 2 points, got {n_pts}"
        )));
    }
    if !points.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("points"));
    }
    let d = points.ncols() as f64;
    let gram = points.dot(&points.t());
    let pair_threshold = d.powf(PAIRWISE_EXPONENT);
    let mut delta: f64 = 0.0;
    let mut violations = 0usize;
    for i in 0..n_pts {
        for j in i + 1..n_pts {
            let ip = gram[[i, j]].abs();
            delta = delta.max(ip);
            if n_effective as f64 * ip > pair_threshold {
                violations += 1;
            }
        }
    }
    let norms = gram.diag();
    let big_delta = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let short = norms.iter().filter(|&&s| s < NORM_FRACTION * d).count();
    let pairs = n_pts * (n_pts - 1) / 2;
    let ratio = if big_delta > 0.0 {
        n_effective as f64 * delta / big_delta
    } else {
        f64::INFINITY
    };
    Ok(AssumptionReport {
        n: n_effective,
        delta,
        big_delta,
        ratio,
        empirical_tau_pairwise: violations as f64 / pairs as f64,
        empirical_tau_norm: short as f64 / n_pts as f64,
    })
}
