//! Full-batch gradient descent on the exponential or logistic loss.
//!
//! The loss decays exponentially in the margin, so a fixed step size stalls
//! long before the iterate is close to a KKT direction. The step size is
//! therefore grown geometrically (`lr_growth`) and the whole update is carried
//! out in the log domain: gradients are computed with per-point weights
//! `ℓ'(q_i)·e^{s}` for a shift `s = max(min_i q_i, 0)` and the step is scaled by
//! `exp(log_lr - s)`, which stays representable long after `e^{-q}` underflows.
//! A step that would increase the loss is rejected and the step size halved.
//! Growth starts once every point is classified correctly; before that the
//! step size may recover from backtracking but never exceeds its initial value.

use std::collections::VecDeque;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt;
use crate::model::{activations, Activations, LabeledDataset, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Exponential,
    Logistic,
}

impl LossKind {
    pub fn value(self, z: f64) -> f64 {
        match self {
            LossKind::Exponential => (-z).exp(),
            LossKind::Logistic => softplus(-z),
        }
    }

    /// `ln ℓ(z)`, finite even when `ℓ(z)` underflows.
    pub fn log_value(self, z: f64) -> f64 {
        match self {
            LossKind::Exponential => -z,
            LossKind::Logistic => {
                if z > 36.0 {
                    // ln(ln(1 + t)) = ln t - t/2 + O(t²) with t = e^{-z} < 2.4e-16
                    -z
                } else {
                    softplus(-z).ln()
                }
            }
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            LossKind::Exponential => -(-z).exp(),
            LossKind::Logistic => -1.0 / (1.0 + z.exp()),
        }
    }

    /// `ℓ'(z)·e^{shift}` for `shift >= 0` with `shift <= z` whenever `z >= 0`.
    fn shifted_derivative(self, z: f64, shift: f64) -> f64 {
        match self {
            LossKind::Exponential => -(shift - z).exp(),
            LossKind::Logistic => {
                if z >= 0.0 {
                    -(shift - z).exp() / (1.0 + (-z).exp())
                } else {
                    -shift.exp() / (1.0 + z.exp())
                }
            }
        }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn log_mean_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln() - n.ln()
}

fn check_shapes(net: &NetworkParams, data: &LabeledDataset) -> Result<()> {
    if net.input_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            found: data.dim(),
        });
    }
    Ok(())
}

fn signed_margins(acts: &Activations, y: ArrayView1<'_, f64>) -> Array1<f64> {
    &acts.out * &y
}

fn log_loss_of(margins: &Array1<f64>, kind: LossKind) -> f64 {
    log_mean_exp(margins.iter().map(|&q| kind.log_value(q)))
}

/// `(1/n) Σ_i ℓ(y_i·Φ(θ; x_i))`.
pub fn loss(net: &NetworkParams, data: &LabeledDataset, kind: LossKind) -> Result<f64> {
    check_shapes(net, data)?;
    let out = activations(net, data.x())?.out;
    let n = data.len() as f64;
    Ok(out.iter().zip(data.y()).map(|(f, y)| kind.value(y * f)).sum::<f64>() / n)
}

/// Gradient of `Σ_i c_i·Φ(θ; x_i)` with respect to θ.
fn weighted_output_gradient(
    net: &NetworkParams,
    acts: &Activations,
    x: ndarray::ArrayView2<'_, f64>,
    coeffs: &Array1<f64>,
) -> NetworkParams {
    let grad_v = acts.act.t().dot(coeffs);
    // g[i, j] = c_i · v_j · σ'_{ij}
    let mut g: Array2<f64> = acts.sigma.clone();
    g *= &net.v();
    g *= &coeffs.view().insert_axis(Axis(1));
    let grad_w = g.t().dot(&x);
    let grad_b = g.sum_axis(Axis(0));
    NetworkParams::with_linear(grad_w, grad_b, grad_v, net.linear_mask().to_vec())
        .expect("gradient has the network's shape")
}

/// `∇_θ L(θ)`, with the ReLU derivative taken as 0 at exact kinks.
pub fn gradient(net: &NetworkParams, data: &LabeledDataset, kind: LossKind) -> Result<NetworkParams> {
    check_shapes(net, data)?;
    let acts = activations(net, data.x())?;
    let n = data.len() as f64;
    let coeffs: Array1<f64> = acts
        .out
        .iter()
        .zip(data.y())
        .map(|(f, y)| kind.derivative(y * f) * y / n)
        .collect();
    let grad = weighted_output_gradient(net, &acts, data.x(), &coeffs);
    if grad.is_finite() {
        Ok(grad)
    } else {
        Err(Error::NonFinite("gradient"))
    }
}

/// Small Gaussian initialization: `w ~ N(0, (scale/√d)²)`, `b, v ~ N(0, scale²)`.
pub fn init_small(d: usize, k: usize, scale: f64, seed: u64) -> Result<NetworkParams> {
    if d == 0 || k == 0 {
        return Err(Error::invalid("init_small needs d >= 1 and k >= 1"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("init scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_dist = Normal::new(0.0, scale / (d as f64).sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let bv_dist = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
    let w = Array2::from_shape_simple_fn((k, d), || w_dist.sample(&mut rng));
    let b = Array1::from_shape_simple_fn(k, || bv_dist.sample(&mut rng));
    let v = Array1::from_shape_simple_fn(k, || bv_dist.sample(&mut rng));
    NetworkParams::new(w, b, v)
}

fn default_width() -> usize {
    100
}
fn default_init_scale() -> f64 {
    1e-4
}
fn default_learning_rate() -> f64 {
    1e-2
}
fn default_lr_growth() -> f64 {
    1.02
}
fn default_max_steps() -> usize {
    20_000
}
fn default_loss_target() -> f64 {
    1e-8
}
fn default_kkt_target() -> f64 {
    1e-2
}
fn default_checkpoint_every() -> usize {
    100
}
fn default_support_slack() -> f64 {
    kkt::DEFAULT_SUPPORT_SLACK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub loss_kind: LossKind,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_lr_growth")]
    pub lr_growth: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_loss_target")]
    pub loss_target: f64,
    #[serde(default = "default_kkt_target")]
    pub kkt_residual_target: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Relative slack defining the support set when measuring the KKT residual.
    #[serde(default = "default_support_slack")]
    pub support_slack: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::default(),
            width: default_width(),
            init_scale: default_init_scale(),
            learning_rate: default_learning_rate(),
            lr_growth: default_lr_growth(),
            max_steps: default_max_steps(),
            loss_target: default_loss_target(),
            kkt_residual_target: default_kkt_target(),
            rng_seed: 0,
            checkpoint_every: default_checkpoint_every(),
            support_slack: default_support_slack(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("init_scale", self.init_scale),
            ("learning_rate", self.learning_rate),
            ("loss_target", self.loss_target),
            ("kkt_residual_target", self.kkt_residual_target),
            ("support_slack", self.support_slack),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.lr_growth >= 1.0 && self.lr_growth.is_finite()) {
            return Err(Error::invalid(format!(
                "lr_growth must be >= 1, got {}",
                self.lr_growth
            )));
        }
        if self.width == 0 || self.max_steps == 0 || self.checkpoint_every == 0 {
            return Err(Error::invalid("width, max_steps and checkpoint_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    /// Natural log of the loss; finite after `loss` underflows to 0.
    pub log_loss: f64,
    pub min_margin: f64,
    pub param_norm: f64,
    pub normalized_margin: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// First step at which `L(θ) < 1/n`, the precondition for directional convergence.
    pub loss_below_inverse_n_at: Option<usize>,
    pub stop_reason: StopReason,
    pub rejected_steps: usize,
    pub final_log_lr: f64,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn preconditions_met(&self) -> bool {
        self.loss_below_inverse_n_at.is_some()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,min_margin,param_norm,normalized_margin,kkt_residual\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.loss, r.min_margin, r.param_norm, r.normalized_margin, r.kkt_residual
            );
        }
        out
    }
}

struct State {
    acts: Activations,
    margins: Array1<f64>,
    log_loss: f64,
}

impl State {
    fn new(net: &NetworkParams, data: &LabeledDataset, kind: LossKind) -> Result<Self> {
        let acts = activations(net, data.x())?;
        let margins = signed_margins(&acts, data.y());
        let log_loss = log_loss_of(&margins, kind);
        Ok(State {
            acts,
            margins,
            log_loss,
        })
    }

    fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn record(step: usize, net: &NetworkParams, data: &LabeledDataset, state: &State, slack: f64) -> TraceRecord {
    let min_margin = state.min_margin();
    let norm_sq = net.norm_sq();
    let kkt_residual = if min_margin > 0.0 {
        kkt::stationarity_residual_from(net, data, &state.acts, slack).unwrap_or(1.0)
    } else {
        1.0
    };
    TraceRecord {
        step,
        loss: state.log_loss.exp(),
        log_loss: state.log_loss,
        min_margin,
        param_norm: norm_sq.sqrt(),
        normalized_margin: if norm_sq > 0.0 { min_margin / norm_sq } else { 0.0 },
        kkt_residual,
    }
}

const MAX_BACKTRACKS: usize = 80;
/// Largest log-loss increase accepted while some point is misclassified.
const PRESEPARATION_ALLOWANCE: f64 = std::f64::consts::LN_2;
/// Number of accepted losses a new step is compared against.
const NONMONOTONE_WINDOW: usize = 10;

/// Trains from [`init_small`] with the configured width and seed.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<(NetworkParams, TrainTrace)> {
    cfg.validate()?;
    let net = init_small(data.dim(), cfg.width, cfg.init_scale, cfg.rng_seed)?;
    train_from(net, data, cfg)
}

/// Runs gradient descent from the given parameters; `cfg.width` and
/// `cfg.init_scale` are ignored.
pub fn train_from(
    mut net: NetworkParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainTrace)> {
    cfg.validate()?;
    check_shapes(&net, data)?;
    let kind = cfg.loss_kind;
    let n = data.len() as f64;
    let inv_n_log = -n.ln();

    let mut state = State::new(&net, data, kind)?;
    let mut trace = TrainTrace {
        records: vec![record(0, &net, data, &state, cfg.support_slack)],
        loss_below_inverse_n_at: (state.log_loss < inv_n_log).then_some(0),
        stop_reason: StopReason::MaxSteps,
        rejected_steps: 0,
        final_log_lr: cfg.learning_rate.ln(),
    };
    let base_log_lr = cfg.learning_rate.ln();
    let mut log_lr = base_log_lr;
    let log_growth = cfg.lr_growth.ln();
    let log_loss_target = cfg.loss_target.ln();
    let mut candidate = net.clone();
    let mut recent: VecDeque<f64> = VecDeque::from([state.log_loss]);

    for step in 1..=cfg.max_steps {
        let shift = state.min_margin().max(0.0);
        let coeffs: Array1<f64> = state
            .margins
            .iter()
            .zip(data.y())
            .map(|(&q, &y)| kind.shifted_derivative(q, shift) * y / n)
            .collect();
        let grad = weighted_output_gradient(&net, &state.acts, data.x(), &coeffs);

        // Kinks can make every descent step look uphill, so a step is compared
        // with the worst of the last few losses rather than the current one.
        let allowance = if state.min_margin() > 0.0 {
            0.0
        } else {
            PRESEPARATION_ALLOWANCE
        };
        let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max) + allowance;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let factor = (log_lr - shift).exp();
            candidate.clone_from(&net);
            candidate.add_scaled(-factor, &grad);
            if candidate.is_finite() {
                let next = State::new(&candidate, data, kind)?;
                if next.log_loss <= reference {
                    accepted = Some(next);
                    break;
                }
            }
            log_lr -= std::f64::consts::LN_2;
            trace.rejected_steps += 1;
        }
        let Some(next) = accepted else {
            trace.final_log_lr = log_lr;
            return Err(Error::TrainingDiverged {
                step,
                trace: Box::new(trace),
            });
        };
        std::mem::swap(&mut net, &mut candidate);
        state = next;
        if recent.len() == NONMONOTONE_WINDOW {
            recent.pop_front();
        }
        recent.push_back(state.log_loss);
        log_lr = if state.min_margin() > 0.0 {
            log_lr + log_growth
        } else {
            (log_lr + log_growth).min(base_log_lr)
        };

        if trace.loss_below_inverse_n_at.is_none() && state.log_loss < inv_n_log {
            trace.loss_below_inverse_n_at = Some(step);
        }
        if step % cfg.checkpoint_every == 0 || step == cfg.max_steps {
            let rec = record(step, &net, data, &state, cfg.support_slack);
            trace.records.push(rec);
            if rec.log_loss <= log_loss_target && rec.kkt_residual <= cfg.kkt_residual_target {
                trace.stop_reason = StopReason::Converged;
                break;
            }
        }
    }
    trace.final_log_lr = log_lr;
    tracing::debug!(
        steps = trace.last().map(|r| r.step),
        rejected = trace.rejected_steps,
        "training finished"
    );
    Ok((net, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, Neuron};
    use ndarray::array;

    fn toy_data() -> LabeledDataset {
        LabeledDataset::from_1d(&[(-1.0, -1.0), (1.0, 1.0)]).unwrap()
    }

    #[test]
    fn zero_network_loss_values() {
        let net = NetworkParams::zeros(1, 3).unwrap();
        let data = toy_data();
        assert_eq!(loss(&net, &data, LossKind::Exponential).unwrap(), 1.0);
        let l = loss(&net, &data, LossKind::Logistic).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_point_unit_margin_loss() {
        let net = NetworkParams::from_neurons(&[Neuron::relu(vec![1.0], 0.0, 1.0)]).unwrap();
        let data = LabeledDataset::from_1d(&[(1.0, 1.0)]).unwrap();
        let l = loss(&net, &data, LossKind::Exponential).unwrap();
        assert!((l - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn log_value_matches_value() {
        for kind in [LossKind::Exponential, LossKind::Logistic] {
            for z in [-50.0, -3.0, 0.0, 0.7, 20.0, 35.0, 40.0] {
                let direct = kind.value(z).ln();
                assert!((kind.log_value(z) - direct).abs() < 1e-12 * direct.abs().max(1.0));
            }
            assert!(kind.log_value(2000.0).is_finite());
        }
    }

    #[test]
    fn shifted_derivative_matches_plain() {
        for kind in [LossKind::Exponential, LossKind::Logistic] {
            for (z, s) in [(-2.0, 0.0), (0.5, 0.0), (3.0, 2.0), (10.0, 10.0)] {
                let expect = kind.derivative(z) * f64::exp(s);
                let got = kind.shifted_derivative(z, s);
                assert!((expect - got).abs() < 1e-14 * expect.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn inactive_network_has_zero_hidden_gradient() {
        // Both neurons are off on every point (pre-activations negative).
        let net = NetworkParams::new(array![[1.0], [-1.0]], array![-10.0, -10.0], array![1.0, 2.0]).unwrap();
        let g = gradient(&net, &toy_data(), LossKind::Exponential).unwrap();
        assert!(g.w().iter().chain(g.b().iter()).all(|&x| x == 0.0));
        assert!(g.v().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_active_neuron_matches_hand_formula() {
        let (w, b, v, x, y) = (0.7, 0.2, -0.4, 1.5, 1.0);
        let net = NetworkParams::from_neurons(&[Neuron::relu(vec![w], b, v)]).unwrap();
        let data = LabeledDataset::from_1d(&[(x, y)]).unwrap();
        let pre: f64 = w * x + b;
        let q = y * v * pre;
        let lp = -(-q).exp() * y;
        let g = gradient(&net, &data, LossKind::Exponential).unwrap();
        assert!((g.w()[[0, 0]] - lp * v * x).abs() < 1e-15);
        assert!((g.b()[0] - lp * v).abs() < 1e-15);
        assert!((g.v()[0] - lp * pre).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let a = init_small(2, 3, 1e-4, 7).unwrap();
        let b = init_small(2, 3, 1e-4, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_small(2, 3, 1e-4, 8).unwrap());
        assert!(init_small(2, 3, 0.0, 7).is_err());
        assert!(init_small(0, 3, 1.0, 7).is_err());
    }

    #[test]
    fn init_scale_bounds_parameters() {
        for seed in 0..100 {
            let net = init_small(2, 3, 1e-4, seed).unwrap();
            let max = net.to_flat().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(max < 1e-2);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.lr_growth = 0.9;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trains_symmetric_pair() {
        let data = toy_data();
        let cfg = TrainConfig {
            width: 8,
            init_scale: 1e-2,
            max_steps: 3000,
            rng_seed: 1,
            ..TrainConfig::default()
        };
        let (net, trace) = train(&data, &cfg).unwrap();
        for i in 0..2 {
            let f = forward(&net, data.point(i)).unwrap();
            assert!(f * data.y()[i] > 0.0);
        }
        assert!(trace.preconditions_met());
        assert!(trace.last().unwrap().min_margin > 0.0);
    }

    #[test]
    fn trace_csv_header() {
        let data = toy_data();
        let cfg = TrainConfig {
            width: 4,
            max_steps: 10,
            checkpoint_every: 5,
            ..TrainConfig::default()
        };
        let (_, trace) = train(&data, &cfg).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("step,loss,min_margin,param_norm,normalized_margin,kkt_residual")
        );
        assert_eq!(lines.count(), 3);
    }
}
