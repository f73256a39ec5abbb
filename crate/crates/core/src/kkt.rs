//! Stationarity analysis against the KKT conditions of the max-margin problem
//!
//! ```text
//! min ½‖θ‖²  s.t.  y_i Φ(θ; x_i) ≥ 1
//! ```
//!
//! For a trained network we estimate dual variables λ ≥ 0 on the (slackened)
//! support set by nonnegative least squares on `θ ≈ Σ_i λ_i y_i ∇_θΦ(θ; x_i)`,
//! and report the relative stationarity residual together with the
//! near-orthogonality diagnostics that bound `Σ_{j∈J±} v_j² λ_l σ'_{l,j}`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{activations, Activations, LabeledDataset, NetworkParams};
use crate::nnls::{nnls_gram, NnlsOptions};
use crate::training::{loss, LossKind};

/// Support slack used by the margin experiments: points within 10% of the margin.
pub const DEFAULT_SUPPORT_SLACK: f64 = 0.1;
/// Relative slack for ties when reporting the indices attaining the margin.
pub const MARGIN_TIE_REL: f64 = 1e-9;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Margin {
    pub value: f64,
    pub argmin: Vec<usize>,
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

fn margin_of_outputs(out: &Array1<f64>) -> Result<Margin> {
    let value = out.iter().fold(f64::INFINITY, |m, f| m.min(f.abs()));
    if !(value > 0.0) {
        return Err(Error::DegenerateNetwork(
            "network output vanishes on a training point".into(),
        ));
    }
    let argmin = out
        .iter()
        .enumerate()
        .filter(|(_, f)| f.abs() <= value * (1.0 + MARGIN_TIE_REL))
        .map(|(i, _)| i)
        .collect();
    Ok(Margin { value, argmin })
}

/// `m = min_i |Φ(θ; x_i)|` and the indices attaining it.
pub fn margin(net: &NetworkParams, data: &LabeledDataset) -> Result<Margin> {
    check_shapes(net, data)?;
    margin_of_outputs(&activations(net, data.x())?.out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub format_version: u32,
    pub margin_m: f64,
    pub support_slack: f64,
    pub support_indices: Vec<usize>,
    /// One entry per training point; zero outside the support.
    pub lambdas: Vec<f64>,
    /// `‖θ − Σ λ_i y_i ∇Φ(θ; x_i)‖ / ‖θ‖`.
    pub stationarity_residual: f64,
    /// Row `i` holds `σ'_{i,j}` for every neuron as a string of `0`/`1`.
    pub sigma_primes: Vec<String>,
    /// Kink pairs on the support and the `σ'` the fit assigned them.
    #[serde(default)]
    pub subgradient: Vec<SubgradientEntry>,
    pub nnls_converged: bool,
    pub nnls_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticBounds>,
}

impl KktReport {
    pub fn sigma(&self, i: usize, j: usize) -> bool {
        self.sigma_primes[i].as_bytes()[j] == b'1'
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: KktReport = serde_json::from_str(text).map_err(|e| Error::format("KKT report", e.to_string()))?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::format(
                "KKT report",
                format!("unsupported format_version {}", report.format_version),
            ));
        }
        Ok(report)
    }
}

struct KktSolve {
    margin: Margin,
    support: Vec<usize>,
    lambdas: Vec<f64>,
    subgradient: Vec<SubgradientEntry>,
    residual: f64,
    converged: bool,
    iterations: usize,
}

/// A point–unit pair whose pre-activation sits on the ReLU kink, with the
/// value of `σ'` in `[0, 1]` chosen by the dual fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientEntry {
    pub point: usize,
    pub neuron: usize,
    pub sigma: f64,
}

/// Pre-activations with `|w·x + b| ≤ KINK_REL · (‖w‖‖x‖ + |b|)` count as lying on the kink.
pub const KINK_REL: f64 = 1e-4;

fn support_set(out: &Array1<f64>, y: ndarray::ArrayView1<'_, f64>, m: f64, slack: f64) -> Vec<usize> {
    (0..out.len())
        .filter(|&i| (y[i] * out[i] - m).abs() <= slack * m)
        .collect()
}

/// Residual blocks of `θ − Σ_i λ_i y_i ∇_θΦ(θ; x_i)` where `ly[i] = λ_i y_i` and
/// `coef[i, j] = λ_i y_i σ'_{i,j}`.
struct Residual {
    w: Array2<f64>,
    b: Array1<f64>,
    v: Array1<f64>,
}

impl Residual {
    fn new(
        net: &NetworkParams,
        data: &LabeledDataset,
        acts: &Activations,
        ly: &Array1<f64>,
        coef: &Array2<f64>,
    ) -> Self {
        let v = &net.v() - &acts.act.t().dot(ly);
        let mut w = coef.t().dot(&data.x());
        w *= &net.v().insert_axis(Axis(1));
        let w = &net.w() - &w;
        let b = &net.b() - &(&coef.sum_axis(Axis(0)) * &net.v());
        Residual { w, b, v }
    }

    fn norm(&self) -> f64 {
        self.w
            .iter()
            .chain(self.b.iter())
            .chain(self.v.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// `(support position, neuron)` pairs on the kink.
fn kink_pairs(
    net: &NetworkParams,
    data: &LabeledDataset,
    acts: &Activations,
    support: &[usize],
) -> Vec<(usize, usize)> {
    let w_norms: Vec<f64> = net.w().rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut pairs = Vec::new();
    for (a, &i) in support.iter().enumerate() {
        let x_norm = data.point(i).dot(&data.point(i)).sqrt();
        for j in 0..net.width() {
            if !net.is_linear(j)
                && w_norms[j] > 0.0
                && acts.pre[[i, j]].abs() <= KINK_REL * (w_norms[j] * x_norm + net.b()[j].abs())
            {
                pairs.push((a, j));
            }
        }
    }
    pairs
}

/// Dual fit over the support: λ ≥ 0, plus `μ_{ij} = λ_i σ'_{ij}` with
/// `0 ≤ μ_{ij} ≤ λ_i` for every kink pair.
struct DualFit {
    lambdas: Vec<f64>,
    /// Same order as the kink pairs.
    mu: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Quantities shared by both fits. `base` is the strict `σ'` on the support
/// with kink pairs set to 0.
struct FitData {
    y: Vec<f64>,
    base: Array2<f64>,
    /// `x̃_a·x̃_b` over the support.
    xx: Array2<f64>,
    /// `act_a·act_b` over the support.
    aa: Array2<f64>,
    /// `v_j · pre_{a,j}` over the support.
    vpre: Array2<f64>,
    v_part: Vec<f64>,
}

impl FitData {
    fn new(
        net: &NetworkParams,
        data: &LabeledDataset,
        acts: &Activations,
        support: &[usize],
        kinks: &[(usize, usize)],
    ) -> Self {
        let xs = data.x().select(Axis(0), support);
        let act = acts.act.select(Axis(0), support);
        let mut base = acts.sigma.select(Axis(0), support);
        for &(a, j) in kinks {
            base[[a, j]] = 0.0;
        }
        let vpre = &acts.pre.select(Axis(0), support) * &net.v();
        FitData {
            y: support.iter().map(|&i| data.y()[i]).collect(),
            xx: xs.dot(&xs.t()) + 1.0,
            aa: act.dot(&act.t()),
            v_part: act.dot(&net.v()).to_vec(),
            vpre,
            base,
        }
    }

    /// Gram matrix and `⟨θ, g_a⟩` of the λ generators.
    fn lambda_block(&self, net: &NetworkParams) -> (Array2<f64>, Vec<f64>) {
        let sv = &self.base * &net.v();
        let ss = sv.dot(&sv.t());
        let s = self.y.len();
        let gram = Array2::from_shape_fn((s, s), |(a, b)| {
            self.y[a] * self.y[b] * (self.aa[[a, b]] + ss[[a, b]] * self.xx[[a, b]])
        });
        let rhs = (0..s)
            .map(|a| self.y[a] * (self.v_part[a] + (&self.base.row(a) * &self.vpre.row(a)).sum()))
            .collect();
        (gram, rhs)
    }
}

fn fit_without_kinks(net: &NetworkParams, fd: &FitData) -> DualFit {
    let (gram, rhs) = fd.lambda_block(net);
    let s = rhs.len();
    let sol = nnls_gram(
        &DMatrix::from_fn(s, s, |a, b| gram[[a, b]]),
        &DVector::from_column_slice(&rhs),
        NnlsOptions::default(),
    );
    DualFit {
        lambdas: sol.x,
        mu: Vec::new(),
        converged: sol.converged,
        iterations: sol.iterations,
    }
}

/// Convex QP `min ½zᵀPz + qᵀz` over `z = (λ, μ)` solved by an interior-point
/// method. The μ–μ block is block diagonal by neuron, so `P` stays sparse.
fn fit_with_kinks(net: &NetworkParams, fd: &FitData, kinks: &[(usize, usize)]) -> DualFit {
    let (lgram, lrhs) = fd.lambda_block(net);
    let s = lrhs.len();
    let nk = kinks.len();
    let n = s + nk;
    let v = net.v();
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut push = |r: usize, c: usize, x: f64| {
        if x != 0.0 {
            rows.push(r);
            cols.push(c);
            vals.push(x);
        }
    };
    for b in 0..s {
        for a in 0..=b {
            push(a, b, lgram[[a, b]]);
        }
    }
    let mut by_neuron: Vec<Vec<usize>> = vec![Vec::new(); net.width()];
    for (t, &(b, j)) in kinks.iter().enumerate() {
        by_neuron[j].push(t);
        let vj2 = v[j] * v[j];
        for a in 0..s {
            if fd.base[[a, j]] > 0.0 {
                push(a, s + t, fd.y[a] * fd.y[b] * vj2 * fd.xx[[a, b]]);
            }
        }
    }
    for ts in &by_neuron {
        for (p, &t) in ts.iter().enumerate() {
            for &u in &ts[..=p] {
                let (a, b) = (kinks[u].0, kinks[t].0);
                let j = kinks[t].1;
                push(s + u, s + t, fd.y[a] * fd.y[b] * v[j] * v[j] * fd.xx[[a, b]]);
            }
        }
    }
    let p_mat = CscMatrix::new_from_triplets(n, n, rows, cols, vals);
    let mut q: Vec<f64> = lrhs.iter().map(|r| -r).collect();
    q.extend(kinks.iter().map(|&(a, j)| -fd.y[a] * fd.vpre[[a, j]]));

    // Rows: -λ ≤ 0, -μ ≤ 0, μ - λ ≤ 0.
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..n {
        rows.push(c);
        cols.push(c);
        vals.push(-1.0);
    }
    for (t, &(a, _)) in kinks.iter().enumerate() {
        rows.extend([n + t, n + t]);
        cols.extend([s + t, a]);
        vals.extend([1.0, -1.0]);
    }
    let a_mat = CscMatrix::new_from_triplets(n + nk, n, rows, cols, vals);
    let b_vec = vec![0.0; n + nk];
    let cones = [NonnegativeConeT(n + nk)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(QP_MAX_ITER)
        .tol_gap_abs(1e-12)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .expect("valid solver settings");
    let solved = DefaultSolver::new(&p_mat, &q, &a_mat, &b_vec, &cones, settings)
        .ok()
        .map(|mut solver| {
            solver.solve();
            let ok = matches!(
                solver.solution.status,
                SolverStatus::Solved | SolverStatus::AlmostSolved
            );
            (solver.solution.x.clone(), ok, solver.info.iterations as usize)
        });
    let Some((z, converged, iterations)) = solved.filter(|(z, _, _)| z.iter().all(|x| x.is_finite())) else {
        // Fall back to the strict pattern.
        return fit_without_kinks(net, fd);
    };
    let lambdas: Vec<f64> = z[..s].iter().map(|&x| x.max(0.0)).collect();
    let mu = kinks
        .iter()
        .zip(&z[s..])
        .map(|(&(a, _), &m)| m.clamp(0.0, lambdas[a]))
        .collect();
    DualFit {
        lambdas,
        mu,
        converged,
        iterations,
    }
}

const QP_MAX_ITER: u32 = 200;

/// Fits `θ ≈ Σ λ_i y_i g_i` with `λ ≥ 0` over the support, where `g_i` is a
/// subgradient of `Φ(·; x_i)`: units whose pre-activation lies on the kink may
/// take any `σ' ∈ [0, 1]`.
fn solve(net: &NetworkParams, data: &LabeledDataset, acts: &Activations, slack: f64) -> Result<KktSolve> {
    if !(slack >= 0.0 && slack.is_finite()) {
        return Err(Error::invalid(format!("support slack must be >= 0, got {slack}")));
    }
    let margin = margin_of_outputs(&acts.out)?;
    let y = data.y();
    let support = support_set(&acts.out, y, margin.value, slack);
    let (n, k) = (data.len(), net.width());
    let theta_norm = net.norm();
    if support.is_empty() {
        return Ok(KktSolve {
            margin,
            support,
            lambdas: vec![0.0; n],
            subgradient: Vec::new(),
            residual: 1.0,
            converged: true,
            iterations: 0,
        });
    }

    let kinks = kink_pairs(net, data, acts, &support);
    let fd = FitData::new(net, data, acts, &support, &kinks);
    let fit = if kinks.is_empty() {
        fit_without_kinks(net, &fd)
    } else {
        fit_with_kinks(net, &fd, &kinks)
    };

    let mut lambdas = vec![0.0; n];
    let mut ly = Array1::zeros(n);
    let mut coef = Array2::zeros((n, k));
    for (a, &i) in support.iter().enumerate() {
        lambdas[i] = fit.lambdas[a];
        ly[i] = fit.lambdas[a] * y[i];
        coef.row_mut(i).scaled_add(ly[i], &fd.base.row(a));
    }
    let mut subgradient = Vec::with_capacity(kinks.len());
    for (t, &(a, j)) in kinks.iter().enumerate() {
        let i = support[a];
        let mu = fit.mu.get(t).copied().unwrap_or(0.0);
        coef[[i, j]] += mu * y[i];
        let sigma = if fit.lambdas[a] > 0.0 { mu / fit.lambdas[a] } else { 0.0 };
        subgradient.push(SubgradientEntry {
            point: i,
            neuron: j,
            sigma: sigma.clamp(0.0, 1.0),
        });
    }
    let residual = Residual::new(net, data, acts, &ly, &coef);
    Ok(KktSolve {
        margin,
        support,
        lambdas,
        subgradient,
        residual: if theta_norm > 0.0 {
            residual.norm() / theta_norm
        } else {
            0.0
        },
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Relative stationarity residual for precomputed activations (used by the trainer).
pub(crate) fn stationarity_residual_from(
    net: &NetworkParams,
    data: &LabeledDataset,
    acts: &Activations,
    slack: f64,
) -> Result<f64> {
    Ok(solve(net, data, acts, slack)?.residual)
}

/// Fits nonnegative duals on the support `{i : |y_iΦ(x_i) − m| ≤ slack·m}`.
pub fn estimate_lambdas(net: &NetworkParams, data: &LabeledDataset, support_slack: f64) -> Result<KktReport> {
    check_shapes(net, data)?;
    let acts = activations(net, data.x())?;
    let sol = solve(net, data, &acts, support_slack)?;
    let sigma_primes = acts
        .sigma
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&s| if s > 0.0 { '1' } else { '0' }).collect())
        .collect();
    Ok(KktReport {
        format_version: REPORT_FORMAT_VERSION,
        margin_m: sol.margin.value,
        support_slack,
        support_indices: sol.support,
        lambdas: sol.lambdas,
        subgradient: sol.subgradient,
        stationarity_residual: sol.residual,
        sigma_primes,
        nnls_converged: sol.converged,
        nnls_iterations: sol.iterations,
        diagnostics: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostic {
    pub index: usize,
    pub label: f64,
    /// `Σ_{j: v_j > 0} v_j² λ_l σ'_{l,j}`
    pub sum_plus: f64,
    /// `Σ_{j: v_j < 0} v_j² λ_l σ'_{l,j}`
    pub sum_minus: f64,
    pub upper_ok: bool,
    /// Checked only for support points, against the sum matching the label's sign.
    pub lower_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticBounds {
    /// `max_{i≠j} |x_i·x_j|`; reported as 0 when n < 2.
    pub delta: f64,
    pub delta_defined: bool,
    /// `min_i ‖x_i‖²`
    pub delta_min: f64,
    /// `max_i ‖x_i‖²`
    pub delta_max: f64,
    /// `m / (Δ + 1 − 2(δ+1)(n−1))`; `None` when the denominator is not positive.
    pub upper_bound_sum: Option<f64>,
    /// `(m − (δ+1)(n−1)·upper) / (Δ_max + 1)`; `None` when the upper bound is undefined.
    pub lower_bound_sum: Option<f64>,
    pub points: Vec<PointDiagnostic>,
    pub all_upper_ok: bool,
    pub all_lower_ok: bool,
    pub loss: f64,
    pub loss_below_half_inv_e: bool,
    /// `m > 1/e` whenever `L(θ) < 1/(2e)` (vacuously true otherwise).
    pub margin_lower_ok: bool,
}

const BOUND_REL_TOL: f64 = 1e-9;

/// Data geometry `(δ, Δ, Δ_max)` of a point set.
pub fn data_geometry(data: &LabeledDataset) -> (Option<f64>, f64, f64) {
    let x = data.x();
    let gram = x.dot(&x.t());
    let n = data.len();
    let norms = gram.diag();
    let delta_min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let delta_max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta = (n >= 2).then(|| {
        let mut d = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d = d.max(gram[[i, j]].abs());
                }
            }
        }
        d
    });
    (delta, delta_min, delta_max)
}

/// Evaluates the per-sign dual sums against the near-orthogonality bounds and
/// the `m > 1/e` implication of a loss below `1/(2e)` under `kind`.
pub fn diagnostic_bounds(
    report: &KktReport,
    net: &NetworkParams,
    data: &LabeledDataset,
    kind: LossKind,
) -> Result<DiagnosticBounds> {
    check_shapes(net, data)?;
    let n = data.len();
    if report.lambdas.len() != n || report.sigma_primes.len() != n {
        return Err(Error::invalid("report does not match the dataset"));
    }
    let m = report.margin_m;
    let (delta_opt, delta_min, delta_max) = data_geometry(data);
    let delta = delta_opt.unwrap_or(0.0);
    let nm1 = (n as f64) - 1.0;
    let denom = delta_min + 1.0 - 2.0 * (delta + 1.0) * nm1;
    let upper = (denom > 0.0).then(|| m / denom);
    let lower = upper.map(|u| (m - (delta + 1.0) * nm1 * u) / (delta_max + 1.0));

    let v = net.v();
    let support: std::collections::HashSet<usize> = report.support_indices.iter().copied().collect();
    let points: Vec<PointDiagnostic> = (0..n)
        .map(|l| {
            let lam = report.lambdas[l];
            let (mut plus, mut minus) = (0.0, 0.0);
            for j in 0..net.width() {
                if report.sigma(l, j) {
                    let t = v[j] * v[j] * lam;
                    if v[j] > 0.0 {
                        plus += t;
                    } else if v[j] < 0.0 {
                        minus += t;
                    }
                }
            }
            let upper_ok = upper.is_none_or(|u| plus.max(minus) <= u * (1.0 + BOUND_REL_TOL));
            let label = data.y()[l];
            let lower_ok = match lower {
                Some(lb) if support.contains(&l) => {
                    let sum = if label > 0.0 { plus } else { minus };
                    Some(sum >= lb - BOUND_REL_TOL * lb.abs())
                }
                _ => None,
            };
            PointDiagnostic {
                index: l,
                label,
                sum_plus: plus,
                sum_minus: minus,
                upper_ok,
                lower_ok,
            }
        })
        .collect();

    let loss_value = loss(net, data, kind)?;
    let below = loss_value < 1.0 / (2.0 * std::f64::consts::E);
    Ok(DiagnosticBounds {
        delta,
        delta_defined: delta_opt.is_some(),
        delta_min,
        delta_max,
        upper_bound_sum: upper,
        lower_bound_sum: lower,
        all_upper_ok: points.iter().all(|p| p.upper_ok),
        all_lower_ok: points.iter().all(|p| p.lower_ok != Some(false)),
        points,
        loss: loss_value,
        loss_below_half_inv_e: below,
        margin_lower_ok: !below || m > 1.0 / std::f64::consts::E,
    })
}

/// [`estimate_lambdas`] followed by [`diagnostic_bounds`], stored in the report.
pub fn analyze(net: &NetworkParams, data: &LabeledDataset, support_slack: f64, kind: LossKind) -> Result<KktReport> {
    let mut report = estimate_lambdas(net, data, support_slack)?;
    report.diagnostics = Some(diagnostic_bounds(&report, net, data, kind)?);
    Ok(report)
}
