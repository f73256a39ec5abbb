//! Two-layer homogeneous ReLU networks `x ↦ Σ_j v_j·max(0, w_j·x + b_j)`.
//!
//! Parameters are stored row-major: `w` is `width × input_dim`, `b` and `v` have
//! length `width`. A neuron may optionally be flagged as a linear pass-through
//! unit (no activation), which keeps the network 2-homogeneous while
//! guaranteeing one unit is active on every input.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative threshold below which `|w_j|` is treated as zero when locating breakpoints.
pub const DEAD_NEURON_REL: f64 = 1e-12;
/// Breakpoints closer than this fraction of the breakpoint range are merged.
pub const BREAKPOINT_MERGE_REL: f64 = 1e-9;

/// A class label in `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn from_sign(y: f64) -> Result<Self> {
        if y == 1.0 {
            Ok(Label::Pos)
        } else if y == -1.0 {
            Ok(Label::Neg)
        } else {
            Err(Error::invalid(format!("label must be -1 or +1, got {y}")))
        }
    }
}

/// One hidden unit, used for construction and serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Neuron {
    pub w: Vec<f64>,
    pub b: f64,
    pub v: f64,
    pub linear: bool,
}

impl Neuron {
    pub fn relu(w: Vec<f64>, b: f64, v: f64) -> Self {
        Neuron { w, b, v, linear: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    w: Array2<f64>,
    b: Array1<f64>,
    v: Array1<f64>,
    linear: Vec<bool>,
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &'static str) -> Result<()> {
    if values.into_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

impl NetworkParams {
    /// Builds an all-ReLU network from its parameter blocks.
    pub fn new(w: Array2<f64>, b: Array1<f64>, v: Array1<f64>) -> Result<Self> {
        let k = w.nrows();
        Self::with_linear(w, b, v, vec![false; k])
    }

    pub fn with_linear(w: Array2<f64>, b: Array1<f64>, v: Array1<f64>, linear: Vec<bool>) -> Result<Self> {
        let (k, d) = w.dim();
        if k == 0 || d == 0 {
            return Err(Error::invalid("network needs width >= 1 and input_dim >= 1"));
        }
        for len in [b.len(), v.len(), linear.len()] {
            if len != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: len,
                });
            }
        }
        check_finite(w.iter(), "hidden weights")?;
        check_finite(b.iter(), "hidden biases")?;
        check_finite(v.iter(), "output weights")?;
        Ok(NetworkParams { w, b, v, linear })
    }

    pub fn from_neurons(neurons: &[Neuron]) -> Result<Self> {
        let first = neurons.first().ok_or(Error::EmptyInput("neuron list"))?;
        let d = first.w.len();
        let k = neurons.len();
        let mut w = Array2::zeros((k, d));
        for (j, n) in neurons.iter().enumerate() {
            if n.w.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: n.w.len(),
                });
            }
            w.row_mut(j).assign(&ArrayView1::from(&n.w[..]));
        }
        let b = neurons.iter().map(|n| n.b).collect();
        let v = neurons.iter().map(|n| n.v).collect();
        let linear = neurons.iter().map(|n| n.linear).collect();
        Self::with_linear(w, b, v, linear)
    }

    pub fn zeros(input_dim: usize, width: usize) -> Result<Self> {
        Self::new(
            Array2::zeros((width, input_dim)),
            Array1::zeros(width),
            Array1::zeros(width),
        )
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    pub fn v(&self) -> ArrayView1<'_, f64> {
        self.v.view()
    }

    pub fn is_linear(&self, j: usize) -> bool {
        self.linear[j]
    }

    pub fn linear_mask(&self) -> &[bool] {
        &self.linear
    }

    pub fn neuron(&self, j: usize) -> Neuron {
        Neuron {
            w: self.w.row(j).to_vec(),
            b: self.b[j],
            v: self.v[j],
            linear: self.linear[j],
        }
    }

    pub fn neurons(&self) -> impl Iterator<Item = Neuron> + '_ {
        (0..self.width()).map(|j| self.neuron(j))
    }

    /// Appends a linear pass-through unit `v·(w·x + b)`.
    pub fn push_linear_unit(&mut self, w: &[f64], b: f64, v: f64) -> Result<()> {
        let mut neurons: Vec<Neuron> = self.neurons().collect();
        neurons.push(Neuron {
            w: w.to_vec(),
            b,
            v,
            linear: true,
        });
        *self = Self::from_neurons(&neurons)?;
        Ok(())
    }

    /// Multiplies every parameter by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        NetworkParams {
            w: &self.w * factor,
            b: &self.b * factor,
            v: &self.v * factor,
            linear: self.linear.clone(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.w.iter().chain(&self.b).chain(&self.v).map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn num_params(&self) -> usize {
        self.width() * (self.input_dim() + 2)
    }

    /// Flattens as `[w_0, b_0, v_0, w_1, b_1, v_1, ...]` per neuron.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for j in 0..self.width() {
            out.extend(self.w.row(j).iter());
            out.push(self.b[j]);
            out.push(self.v[j]);
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat), keeping this network's shape and unit kinds.
    pub fn from_flat_like(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let d = self.input_dim();
        let mut out = self.clone();
        for (j, chunk) in flat.chunks(d + 2).enumerate() {
            out.w.row_mut(j).assign(&ArrayView1::from(&chunk[..d]));
            out.b[j] = chunk[d];
            out.v[j] = chunk[d + 1];
        }
        check_finite(flat, "parameter vector")?;
        Ok(out)
    }

    /// `self += alpha * other`, for two networks of the same shape.
    pub fn add_scaled(&mut self, alpha: f64, other: &NetworkParams) {
        self.w.scaled_add(alpha, &other.w);
        self.b.scaled_add(alpha, &other.b);
        self.v.scaled_add(alpha, &other.v);
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.b).chain(&self.v).all(|x| x.is_finite())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found == self.input_dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found,
            })
        }
    }
}

/// Training set `{(x_i, y_i)}` with `y_i ∈ {-1, +1}`; points are rows of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl LabeledDataset {
    pub fn new(x: Array2<f64>, labels: &[Label]) -> Result<Self> {
        let y = labels.iter().map(|l| l.sign()).collect();
        Self::from_signs(x, y)
    }

    pub fn from_signs(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyInput("dataset"));
        }
        if x.ncols() == 0 {
            return Err(Error::invalid("dataset points must have dimension >= 1"));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        for &s in &y {
            Label::from_sign(s)?;
        }
        check_finite(x.iter(), "dataset points")?;
        Ok(LabeledDataset { x, y })
    }

    /// Univariate dataset from `(x, y)` pairs.
    pub fn from_1d(points: &[(f64, f64)]) -> Result<Self> {
        let x = Array2::from_shape_vec((points.len(), 1), points.iter().map(|p| p.0).collect())
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::from_signs(x, points.iter().map(|p| p.1).collect())
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn label(&self, i: usize) -> Label {
        if self.y[i] > 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let x = self.x.select(Axis(0), indices);
        let y = self.y.select(Axis(0), indices);
        Self::from_signs(x, y)
    }
}

/// Evaluates `Σ_j v_j·max(0, w_j·x + b_j)` at a single point.
pub fn forward(net: &NetworkParams, x: ArrayView1<'_, f64>) -> Result<f64> {
    net.check_dim(x.len())?;
    let mut out = 0.0;
    for j in 0..net.width() {
        let pre = net.w.row(j).dot(&x) + net.b[j];
        let act = if net.linear[j] { pre } else { pre.max(0.0) };
        out += net.v[j] * act;
    }
    Ok(out)
}

/// Pre-activations, activations and ReLU derivatives for a batch of points.
///
/// `sigma[i, j]` is 1 iff the pre-activation is strictly positive (always 1
/// for linear units), so `sigma * pre == act` holds exactly.
#[derive(Debug, Clone)]
pub struct Activations {
    pub pre: Array2<f64>,
    pub act: Array2<f64>,
    pub sigma: Array2<f64>,
    pub out: Array1<f64>,
}

pub fn activations(net: &NetworkParams, x: ArrayView2<'_, f64>) -> Result<Activations> {
    net.check_dim(x.ncols())?;
    let mut pre = x.dot(&net.w.t());
    pre += &net.b;
    let mut act = pre.clone();
    let mut sigma = Array2::zeros(pre.dim());
    for ((i, j), a) in act.indexed_iter_mut() {
        if net.linear[j] || *a > 0.0 {
            sigma[[i, j]] = 1.0;
        } else {
            *a = 0.0;
        }
    }
    let out = act.dot(&net.v);
    Ok(Activations { pre, act, sigma, out })
}

/// Network outputs for every row of `x`.
pub fn forward_batch(net: &NetworkParams, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    Ok(activations(net, x)?.out)
}

/// A location where one neuron of a univariate network changes slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub location: f64,
    pub neuron: usize,
}

fn dead_threshold(net: &NetworkParams) -> f64 {
    let max_w = net.w.iter().fold(0.0f64, |acc, w| acc.max(w.abs()));
    DEAD_NEURON_REL * max_w.max(1.0)
}

fn require_univariate(net: &NetworkParams) -> Result<()> {
    if net.input_dim() == 1 {
        Ok(())
    } else {
        Err(Error::WrongDimension(net.input_dim()))
    }
}

/// Breakpoints `-b_j / w_j` of every ReLU unit with non-vanishing `w_j`,
/// sorted ascending; coinciding locations keep neuron order.
pub fn breakpoints(net: &NetworkParams) -> Result<Vec<Breakpoint>> {
    require_univariate(net)?;
    let thr = dead_threshold(net);
    let mut out: Vec<Breakpoint> = (0..net.width())
        .filter(|&j| !net.linear[j] && net.w[[j, 0]].abs() > thr)
        .map(|j| Breakpoint {
            location: -net.b[j] / net.w[[j, 0]],
            neuron: j,
        })
        .collect();
    out.sort_by(|a, b| a.location.total_cmp(&b.location).then(a.neuron.cmp(&b.neuron)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// A continuous piecewise-linear function on the real line.
///
/// Segment `s` covers `[breakpoints[s-1], breakpoints[s]]`, with the first and
/// last segments unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

impl PiecewiseLinear {
    pub const CONTINUITY_REL: f64 = 1e-9;

    pub fn new(breakpoints: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        if segments.len() != breakpoints.len() + 1 {
            return Err(Error::invalid(format!(
                "{} breakpoints need {} segments, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                segments.len()
            )));
        }
        check_finite(&breakpoints, "breakpoints")?;
        check_finite(segments.iter().flat_map(|s| [&s.slope, &s.intercept]), "segments")?;
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        let pl = PiecewiseLinear { breakpoints, segments };
        if let Some(s) = pl.continuity_violation() {
            return Err(Error::invalid(format!(
                "discontinuity at breakpoint {}",
                pl.breakpoints[s]
            )));
        }
        Ok(pl)
    }

    /// Index of the first breakpoint where adjacent segments disagree beyond tolerance.
    pub fn continuity_violation(&self) -> Option<usize> {
        let range = self.range();
        (0..self.breakpoints.len()).find(|&s| {
            let x = self.breakpoints[s];
            let (l, r) = (self.segments[s], self.segments[s + 1]);
            let scale = (l.slope.abs() + r.slope.abs()) * (x.abs() + range) + l.intercept.abs() + r.intercept.abs();
            (l.eval(x) - r.eval(x)).abs() > Self::CONTINUITY_REL * scale
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Distance between the outermost breakpoints (0 with fewer than two).
    pub fn range(&self) -> f64 {
        match (self.breakpoints.first(), self.breakpoints.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// `(left, right)` endpoints of segment `s`, infinite at the ends.
    pub fn bounds(&self, s: usize) -> (f64, f64) {
        let left = if s == 0 {
            f64::NEG_INFINITY
        } else {
            self.breakpoints[s - 1]
        };
        let right = self.breakpoints.get(s).copied().unwrap_or(f64::INFINITY);
        (left, right)
    }

    pub fn segment_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b < x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.segments[self.segment_index(x)].eval(x)
    }
}

/// Exact piecewise-linear form of a univariate network.
///
/// Breakpoints of units with `v_j = 0` are dropped; breakpoints closer than
/// [`BREAKPOINT_MERGE_REL`] times the breakpoint range collapse to their mean.
pub fn to_piecewise_linear(net: &NetworkParams) -> Result<PiecewiseLinear> {
    require_univariate(net)?;
    let thr = dead_threshold(net);

    let mut base = Segment {
        slope: 0.0,
        intercept: 0.0,
    };
    let mut kinks: Vec<Breakpoint> = Vec::new();
    for j in 0..net.width() {
        let (w, b, v) = (net.w[[j, 0]], net.b[j], net.v[j]);
        if v == 0.0 {
            continue;
        }
        if net.linear[j] || (w.abs() <= thr && b > 0.0) {
            base.slope += v * w;
            base.intercept += v * b;
        } else if w.abs() > thr {
            kinks.push(Breakpoint {
                location: -b / w,
                neuron: j,
            });
        }
    }
    kinks.sort_by(|a, b| a.location.total_cmp(&b.location).then(a.neuron.cmp(&b.neuron)));

    // Chain-merge near-coincident breakpoints into groups.
    let range = match (kinks.first(), kinks.last()) {
        (Some(a), Some(b)) => b.location - a.location,
        _ => 0.0,
    };
    let radius = BREAKPOINT_MERGE_REL * range;
    let mut group_of = vec![0usize; kinks.len()];
    let mut groups: Vec<(f64, usize)> = Vec::new(); // (sum of locations, count)
    for (idx, kink) in kinks.iter().enumerate() {
        let merge = idx > 0 && kink.location - kinks[idx - 1].location <= radius;
        if !merge {
            groups.push((0.0, 0));
        }
        let g = groups.len() - 1;
        groups[g].0 += kink.location;
        groups[g].1 += 1;
        group_of[idx] = g;
    }
    let locations: Vec<f64> = groups.iter().map(|(s, c)| s / *c as f64).collect();

    let n_seg = locations.len() + 1;
    let mut segments = vec![base; n_seg];
    for (kink, &g) in kinks.iter().zip(&group_of) {
        let j = kink.neuron;
        let (w, b, v) = (net.w[[j, 0]], net.b[j], net.v[j]);
        let active = if w > 0.0 { g + 1..n_seg } else { 0..g + 1 };
        for seg in &mut segments[active] {
            seg.slope += v * w;
            seg.intercept += v * b;
        }
    }
    Ok(PiecewiseLinear {
        breakpoints: locations,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn net1d(neurons: &[(f64, f64, f64)]) -> NetworkParams {
        let ns: Vec<Neuron> = neurons.iter().map(|&(w, b, v)| Neuron::relu(vec![w], b, v)).collect();
        NetworkParams::from_neurons(&ns).unwrap()
    }

    #[test]
    fn forward_examples() {
        let zero = NetworkParams::new(array![[1.0, 2.0]], array![3.0], array![0.0]).unwrap();
        assert_eq!(forward(&zero, array![5.0, -1.0].view()).unwrap(), 0.0);

        let single = net1d(&[(1.0, 0.0, 1.0)]);
        assert_eq!(forward(&single, array![2.0].view()).unwrap(), 2.0);

        let two = net1d(&[(1.0, 0.0, 1.0), (1.0, -1.0, -1.0)]);
        assert_eq!(forward(&two, array![2.0].view()).unwrap(), 1.0);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let net = net1d(&[(1.0, 0.0, 1.0)]);
        assert!(matches!(
            forward(&net, array![1.0, 2.0].view()),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn construction_rejects_nan() {
        let err = NetworkParams::new(array![[f64::NAN]], array![0.0], array![1.0]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn breakpoint_examples() {
        let bp = breakpoints(&net1d(&[(2.0, -4.0, 1.0)])).unwrap();
        assert_eq!(
            bp,
            vec![Breakpoint {
                location: 2.0,
                neuron: 0
            }]
        );

        let dead = breakpoints(&net1d(&[(0.0, 1.0, 1.0)])).unwrap();
        assert!(dead.is_empty());

        let bp = breakpoints(&net1d(&[(1.0, -1.0, 1.0), (-1.0, -3.0, 1.0)])).unwrap();
        let locs: Vec<(f64, usize)> = bp.iter().map(|b| (b.location, b.neuron)).collect();
        assert_eq!(locs, vec![(-3.0, 1), (1.0, 0)]);
    }

    #[test]
    fn breakpoints_need_univariate() {
        let net = NetworkParams::zeros(2, 3).unwrap();
        assert!(matches!(breakpoints(&net), Err(Error::WrongDimension(2))));
        assert!(matches!(to_piecewise_linear(&net), Err(Error::WrongDimension(2))));
    }

    #[test]
    fn single_relu_piecewise() {
        let pl = to_piecewise_linear(&net1d(&[(1.0, 0.0, 1.0)])).unwrap();
        assert_eq!(pl.breakpoints(), &[0.0]);
        assert_eq!(
            pl.segments(),
            &[
                Segment {
                    slope: 0.0,
                    intercept: 0.0
                },
                Segment {
                    slope: 1.0,
                    intercept: 0.0
                }
            ]
        );
    }

    #[test]
    fn zero_output_weights_give_zero_function() {
        let pl = to_piecewise_linear(&net1d(&[(1.0, 0.5, 0.0), (-2.0, 1.0, 0.0)])).unwrap();
        assert!(pl.breakpoints().is_empty());
        assert_eq!(
            pl.segments(),
            &[Segment {
                slope: 0.0,
                intercept: 0.0
            }]
        );
    }

    #[test]
    fn coincident_breakpoints_merge() {
        let net = net1d(&[(1.0, -1.0, 1.0), (2.0, -2.0, -0.5), (1.0, 1.0, 1.0)]);
        let pl = to_piecewise_linear(&net).unwrap();
        assert_eq!(pl.breakpoints(), &[-1.0, 1.0]);
        assert!(pl.continuity_violation().is_none());
    }

    #[test]
    fn linear_unit_is_affine_everywhere() {
        let mut net = net1d(&[(1.0, 0.0, 1.0)]);
        net.push_linear_unit(&[2.0], 1.0, 0.5).unwrap();
        let pl = to_piecewise_linear(&net).unwrap();
        for x in [-3.0, -0.5, 0.25, 4.0] {
            let f = forward(&net, array![x].view()).unwrap();
            assert!((pl.eval(x) - f).abs() < 1e-12);
        }
    }

    #[test]
    fn piecewise_rejects_bad_shapes() {
        let seg = Segment {
            slope: 0.0,
            intercept: 1.0,
        };
        assert!(PiecewiseLinear::new(vec![0.0], vec![seg]).is_err());
        assert!(PiecewiseLinear::new(vec![1.0, 0.0], vec![seg; 3]).is_err());
        let jump = Segment {
            slope: 0.0,
            intercept: 2.0,
        };
        assert!(PiecewiseLinear::new(vec![0.0], vec![seg, jump]).is_err());
    }

    #[test]
    fn flat_roundtrip() {
        let net = NetworkParams::new(array![[1.0, 2.0], [3.0, 4.0]], array![5.0, 6.0], array![7.0, 8.0]).unwrap();
        let flat = net.to_flat();
        assert_eq!(flat, vec![1.0, 2.0, 5.0, 7.0, 3.0, 4.0, 6.0, 8.0]);
        assert_eq!(net.from_flat_like(&flat).unwrap(), net);
    }

    #[test]
    fn batch_matches_pointwise() {
        let net = NetworkParams::new(
            array![[1.0, -2.0], [0.5, 0.5], [-1.0, 0.0]],
            array![0.1, -0.2, 0.3],
            array![1.0, -1.0, 2.0],
        )
        .unwrap();
        let x = array![[1.0, 0.0], [0.3, -0.7], [-2.0, 1.0]];
        let acts = activations(&net, x.view()).unwrap();
        for i in 0..3 {
            let f = forward(&net, x.row(i)).unwrap();
            assert!((acts.out[i] - f).abs() < 1e-14);
        }
        assert_eq!(&acts.sigma * &acts.pre, acts.act);
    }
}
