//! End-to-end experiments: the margin experiment on Gaussian-mixture data in
//! several dimensions, and the one-dimensional reconstruction pipeline.
//!
//! Every (d, seed) cell draws its data and initialization from seeds derived
//! from the configured seed, so cells can run in parallel and the output is
//! identical across runs. Wall times go to the run log, never to the CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{self, DistributionKind, DistributionSpec};
use crate::error::{Error, Result};
use crate::kkt;
use crate::membership::{evaluate_attack, RuleSpec};
use crate::model::{forward, forward_batch, to_piecewise_linear, Label, LabeledDataset, NetworkParams};
use crate::reconstruct::{build_candidate_set, recover_single, CandidateSet, ToleranceConfig};
use crate::training::{init_small, train_from, LossKind, TrainConfig, TrainTrace};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RELU_PRIVACY_OUT";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one stream (`tag`) of one cell.
pub fn cell_seed(seed: u64, d: usize, tag: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ d as u64) ^ tag)
}

const TAG_TRAIN: u64 = 1;
const TAG_TEST: u64 = 2;
const TAG_INIT: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dims: Vec<usize>,
    pub width: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub margin_slack: f64,
    pub distribution: DistributionKind,
    pub train: TrainConfig,
    pub output_dir: Option<PathBuf>,
    /// Adds one unit without activation, which is active on every point.
    pub linear_unit: bool,
    /// Range of the uniform training points in the reconstruction pipeline.
    pub interval: (f64, f64),
    /// Fixed `(x, label)` training set for the reconstruction pipeline.
    pub fixed_points: Vec<(f64, f64)>,
    pub match_radius: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::margin_defaults()
    }
}

/// On-disk form: one flat TOML table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dims: Vec<usize>,
    width: usize,
    n_train: usize,
    n_test: usize,
    seeds: Vec<u64>,
    margin_slack: f64,
    distribution: DistributionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    linear_unit: bool,
    interval: [f64; 2],
    fixed_points: Vec<[f64; 2]>,
    match_radius: f64,
    loss_kind: LossKind,
    init_scale: f64,
    learning_rate: f64,
    lr_growth: f64,
    max_steps: usize,
    loss_target: f64,
    kkt_residual_target: f64,
    checkpoint_every: usize,
}

impl From<ConfigFile> for ExperimentConfig {
    fn from(f: ConfigFile) -> Self {
        let train = TrainConfig {
            loss_kind: f.loss_kind,
            width: f.width,
            init_scale: f.init_scale,
            learning_rate: f.learning_rate,
            lr_growth: f.lr_growth,
            max_steps: f.max_steps,
            loss_target: f.loss_target,
            kkt_residual_target: f.kkt_residual_target,
            checkpoint_every: f.checkpoint_every,
            support_slack: f.margin_slack,
            rng_seed: 0,
        };
        ExperimentConfig {
            dims: f.dims,
            width: f.width,
            n_train: f.n_train,
            n_test: f.n_test,
            seeds: f.seeds,
            margin_slack: f.margin_slack,
            distribution: f.distribution,
            train,
            output_dir: f.output_dir,
            linear_unit: f.linear_unit,
            interval: (f.interval[0], f.interval[1]),
            fixed_points: f.fixed_points.iter().map(|p| (p[0], p[1])).collect(),
            match_radius: f.match_radius,
        }
    }
}

impl From<&ExperimentConfig> for ConfigFile {
    fn from(c: &ExperimentConfig) -> Self {
        ConfigFile {
            dims: c.dims.clone(),
            width: c.width,
            n_train: c.n_train,
            n_test: c.n_test,
            seeds: c.seeds.clone(),
            margin_slack: c.margin_slack,
            distribution: c.distribution,
            output_dir: c.output_dir.clone(),
            linear_unit: c.linear_unit,
            interval: [c.interval.0, c.interval.1],
            fixed_points: c.fixed_points.iter().map(|&(x, y)| [x, y]).collect(),
            match_radius: c.match_radius,
            loss_kind: c.train.loss_kind,
            init_scale: c.train.init_scale,
            learning_rate: c.train.learning_rate,
            lr_growth: c.train.lr_growth,
            max_steps: c.train.max_steps,
            loss_target: c.train.loss_target,
            kkt_residual_target: c.train.kkt_residual_target,
            checkpoint_every: c.train.checkpoint_every,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale margin experiment: width 1000, 20 training and 1000 test
    /// points, dimensions 5 to 500, ten seeds.
    pub fn margin_defaults() -> Self {
        ExperimentConfig {
            dims: vec![5, 20, 100, 500],
            width: 1000,
            n_train: 20,
            n_test: 1000,
            seeds: (0..10).collect(),
            margin_slack: kkt::DEFAULT_SUPPORT_SLACK,
            distribution: DistributionKind::GaussianMixture,
            train: TrainConfig {
                width: 1000,
                init_scale: 1e-4,
                learning_rate: 0.05,
                lr_growth: 1.1,
                max_steps: 3000,
                ..TrainConfig::default()
            },
            output_dir: None,
            linear_unit: false,
            interval: (-2.0, 2.0),
            fixed_points: Vec::new(),
            match_radius: 1e-3,
        }
    }

    /// Univariate reconstruction: six uniform points in `[-2, 2]`, 64 ReLU
    /// units plus a linear unit, 25 seeds.
    pub fn reconstruction_defaults() -> Self {
        ExperimentConfig {
            dims: vec![1],
            width: 64,
            n_train: 6,
            seeds: (0..25).collect(),
            linear_unit: true,
            train: TrainConfig {
                width: 64,
                init_scale: 0.5,
                learning_rate: 0.2,
                lr_growth: 1.1,
                max_steps: 200_000,
                checkpoint_every: 1000,
                ..TrainConfig::default()
            },
            ..Self::margin_defaults()
        }
    }

    /// Parses a flat TOML table; keys it omits keep their value in `base`.
    pub fn from_toml_over(text: &str, base: &ExperimentConfig) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::format("config", e.to_string());
        let mut table: toml::Table = toml::from_str(&base.to_toml()).map_err(|e| bad(&e))?;
        let given: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        table.extend(given);
        let file: ConfigFile = table.try_into().map_err(|e| bad(&e))?;
        let cfg = ExperimentConfig::from(file);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_over(text, &Self::margin_defaults())
    }

    pub fn read_over(path: &Path, base: &ExperimentConfig) -> Result<Self> {
        Self::from_toml_over(&fs::read_to_string(path)?, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ConfigFile::from(self)).expect("config serialization cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must be nonempty"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::invalid("dims must be nonempty and positive"));
        }
        if self.width == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(Error::invalid("width, n_train and n_test must be positive"));
        }
        if !(self.margin_slack > 0.0 && self.margin_slack < 1.0) {
            return Err(Error::invalid(format!(
                "margin_slack must lie in (0, 1), got {}",
                self.margin_slack
            )));
        }
        if !(self.interval.0 < self.interval.1) || !self.interval.0.is_finite() || !self.interval.1.is_finite() {
            return Err(Error::invalid("interval must be an increasing finite pair"));
        }
        if !(self.match_radius > 0.0) {
            return Err(Error::invalid("match_radius must be positive"));
        }
        if let Some(p) = self.fixed_points.iter().find(|p| p.1 != 1.0 && p.1 != -1.0) {
            return Err(Error::invalid(format!(
                "fixed point label must be 1 or -1, got {}",
                p.1
            )));
        }
        self.train.validate()
    }

    /// Training settings for one cell.
    pub fn train_config(&self, seed: u64, d: usize) -> TrainConfig {
        TrainConfig {
            width: self.width,
            support_slack: self.margin_slack,
            rng_seed: cell_seed(seed, d, TAG_INIT),
            ..self.train.clone()
        }
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(default_output_dir)
    }

    fn distribution_spec(&self, d: usize, rng_seed: u64) -> DistributionSpec {
        match self.distribution {
            DistributionKind::GaussianMixture => DistributionSpec::two_gaussian_mixture(d, rng_seed),
            DistributionKind::Gaussian => DistributionSpec::gaussian(d, rng_seed),
            DistributionKind::UniformSphere => DistributionSpec::uniform_sphere(d, rng_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub d: usize,
    pub seed: u64,
    pub frac_train_on_margin: f64,
    pub frac_test_on_or_above_margin: f64,
    pub final_loss: f64,
    pub margin: f64,
    pub kkt_residual: f64,
    /// AUC and accuracy of the known-margin attack, train against test.
    pub attack_auc: f64,
    pub attack_accuracy: f64,
    pub steps: usize,
    pub diverged: bool,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; NaN on an empty sample.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimAggregate {
    pub d: usize,
    /// Cells that trained without diverging.
    pub cells: usize,
    pub frac_train_on_margin: MeanStd,
    pub frac_test_on_or_above_margin: MeanStd,
    pub attack_auc: MeanStd,
    pub attack_accuracy: MeanStd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginExperiment {
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<DimAggregate>,
}

impl MarginExperiment {
    pub fn aggregate(&self, d: usize) -> Option<&DimAggregate> {
        self.aggregates.iter().find(|a| a.d == d)
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from(
            "row,d,seed,frac_train_on_margin,frac_test_on_or_above_margin,final_loss,margin,kkt_residual,attack_auc,attack_accuracy,steps,diverged,cells\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "cell,{},{},{},{},{},{},{},{},{},{},{},",
                r.d,
                r.seed,
                r.frac_train_on_margin,
                r.frac_test_on_or_above_margin,
                r.final_loss,
                r.margin,
                r.kkt_residual,
                r.attack_auc,
                r.attack_accuracy,
                r.steps,
                r.diverged
            );
        }
        for a in &self.aggregates {
            for (row, pick) in [("mean", 0), ("std", 1)] {
                let v = |m: MeanStd| if pick == 0 { m.mean } else { m.std };
                let _ = writeln!(
                    out,
                    "{row},{},,{},{},,,,{},{},,,{}",
                    a.d,
                    v(a.frac_train_on_margin),
                    v(a.frac_test_on_or_above_margin),
                    v(a.attack_auc),
                    v(a.attack_accuracy),
                    a.cells
                );
            }
        }
        out
    }

    /// Plot data `d,mean,std` for the chosen per-d statistic.
    pub fn plot_csv(&self, pick: impl Fn(&DimAggregate) -> MeanStd) -> String {
        let mut out = String::from("d,mean,std\n");
        for a in &self.aggregates {
            let m = pick(a);
            let _ = writeln!(out, "{},{},{}", a.d, m.mean, m.std);
        }
        out
    }

    pub fn run_log(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(
                out,
                "d={} seed={} steps={} diverged={} wall_seconds={:.3}",
                r.d, r.seed, r.steps, r.diverged, r.wall_seconds
            );
        }
        out
    }
}

fn fraction(count: usize, total: usize) -> f64 {
    count as f64 / total as f64
}

fn margin_cell(cfg: &ExperimentConfig, d: usize, seed: u64) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let train_spec = cfg.distribution_spec(d, cell_seed(seed, d, TAG_TRAIN));
    let test_spec = cfg.distribution_spec(d, cell_seed(seed, d, TAG_TEST));
    let components = train_spec.means.len().max(1);
    let data = distributions::sample(&train_spec, cfg.n_train)?.labelled(components)?;
    let test = distributions::sample(&test_spec, cfg.n_test)?.points;

    let tcfg = cfg.train_config(seed, d);
    let mut net = init_small(d, cfg.width, tcfg.init_scale, tcfg.rng_seed)?;
    if cfg.linear_unit {
        push_small_linear_unit(&mut net, tcfg.init_scale, tcfg.rng_seed)?;
    }
    let mut record = ExperimentRecord {
        d,
        seed,
        frac_train_on_margin: f64::NAN,
        frac_test_on_or_above_margin: f64::NAN,
        final_loss: f64::NAN,
        margin: f64::NAN,
        kkt_residual: f64::NAN,
        attack_auc: f64::NAN,
        attack_accuracy: f64::NAN,
        steps: 0,
        diverged: false,
        wall_seconds: 0.0,
    };
    let (net, trace) = match train_from(net, &data, &tcfg) {
        Ok(r) => r,
        Err(Error::TrainingDiverged { step, .. }) => {
            record.steps = step;
            record.diverged = true;
            record.wall_seconds = start.elapsed().as_secs_f64();
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    let last = trace.last().expect("trace has the initial record");
    let m = kkt::margin(&net, &data)?.value;
    let slack = cfg.margin_slack;
    let train_out = forward_batch(&net, data.x())?;
    let on_margin = train_out
        .iter()
        .filter(|f| (1.0 - slack) * m <= f.abs() && f.abs() <= (1.0 + slack) * m)
        .count();
    let test_out = forward_batch(&net, test.view())?;
    let above = test_out.iter().filter(|f| f.abs() >= (1.0 - slack) * m).count();
    let attack = evaluate_attack(&net, &data.x().to_owned(), &test, RuleSpec::KnownMargin { m })?;

    record.frac_train_on_margin = fraction(on_margin, cfg.n_train);
    record.frac_test_on_or_above_margin = fraction(above, cfg.n_test);
    record.final_loss = last.loss;
    record.margin = m;
    record.kkt_residual = last.kkt_residual;
    record.attack_auc = attack.auc;
    record.attack_accuracy = attack.accuracy;
    record.steps = last.step;
    record.wall_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Appends a linear unit with weights of the same small scale as [`init_small`].
pub fn push_small_linear_unit(net: &mut NetworkParams, scale: f64, seed: u64) -> Result<()> {
    let d = net.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
    let w: Vec<f64> = (0..d)
        .map(|_| scale * rng.random_range(-1.0..1.0) / (d as f64).sqrt())
        .collect();
    net.push_linear_unit(
        &w,
        scale * rng.random_range(-1.0..1.0),
        scale * rng.random_range(-1.0..1.0),
    )
}

/// Runs every (d, seed) cell, in parallel, and aggregates per d over the
/// cells that did not diverge. Records are sorted by d, then seed.
pub fn run_margin_experiment(cfg: &ExperimentConfig) -> Result<MarginExperiment> {
    cfg.validate()?;
    let mut dims = cfg.dims.clone();
    dims.sort_unstable();
    dims.dedup();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let cells: Vec<(usize, u64)> = dims.iter().flat_map(|&d| seeds.iter().map(move |&s| (d, s))).collect();
    let records = cells
        .par_iter()
        .map(|&(d, seed)| {
            let r = margin_cell(cfg, d, seed);
            if let Ok(rec) = &r {
                tracing::info!(d, seed, wall = rec.wall_seconds, diverged = rec.diverged, "cell done");
            }
            r
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = dims
        .iter()
        .map(|&d| {
            let ok: Vec<&ExperimentRecord> = records.iter().filter(|r| r.d == d && !r.diverged).collect();
            let stat = |f: fn(&ExperimentRecord) -> f64| MeanStd::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            DimAggregate {
                d,
                cells: ok.len(),
                frac_train_on_margin: stat(|r| r.frac_train_on_margin),
                frac_test_on_or_above_margin: stat(|r| r.frac_test_on_or_above_margin),
                attack_auc: stat(|r| r.attack_auc),
                attack_accuracy: stat(|r| r.attack_accuracy),
            }
        })
        .collect();
    Ok(MarginExperiment { records, aggregates })
}

fn metadata_line(kind: &str) -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!(
        "# experiment={kind} generated_unix={secs} version={}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Writes `results.csv`, the plot files, `run.log` and the resolved config.
pub fn write_margin_outputs(dir: &Path, cfg: &ExperimentConfig, exp: &MarginExperiment) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), metadata_line("margin") + &exp.results_csv())?;
    fs::write(
        dir.join("plot_train_on_margin.csv"),
        exp.plot_csv(|a| a.frac_train_on_margin),
    )?;
    fs::write(
        dir.join("plot_test_on_or_above_margin.csv"),
        exp.plot_csv(|a| a.frac_test_on_or_above_margin),
    )?;
    fs::write(dir.join("run.log"), schedule_line(cfg) + &exp.run_log())?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn schedule_line(cfg: &ExperimentConfig) -> String {
    let t = &cfg.train;
    format!(
        "schedule: loss={:?} init_scale={} learning_rate={} lr_growth={} max_steps={} loss_target={} kkt_residual_target={}\n",
        t.loss_kind, t.init_scale, t.learning_rate, t.lr_growth, t.max_steps, t.loss_target, t.kkt_residual_target
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionRecord {
    pub seed: u64,
    pub truth: Vec<f64>,
    /// True when training separated every point.
    pub separated: bool,
    pub final_loss: f64,
    pub margin: f64,
    pub kkt_residual: f64,
    pub candidates: Option<CandidateSet>,
    pub matched_fraction: f64,
    /// Set when the piecewise-linear structure was unusable.
    pub degenerate: Option<String>,
    pub wall_seconds: f64,
}

impl ReconstructionRecord {
    pub fn success(&self) -> bool {
        self.matched_fraction >= 0.25
    }

    pub fn max_crossing_window(&self) -> usize {
        self.candidates.as_ref().map_or(0, CandidateSet::max_crossing_window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionExperiment {
    pub records: Vec<ReconstructionRecord>,
}

impl ReconstructionExperiment {
    pub fn success_rate(&self) -> f64 {
        fraction(self.records.iter().filter(|r| r.success()).count(), self.records.len())
    }

    pub fn results_csv(&self) -> String {
        let mut out =
            String::from("seed,separated,final_loss,margin,kkt_residual,candidates,matched_fraction,max_crossing_window,degenerate\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.seed,
                r.separated,
                r.final_loss,
                r.margin,
                r.kkt_residual,
                r.candidates.as_ref().map_or(0, |c| c.points.len()),
                r.matched_fraction,
                r.max_crossing_window(),
                r.degenerate.as_deref().unwrap_or("")
            );
        }
        out
    }

    /// Plot data: one row, the success rate with its binomial standard error.
    pub fn plot_csv(&self) -> String {
        let p = self.success_rate();
        let se = (p * (1.0 - p) / self.records.len() as f64).sqrt();
        format!("d,mean,std\n1,{p},{se}\n")
    }

    pub fn run_log(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "seed={} wall_seconds={:.3}", r.seed, r.wall_seconds);
        }
        out
    }
}

/// Training set of one reconstruction run: `fixed_points` if given, else
/// `n_train` uniform points in `interval` with fair random labels.
pub fn reconstruction_data(cfg: &ExperimentConfig, seed: u64) -> Result<LabeledDataset> {
    if !cfg.fixed_points.is_empty() {
        return LabeledDataset::from_1d(&cfg.fixed_points);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, 1, TAG_TRAIN));
    let (lo, hi) = cfg.interval;
    let points: Vec<(f64, f64)> = (0..cfg.n_train)
        .map(|_| {
            let x = rng.random_range(lo..hi);
            (x, if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        })
        .collect();
    LabeledDataset::from_1d(&points)
}

fn reconstruction_run(cfg: &ExperimentConfig, seed: u64) -> Result<ReconstructionRecord> {
    let start = Instant::now();
    let data = reconstruction_data(cfg, seed)?;
    let truth: Vec<f64> = (0..data.len()).map(|i| data.point(i)[0]).collect();
    let tcfg = cfg.train_config(seed, 1);
    let mut net = init_small(1, cfg.width, tcfg.init_scale, tcfg.rng_seed)?;
    if cfg.linear_unit {
        push_small_linear_unit(&mut net, tcfg.init_scale, tcfg.rng_seed)?;
    }
    let mut record = ReconstructionRecord {
        seed,
        truth,
        separated: false,
        final_loss: f64::NAN,
        margin: f64::NAN,
        kkt_residual: f64::NAN,
        candidates: None,
        matched_fraction: 0.0,
        degenerate: None,
        wall_seconds: 0.0,
    };
    let (net, trace) = match train_from(net, &data, &tcfg) {
        Ok(r) => r,
        Err(e @ Error::TrainingDiverged { .. }) => {
            record.degenerate = Some(e.to_string());
            record.wall_seconds = start.elapsed().as_secs_f64();
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    let last = trace.last().expect("trace has the initial record");
    record.separated = last.min_margin > 0.0;
    record.kkt_residual = last.kkt_residual;
    record.final_loss = last.loss;
    let built = kkt::margin(&net, &data).and_then(|m| {
        let pl = to_piecewise_linear(&net)?;
        Ok((m.value, build_candidate_set(&pl, m.value, &ToleranceConfig::default())?))
    });
    match built {
        Ok((m, set)) => {
            record.margin = m;
            record.matched_fraction = set.matched_fraction(&record.truth, cfg.match_radius);
            record.candidates = Some(set);
        }
        Err(e @ Error::DegenerateNetwork(_)) => record.degenerate = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    record.wall_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Trains one univariate network per seed, builds its candidate set from the
/// training margin and matches candidates to the true points.
pub fn run_reconstruction_pipeline(cfg: &ExperimentConfig) -> Result<ReconstructionExperiment> {
    cfg.validate()?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let records = seeds
        .par_iter()
        .map(|&s| reconstruction_run(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionExperiment { records })
}

pub fn write_reconstruction_outputs(dir: &Path, cfg: &ExperimentConfig, exp: &ReconstructionExperiment) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("results.csv"),
        metadata_line("reconstruct") + &exp.results_csv(),
    )?;
    fs::write(dir.join("plot_success_rate.csv"), exp.plot_csv())?;
    let cand_dir = dir.join("candidates");
    fs::create_dir_all(&cand_dir)?;
    for r in &exp.records {
        if let Some(set) = &r.candidates {
            fs::write(cand_dir.join(format!("seed_{}.csv", r.seed)), set.to_csv())?;
        }
    }
    fs::write(dir.join("run.log"), schedule_line(cfg) + &exp.run_log())?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmUpResult {
    pub recovered: f64,
    pub net: NetworkParams,
    pub trace: TrainTrace,
}

/// Trains a single unit on a single labelled point and inverts it. The
/// initial unit is flipped, if needed, to be active on the point with an
/// output weight of the label's sign.
pub fn warm_up_single(x: f64, label: Label, cfg: &TrainConfig) -> Result<WarmUpResult> {
    let data = LabeledDataset::new(Array2::from_elem((1, 1), x), &[label])?;
    let init = init_small(1, 1, cfg.init_scale, cfg.rng_seed)?;
    let mut unit = init.neuron(0);
    if unit.w[0] * x + unit.b < 0.0 {
        unit.w[0] = -unit.w[0];
        unit.b = -unit.b;
    }
    if unit.v * label.sign() < 0.0 {
        unit.v = -unit.v;
    }
    let net = NetworkParams::from_neurons(&[unit])?;
    let (net, trace) = train_from(net, &data, cfg)?;
    let m = forward(&net, data.point(0))?.abs();
    let recovered = recover_single(&net, m)?;
    Ok(WarmUpResult { recovered, net, trace })
}
