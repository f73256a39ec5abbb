//! Command-line front end for the relu-privacy library.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relu_privacy::distributions::{check_assumption, sample, DistributionSpec};
use relu_privacy::harness::{
    push_small_linear_unit, run_margin_experiment, run_reconstruction_pipeline, write_margin_outputs,
    write_reconstruction_outputs, ExperimentConfig,
};
use relu_privacy::io::{dataset_from_csv, model_from_json, points_from_csv, write_model};
use relu_privacy::membership::{membership_score, MembershipVerdict, RuleSpec};
use relu_privacy::reconstruct::{build_candidate_set, ToleranceConfig};
use relu_privacy::{
    analyze, init_small, margin, to_piecewise_linear, train_from, Error, LabeledDataset, LossKind, NetworkParams,
    Result, TrainConfig,
};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "relu-privacy",
    version,
    about = "Privacy attacks on margin-trained two-layer ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network on a labelled dataset.
    Train(TrainArgs),
    /// Fit KKT multipliers to a trained model and report the residual.
    VerifyKkt(VerifyArgs),
    /// Run an attack against a trained model.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Sample a distribution and check the near-orthogonality assumption.
    CheckDist(CheckDistArgs),
    /// Run an end-to-end experiment from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV (header `d=<d>,n=<n>`).
    #[arg(long)]
    data: PathBuf,
    /// Where to write the model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Where to write the training trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// TOML file with training options; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_growth: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    loss: Option<Loss>,
    /// Append a linear unit to the hidden layer.
    #[arg(long)]
    linear_unit: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Exponential,
    Logistic,
}

impl From<Loss> for LossKind {
    fn from(l: Loss) -> Self {
        match l {
            Loss::Exponential => LossKind::Exponential,
            Loss::Logistic => LossKind::Logistic,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Relative slack defining the support set.
    #[arg(long, default_value_t = 0.1)]
    slack: f64,
    /// Loss used for the diagnostic bounds.
    #[arg(long, value_enum, default_value = "exponential")]
    loss: Loss,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AttackCommand {
    /// Candidate training points of a univariate model.
    Reconstruct(ReconstructArgs),
    /// Membership verdicts for points or precomputed scores.
    Membership(MembershipArgs),
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    /// Margin of the model on its training set.
    #[arg(long, required_unless_present = "data", conflicts_with = "data")]
    margin: Option<f64>,
    /// Derive the margin from this training set instead.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Candidate CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    KnownMargin,
    LeakedPoints,
    BoundedMargin,
}

#[derive(Args)]
struct MembershipArgs {
    #[arg(long, value_enum)]
    rule: Rule,
    /// Margin for the known-margin rule.
    #[arg(long)]
    margin: Option<f64>,
    /// Bound for the bounded-margin rule.
    #[arg(long)]
    bound: Option<f64>,
    /// File with one score per line.
    #[arg(long, conflicts_with_all = ["model", "points"], required_unless_present = "model")]
    scores: Option<PathBuf>,
    #[arg(long, requires = "points")]
    model: Option<PathBuf>,
    /// Header-less CSV of points, one per row.
    #[arg(long, requires = "model")]
    points: Option<PathBuf>,
    /// Verdict CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckDistArgs {
    /// Distribution spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Number of points to sample.
    #[arg(long)]
    n: usize,
    /// Training-set size the assumption is checked for; defaults to `n`.
    #[arg(long)]
    n_effective: Option<usize>,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Margin,
    Reconstruct,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    /// TOML config; missing keys take the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config and the environment.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Format {
        what: "input file",
        detail: format!("{}: {e}", path.display()),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<NetworkParams> {
    model_from_json(&read_input(path)?)
}

fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    dataset_from_csv(&read_input(path)?)
}

fn train(args: TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let mut cfg = match &args.config {
        Some(p) => toml::from_str::<TrainConfig>(&read_input(p)?).map_err(|e| Error::Format {
            what: "train config",
            detail: e.message().to_string(),
        })?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.width {
        cfg.width = v;
    }
    if let Some(v) = args.init_scale {
        cfg.init_scale = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.lr_growth {
        cfg.lr_growth = v;
    }
    if let Some(v) = args.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = args.seed {
        cfg.rng_seed = v;
    }
    if let Some(v) = args.loss {
        cfg.loss_kind = v.into();
    }
    cfg.validate()?;
    let mut net = init_small(data.dim(), cfg.width, cfg.init_scale, cfg.rng_seed)?;
    if args.linear_unit {
        push_small_linear_unit(&mut net, cfg.init_scale, cfg.rng_seed)?;
    }
    let (net, trace) = match train_from(net, &data, &cfg) {
        Ok(done) => done,
        Err(Error::TrainingDiverged { step, trace }) => {
            if let Some(p) = &args.trace {
                fs::write(p, trace.to_csv())?;
            }
            return Err(Error::TrainingDiverged { step, trace });
        }
        Err(e) => return Err(e),
    };
    write_model(&args.model, &net)?;
    if let Some(p) = &args.trace {
        fs::write(p, trace.to_csv())?;
    }
    if let Some(last) = trace.last() {
        eprintln!(
            "step {} log-loss {:.4} margin {:.3e} kkt residual {:.3e} ({:?})",
            last.step, last.log_loss, last.min_margin, last.kkt_residual, trace.stop_reason
        );
    }
    Ok(())
}

fn verify_kkt(args: VerifyArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    let report = analyze(&net, &data, args.slack, args.loss.into())?;
    emit(args.out.as_deref(), &(report.to_json() + "\n"))
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let m = match (args.margin, &args.data) {
        (Some(m), _) => m,
        (None, Some(p)) => margin(&net, &load_dataset(p)?)?.value,
        (None, None) => unreachable!("clap requires one of --margin and --data"),
    };
    let set = build_candidate_set(&to_piecewise_linear(&net)?, m, &ToleranceConfig::default())?;
    emit(args.out.as_deref(), &set.to_csv())
}

fn parse_scores(text: &str) -> Result<Vec<f64>> {
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "score") {
            continue;
        }
        let s: f64 = line.parse().map_err(|_| Error::Format {
            what: "score file",
            detail: format!("line {}: bad number '{line}'", i + 1),
        })?;
        scores.push(s);
    }
    Ok(scores)
}

fn verdicts_csv(verdicts: &[MembershipVerdict]) -> String {
    let mut out = String::from("point_id,score,verdict,rule,threshold\n");
    for (i, v) in verdicts.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{}",
            v.score,
            if v.is_member { "member" } else { "non-member" },
            v.rule.as_str(),
            v.threshold_used
        );
    }
    out
}

fn membership(args: MembershipArgs) -> Result<()> {
    let missing = |flag: &str, rule: &str| Error::InvalidParameter(format!("{flag} is required for the {rule} rule"));
    let rule = match args.rule {
        Rule::KnownMargin => RuleSpec::KnownMargin {
            m: args.margin.ok_or_else(|| missing("--margin", "known-margin"))?,
        },
        Rule::LeakedPoints => RuleSpec::LeakedPoints,
        Rule::BoundedMargin => RuleSpec::BoundedMargin {
            c: args.bound.ok_or_else(|| missing("--bound", "bounded-margin"))?,
        },
    };
    let scores = match (&args.scores, &args.model, &args.points) {
        (Some(p), _, _) => parse_scores(&read_input(p)?)?,
        (None, Some(model), Some(points)) => {
            let net = load_model(model)?;
            let pts = points_from_csv(&read_input(points)?)?;
            pts.rows()
                .into_iter()
                .map(|x| membership_score(&net, x))
                .collect::<Result<Vec<_>>>()?
        }
        _ => unreachable!("clap requires --scores or --model with --points"),
    };
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    emit(args.out.as_deref(), &verdicts_csv(&rule.apply(&scores)?))
}

fn check_dist(args: CheckDistArgs) -> Result<()> {
    let mut spec: DistributionSpec = toml::from_str(&read_input(&args.spec)?).map_err(|e| Error::Format {
        what: "distribution spec",
        detail: e.message().to_string(),
    })?;
    if let Some(seed) = args.seed {
        spec.rng_seed = seed;
    }
    let points = sample(&spec, args.n)?.points;
    let report = check_assumption(&points, args.n_effective.unwrap_or(args.n))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    emit(args.out.as_deref(), &(json + "\n"))
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let base = match args.kind {
        ExperimentKind::Margin => ExperimentConfig::margin_defaults(),
        ExperimentKind::Reconstruct => ExperimentConfig::reconstruction_defaults(),
    };
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::from_toml_over(&read_input(p)?, &base)?,
        None => base,
    };
    let dir = args.out.clone().unwrap_or_else(|| cfg.resolved_output_dir());
    match args.kind {
        ExperimentKind::Margin => {
            let exp = run_margin_experiment(&cfg)?;
            write_margin_outputs(&dir, &cfg, &exp)?;
        }
        ExperimentKind::Reconstruct => {
            let exp = run_reconstruction_pipeline(&cfg)?;
            write_reconstruction_outputs(&dir, &cfg, &exp)?;
            eprintln!("success rate {:.3}", exp.success_rate());
        }
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::VerifyKkt(a) => verify_kkt(a),
        Command::Attack(AttackCommand::Reconstruct(a)) => reconstruct(a),
        Command::Attack(AttackCommand::Membership(a)) => membership(a),
        Command::CheckDist(a) => check_dist(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
