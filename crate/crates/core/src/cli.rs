//! Command-line front end: `train`, `predict`, `evaluate`, `simulate` and
//! `gradcheck`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{build_grid_with, read_table, FeatureEncoding, GridSpacing, RawRow, Schema};
use crate::error::Error;
use crate::gradcheck;
use crate::metrics::{AurocNegatives, EvaluationReport, Outcome};
use crate::synthgen::{self, HazardSpec};
use crate::trainer::{train_bundle, write_atomic, Architecture, BatchSize, ModelBundle, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "crmtlr", version, about = "Competing-risks MTLR survival models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a labeled CSV and write the model file.
    Train(TrainArgs),
    /// Write per-subject CIF curves and lifetime risks.
    Predict(PredictArgs),
    /// Report cause-specific C-index and horizon AUROC.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic exponential competing-risks cohort.
    Simulate(SimulateArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpacingArg {
    Quantile,
    Uniform,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of time intervals; defaults to round(sqrt(n_train)).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t = SpacingArg::Quantile)]
    pub spacing: SpacingArg,
    /// Ridge strength on the MTLR weights.
    #[arg(long, default_value_t = 0.0)]
    pub c1: f64,
    /// Ridge strength on the encoder weights.
    #[arg(long, default_value_t = 0.0)]
    pub c2: f64,
    /// Penalty on differences between adjacent-interval head weights.
    #[arg(long, default_value_t = 0.0)]
    pub smooth: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Mini-batch size; defaults to full batch (linear) or 64 (neural).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Skip the encoder: plain linear MTLR.
    #[arg(long)]
    pub linear: bool,
    /// Hidden layer widths of the encoder.
    #[arg(long, value_delimiter = ',', default_value = "128,128,128")]
    pub hidden: Vec<usize>,
    /// Fraction of rows held out for validation.
    #[arg(long, default_value_t = 0.15)]
    pub valid_frac: f64,
    /// Column whose value `valid` marks validation rows (overrides --valid-frac).
    #[arg(long)]
    pub split_column: Option<String>,
    /// Per-epoch loss log; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Horizon for the AUROC, in years.
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
    /// Drop subjects censored before the horizon from the AUROC negatives.
    #[arg(long)]
    pub exclude_early_censored: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output CSV; `.schema` and `.spec.json` sidecars are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON hazard specification; defaults to the built-in reference cohort.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random parameter points.
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Perturb the analytic gradient (negative control).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } | Error::NonFiniteGradient(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Normal output goes to `out`, diagnostics
/// to `err`.
pub fn run_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e).into())
}

fn split_rows(rows: Vec<RawRow>, args: &TrainArgs) -> CliResult<(Vec<RawRow>, Vec<RawRow>)> {
    if let Some(col) = &args.split_column {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for r in rows {
            match r.extra.get(col) {
                Some(v) if v.eq_ignore_ascii_case("valid") || v.eq_ignore_ascii_case("validation") => valid.push(r),
                Some(_) => train.push(r),
                None => return Err(Error::MissingColumn(col.clone()).into()),
            }
        }
        return Ok((train, valid));
    }
    if !(args.valid_frac > 0.0 && args.valid_frac < 1.0) {
        return Err(usage("--valid-frac must lie strictly between 0 and 1"));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(args.seed));
    let n_valid = ((rows.len() as f64 * args.valid_frac).round() as usize).clamp(1, rows.len().saturating_sub(1).max(1));
    let mut is_valid = vec![false; rows.len()];
    for &i in &order[..n_valid.min(rows.len())] {
        is_valid[i] = true;
    }
    let (valid, train): (Vec<(usize, RawRow)>, Vec<(usize, RawRow)>) =
        rows.into_iter().enumerate().partition(|(i, _)| is_valid[*i]);
    Ok((
        train.into_iter().map(|(_, r)| r).collect(),
        valid.into_iter().map(|(_, r)| r).collect(),
    ))
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let schema = Schema::from_file(&args.schema)?;
    let rows = read_table(&args.data, &schema, true)?;
    let (train_rows, valid_rows) = split_rows(rows, args)?;
    if train_rows.is_empty() || valid_rows.is_empty() {
        return Err(Error::InvalidArgument("need at least one training and one validation row".into()).into());
    }
    let encoding = FeatureEncoding::fit(&schema, &train_rows)?;
    let train = encoding.encode_records(&train_rows)?;
    let valid = encoding.encode_records(&valid_rows)?;
    let spacing = match args.spacing {
        SpacingArg::Quantile => GridSpacing::Quantile,
        SpacingArg::Uniform => GridSpacing::Uniform,
    };
    let grid = build_grid_with(&train, args.k, spacing)?;

    let architecture = if args.linear {
        Architecture::Linear
    } else {
        Architecture::Deep {
            hidden: args.hidden.clone(),
        }
    };
    let batch_size = match (args.batch_size, args.linear) {
        (Some(b), _) => BatchSize::Fixed(b),
        (None, true) => BatchSize::Full,
        (None, false) => BatchSize::Fixed(64),
    };
    let config = TrainConfig {
        learning_rate: args.lr,
        c1_head: args.c1,
        c2_encoder: args.c2,
        c_smooth: args.smooth,
        max_epochs: args.epochs,
        batch_size,
        seed: args.seed,
        patience: args.patience,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;

    let (bundle, history) = train_bundle(grid, encoding, &train, &valid, architecture, &config)?;
    bundle.save(&args.out)?;

    let mut log = String::from("epoch,train_loss,valid_loss\n");
    for h in &history {
        let _ = writeln!(log, "{},{:?},{:?}", h.epoch, h.train_loss, h.valid_loss);
    }
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    write_atomic(&log_path, log.as_bytes())?;

    emit(
        out,
        &format!(
            "trained on {} subjects ({} validation), K = {}, best epoch {} of {}, validation NLL {:.6}\nmodel written to {}\n",
            train.len(),
            valid.len(),
            bundle.grid.n_intervals(),
            bundle.meta.best_epoch,
            bundle.meta.final_epoch,
            bundle.meta.validation_loss,
            args.out.display()
        ),
    )
}

/// Schema implied by a fitted encoding, so prediction reads the same columns.
fn schema_of(encoding: &FeatureEncoding) -> Schema {
    use crate::dataset::{ColumnEncoding, ColumnKind};
    Schema {
        columns: encoding
            .columns
            .iter()
            .map(|c| {
                let kind = match c {
                    ColumnEncoding::Categorical { .. } => ColumnKind::Categorical,
                    ColumnEncoding::Continuous { .. } => ColumnKind::Continuous,
                    ColumnEncoding::Image { .. } => ColumnKind::Image,
                };
                (c.name().to_string(), kind)
            })
            .collect(),
        n_events: Some(encoding.n_events),
    }
}

/// Per-subject CIF table: `id`, then `cif_<e>_t<k>` for every event and grid
/// edge, then `risk_<e>`.
pub fn prediction_table(bundle: &ModelBundle, rows: &[RawRow]) -> crate::error::Result<String> {
    let n_events = bundle.n_events();
    let n_edges = bundle.grid.edges().len();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    for e in 1..=n_events {
        header.extend((1..=n_edges).map(|k| format!("cif_{e}_t{k}")));
    }
    header.extend((1..=n_events).map(|e| format!("risk_{e}")));
    wtr.write_record(&header)?;
    for row in rows {
        let cif = bundle.predict(&bundle.encoding.encode(row)?)?.cif();
        let mut rec = vec![row.id.clone()];
        for e in 1..=n_events {
            rec.extend(cif.event_curve(e)[..n_edges].iter().map(|v| format!("{v:?}")));
        }
        rec.extend(cif.lifetime_risk().iter().map(|v| format!("{v:?}")));
        wtr.write_record(&rec)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::io("<buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    let bundle = ModelBundle::load(&args.model)?;
    let rows = read_table(&args.data, &schema_of(&bundle.encoding), false)?;
    let table = prediction_table(&bundle, &rows)?;
    write_atomic(&args.out, table.as_bytes())?;
    emit(out, &format!("wrote predictions for {} subjects to {}\n", rows.len(), args.out.display()))
}

pub fn evaluate_bundle(
    bundle: &ModelBundle,
    data: &Path,
    tau: f64,
    negatives: AurocNegatives,
) -> crate::error::Result<EvaluationReport> {
    let rows = read_table(data, &schema_of(&bundle.encoding), true)?;
    let records = bundle.encoding.encode_records(&rows)?;
    let curves = records
        .iter()
        .map(|r| Ok(bundle.predict(&r.features)?.cif()))
        .collect::<crate::error::Result<Vec<_>>>()?;
    let outcomes: Vec<Outcome> = records.iter().map(|r| Outcome::new(r.time, r.event)).collect();
    EvaluationReport::compute(&curves, &bundle.grid, &outcomes, tau, negatives)
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(args.tau >= 0.0) {
        return Err(usage("--tau must be non-negative"));
    }
    let bundle = ModelBundle::load(&args.model)?;
    let negatives = if args.exclude_early_censored {
        AurocNegatives::ExcludeCensoredBeforeHorizon
    } else {
        AurocNegatives::AllOthers
    };
    let report = evaluate_bundle(&bundle, &args.data, args.tau, negatives)?;
    emit(out, &report.human())?;
    emit(out, &report.key_values())
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec: HazardSpec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let spec: HazardSpec = serde_json::from_str(&text).map_err(Error::from)?;
            spec.validate()?;
            spec
        }
        None => synthgen::reference_spec(),
    };
    let cohort = synthgen::generate(&spec, args.n, args.seed)?;
    synthgen::write_cohort(&args.out, &spec, &cohort, args.seed)?;
    let censored = cohort.iter().filter(|r| r.event == 0).count();
    emit(
        out,
        &format!(
            "wrote {} subjects ({} censored) to {}\n",
            cohort.len(),
            censored,
            args.out.display()
        ),
    )
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let report = gradcheck::default_suite(args.seed, args.points, args.corrupt)?;
    emit(out, &format!("{report}\n"))?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_NUMERIC,
            message: format!(
                "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
                report.max_error(),
                report.relative_tolerance
            ),
        })
    }
}
