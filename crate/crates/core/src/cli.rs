//! Command-line front end. Every command writes a JSON manifest next to its
//! primary output holding the resolved configuration and the SHA-256 of each
//! file written; passing that manifest back via `--config` reruns the
//! command with identical settings.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::data::{
    inject_label_noise, inject_outliers, invert_corruption, load_dataset, make_folds, normalize,
    write_csv, CorruptionMode, CorruptionRecord, DataFormat, Dataset,
};
use crate::error::{Error, Result};
use crate::harness::{
    grid_search, sensitivity_sweep, write_results_csv, CorruptionSpec, CvOptions, GridSpec,
    ModelSpec, Scaling, StdConvention,
};
use crate::kernel::KernelSpec;
use crate::loss::LossSpec;
use crate::stats::{against_reference, friedman_nemenyi, rank_models};
use crate::theory::{calibration_check, conditional_risk, ConditionalRiskQuery};
use crate::trainer::{fit, ModelDocument, TrainerConfig};

#[derive(Debug, Parser)]
#[command(name = "roboss", version, about = "Kernel SVM with the RoBoSS loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fit a model on a labelled dataset.
    Train(TrainArgs),
    /// Classify a dataset with a saved model.
    Predict(PredictArgs),
    /// Cross-validated grid search over one or more models.
    Grid(GridArgs),
    /// Inject outliers or label noise, or undo a recorded corruption.
    Corrupt(CorruptArgs),
    /// Friedman and Nemenyi tests over per-dataset accuracies or mean ranks.
    Stats(StatsArgs),
    /// Tabulate a loss and its derivative.
    LossCurve(LossCurveArgs),
    /// Tabulate the conditional risk over scores.
    Calibration(CalibrationArgs),
    /// Accuracy over an (a, lambda) grid.
    Sweep(SweepArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Grid(_) => "grid",
            Command::Corrupt(_) => "corrupt",
            Command::Stats(_) => "stats",
            Command::LossCurve(_) => "loss-curve",
            Command::Calibration(_) => "calibration",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Csv,
    Sparse,
}

impl From<FormatArg> for DataFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DataFormat::Csv,
            FormatArg::Sparse => DataFormat::SparseIndexValue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Roboss,
    Hinge,
    Pinball,
    TruncatedHinge,
    TruncatedPinball,
    ZeroOne,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LossArgs {
    #[arg(long, value_enum, default_value = "roboss")]
    pub loss: LossKind,
    /// RoBoSS shape parameter.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// RoBoSS bound.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Pinball slope on the correct side.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Truncated hinge cap.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta1: f64,
    #[arg(long, default_value_t = 0.25)]
    pub delta2: f64,
}

impl LossArgs {
    pub fn spec(&self) -> Result<LossSpec> {
        let spec = match self.loss {
            LossKind::Roboss => LossSpec::RoBoSS {
                a: self.a,
                lambda: self.lambda,
            },
            LossKind::Hinge => LossSpec::Hinge,
            LossKind::Pinball => LossSpec::Pinball { tau: self.tau },
            LossKind::TruncatedHinge => LossSpec::TruncatedHinge { delta: self.delta },
            LossKind::TruncatedPinball => LossSpec::TruncatedPinball {
                tau: self.tau,
                delta1: self.delta1,
                delta2: self.delta2,
            },
            LossKind::ZeroOne => LossSpec::ZeroOne,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Optimizer constants shared by training commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct NagArgs {
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub beta0: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub v0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.6)]
    pub momentum: f64,
    /// Defaults to 4 below 100 training samples and 32 otherwise.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
}

impl NagArgs {
    fn config(&self, c: f64, loss: LossSpec, kernel: KernelSpec, seed: u64) -> TrainerConfig {
        TrainerConfig {
            c,
            loss,
            kernel,
            beta0: self.beta0,
            v0: self.v0,
            alpha0: self.alpha0,
            eta: self.eta,
            momentum: self.momentum,
            batch_size: self.batch_size,
            max_iters: self.max_iters,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Where to write the model (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub nag: NagArgs,
    /// Train on features as given instead of scaling them onto [-1, 1].
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Predictions CSV: index, decision, label.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Roboss,
    Hinge,
    Pinball,
    TruncatedHinge,
    TruncatedPinball,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdArg {
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingArg {
    /// Scale the whole dataset once before splitting.
    Global,
    /// Fit scaling on each training fold.
    TrainFold,
    /// Use features as given.
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptKind {
    Outliers,
    LabelNoise,
}

impl From<CorruptKind> for CorruptionMode {
    fn from(k: CorruptKind) -> Self {
        match k {
            CorruptKind::Outliers => CorruptionMode::Outliers,
            CorruptKind::LabelNoise => CorruptionMode::LabelNoise,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Results CSV, one row per model.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "roboss")]
    pub models: Vec<ModelKind>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Use the full default search grids instead of the list flags below.
    #[arg(long)]
    pub full_grid: bool,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub c_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub sigma_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub a_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub tau_grid: Vec<f64>,
    /// Truncated hinge cap.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta1: f64,
    #[arg(long, default_value_t = 0.25)]
    pub delta2: f64,
    #[arg(long, value_enum, default_value = "population")]
    pub std: StdArg,
    #[arg(long, value_enum, default_value = "global")]
    pub scaling: ScalingArg,
    /// Corrupt the training portion of every fold.
    #[arg(long, value_enum)]
    pub corrupt: Option<CorruptKind>,
    #[arg(long, default_value_t = 0.1)]
    pub corrupt_rate: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub corrupt_factor: f64,
    /// Skip the timed refit and write `NA` in the time column.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub nag: NagArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorruptArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// Output dataset (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "outliers")]
    pub mode: CorruptKind,
    #[arg(long, default_value_t = 0.1)]
    pub rate: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub factor: f64,
    /// Where to write the corruption record (JSON); defaults to `<out>.record.json`.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Undo the corruption described by this record instead of injecting.
    #[arg(long)]
    pub invert: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    /// Results CSV with `dataset`, `model` and `mean_acc` columns.
    #[arg(long, conflicts_with = "mean_ranks")]
    pub results: Option<PathBuf>,
    /// Precomputed mean ranks, one per model.
    #[arg(long, value_delimiter = ',')]
    pub mean_ranks: Vec<f64>,
    /// Number of datasets behind `--mean-ranks`.
    #[arg(long)]
    pub datasets: Option<usize>,
    /// Model names for `--mean-ranks`.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Critical F value, when the built-in table lacks the degrees of freedom.
    #[arg(long)]
    pub critical_f: Option<f64>,
    /// Compare every model against this one.
    #[arg(long)]
    pub reference: Option<String>,
    /// Test summary CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Pairwise Nemenyi comparisons CSV.
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LossCurveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrationArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    /// P(y = +1 | x).
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub f_from: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub f_to: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub f_step: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub a_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub nag: NagArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

/// Flags every command accepts; not recorded in the manifest.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON object of flag values (or a manifest); explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest location; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Parses `argv`, runs the command, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Splices the contents of `--config FILE` into the argument list, skipping
/// keys that are also given explicitly.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    let mut explicit = BTreeSet::new();
    let mut i = 0;
    while i < strs.len() {
        let arg = &strs[i];
        if let Some(flag) = arg.strip_prefix("--") {
            let (name, inline) = match flag.split_once('=') {
                Some((n, v)) => (n, Some(v.to_string())),
                None => (flag, None),
            };
            if name == "config" {
                config_path = inline.or_else(|| strs.get(i + 1).cloned());
                if config_path.is_none() {
                    break;
                }
            }
            explicit.insert(name.to_string());
        }
        i += 1;
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    let command = strs.get(1).cloned().unwrap_or_default();
    let object = match &doc {
        Value::Object(map) if map.contains_key("config") => {
            if let Some(Value::String(recorded)) = map.get("command") {
                if *recorded != command {
                    return Err(Error::Invalid(format!(
                        "{path}: manifest is for `{recorded}`, not `{command}`"
                    )));
                }
            }
            match map.get("config") {
                Some(Value::Object(c)) => c.clone(),
                _ => return Err(Error::Invalid(format!("{path}: `config` is not an object"))),
            }
        }
        Value::Object(map) => map.clone(),
        _ => return Err(Error::Invalid(format!("{path}: expected a JSON object"))),
    };
    let mut extra = Vec::new();
    for (key, value) in object {
        let flag = key.replace('_', "-");
        if explicit.contains(&flag) || flag == "config" {
            continue;
        }
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => extra.push(format!("--{flag}")),
            Value::Array(items) => {
                if !items.is_empty() {
                    let joined: Vec<String> = items.iter().map(scalar_text).collect::<Result<_>>()?;
                    extra.push(format!("--{flag}={}", joined.join(",")));
                }
            }
            other => extra.push(format!("--{flag}={}", scalar_text(&other)?)),
        }
    }
    let mut out: Vec<OsString> = argv[..2.min(argv.len())].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(argv.into_iter().skip(2));
    Ok(out)
}

fn scalar_text(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(Error::Invalid(format!("unsupported config value {other}"))),
    }
}

/// Files produced by one command, kept in memory until all succeed.
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn new() -> Self {
        Outputs(Vec::new())
    }

    fn add(&mut self, path: &Path, bytes: Vec<u8>) {
        self.0.push((path.to_path_buf(), bytes));
    }

    fn write(self, command: &Command, seed: Option<u64>, manifest: PathBuf) -> Result<()> {
        let mut recorded = Vec::new();
        for (path, bytes) in &self.0 {
            write_file(path, bytes)?;
            recorded.push(json!({ "path": path, "sha256": sha256_hex(bytes) }));
        }
        let config = match serde_json::to_value(command)? {
            Value::Object(mut m) => m.remove(command.name()).unwrap_or(Value::Null),
            _ => Value::Null,
        };
        let doc = json!({
            "tool": "roboss",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "seed": seed,
            "config": config,
            "outputs": recorded,
        });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        write_file(&manifest, text.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_path(common: &CommonArgs, out: &Path) -> PathBuf {
    common.manifest.clone().unwrap_or_else(|| {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    })
}

fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(command, a),
        Command::Predict(a) => cmd_predict(command, a),
        Command::Grid(a) => cmd_grid(command, a),
        Command::Corrupt(a) => cmd_corrupt(command, a),
        Command::Stats(a) => cmd_stats(command, a),
        Command::LossCurve(a) => cmd_loss_curve(command, a),
        Command::Calibration(a) => cmd_calibration(command, a),
        Command::Sweep(a) => cmd_sweep(command, a),
    }
}

fn kernel_spec(kind: KernelKind, sigma: f64) -> KernelSpec {
    match kind {
        KernelKind::Gaussian => KernelSpec::Gaussian { sigma },
        KernelKind::Linear => KernelSpec::Linear,
    }
}

fn cmd_train(command: &Command, args: &TrainArgs) -> Result<()> {
    let loss = args.loss.spec()?;
    if loss == LossSpec::ZeroOne {
        return Err(Error::Unsupported("training with the zero-one loss".into()));
    }
    let config = args
        .nag
        .config(args.c, loss, kernel_spec(args.kernel, args.sigma), args.seed);
    config.validate()?;
    let raw = load_dataset(&args.data, args.format.into())?;
    let ds = if args.no_normalize { raw } else { normalize(&raw)? };
    let model = fit(&config, &ds.features, &ds.labels)?;
    let mut correct = 0usize;
    for (x, y) in ds.features.iter().zip(&ds.labels) {
        if model.predict(x)? == *y {
            correct += 1;
        }
    }
    let accuracy = 100.0 * correct as f64 / ds.len() as f64;
    println!(
        "final_objective={} train_accuracy={} iterations={}",
        model.final_objective, accuracy, model.iterations_run
    );
    let doc = ModelDocument::new(model, ds.scaler.clone());
    let mut text = doc.to_json()?;
    text.push('\n');
    let mut outputs = Outputs::new();
    outputs.add(&args.out, text.into_bytes());
    outputs.write(command, Some(args.seed), manifest_path(&args.common, &args.out))
}

fn read_model(path: &Path) -> Result<ModelDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelDocument::from_json(&text)
}

fn cmd_predict(command: &Command, args: &PredictArgs) -> Result<()> {
    let doc = read_model(&args.model)?;
    let ds = load_dataset(&args.data, args.format.into())?;
    let mut csv = String::from("index,decision,label\n");
    let mut correct = 0usize;
    for (i, (row, y)) in ds.features.iter().zip(&ds.labels).enumerate() {
        let x = match &doc.scaler {
            Some(s) => s.transform(row)?,
            None => row.clone(),
        };
        let decision = doc.model.decision_value(&x)?;
        let label = crate::trainer::label_of(decision);
        if label == *y {
            correct += 1;
        }
        csv.push_str(&format!("{i},{decision},{label}\n"));
    }
    println!("accuracy={}", 100.0 * correct as f64 / ds.len() as f64);
    let mut outputs = Outputs::new();
    outputs.add(&args.out, csv.into_bytes());
    outputs.write(command, None, manifest_path(&args.common, &args.out))
}

fn model_spec(kind: ModelKind, args: &GridArgs) -> ModelSpec {
    match kind {
        ModelKind::Roboss => ModelSpec::RoBoSS,
        ModelKind::Hinge => ModelSpec::Hinge,
        ModelKind::Pinball => ModelSpec::Pinball,
        ModelKind::TruncatedHinge => ModelSpec::TruncatedHinge { delta: args.delta },
        ModelKind::TruncatedPinball => ModelSpec::TruncatedPinball {
            delta1: args.delta1,
            delta2: args.delta2,
        },
    }
}

fn prepare_dataset(ds: Dataset, scaling: ScalingArg) -> Result<(Dataset, Scaling)> {
    Ok(match scaling {
        ScalingArg::Global => (normalize(&ds)?, Scaling::AsGiven),
        ScalingArg::TrainFold => (ds, Scaling::TrainFold),
        ScalingArg::None => (ds, Scaling::AsGiven),
    })
}

fn cmd_grid(command: &Command, args: &GridArgs) -> Result<()> {
    if args.models.is_empty() {
        return Err(Error::Invalid("no models given".into()));
    }
    let grid = if args.full_grid {
        GridSpec::full_default()
    } else {
        GridSpec {
            c_grid: args.c_grid.clone(),
            sigma_grid: args.sigma_grid.clone(),
            a_grid: args.a_grid.clone(),
            lambda_grid: args.lambda_grid.clone(),
            tau_grid: args.tau_grid.clone(),
        }
    };
    let trainer = args.nag.config(1.0, LossSpec::Hinge, KernelSpec::Linear, args.seed);
    let raw = load_dataset(&args.data, args.format.into())?;
    let (ds, scaling) = prepare_dataset(raw, args.scaling)?;
    let opts = CvOptions {
        trainer,
        std: match args.std {
            StdArg::Population => StdConvention::Population,
            StdArg::Sample => StdConvention::Sample,
        },
        scaling,
        corruption: args.corrupt.map(|mode| CorruptionSpec {
            mode: mode.into(),
            rate: args.corrupt_rate,
            factor: args.corrupt_factor,
            seed: args.seed,
        }),
        measure_time: !args.no_timing,
    };
    let plan = make_folds(ds.len(), args.folds, args.seed)?;
    let mut results = Vec::new();
    for &kind in &args.models {
        let spec = model_spec(kind, args);
        let result = grid_search(&ds, spec, &grid, &plan, &opts)?;
        info!("{}: {:.4}", result.model, result.mean_accuracy);
        println!("{} mean_acc={} std_acc={}", result.model, result.mean_accuracy, result.std_accuracy);
        results.push(result);
    }
    let mut buf = Vec::new();
    write_results_csv(&results, &mut buf).map_err(|e| Error::io(&args.out, e))?;
    let mut outputs = Outputs::new();
    outputs.add(&args.out, buf);
    outputs.write(command, Some(args.seed), manifest_path(&args.common, &args.out))
}

fn dataset_csv(ds: &Dataset, path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(ds, &mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn cmd_corrupt(command: &Command, args: &CorruptArgs) -> Result<()> {
    let ds = load_dataset(&args.data, args.format.into())?;
    let mut outputs = Outputs::new();
    if let Some(record_path) = &args.invert {
        let text = fs::read_to_string(record_path).map_err(|e| Error::io(record_path, e))?;
        let record: CorruptionRecord = serde_json::from_str(&text)?;
        let restored = invert_corruption(&ds, &record)?;
        println!("restored {} sample(s)", record.touched_indices.len());
        outputs.add(&args.out, dataset_csv(&restored, &args.out)?);
    } else {
        let (corrupted, record) = match args.mode {
            CorruptKind::Outliers => inject_outliers(&ds, args.rate, args.factor, args.seed)?,
            CorruptKind::LabelNoise => inject_label_noise(&ds, args.rate, args.seed)?,
        };
        println!("corrupted {} of {} sample(s)", record.touched_indices.len(), ds.len());
        let record_path = args.record.clone().unwrap_or_else(|| {
            let mut name = args.out.as_os_str().to_owned();
            name.push(".record.json");
            PathBuf::from(name)
        });
        outputs.add(&args.out, dataset_csv(&corrupted, &args.out)?);
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        outputs.add(&record_path, text.into_bytes());
    }
    outputs.write(command, Some(args.seed), manifest_path(&args.common, &args.out))
}

/// Accuracy table (datasets x models) from a results CSV, models in order of
/// first appearance.
fn read_accuracy_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: missing column `{name}`", path.display())))
    };
    let (di, mi, ai) = (column("dataset")?, column("model")?, column("mean_acc")?);
    let mut models: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let parse_line = line + 2;
        let acc: f64 = record[ai].trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: parse_line,
            message: format!("bad accuracy `{}`", &record[ai]),
        })?;
        let index_of = |list: &mut Vec<String>, key: &str| {
            list.iter().position(|k| k == key).unwrap_or_else(|| {
                list.push(key.to_string());
                list.len() - 1
            })
        };
        let d = index_of(&mut datasets, &record[di]);
        let m = index_of(&mut models, &record[mi]);
        cells.push((d, m, acc));
    }
    let mut table = vec![vec![f64::NAN; models.len()]; datasets.len()];
    for (d, m, acc) in cells {
        table[d][m] = acc;
    }
    for (d, row) in table.iter().enumerate() {
        if let Some(m) = row.iter().position(|v| v.is_nan()) {
            return Err(Error::Data(format!(
                "{}: dataset `{}` has no result for `{}`",
                path.display(),
                datasets[d],
                models[m]
            )));
        }
    }
    Ok((models, table))
}

fn cmd_stats(command: &Command, args: &StatsArgs) -> Result<()> {
    let (names, mean_ranks, d) = if let Some(path) = &args.results {
        let (names, table) = read_accuracy_table(path)?;
        let ranks = rank_models(&table)?;
        let d = ranks.datasets();
        (names, ranks.mean_ranks, d)
    } else {
        if args.mean_ranks.is_empty() {
            return Err(Error::Invalid("give --results or --mean-ranks".into()));
        }
        let d = args
            .datasets
            .ok_or_else(|| Error::Invalid("--mean-ranks needs --datasets".into()))?;
        let names = if args.models.is_empty() {
            (1..=args.mean_ranks.len()).map(|i| format!("M{i}")).collect()
        } else if args.models.len() == args.mean_ranks.len() {
            args.models.clone()
        } else {
            return Err(Error::Shape {
                expected: args.mean_ranks.len(),
                actual: args.models.len(),
            });
        };
        (names, args.mean_ranks.clone(), d)
    };
    let report = friedman_nemenyi(&mean_ranks, d, args.alpha, args.critical_f)?;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
    let summary = format!(
        "models,datasets,chi2,f_stat,df1,df2,critical_f,reject,alpha,cd\n{},{},{},{},{},{},{},{},{},{}\n",
        report.models,
        report.datasets,
        report.chi2,
        report.f_stat,
        report.dof.0,
        report.dof.1,
        opt(report.critical_f.map(|c| c.to_string())),
        opt(report.reject.map(|r| r.to_string())),
        report.alpha,
        report.cd
    );
    println!(
        "chi2={} f_stat={} cd={} reject={}",
        report.chi2,
        report.f_stat,
        report.cd,
        opt(report.reject.map(|r| r.to_string()))
    );
    let mut outputs = Outputs::new();
    outputs.add(&args.out, summary.into_bytes());

    if let Some(pairs_path) = &args.pairs_out {
        let mut csv = String::from("model_i,model_j,rank_i,rank_j,difference,cd,significant\n");
        let rows: Vec<(usize, usize, f64, bool)> = match &args.reference {
            Some(reference) => {
                let r = names
                    .iter()
                    .position(|n| n == reference)
                    .ok_or_else(|| Error::Invalid(format!("unknown reference model `{reference}`")))?;
                against_reference(&mean_ranks, r, report.cd)?
                    .into_iter()
                    .filter_map(|c| Some((c.model, r, c.rank_difference?.abs(), c.significant?)))
                    .collect()
            }
            None => report
                .pairwise
                .iter()
                .map(|p| (p.i, p.j, p.difference, p.significant))
                .collect(),
        };
        for (i, j, diff, sig) in rows {
            csv.push_str(&format!(
                "\"{}\",\"{}\",{},{},{},{},{}\n",
                names[i], names[j], mean_ranks[i], mean_ranks[j], diff, report.cd, sig
            ));
        }
        outputs.add(pairs_path, csv.into_bytes());
    }
    outputs.write(command, None, manifest_path(&args.common, &args.out))
}

/// `from + k * step` for `k = 0..` up to `to` (within half a step).
fn grid_points(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err(Error::Invalid(format!("need finite from < to, got {from}..{to}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Invalid(format!("step must be positive, got {step}")));
    }
    let count = ((to - from) / step + 0.5).floor() as usize + 1;
    Ok((0..count).map(|k| from + k as f64 * step).collect())
}

fn cmd_loss_curve(command: &Command, args: &LossCurveArgs) -> Result<()> {
    let loss = args.loss.spec()?;
    let mut csv = String::from("u,value,derivative\n");
    for u in grid_points(args.from, args.to, args.step)? {
        csv.push_str(&format!("{u},{},{}\n", loss.value(u)?, loss.derivative(u)?));
    }
    let mut outputs = Outputs::new();
    outputs.add(&args.out, csv.into_bytes());
    outputs.write(command, None, manifest_path(&args.common, &args.out))
}

fn cmd_calibration(command: &Command, args: &CalibrationArgs) -> Result<()> {
    let q = ConditionalRiskQuery {
        loss: args.loss.spec()?,
        p: args.p,
        f_grid: (args.f_from, args.f_to, args.f_step),
    };
    q.validate()?;
    let mut csv = String::from("f,risk\n");
    for f in q.grid() {
        csv.push_str(&format!("{f},{}\n", conditional_risk(&q, f)?));
    }
    let outcome = calibration_check(&q)?;
    println!(
        "f_star={} min_risk={} sign_matches_bayes={}",
        outcome.f_star,
        outcome.min_risk,
        outcome
            .sign_matches_bayes
            .map_or("degenerate".to_string(), |b| b.to_string())
    );
    let mut outputs = Outputs::new();
    outputs.add(&args.out, csv.into_bytes());
    outputs.write(command, None, manifest_path(&args.common, &args.out))
}

fn cmd_sweep(command: &Command, args: &SweepArgs) -> Result<()> {
    let raw = load_dataset(&args.data, args.format.into())?;
    let ds = normalize(&raw)?;
    let opts = CvOptions {
        trainer: args.nag.config(args.c, LossSpec::Hinge, KernelSpec::Linear, args.seed),
        measure_time: false,
        ..CvOptions::default()
    };
    let plan = make_folds(ds.len(), args.folds, args.seed)?;
    let rows = sensitivity_sweep(&ds, args.c, args.sigma, &args.a_grid, &args.lambda_grid, &plan, &opts)?;
    let mut csv = String::from("a,lambda,mean_acc,std_acc\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.a, r.lambda, r.mean_accuracy, r.std_accuracy));
    }
    let mut outputs = Outputs::new();
    outputs.add(&args.out, csv.into_bytes());
    outputs.write(command, Some(args.seed), manifest_path(&args.common, &args.out))
}
