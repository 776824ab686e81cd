//! Experiment orchestration: k-fold cross-validation, exhaustive grid search,
//! `(a, lambda)` sensitivity sweeps and corruption robustness tables.
//!
//! Every model is trained by the same NAG loop; baselines trained this way
//! are labelled `(NAG)` in outputs.

use std::cmp::Ordering;
use std::io::Write;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_scaler, inject_label_noise, inject_outliers, CorruptionMode, CorruptionRecord, Dataset,
    FoldPlan, Scaler,
};
use crate::error::{Error, Result};
use crate::kernel::{cross_kernel, gram_matrix, KernelSpec};
use crate::loss::LossSpec;
use crate::seed;
use crate::trainer::{fit_precomputed, label_of, TrainerConfig};

/// A model family evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    #[serde(rename = "roboss")]
    RoBoSS,
    Hinge,
    Pinball,
    TruncatedHinge { delta: f64 },
    TruncatedPinball { delta1: f64, delta2: f64 },
}

impl ModelSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::RoBoSS => "RoBoSS-SVM",
            ModelSpec::Hinge => "Hinge-SVM (NAG)",
            ModelSpec::Pinball => "Pinball-SVM (NAG)",
            ModelSpec::TruncatedHinge { .. } => "TruncatedHinge-SVM (NAG, non-reference training path)",
            ModelSpec::TruncatedPinball { .. } => {
                "TruncatedPinball-SVM (NAG, non-reference training path)"
            }
        }
    }

    /// Whether this family is trained the way it was originally proposed.
    /// Truncated losses were designed for CCCP, not gradient descent.
    pub fn is_reference_training_path(&self) -> bool {
        !matches!(
            self,
            ModelSpec::TruncatedHinge { .. } | ModelSpec::TruncatedPinball { .. }
        )
    }

    pub fn parse(name: &str) -> Result<ModelSpec> {
        match name {
            "roboss" => Ok(ModelSpec::RoBoSS),
            "hinge" => Ok(ModelSpec::Hinge),
            "pinball" => Ok(ModelSpec::Pinball),
            "truncated-hinge" => Ok(ModelSpec::TruncatedHinge { delta: 1.0 }),
            "truncated-pinball" => Ok(ModelSpec::TruncatedPinball {
                delta1: 1.0,
                delta2: 0.25,
            }),
            other => Err(Error::Invalid(format!("unknown model `{other}`"))),
        }
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub c: f64,
    pub sigma: f64,
    pub loss: LossSpec,
}

impl HyperParams {
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::Gaussian { sigma: self.sigma }
    }

    pub fn trainer_config(&self, base: &TrainerConfig) -> TrainerConfig {
        TrainerConfig {
            c: self.c,
            loss: self.loss,
            kernel: self.kernel(),
            ..*base
        }
    }

    /// Tie-break order: smaller C, then sigma, then a, then lambda, then tau.
    fn tie_key(&self) -> [f64; 5] {
        let (a, lambda, tau) = match self.loss {
            LossSpec::RoBoSS { a, lambda } => (a, lambda, 0.0),
            LossSpec::Pinball { tau } | LossSpec::TruncatedPinball { tau, .. } => (0.0, 0.0, tau),
            _ => (0.0, 0.0, 0.0),
        };
        [self.c, self.sigma, a, lambda, tau]
    }

    fn tie_cmp(&self, other: &Self) -> Ordering {
        self.tie_key()
            .iter()
            .zip(other.tie_key().iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// `{10^i : i = lo..=hi}`.
pub fn powers_of_ten(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|i| format!("1e{i}").parse().expect("valid literal")).collect()
}

/// `start, start + step, ..., stop` computed as `k * step` to avoid drift.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 0.5).floor() as i64 + 1;
    (0..count.max(0))
        .map(|k| {
            let v = start + k as f64 * step;
            // snap to the decimal grid (e.g. 0.30000000000000004 -> 0.3)
            (v * 1e10).round() / 1e10
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub a_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
}

impl GridSpec {
    /// The full default search grids. Note `a = 0` is listed but invalid; it is
    /// dropped by [`GridSpec::validated`].
    pub fn full_default() -> Self {
        GridSpec {
            c_grid: powers_of_ten(-6, 6),
            sigma_grid: powers_of_ten(-6, 6),
            a_grid: linear_grid(0.0, 5.0, 0.1),
            lambda_grid: linear_grid(0.1, 2.0, 0.1),
            tau_grid: vec![0.0, 0.3, 0.5, 0.7, 0.9],
        }
    }

    /// A single-point grid.
    pub fn single(c: f64, sigma: f64, a: f64, lambda: f64, tau: f64) -> Self {
        GridSpec {
            c_grid: vec![c],
            sigma_grid: vec![sigma],
            a_grid: vec![a],
            lambda_grid: vec![lambda],
            tau_grid: vec![tau],
        }
    }

    /// Drops non-positive `a` values (with a warning) and rejects empty or
    /// non-finite grids.
    pub fn validated(&self) -> Result<GridSpec> {
        let mut out = self.clone();
        let before = out.a_grid.len();
        out.a_grid.retain(|&a| a > 0.0);
        if out.a_grid.len() != before {
            warn!("dropped {} non-positive value(s) from a_grid", before - out.a_grid.len());
        }
        let named = [
            ("c_grid", &out.c_grid),
            ("sigma_grid", &out.sigma_grid),
            ("a_grid", &out.a_grid),
            ("lambda_grid", &out.lambda_grid),
            ("tau_grid", &out.tau_grid),
        ];
        for (name, grid) in named {
            if grid.is_empty() {
                return Err(Error::Invalid(format!("{name} is empty after validation")));
            }
            if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("{name} contains {v}")));
            }
        }
        Ok(out)
    }

    /// Every grid point relevant to `model`, in enumeration order.
    pub fn candidates(&self, model: ModelSpec) -> Vec<HyperParams> {
        let losses: Vec<LossSpec> = match model {
            ModelSpec::RoBoSS => self
                .a_grid
                .iter()
                .flat_map(|&a| self.lambda_grid.iter().map(move |&lambda| LossSpec::RoBoSS { a, lambda }))
                .collect(),
            ModelSpec::Hinge => vec![LossSpec::Hinge],
            ModelSpec::Pinball => self.tau_grid.iter().map(|&tau| LossSpec::Pinball { tau }).collect(),
            ModelSpec::TruncatedHinge { delta } => vec![LossSpec::TruncatedHinge { delta }],
            ModelSpec::TruncatedPinball { delta1, delta2 } => self
                .tau_grid
                .iter()
                .map(|&tau| LossSpec::TruncatedPinball { tau, delta1, delta2 })
                .collect(),
        };
        let mut out = Vec::with_capacity(self.c_grid.len() * self.sigma_grid.len() * losses.len());
        for &c in &self.c_grid {
            for &sigma in &self.sigma_grid {
                for &loss in &losses {
                    out.push(HyperParams { c, sigma, loss });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    /// Divide by `k`.
    #[default]
    Population,
    /// Divide by `k - 1`.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Use features as given (normalize the whole dataset beforehand).
    #[default]
    AsGiven,
    /// Fit `[-1, 1]` scaling on each training fold and apply it to the test fold.
    TrainFold,
}

/// Corruption applied to the training portion of every fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    pub rate: f64,
    pub factor: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    /// NAG constants and base seed; `c`, `loss` and `kernel` come from the grid.
    pub trainer: TrainerConfig,
    pub std: StdConvention,
    pub scaling: Scaling,
    pub corruption: Option<CorruptionSpec>,
    /// Time the best-parameter refit.
    pub measure_time: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            trainer: TrainerConfig::default(),
            std: StdConvention::Population,
            scaling: Scaling::AsGiven,
            corruption: None,
            measure_time: true,
        }
    }
}

/// `100 (TP + TN) / n`.
pub fn accuracy(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Invalid("accuracy of an empty prediction set".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

pub fn mean_std(values: &[f64], convention: StdConvention) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let denom = match convention {
        StdConvention::Population => k,
        StdConvention::Sample => (k - 1.0).max(1.0),
    };
    (mean, (ss / denom).sqrt())
}

/// Train/test split of one fold after scaling and corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldView {
    pub train: Dataset,
    pub test: Dataset,
    pub record: Option<CorruptionRecord>,
}

/// Materializes every fold of `plan`. Scaling (when per-fold) is fitted on
/// the clean training portion; corruption then touches training rows only.
pub fn fold_views(ds: &Dataset, plan: &FoldPlan, opts: &CvOptions) -> Result<Vec<FoldView>> {
    if plan.assignments.len() != ds.len() {
        return Err(Error::Shape {
            expected: ds.len(),
            actual: plan.assignments.len(),
        });
    }
    (0..plan.k)
        .map(|fold| {
            let mut train = ds.subset(&plan.train_indices(fold));
            let mut test = ds.subset(&plan.test_indices(fold));
            if train.is_empty() || test.is_empty() {
                return Err(Error::Invalid(format!("fold {fold} is empty")));
            }
            if opts.scaling == Scaling::TrainFold {
                let scaler = Scaler::fit(&train.features)?;
                train = apply_scaler(&train, &scaler)?;
                test = apply_scaler(&test, &scaler)?;
            }
            let mut record = None;
            if let Some(spec) = opts.corruption {
                let fold_seed = seed::derive(spec.seed, &[fold as u64]);
                let (corrupted, rec) = match spec.mode {
                    CorruptionMode::Outliers => inject_outliers(&train, spec.rate, spec.factor, fold_seed)?,
                    CorruptionMode::LabelNoise => inject_label_noise(&train, spec.rate, fold_seed)?,
                };
                train = corrupted;
                record = Some(rec);
            }
            Ok(FoldView { train, test, record })
        })
        .collect()
}

/// Kernel matrices of one fold, built once per kernel width.
struct PreparedFold {
    gram: crate::kernel::KernelMatrix,
    cross: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    y_test: Vec<f64>,
}

fn prepare(views: &[FoldView], kernel: KernelSpec) -> Result<Vec<PreparedFold>> {
    views
        .iter()
        .map(|v| {
            Ok(PreparedFold {
                gram: gram_matrix(kernel, &v.train.features)?,
                cross: cross_kernel(kernel, &v.test.features, &v.train.features)?,
                y_train: v.train.labels.clone(),
                y_test: v.test.labels.clone(),
            })
        })
        .collect()
}

fn fold_accuracy(fold: &PreparedFold, config: &TrainerConfig) -> Result<f64> {
    let outcome = fit_precomputed(config, &fold.gram, &fold.y_train)?;
    let preds: Vec<f64> = fold
        .cross
        .iter()
        .map(|row| label_of(row.iter().zip(&outcome.beta).map(|(k, b)| b * k).sum()))
        .collect();
    accuracy(&preds, &fold.y_test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub mean: f64,
    pub std: f64,
    pub per_fold: Vec<f64>,
}

fn evaluate(folds: &[PreparedFold], params: &HyperParams, opts: &CvOptions) -> Result<CvOutcome> {
    let base = params.trainer_config(&opts.trainer);
    let per_fold = folds
        .iter()
        .enumerate()
        .map(|(f, fold)| {
            let config = TrainerConfig {
                seed: seed::derive(opts.trainer.seed, &[f as u64]),
                ..base
            };
            fold_accuracy(fold, &config)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&per_fold, opts.std);
    Ok(CvOutcome { mean, std, per_fold })
}

/// Trains on each fold's complement and tests on the fold.
pub fn cross_validate(
    ds: &Dataset,
    params: &HyperParams,
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<CvOutcome> {
    let views = fold_views(ds, plan, opts)?;
    let folds = prepare(&views, params.kernel())?;
    evaluate(&folds, params, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub model: String,
    pub best_params: HyperParams,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Wall-clock seconds of the best-parameter refit, Gram matrix excluded.
    pub train_time_seconds: Option<f64>,
    pub per_fold_accuracies: Vec<f64>,
    pub corruption: Option<CorruptionSpec>,
}

/// All grid points with their cross-validation outcome, in candidate order.
fn evaluate_grid(
    ds: &Dataset,
    model: ModelSpec,
    grid: &GridSpec,
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<Vec<(HyperParams, CvOutcome)>> {
    let grid = grid.validated()?;
    let views = fold_views(ds, plan, opts)?;
    let candidates = grid.candidates(model);
    let mut scored = Vec::with_capacity(candidates.len());
    for &sigma in &grid.sigma_grid {
        let folds = prepare(&views, KernelSpec::Gaussian { sigma })?;
        let batch: Vec<_> = candidates
            .iter()
            .filter(|p| p.sigma.to_bits() == sigma.to_bits())
            .collect();
        let outcomes = batch
            .par_iter()
            .map(|p| evaluate(&folds, p, opts).map(|o| (**p, o)))
            .collect::<Result<Vec<_>>>()?;
        scored.extend(outcomes);
    }
    Ok(scored)
}

/// Highest mean accuracy; ties resolved by [`HyperParams`] tie order.
fn select_best(scored: &[(HyperParams, CvOutcome)]) -> Option<&(HyperParams, CvOutcome)> {
    scored.iter().min_by(|(pa, oa), (pb, ob)| {
        ob.mean
            .total_cmp(&oa.mean)
            .then_with(|| pa.tie_cmp(pb))
    })
}

/// Exhaustive grid search with cross-validation, then a timed refit of the
/// best parameters on all of `ds`.
pub fn grid_search(
    ds: &Dataset,
    model: ModelSpec,
    grid: &GridSpec,
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<RunResult> {
    let scored = evaluate_grid(ds, model, grid, plan, opts)?;
    let (best, outcome) = select_best(&scored)
        .cloned()
        .ok_or_else(|| Error::Invalid("grid has no candidates".into()))?;

    let train_time_seconds = if opts.measure_time {
        let full = match opts.scaling {
            Scaling::AsGiven => ds.clone(),
            Scaling::TrainFold => apply_scaler(ds, &Scaler::fit(&ds.features)?)?,
        };
        let config = best.trainer_config(&opts.trainer);
        let gram = gram_matrix(config.kernel, &full.features)?;
        let start = Instant::now();
        fit_precomputed(&config, &gram, &full.labels)?;
        Some(start.elapsed().as_secs_f64())
    } else {
        None
    };

    Ok(RunResult {
        dataset: ds.name.clone(),
        model: model.label().to_string(),
        best_params: best,
        mean_accuracy: outcome.mean,
        std_accuracy: outcome.std,
        train_time_seconds,
        per_fold_accuracies: outcome.per_fold,
        corruption: opts.corruption,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub lambda: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Cross-validated accuracy over an `(a, lambda)` grid with `C` and `sigma`
/// fixed, rows ordered by `a` then `lambda`.
pub fn sensitivity_sweep(
    ds: &Dataset,
    c: f64,
    sigma: f64,
    a_grid: &[f64],
    lambda_grid: &[f64],
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<Vec<SweepRow>> {
    let grid = GridSpec {
        c_grid: vec![c],
        sigma_grid: vec![sigma],
        a_grid: a_grid.to_vec(),
        lambda_grid: lambda_grid.to_vec(),
        tau_grid: vec![0.0],
    };
    let scored = evaluate_grid(ds, ModelSpec::RoBoSS, &grid, plan, opts)?;
    Ok(scored
        .into_iter()
        .map(|(p, o)| {
            let LossSpec::RoBoSS { a, lambda } = p.loss else {
                unreachable!("RoBoSS grid yields RoBoSS losses")
            };
            SweepRow {
                a,
                lambda,
                mean_accuracy: o.mean,
                std_accuracy: o.std,
            }
        })
        .collect())
}

/// Accuracy per `(model, rate)` with the training folds corrupted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub mode: CorruptionMode,
    pub rates: Vec<f64>,
    /// One result per model per rate, grouped by model.
    pub rows: Vec<RunResult>,
    /// `(model label, mean accuracy over rates)`.
    pub averages: Vec<(String, f64)>,
}

/// Runs [`grid_search`] for every model at every corruption rate. A rate of
/// 0 is the uncorrupted control.
#[allow(clippy::too_many_arguments)]
pub fn robustness_suite(
    ds: &Dataset,
    models: &[(ModelSpec, GridSpec)],
    rates: &[f64],
    mode: CorruptionMode,
    factor: f64,
    corruption_seed: u64,
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<RobustnessTable> {
    let mut rows = Vec::new();
    let mut averages = Vec::new();
    for (model, grid) in models {
        let mut total = 0.0;
        for &rate in rates {
            let run_opts = CvOptions {
                corruption: (rate > 0.0).then_some(CorruptionSpec {
                    mode,
                    rate,
                    factor,
                    seed: corruption_seed,
                }),
                ..*opts
            };
            let result = grid_search(ds, *model, grid, plan, &run_opts)?;
            total += result.mean_accuracy;
            rows.push(result);
        }
        averages.push((model.label().to_string(), total / rates.len() as f64));
    }
    Ok(RobustnessTable {
        mode,
        rates: rates.to_vec(),
        rows,
        averages,
    })
}

pub const RESULTS_HEADER: &str =
    "dataset,model,mean_acc,std_acc,time_s,C,sigma,loss,a,lambda,tau,delta,delta1,delta2,corruption,rate,fold_accuracies";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with the fixed column order of [`RESULTS_HEADER`]; missing values are
/// empty and per-fold accuracies are `;`-separated.
pub fn write_results_csv(results: &[RunResult], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in results {
        let p = &r.best_params;
        let (mut a, mut lambda, mut tau, mut delta, mut delta1, mut delta2) =
            (None, None, None, None, None, None);
        match p.loss {
            LossSpec::RoBoSS { a: x, lambda: l } => {
                a = Some(x);
                lambda = Some(l);
            }
            LossSpec::Pinball { tau: t } => tau = Some(t),
            LossSpec::TruncatedHinge { delta: d } => delta = Some(d),
            LossSpec::TruncatedPinball { tau: t, delta1: d1, delta2: d2 } => {
                tau = Some(t);
                delta1 = Some(d1);
                delta2 = Some(d2);
            }
            LossSpec::Hinge | LossSpec::ZeroOne => {}
        }
        let (corruption, rate) = match r.corruption {
            Some(c) => (
                match c.mode {
                    CorruptionMode::Outliers => "outliers",
                    CorruptionMode::LabelNoise => "label_noise",
                },
                c.rate.to_string(),
            ),
            None => ("none", "0".to_string()),
        };
        let folds = r
            .per_fold_accuracies
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},\"{}\",{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.model,
            r.mean_accuracy,
            r.std_accuracy,
            r.train_time_seconds.map_or("NA".to_string(), |t| t.to_string()),
            p.c,
            p.sigma,
            p.loss.family_name(),
            opt(a),
            opt(lambda),
            opt(tau),
            opt(delta),
            opt(delta1),
            opt(delta2),
            corruption,
            rate,
            folds
        )?;
    }
    Ok(())
}
