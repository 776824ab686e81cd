//! Datasets: loading, `[-1, 1]` scaling, fold plans, and corruption.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::check_rectangular;
use crate::seed::{self, Stream};

/// Binary classification data with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    /// Present iff the features have been scaled by [`normalize`].
    pub scaler: Option<Scaler>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        check_rectangular(&features)?;
        if features.len() != labels.len() {
            return Err(Error::Shape {
                expected: features.len(),
                actual: labels.len(),
            });
        }
        if let Some(v) = features.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value {v}")));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::Data(format!("label {l} is not -1 or +1")));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            scaler: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn is_normalized(&self) -> bool {
        self.scaler.is_some()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            scaler: self.scaler.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    /// `label idx:val idx:val ...` with 1-based indices.
    SparseIndexValue,
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match format {
        DataFormat::Csv => parse_csv(&text, path, name),
        DataFormat::SparseIndexValue => parse_sparse(&text, path, name),
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Comma-separated rows, label in the last column. A first row that does
/// not parse as numbers is treated as a header.
pub fn parse_csv(text: &str, path: &Path, name: String) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut lines = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(idx + 1, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if features.is_empty() && lines.is_empty() && idx == 0 => continue,
            Err(e) => return Err(parse_error(path, line, format!("not a number: {e}"))),
        };
        if values.len() < 2 {
            return Err(parse_error(path, line, "need at least one feature and a label"));
        }
        if let Some(first) = features.first().map(Vec::len) {
            if values.len() - 1 != first {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected {} columns, found {}", first + 1, values.len()),
                ));
            }
        }
        let (label, row) = values.split_last().expect("len >= 2");
        raw_labels.push(*label);
        features.push(row.to_vec());
        lines.push(line);
    }
    if features.is_empty() {
        return Err(Error::Data(format!("{}: no samples", path.display())));
    }
    let labels = map_labels(&raw_labels, &lines, path)?;
    Dataset::new(name, features, labels)
}

pub fn parse_sparse(text: &str, path: &Path, name: String) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels = Vec::new();
    let mut lines = Vec::new();
    let mut dim = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_error(path, line, format!("bad label `{label_tok}`")))?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(path, line, format!("expected idx:val, got `{tok}`")))?;
            let i: usize = i
                .parse()
                .map_err(|_| parse_error(path, line, format!("bad index `{i}`")))?;
            if i == 0 {
                return Err(parse_error(path, line, "indices are 1-based"));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| parse_error(path, line, format!("bad value `{v}`")))?;
            dim = dim.max(i);
            entries.push((i - 1, v));
        }
        rows.push(entries);
        raw_labels.push(label);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no samples", path.display())));
    }
    if dim == 0 {
        return Err(Error::Data(format!("{}: no features", path.display())));
    }
    let features = rows
        .into_iter()
        .map(|entries| {
            let mut x = vec![0.0; dim];
            for (i, v) in entries {
                x[i] = v;
            }
            x
        })
        .collect();
    let labels = map_labels(&raw_labels, &lines, path)?;
    Dataset::new(name, features, labels)
}

/// Accepts `{-1, +1}` as is and remaps `{0, 1}` with `0 -> -1`.
fn map_labels(raw: &[f64], lines: &[usize], path: &Path) -> Result<Vec<f64>> {
    if let Some((i, l)) = raw
        .iter()
        .enumerate()
        .find(|(_, &l)| l != 1.0 && l != -1.0 && l != 0.0)
    {
        return Err(parse_error(path, lines[i], format!("unsupported label {l}")));
    }
    let has_zero = raw.contains(&0.0);
    let has_minus = raw.contains(&-1.0);
    match (has_zero, has_minus) {
        (true, true) => Err(Error::Data(format!(
            "{}: mixed label alphabets {{0, 1}} and {{-1, +1}}",
            path.display()
        ))),
        (true, false) => Ok(raw.iter().map(|&l| if l == 0.0 { -1.0 } else { 1.0 }).collect()),
        _ => Ok(raw.to_vec()),
    }
}

/// Writes features then the label (`1` or `-1`), comma-separated, using the
/// shortest representation that round-trips each value.
pub fn write_csv(ds: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    for (row, label) in ds.features.iter().zip(&ds.labels) {
        let mut line = String::new();
        for v in row {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(if *label > 0.0 { "1" } else { "-1" });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Per-feature affine map onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Scaler {
    pub fn fit(features: &[Vec<f64>]) -> Result<Scaler> {
        let dim = check_rectangular(features)?;
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for row in features {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(Scaler { mins, maxs })
    }

    /// `2 (x - min) / (max - min) - 1`; constant features map to 0.
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mins.len() {
            return Err(Error::Shape {
                expected: self.mins.len(),
                actual: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    2.0 * (x - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Scales every feature of `ds` onto `[-1, 1]` and stores the scaler.
pub fn normalize(ds: &Dataset) -> Result<Dataset> {
    if ds.is_normalized() {
        return Err(Error::Invalid(format!(
            "dataset `{}` is already normalized",
            ds.name
        )));
    }
    let scaler = Scaler::fit(&ds.features)?;
    let mut out = apply_scaler(ds, &scaler)?;
    out.scaler = Some(scaler);
    Ok(out)
}

/// Applies a previously fitted scaler. Unseen extremes may fall outside
/// `[-1, 1]`.
pub fn apply_scaler(ds: &Dataset, scaler: &Scaler) -> Result<Dataset> {
    let features = ds
        .features
        .iter()
        .map(|row| scaler.transform(row))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: ds.name.clone(),
        features,
        labels: ds.labels.clone(),
        scaler: Some(scaler.clone()),
    })
}

/// Assignment of `n` samples to `k` disjoint folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Seeded shuffle followed by round-robin assignment.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::param("k", k as f64, "need at least 2 folds"));
    }
    if n < k {
        return Err(Error::param("k", k as f64, "cannot exceed the number of samples"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Folds, 0));
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    Outliers,
    LabelNoise,
}

/// Audit trail of one corruption pass, sufficient to undo it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub mode: CorruptionMode,
    pub rate: f64,
    pub n: usize,
    pub touched_indices: Vec<usize>,
    /// Outliers only: the feature altered for each touched sample.
    pub touched_features: Vec<usize>,
    /// Outliers only: the value before scaling. `x * f / f` does not always
    /// round back to `x`, so undoing restores these instead of dividing.
    pub original_values: Vec<f64>,
    pub factor: f64,
    pub seed: u64,
}

/// `round(rate * n)` with halves rounded up.
pub fn corruption_count(rate: f64, n: usize) -> usize {
    // The nudge keeps products such as 0.35 * 10 from landing just below .5.
    (rate * n as f64 + 0.5 + 1e-9).floor() as usize
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate < 1.0 {
        Ok(())
    } else {
        Err(Error::param("rate", rate, "must lie in (0, 1)"))
    }
}

/// Multiplies one random feature of `round(rate * n)` random samples by
/// `factor`.
pub fn inject_outliers(
    ds: &Dataset,
    rate: f64,
    factor: f64,
    seed: u64,
) -> Result<(Dataset, CorruptionRecord)> {
    check_rate(rate)?;
    if !(factor.is_finite() && factor != 0.0) {
        return Err(Error::param("factor", factor, "must be finite and non-zero"));
    }
    let n = ds.len();
    let dim = ds.dim();
    let count = corruption_count(rate, n);
    let mut rng = seed::rng(seed, Stream::Corruption, 0);
    let touched_indices = sample(&mut rng, n, count).into_vec();

    let mut out = ds.clone();
    let mut touched_features = Vec::with_capacity(count);
    let mut original_values = Vec::with_capacity(count);
    for &i in &touched_indices {
        let j = rng.gen_range(0..dim);
        original_values.push(out.features[i][j]);
        out.features[i][j] *= factor;
        touched_features.push(j);
    }
    let record = CorruptionRecord {
        mode: CorruptionMode::Outliers,
        rate,
        n,
        touched_indices,
        touched_features,
        original_values,
        factor,
        seed,
    };
    Ok((out, record))
}

/// Flips the labels of `round(rate * n)` random samples.
pub fn inject_label_noise(ds: &Dataset, rate: f64, seed: u64) -> Result<(Dataset, CorruptionRecord)> {
    check_rate(rate)?;
    let n = ds.len();
    let count = corruption_count(rate, n);
    let mut rng = seed::rng(seed, Stream::Corruption, 0);
    let touched_indices = sample(&mut rng, n, count).into_vec();
    let mut out = ds.clone();
    for &i in &touched_indices {
        out.labels[i] = -out.labels[i];
    }
    let record = CorruptionRecord {
        mode: CorruptionMode::LabelNoise,
        rate,
        n,
        touched_indices,
        touched_features: Vec::new(),
        original_values: Vec::new(),
        factor: 1.0,
        seed,
    };
    Ok((out, record))
}

/// Undoes a corruption pass described by `record`.
pub fn invert_corruption(ds: &Dataset, record: &CorruptionRecord) -> Result<Dataset> {
    if ds.len() != record.n {
        return Err(Error::Shape {
            expected: record.n,
            actual: ds.len(),
        });
    }
    let unique: BTreeSet<_> = record.touched_indices.iter().collect();
    if unique.len() != record.touched_indices.len()
        || record.touched_indices.iter().any(|&i| i >= ds.len())
    {
        return Err(Error::Data("corruption record has invalid indices".into()));
    }
    let mut out = ds.clone();
    match record.mode {
        CorruptionMode::LabelNoise => {
            for &i in &record.touched_indices {
                out.labels[i] = -out.labels[i];
            }
        }
        CorruptionMode::Outliers => {
            let count = record.touched_indices.len();
            if record.touched_features.len() != count || record.original_values.len() != count {
                return Err(Error::Data("corruption record is incomplete".into()));
            }
            for ((&i, &j), &orig) in record
                .touched_indices
                .iter()
                .zip(&record.touched_features)
                .zip(&record.original_values)
            {
                let current = out
                    .features[i]
                    .get_mut(j)
                    .ok_or_else(|| Error::Data(format!("record names missing feature {j}")))?;
                if current.to_bits() != (orig * record.factor).to_bits() {
                    return Err(Error::Data(format!(
                        "sample {i} feature {j} does not match the corruption record"
                    )));
                }
                *current = orig;
            }
        }
    }
    Ok(out)
}

/// Two Gaussian blobs centred at `(-separation/2, 0, ...)` (label -1) and
/// `(+separation/2, 0, ...)` (label +1), with noise clipped at
/// `3.5 * spread` per coordinate so the classes never overlap when
/// `separation > 7 * spread`. Labels alternate, starting with +1.
pub fn two_clusters(n: usize, dim: usize, separation: f64, spread: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || dim == 0 {
        return Err(Error::Invalid("need n >= 2 and dim >= 1".into()));
    }
    let noise = Normal::new(0.0, spread)
        .map_err(|_| Error::param("spread", spread, "must be finite and >= 0"))?;
    let clip = 3.5 * spread;
    let mut rng = seed::rng(seed, Stream::Synthetic, 0);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        let row = (0..dim)
            .map(|j| {
                let centre = if j == 0 { label * separation / 2.0 } else { 0.0 };
                centre + noise.sample(&mut rng).clamp(-clip, clip)
            })
            .collect();
        features.push(row);
        labels.push(label);
    }
    Dataset::new("two-clusters", features, labels)
}
