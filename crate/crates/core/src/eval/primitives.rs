//! Built-in realizations of the catalog primitives.
//!
//! Every stage is fitted on training rows only and then applied to any rows. Fitted
//! state is exposed through `parameters()` so tests can prove that validation rows
//! never influence a fit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::PrimitiveSpec;

use super::dataset::{ColumnData, Dataset, Target};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimitiveError {
    #[error("no built-in realization for primitive {0:?}")]
    Unsupported(String),
    #[error("{stage}: missing values remain; an imputer must run first")]
    MissingValues { stage: String },
    #[error("{stage}: numeric blow-up during fitting")]
    NonFinite { stage: String },
    #[error("{stage}: training split holds a single class")]
    SingleClass { stage: String },
    #[error("{stage}: cannot fit on an empty training split")]
    EmptyFit { stage: String },
    #[error("{stage}: applied before fit")]
    NotFitted { stage: String },
    #[error("{stage}: expected {expected} columns, got {got}")]
    Width {
        stage: String,
        expected: usize,
        got: usize,
    },
    #[error("{stage} cannot solve this task")]
    WrongTask { stage: String },
}

/// Dense row-major matrix of features.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.data[r * self.cols + c])
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Matrix {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % self.cols.max(1), v))
            .collect();
        Matrix::new(self.rows, self.cols, data)
    }

    fn select_columns(&self, keep: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(keep.iter().map(|&c| row[c]));
        }
        Matrix::new(self.rows, keep.len(), data)
    }
}

/// One-hot encoding of categorical columns, vocabulary taken from training rows.
///
/// Numeric columns pass through with NaN for missing cells. An unseen or missing
/// category encodes as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    /// Per source column: `None` for numeric, sorted vocabulary for categorical.
    vocabularies: Vec<Option<Vec<String>>>,
}

impl FeatureEncoder {
    pub fn fit(dataset: &Dataset, train_rows: &[usize]) -> FeatureEncoder {
        let vocabularies = dataset
            .columns()
            .iter()
            .map(|c| match &c.data {
                ColumnData::Numeric(_) => None,
                ColumnData::Categorical(v) => {
                    let mut vocab: Vec<String> =
                        train_rows.iter().filter_map(|&r| v[r].clone()).collect();
                    vocab.sort();
                    vocab.dedup();
                    Some(vocab)
                }
            })
            .collect();
        FeatureEncoder { vocabularies }
    }

    pub fn width(&self) -> usize {
        self.vocabularies
            .iter()
            .map(|v| v.as_ref().map_or(1, Vec::len))
            .sum()
    }

    pub fn transform(&self, dataset: &Dataset, rows: &[usize]) -> Matrix {
        let width = self.width();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            for (col, vocab) in dataset.columns().iter().zip(&self.vocabularies) {
                match (&col.data, vocab) {
                    (ColumnData::Numeric(v), _) => data.push(v[r]),
                    (ColumnData::Categorical(v), Some(vocab)) => {
                        let hit = v[r].as_ref().and_then(|s| vocab.binary_search(s).ok());
                        data.extend((0..vocab.len()).map(|i| if Some(i) == hit { 1.0 } else { 0.0 }));
                    }
                    (ColumnData::Categorical(_), None) => unreachable!("vocabulary per categorical column"),
                }
            }
        }
        Matrix::new(rows.len(), width, data)
    }

    /// Vocabulary sizes, as a flat fingerprint of the fitted state.
    pub fn parameters(&self) -> Vec<f64> {
        self.vocabularies
            .iter()
            .map(|v| v.as_ref().map_or(-1.0, |v| v.len() as f64))
            .collect()
    }
}

/// Supervised target restricted to a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes { labels: Vec<usize>, classes: usize },
    Values(Vec<f64>),
}

impl Labels {
    pub fn select(target: &Target, rows: &[usize]) -> Labels {
        match target {
            Target::Classes { labels, names } => Labels::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                classes: names.len(),
            },
            Target::Values(v) => Labels::Values(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { labels, .. } => labels.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn as_f64(&self, i: usize) -> f64 {
        match self {
            Labels::Classes { labels, .. } => labels[i] as f64,
            Labels::Values(v) => v[i],
        }
    }
}

/// A fitted non-estimator stage.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedTransform {
    /// Replace NaN in column `c` with `fill[c]`.
    Impute { fill: Vec<f64> },
    /// `(x - offset[c]) * factor[c]`.
    Affine { offset: Vec<f64>, factor: Vec<f64> },
    Identity { width: usize },
    Select { keep: Vec<usize>, width: usize },
}

impl FittedTransform {
    fn input_width(&self) -> usize {
        match self {
            FittedTransform::Impute { fill } => fill.len(),
            FittedTransform::Affine { offset, .. } => offset.len(),
            FittedTransform::Identity { width } | FittedTransform::Select { width, .. } => *width,
        }
    }

    pub fn apply(&self, stage: &str, x: &Matrix) -> Result<Matrix, PrimitiveError> {
        if x.cols() != self.input_width() {
            return Err(PrimitiveError::Width {
                stage: stage.to_string(),
                expected: self.input_width(),
                got: x.cols(),
            });
        }
        Ok(match self {
            FittedTransform::Impute { fill } => {
                x.map_columns(|c, v| if v.is_nan() { fill[c] } else { v })
            }
            FittedTransform::Affine { offset, factor } => {
                x.map_columns(|c, v| (v - offset[c]) * factor[c])
            }
            FittedTransform::Identity { .. } => x.clone(),
            FittedTransform::Select { keep, .. } => x.select_columns(keep),
        })
    }

    pub fn parameters(&self) -> Vec<f64> {
        match self {
            FittedTransform::Impute { fill } => fill.clone(),
            FittedTransform::Affine { offset, factor } => {
                offset.iter().chain(factor).copied().collect()
            }
            FittedTransform::Identity { width } => vec![*width as f64],
            FittedTransform::Select { keep, width } => std::iter::once(*width as f64)
                .chain(keep.iter().map(|&k| k as f64))
                .collect(),
        }
    }
}

fn present(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values.filter(|v| !v.is_nan()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn abs_correlation(x: &[f64], y: &Labels) -> f64 {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = (0..x.len()).map(|i| y.as_f64(i)).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, &a) in x.iter().enumerate() {
        let b = y.as_f64(i);
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).abs()
    }
}

/// Fits a clean/transform/select primitive. Warnings (such as an all-missing column
/// imputed with 0) are appended to `warnings`.
pub fn fit_transform_stage(
    spec: &PrimitiveSpec,
    x: &Matrix,
    y: &Labels,
    warnings: &mut Vec<String>,
) -> Result<FittedTransform, PrimitiveError> {
    let stage = spec.id.as_str();
    let width = x.cols();
    let is_imputer = matches!(stage, "mean-imputer" | "median-imputer" | "constant-imputer");
    if !is_imputer && x.has_missing() {
        return Err(PrimitiveError::MissingValues {
            stage: stage.to_string(),
        });
    }
    if x.rows() == 0 {
        return Err(PrimitiveError::EmptyFit {
            stage: stage.to_string(),
        });
    }
    let fitted = match stage {
        "mean-imputer" | "median-imputer" | "constant-imputer" => {
            let constant = spec.default_f64("fill", 0.0);
            let fill = (0..width)
                .map(|c| {
                    let vals = present(x.column(c));
                    if stage == "constant-imputer" {
                        constant
                    } else if vals.is_empty() {
                        warnings.push(format!("{stage}: column {c} has no values, imputing 0"));
                        0.0
                    } else if stage == "mean-imputer" {
                        mean(&vals)
                    } else {
                        median(vals)
                    }
                })
                .collect();
            FittedTransform::Impute { fill }
        }
        "standard-scaler" => {
            let mut offset = Vec::with_capacity(width);
            let mut factor = Vec::with_capacity(width);
            for c in 0..width {
                let vals: Vec<f64> = x.column(c).collect();
                let sd = population_var(&vals).sqrt();
                offset.push(mean(&vals));
                factor.push(if sd > 0.0 { 1.0 / sd } else { 1.0 });
            }
            FittedTransform::Affine { offset, factor }
        }
        "minmax-scaler" => {
            let mut offset = Vec::with_capacity(width);
            let mut factor = Vec::with_capacity(width);
            for c in 0..width {
                let lo = x.column(c).fold(f64::INFINITY, f64::min);
                let hi = x.column(c).fold(f64::NEG_INFINITY, f64::max);
                offset.push(lo);
                factor.push(if hi > lo { 1.0 / (hi - lo) } else { 0.0 });
            }
            FittedTransform::Affine { offset, factor }
        }
        "identity-transform" => FittedTransform::Identity { width },
        "variance-threshold" => {
            let threshold = spec.default_f64("threshold", 1e-8);
            let keep = (0..width)
                .filter(|&c| population_var(&x.column(c).collect::<Vec<_>>()) >= threshold)
                .collect();
            FittedTransform::Select { keep, width }
        }
        "top-k-target-correlation" => {
            let k = (spec.default_f64("k", 10.0).max(0.0) as usize).min(width);
            let mut scored: Vec<(usize, f64)> = (0..width)
                .map(|c| (c, abs_correlation(&x.column(c).collect::<Vec<_>>(), y)))
                .collect();
            // Highest |corr| first; ties keep the lower column index.
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut keep: Vec<usize> = scored.into_iter().take(k).map(|(c, _)| c).collect();
            keep.sort_unstable();
            FittedTransform::Select { keep, width }
        }
        other => return Err(PrimitiveError::Unsupported(other.to_string())),
    };
    Ok(fitted)
}

pub fn is_transform_realized(id: &str) -> bool {
    matches!(
        id,
        "mean-imputer"
            | "median-imputer"
            | "constant-imputer"
            | "standard-scaler"
            | "minmax-scaler"
            | "identity-transform"
            | "variance-threshold"
            | "top-k-target-correlation"
    )
}

pub fn is_estimator_realized(id: &str) -> bool {
    matches!(id, "sgd-linear" | "gaussian-nb" | "majority-class")
}

/// A fitted estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedEstimator {
    /// One weight vector (last entry is the bias) per output: a single logistic or
    /// linear model, or one one-vs-rest logistic model per class.
    Linear {
        models: Vec<Vec<f64>>,
        regression: bool,
    },
    GaussianNb {
        log_priors: Vec<f64>,
        means: Vec<Vec<f64>>,
        vars: Vec<Vec<f64>>,
    },
    Majority { class: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot_bias(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

struct SgdSettings {
    epochs: usize,
    eta0: f64,
    decay: f64,
    l2: f64,
}

/// Plain per-sample SGD with `eta_t = eta0 / (1 + decay * t)`.
fn sgd_fit(x: &Matrix, targets: &[f64], logistic: bool, cfg: &SgdSettings, seed: u64) -> Vec<f64> {
    let d = x.cols();
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = x.row(i);
            let z = dot_bias(&w, row);
            let pred = if logistic { sigmoid(z) } else { z };
            let g = pred - targets[i];
            let eta = cfg.eta0 / (1.0 + cfg.decay * t as f64);
            for j in 0..d {
                w[j] -= eta * (g * row[j] + cfg.l2 * w[j]);
            }
            w[d] -= eta * g;
            t += 1;
        }
    }
    w
}

pub fn fit_estimator(
    spec: &PrimitiveSpec,
    x: &Matrix,
    y: &Labels,
    seed: u64,
) -> Result<FittedEstimator, PrimitiveError> {
    let stage = spec.id.as_str();
    if x.has_missing() {
        return Err(PrimitiveError::MissingValues {
            stage: stage.to_string(),
        });
    }
    if x.rows() == 0 {
        return Err(PrimitiveError::EmptyFit {
            stage: stage.to_string(),
        });
    }
    let fitted = match (stage, y) {
        ("sgd-linear", _) => {
            let cfg = SgdSettings {
                epochs: spec.default_f64("epochs", 50.0) as usize,
                eta0: spec.default_f64("eta0", 0.1),
                decay: spec.default_f64("decay", 0.01),
                l2: spec.default_f64("l2", 1e-4),
            };
            let (models, regression) = match y {
                Labels::Values(v) => (vec![sgd_fit(x, v, false, &cfg, seed)], true),
                Labels::Classes { labels, classes } if *classes == 2 => {
                    let t: Vec<f64> = labels.iter().map(|&l| (l == 1) as u8 as f64).collect();
                    (vec![sgd_fit(x, &t, true, &cfg, seed)], false)
                }
                Labels::Classes { labels, classes } => {
                    let models = (0..*classes)
                        .map(|k| {
                            let t: Vec<f64> = labels.iter().map(|&l| (l == k) as u8 as f64).collect();
                            sgd_fit(x, &t, true, &cfg, seed.wrapping_add(k as u64))
                        })
                        .collect();
                    (models, false)
                }
            };
            if models.iter().flatten().any(|w| !w.is_finite()) {
                return Err(PrimitiveError::NonFinite {
                    stage: stage.to_string(),
                });
            }
            FittedEstimator::Linear { models, regression }
        }
        ("gaussian-nb", Labels::Classes { labels, classes }) => {
            let floor = spec.default_f64("var_floor", 1e-9);
            let mut counts = vec![0usize; *classes];
            for &l in labels {
                counts[l] += 1;
            }
            if counts.iter().filter(|&&c| c > 0).count() < 2 {
                return Err(PrimitiveError::SingleClass {
                    stage: stage.to_string(),
                });
            }
            let n = labels.len() as f64;
            let d = x.cols();
            let mut log_priors = Vec::with_capacity(*classes);
            let mut means = Vec::with_capacity(*classes);
            let mut vars = Vec::with_capacity(*classes);
            for k in 0..*classes {
                let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
                if rows.is_empty() {
                    log_priors.push(f64::NEG_INFINITY);
                    means.push(vec![0.0; d]);
                    vars.push(vec![1.0; d]);
                    continue;
                }
                log_priors.push((rows.len() as f64 / n).ln());
                let mut m = vec![0.0; d];
                let mut v = vec![0.0; d];
                for c in 0..d {
                    let vals: Vec<f64> = rows.iter().map(|&r| x.get(r, c)).collect();
                    m[c] = mean(&vals);
                    v[c] = population_var(&vals).max(floor);
                }
                means.push(m);
                vars.push(v);
            }
            FittedEstimator::GaussianNb {
                log_priors,
                means,
                vars,
            }
        }
        ("majority-class", Labels::Classes { labels, classes }) => {
            let mut counts = vec![0usize; *classes];
            for &l in labels {
                counts[l] += 1;
            }
            // max_by_key keeps the last maximum; scan for the first instead.
            let best = counts.iter().copied().max().unwrap_or(0);
            let class = counts.iter().position(|&c| c == best).unwrap_or(0);
            FittedEstimator::Majority { class }
        }
        ("gaussian-nb" | "majority-class", Labels::Values(_)) => {
            return Err(PrimitiveError::WrongTask {
                stage: stage.to_string(),
            })
        }
        (other, _) => return Err(PrimitiveError::Unsupported(other.to_string())),
    };
    Ok(fitted)
}

impl FittedEstimator {
    pub fn predict(&self, x: &Matrix) -> Predictions {
        match self {
            FittedEstimator::Linear { models, regression } => {
                if *regression {
                    return Predictions::Values(
                        (0..x.rows()).map(|r| dot_bias(&models[0], x.row(r))).collect(),
                    );
                }
                if models.len() == 1 {
                    return Predictions::Classes(
                        (0..x.rows())
                            .map(|r| (dot_bias(&models[0], x.row(r)) > 0.0) as usize)
                            .collect(),
                    );
                }
                Predictions::Classes(
                    (0..x.rows())
                        .map(|r| argmax(models.iter().map(|w| dot_bias(w, x.row(r)))))
                        .collect(),
                )
            }
            FittedEstimator::GaussianNb {
                log_priors,
                means,
                vars,
            } => Predictions::Classes(
                (0..x.rows())
                    .map(|r| {
                        let row = x.row(r);
                        argmax((0..log_priors.len()).map(|k| {
                            let ll: f64 = row
                                .iter()
                                .zip(&means[k])
                                .zip(&vars[k])
                                .map(|((&v, &m), &s2)| {
                                    -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + (v - m) * (v - m) / s2)
                                })
                                .sum();
                            log_priors[k] + ll
                        }))
                    })
                    .collect(),
            ),
            FittedEstimator::Majority { class } => Predictions::Classes(vec![*class; x.rows()]),
        }
    }

    pub fn parameters(&self) -> Vec<f64> {
        match self {
            FittedEstimator::Linear { models, .. } => models.iter().flatten().copied().collect(),
            FittedEstimator::GaussianNb {
                log_priors,
                means,
                vars,
            } => log_priors
                .iter()
                .chain(means.iter().flatten())
                .chain(vars.iter().flatten())
                .copied()
                .collect(),
            FittedEstimator::Majority { class } => vec![*class as f64],
        }
    }
}

/// Index of the largest value; the first one wins ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
