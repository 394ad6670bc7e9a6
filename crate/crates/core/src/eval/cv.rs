//! Cross-validated evaluation of pipelines with the built-in primitives.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{validate_pipeline, Catalog, Category, Pipeline};
use crate::task::{Metric, TaskSpec};

use super::dataset::{Dataset, Target};
use super::primitives::{
    fit_estimator, fit_transform_stage, is_estimator_realized, is_transform_realized,
    FeatureEncoder, FittedEstimator, FittedTransform, Labels, PrimitiveError, Predictions,
};
use super::{Environment, EvalStatus, EvaluationResult};

pub const DEFAULT_FOLDS: usize = 5;

/// Ids of the fixed baseline: impute, standardize, linear SGD.
pub const BASELINE_PIPELINE: [&str; 3] = ["mean-imputer", "standard-scaler", "sgd-linear"];

/// Fold index for every row. Classification folds are stratified: rows of each class
/// are shuffled, classes are laid end to end, and position `i` goes to fold `i % k`.
/// That keeps fold sizes within one row of each other and every class within one row
/// of its proportional share.
pub fn fold_assignment(target: &Target, folds: usize, seed: u64) -> Vec<usize> {
    let n = target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match target {
        Target::Classes { labels, names } => {
            let mut order = Vec::with_capacity(n);
            for k in 0..names.len() {
                let mut rows: Vec<usize> = (0..n).filter(|&r| labels[r] == k).collect();
                rows.shuffle(&mut rng);
                order.extend(rows);
            }
            order
        }
        Target::Values(_) => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            rows
        }
    };
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % folds;
    }
    assignment
}

/// Per-fold row split derived from [`fold_assignment`].
pub fn fold_splits(target: &Target, folds: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let assignment = fold_assignment(target, folds, seed);
    (0..folds)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) =
                (0..assignment.len()).partition(|&r| assignment[r] == f);
            (train, valid)
        })
        .collect()
}

/// A pipeline fitted on one training split.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub encoder: FeatureEncoder,
    pub stages: Vec<(String, FittedTransform)>,
    pub estimator: (String, FittedEstimator),
    pub warnings: Vec<String>,
}

impl FittedPipeline {
    pub fn predict(&self, dataset: &Dataset, rows: &[usize]) -> Result<Predictions, PrimitiveError> {
        let mut x = self.encoder.transform(dataset, rows);
        for (id, stage) in &self.stages {
            x = stage.apply(id, &x)?;
        }
        Ok(self.estimator.1.predict(&x))
    }

    /// Fitted state of every stage, encoder first and estimator last.
    pub fn parameters(&self) -> Vec<Vec<f64>> {
        std::iter::once(self.encoder.parameters())
            .chain(self.stages.iter().map(|(_, s)| s.parameters()))
            .chain(std::iter::once(self.estimator.1.parameters()))
            .collect()
    }
}

/// Fits every stage of `pipeline` using only `train_rows`.
pub fn fit_fold(
    catalog: &Catalog,
    pipeline: &Pipeline,
    dataset: &Dataset,
    train_rows: &[usize],
    seed: u64,
) -> Result<FittedPipeline, PrimitiveError> {
    let (&est, stages) = pipeline
        .ordinals()
        .split_last()
        .ok_or_else(|| PrimitiveError::Unsupported("empty pipeline".to_string()))?;
    let encoder = FeatureEncoder::fit(dataset, train_rows);
    let y = Labels::select(dataset.target(), train_rows);
    let mut x = encoder.transform(dataset, train_rows);
    let mut fitted = Vec::with_capacity(stages.len());
    let mut warnings = Vec::new();
    for &o in stages {
        let spec = catalog
            .get(o)
            .ok_or_else(|| PrimitiveError::Unsupported(format!("#{o}")))?;
        let stage = fit_transform_stage(spec, &x, &y, &mut warnings)?;
        x = stage.apply(&spec.id, &x)?;
        fitted.push((spec.id.clone(), stage));
    }
    let spec = catalog
        .get(est)
        .ok_or_else(|| PrimitiveError::Unsupported(format!("#{est}")))?;
    let estimator = fit_estimator(spec, &x, &y, seed)?;
    Ok(FittedPipeline {
        encoder,
        stages: fitted,
        estimator: (spec.id.clone(), estimator),
        warnings,
    })
}

fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Macro F1 over the classes present in either the truth or the predictions.
fn f1_macro(truth: &[usize], pred: &[usize]) -> f64 {
    let mut classes: Vec<usize> = truth.iter().chain(pred).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let total: f64 = classes
        .iter()
        .map(|&k| {
            let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == k && p == k).count() as f64;
            let fp = truth.iter().zip(pred).filter(|&(&t, &p)| t != k && p == k).count() as f64;
            let fneg = truth.iter().zip(pred).filter(|&(&t, &p)| t == k && p != k).count() as f64;
            let denom = 2.0 * tp + fp + fneg;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    total / classes.len() as f64
}

/// Coefficient of determination; a constant truth scores 1 if matched exactly, else 0.
fn r_squared(truth: &[f64], pred: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// Raw metric value and its `[0, 1]` normalization.
fn score(metric: Metric, truth: &Labels, pred: &Predictions) -> Result<(f64, f64), String> {
    match (metric, truth, pred) {
        (Metric::Accuracy, Labels::Classes { labels, .. }, Predictions::Classes(p)) => {
            let a = accuracy(labels, p);
            Ok((a, a))
        }
        (Metric::F1Macro, Labels::Classes { labels, .. }, Predictions::Classes(p)) => {
            let f = f1_macro(labels, p);
            Ok((f, f))
        }
        (Metric::RSquared, Labels::Values(t), Predictions::Values(p)) => {
            let r2 = r_squared(t, p);
            if !r2.is_finite() {
                return Err("non-finite predictions".to_string());
            }
            Ok((r2, r2.clamp(0.0, 1.0)))
        }
        _ => Err(format!("metric {metric:?} does not match predictions")),
    }
}

/// Why a pipeline cannot be realized at all, if it cannot.
fn structural_problem(catalog: &Catalog, pipeline: &Pipeline, task: &TaskSpec) -> Option<String> {
    match validate_pipeline(catalog, pipeline) {
        Err(e) => return Some(e.to_string()),
        Ok(v) if !v.is_ok() => return Some(format!("grammar violation: {v:?}")),
        Ok(_) => {}
    }
    let last = pipeline.last()?;
    let spec = catalog.get(last)?;
    if spec.category != Category::Estimate {
        return Some("pipeline does not end with an estimator".to_string());
    }
    for &o in pipeline.ordinals() {
        let p = catalog.get(o)?;
        if !p.supports(task.kind()) {
            return Some(format!("{} does not support {}", p.id, task.kind()));
        }
        let realized = if p.category == Category::Estimate {
            is_estimator_realized(&p.id)
        } else {
            is_transform_realized(&p.id)
        };
        if !realized {
            return Some(format!("no built-in realization for {}", p.id));
        }
    }
    None
}

/// Seed of the estimator fit in fold `fold`.
fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64 + 1)
}

/// k-fold cross-validation of one pipeline. Never panics on bad pipelines or data;
/// failures come back as a non-ok status with `e = 0`.
pub fn evaluate_pipeline(
    catalog: &Catalog,
    pipeline: &Pipeline,
    dataset: &Dataset,
    task: &TaskSpec,
    folds: usize,
    seed: u64,
) -> EvaluationResult {
    let started = Instant::now();
    if pipeline.is_empty() {
        return EvaluationResult::failure(EvalStatus::InvalidPipeline, "empty pipeline", started);
    }
    if let Some(problem) = structural_problem(catalog, pipeline, task) {
        return EvaluationResult::failure(EvalStatus::InvalidPipeline, problem, started);
    }
    if folds < 2 || folds > dataset.n_rows() {
        return EvaluationResult::failure(
            EvalStatus::RuntimeFailure,
            format!("cannot split {} rows into {folds} folds", dataset.n_rows()),
            started,
        );
    }

    let mut raw = Vec::with_capacity(folds);
    let mut normalized = Vec::with_capacity(folds);
    let mut warnings = Vec::new();
    for (f, (train, valid)) in fold_splits(dataset.target(), folds, seed).into_iter().enumerate() {
        if train.is_empty() || valid.is_empty() {
            return EvaluationResult::failure(EvalStatus::RuntimeFailure, "degenerate fold", started);
        }
        let fitted = match fit_fold(catalog, pipeline, dataset, &train, fold_seed(seed, f)) {
            Ok(fitted) => fitted,
            Err(e) => {
                return EvaluationResult::failure(EvalStatus::RuntimeFailure, e.to_string(), started)
            }
        };
        warnings.extend(fitted.warnings.iter().cloned());
        let pred = match fitted.predict(dataset, &valid) {
            Ok(p) => p,
            Err(e) => {
                return EvaluationResult::failure(EvalStatus::RuntimeFailure, e.to_string(), started)
            }
        };
        let truth = Labels::select(dataset.target(), &valid);
        match score(task.metric(), &truth, &pred) {
            Ok((r, s)) => {
                raw.push(r);
                normalized.push(s);
            }
            Err(msg) => {
                return EvaluationResult::failure(EvalStatus::RuntimeFailure, msg, started)
            }
        }
    }
    let k = folds as f64;
    warnings.sort();
    warnings.dedup();
    EvaluationResult {
        e: normalized.iter().sum::<f64>() / k,
        raw_metric: raw.iter().sum::<f64>() / k,
        fold_scores: raw,
        status: EvalStatus::Ok,
        wall_time: started.elapsed().as_secs_f64(),
        message: None,
        warnings,
    }
}

/// The fixed impute → standardize → linear SGD baseline.
pub fn baseline_sgd(
    catalog: &Catalog,
    dataset: &Dataset,
    task: &TaskSpec,
    folds: usize,
    seed: u64,
) -> EvaluationResult {
    match catalog.resolve(&BASELINE_PIPELINE) {
        Ok(p) => evaluate_pipeline(catalog, &p, dataset, task, folds, seed),
        Err(e) => EvaluationResult::failure(EvalStatus::InvalidPipeline, e.to_string(), Instant::now()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    pipeline: Vec<String>,
    dataset: String,
    task: TaskSpec,
    folds: usize,
    seed: u64,
}

/// Thread-safe memo of evaluation results; may be shared by several environments.
#[derive(Debug, Default)]
pub struct EvaluationCache {
    entries: Mutex<HashMap<CacheKey, EvaluationResult>>,
}

impl EvaluationCache {
    pub fn new() -> EvaluationCache {
        EvaluationCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evaluation environment over one dataset and task using the built-in primitives.
pub struct CrossValidationEnv {
    catalog: Arc<Catalog>,
    dataset: Arc<Dataset>,
    task: TaskSpec,
    folds: usize,
    seed: u64,
    cache: Arc<EvaluationCache>,
    computed: AtomicUsize,
}

impl CrossValidationEnv {
    pub fn new(
        catalog: Arc<Catalog>,
        dataset: Arc<Dataset>,
        task: TaskSpec,
        folds: usize,
        seed: u64,
    ) -> CrossValidationEnv {
        CrossValidationEnv::with_cache(catalog, dataset, task, folds, seed, Arc::new(EvaluationCache::new()))
    }

    pub fn with_cache(
        catalog: Arc<Catalog>,
        dataset: Arc<Dataset>,
        task: TaskSpec,
        folds: usize,
        seed: u64,
        cache: Arc<EvaluationCache>,
    ) -> CrossValidationEnv {
        CrossValidationEnv {
            catalog,
            dataset,
            task,
            folds,
            seed,
            cache,
            computed: AtomicUsize::new(0),
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    /// Evaluations actually computed (cache misses) by this environment.
    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    /// Evaluation that bypasses the cache.
    pub fn evaluate_uncached(&self, pipeline: &Pipeline) -> EvaluationResult {
        evaluate_pipeline(&self.catalog, pipeline, &self.dataset, &self.task, self.folds, self.seed)
    }
}

impl Environment for CrossValidationEnv {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        let key = CacheKey {
            pipeline: self
                .catalog
                .ids(pipeline)
                .unwrap_or_else(|_| pipeline.ordinals().iter().map(|o| format!("#{o}")).collect()),
            dataset: self.dataset.content_hash().to_string(),
            task: self.task.clone(),
            folds: self.folds,
            seed: self.seed,
        };
        if let Some(hit) = self.cache.entries.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        // Computed outside the lock; a concurrent duplicate computes the same pure value.
        let result = self.evaluate_uncached(pipeline);
        self.computed.fetch_add(1, Ordering::Relaxed);
        self.cache
            .entries
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(result)
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_folds_partition_rows() {
        let labels: Vec<usize> = (0..23).map(|i| if i < 15 { 0 } else { 1 }).collect();
        let target = Target::Classes { labels: labels.clone(), names: vec!["a".into(), "b".into()] };
        let splits = fold_splits(&target, 5, 3);
        let mut seen = vec![0; 23];
        let sizes: Vec<usize> = splits.iter().map(|(_, v)| v.len()).collect();
        for (train, valid) in &splits {
            assert_eq!(train.len() + valid.len(), 23);
            for &r in valid {
                seen[r] += 1;
            }
            let ones = valid.iter().filter(|&&r| labels[r] == 1).count();
            // 8 rows of class 1 over 5 folds: 1 or 2 each.
            assert!((1..=2).contains(&ones));
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(fold_assignment(&target, 5, 3), fold_assignment(&target, 5, 3));
        assert_ne!(fold_assignment(&target, 5, 3), fold_assignment(&target, 5, 4));
    }

    #[test]
    fn metrics() {
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]), 0.75);
        // class 0: tp=2 fp=1 fn=0 -> 0.8; class 1: tp=1 fp=0 fn=1 -> 2/3
        let f = f1_macro(&[0, 1, 1, 0], &[0, 1, 0, 0]);
        assert!((f - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert!((r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0])).abs() < 1e-15);
        assert_eq!(r_squared(&[2.0, 2.0], &[2.0, 2.0]), 1.0);
    }
}
