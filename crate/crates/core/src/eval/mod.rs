//! The "real world" side of the game: datasets, meta-features, pipeline realization and
//! cross-validated scoring, plus a client for out-of-process evaluators.

pub mod cv;
pub mod dataset;
pub mod external;
pub mod meta;
pub mod primitives;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::catalog::Pipeline;

pub use cv::{
    baseline_sgd, evaluate_pipeline, fit_fold, fold_assignment, fold_splits, CrossValidationEnv,
    EvaluationCache, FittedPipeline, BASELINE_PIPELINE, DEFAULT_FOLDS,
};
pub use dataset::{Column, ColumnData, ColumnKind, Dataset, DatasetError, Target, MISSING_MARKERS};
pub use external::{ExternalEnv, ExternalError, ExternalEvaluator, DEFAULT_TIMEOUT};
pub use meta::meta_features;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    InvalidPipeline,
    RuntimeFailure,
}

impl EvalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalStatus::Ok => "ok",
            EvalStatus::InvalidPipeline => "invalid_pipeline",
            EvalStatus::RuntimeFailure => "runtime_failure",
        }
    }
}

/// Outcome of evaluating one pipeline. `e` is in `[0, 1]` and is 0 whenever the
/// status is not ok.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub e: f64,
    pub raw_metric: f64,
    pub fold_scores: Vec<f64>,
    pub status: EvalStatus,
    pub wall_time: f64,
    pub message: Option<String>,
    pub warnings: Vec<String>,
}

impl EvaluationResult {
    pub fn failure(status: EvalStatus, message: impl Into<String>, started: Instant) -> EvaluationResult {
        debug_assert_ne!(status, EvalStatus::Ok);
        EvaluationResult {
            e: 0.0,
            raw_metric: 0.0,
            fold_scores: Vec::new(),
            status,
            wall_time: started.elapsed().as_secs_f64(),
            message: Some(message.into()),
            warnings: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }
}

/// Anything that can score a committed pipeline with a reward in `[0, 1]`.
///
/// Implementations must be pure with respect to the pipeline: the same pipeline always
/// yields the same result. Failures are reported through the result status, never by
/// panicking.
pub trait Environment: Send + Sync {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult;
}

impl<E: Environment + ?Sized> Environment for &E {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        (**self).evaluate(pipeline)
    }
}

impl<E: Environment + ?Sized> Environment for std::sync::Arc<E> {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        (**self).evaluate(pipeline)
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        (**self).evaluate(pipeline)
    }
}

/// Wrapper that records the distinct pipelines evaluated through it.
pub struct CountingEnv<E> {
    inner: E,
    seen: std::sync::Mutex<std::collections::HashSet<Pipeline>>,
}

impl<E: Environment> CountingEnv<E> {
    pub fn new(inner: E) -> CountingEnv<E> {
        CountingEnv {
            inner,
            seen: std::sync::Mutex::new(std::collections::HashSet::new()),
        }
    }

    /// Number of distinct pipelines evaluated so far.
    pub fn distinct(&self) -> usize {
        self.seen.lock().expect("counter lock").len()
    }
}

impl<E: Environment> Environment for CountingEnv<E> {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        self.seen.lock().expect("counter lock").insert(pipeline.clone());
        self.inner.evaluate(pipeline)
    }
}
