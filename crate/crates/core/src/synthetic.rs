//! Evaluation environments with known reward functions, for tests and benchmarks of
//! the search itself.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Catalog, Pipeline};
use crate::eval::{Environment, EvalStatus, EvaluationResult};
use crate::game::MetaFeatures;
use crate::sampler::PipelineSampler;
use crate::selfplay::GameSetup;
use crate::task::{Metric, TaskKind, TaskSpec};

fn scored(e: f64) -> EvaluationResult {
    let e = if e.is_finite() { e.clamp(0.0, 1.0) } else { 0.0 };
    EvaluationResult {
        e,
        raw_metric: e,
        fold_scores: vec![e],
        status: EvalStatus::Ok,
        wall_time: 0.0,
        message: None,
        warnings: Vec::new(),
    }
}

/// Fixed reward per pipeline; pipelines missing from the table fail.
#[derive(Debug, Clone, Default)]
pub struct TableEnv {
    pub rewards: HashMap<Pipeline, f64>,
}

impl TableEnv {
    /// Independent uniform rewards in [0, 1) for every valid pipeline of the task, with
    /// the unique best pipeline found by enumeration.
    pub fn random(catalog: &Catalog, kind: TaskKind, seed: u64) -> (TableEnv, Pipeline) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rewards = HashMap::new();
        let mut best = (f64::NEG_INFINITY, Pipeline::empty());
        for p in PipelineSampler::new(catalog, kind).enumerate() {
            let e: f64 = rng.gen_range(0.0..1.0);
            if e > best.0 {
                best = (e, p.clone());
            }
            rewards.insert(p, e);
        }
        (TableEnv { rewards }, best.1)
    }
}

impl Environment for TableEnv {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        match self.rewards.get(pipeline) {
            Some(&e) => scored(e),
            None => EvaluationResult::failure(EvalStatus::InvalidPipeline, "not in reward table", Instant::now()),
        }
    }
}

/// Reward computed by a closure.
pub struct FnEnv<F>(pub F);

impl<F> Environment for FnEnv<F>
where
    F: Fn(&Pipeline) -> f64 + Send + Sync,
{
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        scored((self.0)(pipeline))
    }
}

/// Seeded reward with learnable structure: each primitive gets a weight in [0, 1); a
/// pipeline scores half its estimator's weight plus half the mean weight of its other
/// stages (or 0.25 with none), minus 0.05 per stage beyond three.
pub fn structured_reward(catalog: &Catalog, seed: u64) -> FnEnv<impl Fn(&Pipeline) -> f64 + Send + Sync> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..catalog.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    FnEnv(move |p: &Pipeline| {
        let ords = p.ordinals();
        let Some((&est, stages)) = ords.split_last() else {
            return 0.0;
        };
        let body = if stages.is_empty() {
            0.25
        } else {
            stages.iter().map(|&o| weights[o]).sum::<f64>() / stages.len() as f64
        };
        let excess = ords.len().saturating_sub(3) as f64;
        0.5 * weights[est] + 0.5 * body - 0.05 * excess
    })
}

/// Game setup for [`structured_reward`], with zero meta-features.
pub fn structured_setup(catalog: &Catalog, kind: TaskKind, seed: u64) -> GameSetup {
    let metric = if kind.is_classification() {
        Metric::Accuracy
    } else {
        Metric::RSquared
    };
    GameSetup {
        name: format!("synthetic-{seed}"),
        meta: MetaFeatures::zeros(),
        task: TaskSpec::new(kind, "y", metric).expect("metric chosen to match kind"),
        env: Arc::new(structured_reward(catalog, seed)),
    }
}
