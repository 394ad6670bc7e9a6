//! `pipeforge benchmark`: engine vs SGD baseline vs budget-matched random search.

use std::io::Write;
use std::sync::Arc;

use pipeforge_core::eval::{CountingEnv, Environment, BASELINE_PIPELINE};
use pipeforge_core::sampler::{random_search, PipelineSampler};
use pipeforge_core::selfplay::{derive_seed, Sampling};
use pipeforge_core::{play_game, GameSetup};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::setup::{config_setups, create_dir, load_config, load_net, say, write_file};
use crate::{usage, BenchmarkArgs, CliError};

/// Mean and sample standard deviation of repeated measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, values }
    }

    fn cell(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub task: String,
    pub repeats: usize,
    pub engine: Summary,
    pub baseline_sgd: Summary,
    pub random: Summary,
    /// Distinct pipelines evaluated by the engine in each repeat.
    pub engine_evaluations: Vec<usize>,
    /// Distinct pipelines evaluated by random search in each repeat.
    pub random_evaluations: Vec<usize>,
}

pub fn run(args: BenchmarkArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let repeats = args.repeats.unwrap_or(cfg.repeats);
    if repeats == 0 {
        return Err(usage("repeats must be >= 1"));
    }
    let catalog = Arc::new(cfg.load_catalog().map_err(usage)?);
    let checkpoint = args
        .checkpoint
        .clone()
        .or_else(|| cfg.checkpoint.clone())
        .ok_or_else(|| usage("benchmark needs a checkpoint (--checkpoint or the config's \"checkpoint\")"))?;
    let net = load_net(&checkpoint, &catalog)?;
    let setups = config_setups(&cfg, &catalog)?;
    let search = cfg.search_config();
    search.validate().map_err(usage)?;
    let baseline = catalog.resolve(&BASELINE_PIPELINE).map_err(usage)?;

    let mut rows = Vec::with_capacity(setups.len());
    for (d, setup) in setups.iter().enumerate() {
        let sampler = PipelineSampler::new(&catalog, setup.task.kind());
        let (mut engine, mut random, mut base) = (Vec::new(), Vec::new(), Vec::new());
        let (mut engine_n, mut random_n) = (Vec::new(), Vec::new());
        for r in 0..repeats {
            let seed = derive_seed(cfg.seed, &[d as u64, r as u64]);
            let counted = Arc::new(CountingEnv::new(Arc::clone(&setup.env)));
            let engine_setup = GameSetup {
                env: counted.clone(),
                ..setup.clone()
            };
            let run_search = pipeforge_core::SearchConfig { seed, ..search };
            let trace = play_game(&net, &catalog, &engine_setup, &run_search, cfg.move_budget, Sampling::Greedy, seed)
                .map_err(|e| CliError::Failed(format!("{}: search failed: {e}", setup.name)))?;
            let budget = counted.distinct();
            engine.push(trace.outcome.evaluation);
            engine_n.push(budget);

            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
            let (best, n) = random_search(&sampler, setup.env.as_ref(), budget, &mut rng);
            random.push(best);
            random_n.push(n);
            base.push(setup.env.evaluate(&baseline).e);
        }
        rows.push(BenchmarkRow {
            dataset: setup.name.clone(),
            task: setup.task.kind().to_string(),
            repeats,
            engine: Summary::of(engine),
            baseline_sgd: Summary::of(base),
            random: Summary::of(random),
            engine_evaluations: engine_n,
            random_evaluations: random_n,
        });
    }

    create_dir(&args.out_dir)?;
    let jsonl: String = rows
        .iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect();
    let path = args.out_dir.join("benchmark.jsonl");
    write_file(&path, &jsonl)?;

    let width = rows.iter().map(|r| r.dataset.chars().count()).max().unwrap_or(0).max(7);
    say(
        out,
        format_args!("{:<width$}  {:<17}  {:<17}  {:<17}  evals", "dataset", "engine", "baseline_sgd", "random"),
    )?;
    for r in &rows {
        let evals = r.engine_evaluations.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("/");
        say(
            out,
            format_args!(
                "{:<width$}  {:<17}  {:<17}  {:<17}  {evals}",
                r.dataset,
                r.engine.cell(),
                r.baseline_sgd.cell(),
                r.random.cell()
            ),
        )?;
    }
    say(out, format_args!("results: {}", path.display()))
}
