//! `pipeforge search`: one greedy game on a dataset with a trained network.

use std::io::Write;
use std::sync::Arc;

use pipeforge_core::eval::BASELINE_PIPELINE;
use pipeforge_core::selfplay::Sampling;
use pipeforge_core::{play_game, Catalog, ExperimentConfig};

use crate::setup::{apply, create_dir, game_setup, load_net, load_task, say, sibling_task_path, write_file};
use crate::{usage, CliError, SearchArgs};

pub fn run(args: SearchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    apply(&mut cfg, &args.overrides);
    let catalog = match &args.catalog {
        Some(p) => Catalog::from_path(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => cfg.load_catalog().map_err(usage)?,
    };
    let catalog = Arc::new(catalog);
    let net = load_net(&args.checkpoint, &catalog)?;
    let task_path = args.task.clone().unwrap_or_else(|| sibling_task_path(&args.dataset));
    let task = load_task(&task_path)?;

    let search = cfg.search_config();
    search.validate().map_err(usage)?;
    let (folds, seed) = (cfg.folds, cfg.seed);

    let setup = game_setup(&catalog, &args.dataset, &task, folds, seed)?;
    let trace = play_game(&net, &catalog, &setup, &search, cfg.move_budget, Sampling::Greedy, seed)
        .map_err(|e| CliError::Failed(format!("search failed: {e}")))?;

    create_dir(&args.out_dir)?;
    let trace_path = args.out_dir.join(format!("search_{}.jsonl", setup.name));
    write_file(&trace_path, &trace.to_jsonl())?;

    let baseline = catalog
        .resolve(&BASELINE_PIPELINE)
        .map(|p| setup.env.evaluate(&p).e)
        .ok();
    say(out, format_args!("dataset: {} ({})", setup.name, task.kind()))?;
    say(out, format_args!("pipeline: [{}]", trace.outcome.final_pipeline.join(", ")))?;
    say(out, format_args!("e: {:.6} ({})", trace.outcome.evaluation, trace.outcome.status.as_str()))?;
    if let Some(b) = baseline {
        say(out, format_args!("baseline_sgd e: {b:.6}"))?;
    }
    say(out, format_args!("moves: {}", trace.moves.len()))?;
    say(out, format_args!("trace: {}", trace_path.display()))
}
