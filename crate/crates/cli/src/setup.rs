//! Shared loading: configs with flag overrides, catalogs, networks and game setups.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use pipeforge_core::eval::{meta_features, Dataset, ExternalEnv, ExternalEvaluator, DEFAULT_TIMEOUT};
use pipeforge_core::{Catalog, ExperimentConfig, GameSetup, NetParams, TaskSpec};

use crate::{io_err, usage, CliError, Overrides};

/// Environment variable holding the command line of an external evaluator.
pub const EVALUATOR_ENV: &str = "PIPEFORGE_EVALUATOR";

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path).map_err(usage)?;
    apply(&mut cfg, overrides);
    Ok(cfg)
}

pub fn apply(cfg: &mut ExperimentConfig, overrides: &Overrides) {
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(s) = overrides.simulations {
        cfg.simulations = s;
    }
    if let Some(f) = overrides.folds {
        cfg.folds = f;
    }
}

pub fn load_net(path: &Path, catalog: &Catalog) -> Result<NetParams, CliError> {
    NetParams::load_checkpoint(path, catalog).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn load_dataset(path: &Path, task: &TaskSpec) -> Result<Dataset, CliError> {
    Dataset::load(path, task).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn load_task(path: &Path) -> Result<TaskSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    TaskSpec::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// `data/iris.csv` → `data/iris.task.json`.
pub fn sibling_task_path(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dataset.with_file_name(format!("{stem}.task.json"))
}

/// Game setup for one dataset: the external evaluator when one is configured in the
/// environment, the built-in cross-validation backend otherwise.
pub fn game_setup(
    catalog: &Arc<Catalog>,
    path: &Path,
    task: &TaskSpec,
    folds: usize,
    seed: u64,
) -> Result<GameSetup, CliError> {
    let dataset = Arc::new(load_dataset(path, task)?);
    match std::env::var(EVALUATOR_ENV) {
        Ok(command) if !command.trim().is_empty() => {
            let client = ExternalEvaluator::spawn(&command, DEFAULT_TIMEOUT)
                .map_err(|e| usage(format!("external evaluator: {e}")))?;
            let env = ExternalEnv::new(client, Arc::clone(catalog), path.to_path_buf(), task.clone(), folds, seed);
            Ok(GameSetup {
                name: dataset.name().to_string(),
                meta: meta_features(&dataset),
                task: task.clone(),
                env: Arc::new(env),
            })
        }
        _ => Ok(GameSetup::from_dataset(Arc::clone(catalog), dataset, task.clone(), folds, seed)),
    }
}

pub fn config_setups(cfg: &ExperimentConfig, catalog: &Arc<Catalog>) -> Result<Vec<GameSetup>, CliError> {
    cfg.datasets
        .iter()
        .map(|d| game_setup(catalog, &d.path, &d.task, cfg.folds, cfg.seed))
        .collect()
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Writes one line of command output.
pub fn say(out: &mut dyn std::io::Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| usage(format!("stdout: {e}")))
}
