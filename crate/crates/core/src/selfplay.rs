//! Self-play: games played by search plus the current network, a replay buffer of their
//! moves, and the train-then-play iteration loop.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};
use crate::eval::{meta_features, CrossValidationEnv, Dataset, DatasetError, Environment, DEFAULT_FOLDS};
use crate::game::{apply_action, encode_state, ActionSpace, GameState, MetaFeatures, DEFAULT_MOVE_BUDGET};
use crate::mcts::{run_search, RootNoise, SearchConfig, SearchError};
use crate::net::{Hyper, NetError, NetParams, PolicyValue, TrainingExample};
use crate::task::TaskSpec;
use crate::trace::{GameStatus, GameTrace, MoveRecord, TraceOutcome};

/// Mixes a master seed with a path of integers (splitmix64 finalizer per step).
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Everything a game needs to know about one dataset.
#[derive(Clone)]
pub struct GameSetup {
    pub name: String,
    pub meta: MetaFeatures,
    pub task: TaskSpec,
    pub env: Arc<dyn Environment>,
}

impl GameSetup {
    /// Setup evaluated by the built-in cross-validation backend.
    pub fn from_dataset(
        catalog: Arc<Catalog>,
        dataset: Arc<Dataset>,
        task: TaskSpec,
        folds: usize,
        seed: u64,
    ) -> GameSetup {
        GameSetup {
            name: dataset.name().to_string(),
            meta: meta_features(&dataset),
            task: task.clone(),
            env: Arc::new(CrossValidationEnv::new(catalog, dataset, task, folds, seed)),
        }
    }
}

impl std::fmt::Debug for GameSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameSetup")
            .field("name", &self.name)
            .field("task", &self.task)
            .finish_non_exhaustive()
    }
}

/// How moves are chosen from the search policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Sample with temperature 1 before `tau_cutoff`, argmax afterwards.
    Schedule,
    /// Argmax throughout.
    Greedy,
}

/// Plays one game from the empty pipeline and evaluates its final pipeline once.
pub fn play_game(
    net: &dyn PolicyValue,
    catalog: &Catalog,
    setup: &GameSetup,
    search: &SearchConfig,
    move_budget: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<GameTrace, SearchError> {
    let space = ActionSpace::new(catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
    let mut state = GameState::with_budget(setup.meta, setup.task.clone(), move_budget);
    let mut moves = Vec::new();
    while !state.is_terminal() {
        let move_index = state.move_count();
        let cfg = SearchConfig {
            seed: derive_seed(seed, &[1, move_index as u64]),
            ..*search
        };
        let result = run_search(&state, catalog, net, &cfg, setup.env.as_ref())?;
        let pi = result.policy(1.0);
        let action = if sampling == Sampling::Greedy || move_index >= search.tau_cutoff {
            result.best_action()
        } else {
            let dist = WeightedIndex::new(&pi).map_err(|_| SearchError::Config("degenerate policy"))?;
            result.legal[dist.sample(&mut rng)]
        };
        moves.push(MoveRecord {
            move_number: move_index + 1,
            state_vec: encode_state(&state, catalog)?.values().to_vec(),
            legal: result.legal.clone(),
            pi,
            action,
        });
        state = apply_action(&state, catalog, &space.decode(action)?)?;
    }
    let (evaluation, status) = if state.committed() {
        let r = setup.env.evaluate(state.pipeline());
        if r.is_ok() {
            (r.e, GameStatus::Ok)
        } else {
            (0.0, GameStatus::FailedPipeline)
        }
    } else {
        (0.0, GameStatus::BudgetExhausted)
    };
    let final_pipeline = catalog
        .ids(state.pipeline())
        .expect("pipelines built by legal moves reference the catalog");
    Ok(GameTrace {
        dataset: setup.name.clone(),
        task: setup.task.clone(),
        moves,
        outcome: TraceOutcome {
            final_pipeline,
            evaluation,
            status,
        },
    })
}

/// Bounded FIFO of training examples. Each example keeps its insertion index.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<(u64, TrainingExample)>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total insertions so far.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Insertion index of the oldest surviving example.
    pub fn oldest_index(&self) -> Option<u64> {
        self.items.front().map(|(i, _)| *i)
    }

    /// Appends one example, evicting the oldest if full.
    pub fn push(&mut self, example: TrainingExample) -> Option<TrainingExample> {
        let evicted = if self.items.len() == self.capacity {
            self.items.pop_front().map(|(_, e)| e)
        } else {
            None
        };
        self.items.push_back((self.inserted, example));
        self.inserted += 1;
        evicted
    }

    pub fn extend(&mut self, examples: impl IntoIterator<Item = TrainingExample>) {
        for e in examples {
            self.push(e);
        }
    }

    pub fn get(&self, k: usize) -> Option<&TrainingExample> {
        self.items.get(k).map(|(_, e)| e)
    }

    /// `size` examples drawn uniformly with replacement.
    pub fn sample<R: Rng>(&self, rng: &mut R, size: usize) -> Vec<TrainingExample> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..size)
            .map(|_| self.items[rng.gen_range(0..self.items.len())].1.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSchedule {
    #[default]
    RoundRobin,
    Random,
}

/// Knobs of the self-play loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfPlayConfig {
    pub iterations: usize,
    pub games_per_iteration: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub search: SearchConfig,
    pub move_budget: usize,
    pub schedule: DatasetSchedule,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        SelfPlayConfig {
            iterations: 10,
            games_per_iteration: 20,
            train_steps: 200,
            batch_size: 32,
            buffer_capacity: 4096,
            search: SearchConfig::default(),
            move_budget: DEFAULT_MOVE_BUDGET,
            schedule: DatasetSchedule::RoundRobin,
            learning_rate: Hyper::default().learning_rate,
            seed: 0,
        }
    }
}

impl SelfPlayConfig {
    pub fn validate(&self) -> Result<(), SelfPlayError> {
        let bad = |m: &str| Err(SelfPlayError::Config(m.to_string()));
        if self.games_per_iteration == 0 {
            return bad("games_per_iteration must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be >= 1");
        }
        if self.move_budget == 0 {
            return bad("move_budget must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and >= 0");
        }
        self.search.validate().map_err(|e| SelfPlayError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SelfPlayError {
    #[error("invalid self-play config: {0}")]
    Config(String),
    #[error("iteration {iteration}: game failed: {source}")]
    Game {
        iteration: usize,
        #[source]
        source: SearchError,
    },
    #[error("iteration {iteration}: training failed: {source}")]
    Train {
        iteration: usize,
        #[source]
        source: NetError,
    },
    #[error("iteration {iteration}: cannot record results: {source}")]
    Sink {
        iteration: usize,
        #[source]
        source: std::io::Error,
    },
}

/// Which game of which iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRef {
    pub iteration: usize,
    pub game: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    /// 1-based.
    pub iteration: usize,
    pub games: usize,
    pub mean_e: f64,
    pub max_e: f64,
    pub loss_before: Option<f64>,
    pub loss_after: Option<f64>,
    pub best_e: f64,
    pub best_dataset: String,
    pub best_pipeline: Vec<String>,
    pub best_actions: Vec<usize>,
    pub best_game: GameRef,
}

#[derive(Debug, Clone)]
pub struct SelfPlayOutcome {
    pub net: NetParams,
    pub reports: Vec<IterationReport>,
}

/// Seed-ordered game index to dataset index.
fn pick_setup(schedule: DatasetSchedule, count: usize, seed: u64, iteration: usize, game: usize, games: usize) -> usize {
    match schedule {
        DatasetSchedule::RoundRobin => ((iteration - 1) * games + game) % count,
        DatasetSchedule::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3, iteration as u64, game as u64]));
            rng.gen_range(0..count)
        }
    }
}

/// Runs the play-train loop. `on_iteration` sees each report and its games as soon as
/// the iteration finishes, so a later failure leaves earlier output in place.
pub fn run_iterations<F>(
    catalog: &Catalog,
    setups: &[GameSetup],
    cfg: &SelfPlayConfig,
    initial: NetParams,
    mut on_iteration: F,
) -> Result<SelfPlayOutcome, SelfPlayError>
where
    F: FnMut(&IterationReport, &[GameTrace]) -> std::io::Result<()>,
{
    cfg.validate()?;
    if setups.is_empty() {
        return Err(SelfPlayError::Config("at least one dataset is required".to_string()));
    }
    let mut net = initial;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut reports: Vec<IterationReport> = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(f64, String, Vec<String>, Vec<usize>, GameRef)> = None;

    for iteration in 1..=cfg.iterations {
        let snapshot = net.clone();
        let games: Vec<Result<GameTrace, SearchError>> = (0..cfg.games_per_iteration)
            .into_par_iter()
            .map(|g| {
                let k = pick_setup(cfg.schedule, setups.len(), cfg.seed, iteration, g, cfg.games_per_iteration);
                let seed = derive_seed(cfg.seed, &[1, iteration as u64, g as u64]);
                play_game(&snapshot, catalog, &setups[k], &cfg.search, cfg.move_budget, Sampling::Schedule, seed)
            })
            .collect();
        let games = games
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| SelfPlayError::Game { iteration, source })?;

        for trace in &games {
            buffer.extend(trace.training_examples(catalog));
        }

        let train_err = |source| SelfPlayError::Train { iteration, source };
        let mut probe_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, iteration as u64, 0]));
        let probe = buffer.sample(&mut probe_rng, cfg.batch_size);
        let (loss_before, loss_after) = if probe.is_empty() {
            (None, None)
        } else {
            let before = net.loss(&probe).map_err(train_err)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, iteration as u64, 1]));
            for _ in 0..cfg.train_steps {
                let batch = buffer.sample(&mut rng, cfg.batch_size);
                net.train_step(&batch, cfg.learning_rate).map_err(train_err)?;
            }
            (Some(before), Some(net.loss(&probe).map_err(train_err)?))
        };

        let evals: Vec<f64> = games.iter().map(|t| t.outcome.evaluation).collect();
        let mean_e = evals.iter().sum::<f64>() / evals.len() as f64;
        let max_e = evals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (g, trace) in games.iter().enumerate() {
            let e = trace.outcome.evaluation;
            if best.as_ref().map_or(true, |b| e > b.0) {
                best = Some((
                    e,
                    trace.dataset.clone(),
                    trace.outcome.final_pipeline.clone(),
                    trace.actions(),
                    GameRef { iteration, game: g },
                ));
            }
        }
        let (best_e, best_dataset, best_pipeline, best_actions, best_game) =
            best.clone().expect("at least one game was played");
        let report = IterationReport {
            iteration,
            games: games.len(),
            mean_e,
            max_e,
            loss_before,
            loss_after,
            best_e,
            best_dataset,
            best_pipeline,
            best_actions,
            best_game,
        };
        on_iteration(&report, &games).map_err(|source| SelfPlayError::Sink { iteration, source })?;
        reports.push(report);
    }
    Ok(SelfPlayOutcome { net, reports })
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("dataset {path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub task: TaskSpec,
}

fn d_iterations() -> usize {
    10
}
fn d_games() -> usize {
    20
}
fn d_train_steps() -> usize {
    200
}
fn d_batch() -> usize {
    32
}
fn d_capacity() -> usize {
    4096
}
fn d_tau_cutoff() -> usize {
    4
}
fn d_simulations() -> usize {
    100
}
fn d_c() -> f64 {
    1.0
}
fn d_move_budget() -> usize {
    DEFAULT_MOVE_BUDGET
}
fn d_folds() -> usize {
    DEFAULT_FOLDS
}
fn d_embed() -> usize {
    16
}
fn d_hidden() -> usize {
    64
}
fn d_reg() -> f64 {
    1e-4
}
fn d_lr() -> f64 {
    0.01
}
fn d_repeats() -> usize {
    3
}

/// Experiment config file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalog document; the built-in catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub max_len: Option<usize>,
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_games")]
    pub games_per_iteration: usize,
    #[serde(default = "d_train_steps")]
    pub train_steps: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "d_tau_cutoff")]
    pub tau_cutoff: usize,
    #[serde(default = "d_simulations")]
    pub simulations: usize,
    #[serde(default = "d_c")]
    pub c: f64,
    #[serde(default)]
    pub root_noise: bool,
    #[serde(default = "d_move_budget")]
    pub move_budget: usize,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default)]
    pub schedule: DatasetSchedule,
    #[serde(default = "d_embed")]
    pub embedding_dim: usize,
    #[serde(default = "d_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "d_reg")]
    pub alpha: f64,
    #[serde(default = "d_reg")]
    pub beta: f64,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    /// Network used by `benchmark`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Benchmark repeats per dataset.
    #[serde(default = "d_repeats")]
    pub repeats: usize,
}

impl Default for ExperimentConfig {
    /// Default knobs with no datasets.
    fn default() -> Self {
        ExperimentConfig {
            catalog: None,
            max_len: None,
            datasets: Vec::new(),
            seed: 0,
            iterations: d_iterations(),
            games_per_iteration: d_games(),
            train_steps: d_train_steps(),
            batch_size: d_batch(),
            buffer_capacity: d_capacity(),
            tau_cutoff: d_tau_cutoff(),
            simulations: d_simulations(),
            c: d_c(),
            root_noise: false,
            move_budget: d_move_budget(),
            folds: d_folds(),
            schedule: DatasetSchedule::default(),
            embedding_dim: d_embed(),
            hidden_dim: d_hidden(),
            alpha: d_reg(),
            beta: d_reg(),
            learning_rate: d_lr(),
            checkpoint: None,
            repeats: d_repeats(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.datasets.is_empty() {
            return Err(ConfigError::Parse("datasets must list at least one entry".to_string()));
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.catalog.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.checkpoint.as_mut() {
            resolve(p);
        }
        for d in &mut cfg.datasets {
            resolve(&mut d.path);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        ExperimentConfig::from_json(&text, base)
    }

    pub fn load_catalog(&self) -> Result<Catalog, ConfigError> {
        let catalog = match &self.catalog {
            Some(p) => Catalog::from_path(p)?,
            None => Catalog::builtin(),
        };
        Ok(match self.max_len {
            Some(l) => catalog.with_max_len(l)?,
            None => catalog,
        })
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            alpha: self.alpha,
            beta: self.beta,
            learning_rate: self.learning_rate,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            c: self.c,
            simulations: self.simulations,
            tau_cutoff: self.tau_cutoff,
            root_noise: self.root_noise.then(RootNoise::default),
            seed: self.seed,
            ..SearchConfig::default()
        }
    }

    pub fn selfplay_config(&self) -> SelfPlayConfig {
        SelfPlayConfig {
            iterations: self.iterations,
            games_per_iteration: self.games_per_iteration,
            train_steps: self.train_steps,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            search: self.search_config(),
            move_budget: self.move_budget,
            schedule: self.schedule,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }

    /// Loads every dataset and wraps it in a cross-validation environment.
    pub fn game_setups(&self, catalog: &Arc<Catalog>) -> Result<Vec<GameSetup>, ConfigError> {
        self.datasets
            .iter()
            .map(|d| {
                let dataset = Dataset::load(&d.path, &d.task).map_err(|source| ConfigError::Dataset {
                    path: d.path.clone(),
                    source,
                })?;
                Ok(GameSetup::from_dataset(
                    Arc::clone(catalog),
                    Arc::new(dataset),
                    d.task.clone(),
                    self.folds,
                    self.seed,
                ))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::StateVector;

    fn example(tag: f64) -> TrainingExample {
        let catalog = Catalog::builtin();
        let mut values = vec![0.0; StateVector::len_for(&catalog)];
        values[0] = tag;
        values[16] = 1.0;
        for v in values.iter_mut().skip(19) {
            *v = catalog.len() as f64;
        }
        let size = ActionSpace::new(&catalog).size();
        let mut legal = vec![false; size];
        legal[0] = true;
        let mut pi = vec![0.0; size];
        pi[0] = 1.0;
        TrainingExample {
            state_vec: StateVector::from_values(values, &catalog).unwrap(),
            legal,
            pi_target: pi,
            e: 0.5,
        }
    }

    #[test]
    fn buffer_evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(example(k as f64));
            assert!(b.len() <= 3);
        }
        assert_eq!(b.oldest_index(), Some(2));
        assert_eq!(b.get(0).unwrap().state_vec.values()[0], 2.0);
    }

    #[test]
    fn seeds_differ_by_path() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
    }

    #[test]
    fn config_defaults_and_relative_paths() {
        let cfg = ExperimentConfig::from_json(
            r#"{"datasets":[{"path":"d.csv","task":{"kind":"regression","target":"y","metric":"r_squared"}}]}"#,
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.datasets[0].path, PathBuf::from("/base/d.csv"));
        assert_eq!(cfg.selfplay_config().games_per_iteration, 20);
        assert_eq!(cfg.selfplay_config().buffer_capacity, 4096);
        assert_eq!(cfg.search_config().tau_cutoff, 4);
        assert_eq!(ExperimentConfig { datasets: cfg.datasets.clone(), ..ExperimentConfig::default() }, cfg);
        assert!(ExperimentConfig::from_json(r#"{"datasets":[]}"#, Path::new(".")).is_err());
        assert!(ExperimentConfig::from_json(r#"{"datasets":[],"bogus":1}"#, Path::new(".")).is_err());
    }
}
