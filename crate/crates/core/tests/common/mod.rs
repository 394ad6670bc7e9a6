#![allow(dead_code)]

pub mod gradcheck;
pub mod grammar_oracle;
pub mod leakage;

use std::path::PathBuf;

use pipeforge_core::eval::Dataset;
use pipeforge_core::game::{apply_action, encode_state, is_terminal, legal_indices};
use pipeforge_core::{ActionSpace, Catalog, GameState, MetaFeatures, Metric, TaskKind, TaskSpec, TrainingExample};
use rand::seq::SliceRandom;
use rand::Rng;

/// Resolves from either workspace crate, so other crates' tests can include this module.
pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub fn fixture_task(name: &str) -> TaskSpec {
    let text = std::fs::read_to_string(fixture(&format!("{name}.task.json"))).unwrap();
    TaskSpec::from_json(&text).unwrap()
}

pub fn load_fixture(name: &str) -> (Dataset, TaskSpec) {
    let task = fixture_task(name);
    (Dataset::load(fixture(&format!("{name}.csv")), &task).unwrap(), task)
}

pub fn task(kind: TaskKind) -> TaskSpec {
    let metric = if kind.is_classification() { Metric::Accuracy } else { Metric::RSquared };
    TaskSpec::new(kind, "y", metric).unwrap()
}

pub fn random_meta<R: Rng>(rng: &mut R) -> MetaFeatures {
    let mut v = [0.0; 16];
    for (i, x) in v.iter_mut().enumerate() {
        *x = match i {
            4 | 7 | 13 | 15 => rng.gen_range(0.0..1.0),
            _ => rng.gen_range(0.0..20.0),
        };
    }
    MetaFeatures::new(v).unwrap()
}

pub fn random_kind<R: Rng>(rng: &mut R) -> TaskKind {
    *[TaskKind::BinaryClassification, TaskKind::MulticlassClassification, TaskKind::Regression]
        .choose(rng)
        .unwrap()
}

/// A non-terminal state reached by up to `moves` random legal non-commit moves.
pub fn random_state<R: Rng>(rng: &mut R, catalog: &Catalog, moves: usize) -> GameState {
    let space = ActionSpace::new(catalog);
    let mut s = GameState::initial(random_meta(rng), task(random_kind(rng)));
    for _ in 0..rng.gen_range(0..=moves) {
        let legal: Vec<usize> = legal_indices(&s, catalog)
            .unwrap()
            .into_iter()
            .filter(|&a| a != space.commit_index())
            .collect();
        let Some(&a) = legal.choose(rng) else { break };
        let next = apply_action(&s, catalog, &space.decode(a).unwrap()).unwrap();
        if is_terminal(&next) {
            break;
        }
        s = next;
    }
    s
}

/// A training example at a random state with a random policy target over its legal set.
pub fn random_example<R: Rng>(rng: &mut R, catalog: &Catalog) -> TrainingExample {
    let s = random_state(rng, catalog, 6);
    let legal_idx = legal_indices(&s, catalog).unwrap();
    let size = ActionSpace::new(catalog).size();
    let mut legal = vec![false; size];
    let mut pi = vec![0.0; size];
    let weights: Vec<f64> = legal_idx.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for (&a, w) in legal_idx.iter().zip(&weights) {
        legal[a] = true;
        pi[a] = w / total;
    }
    TrainingExample {
        state_vec: encode_state(&s, catalog).unwrap(),
        legal,
        pi_target: pi,
        e: rng.gen_range(0.0..1.0),
    }
}
