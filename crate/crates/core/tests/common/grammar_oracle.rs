//! Brute-force legality: an action is legal exactly when performing the raw edit yields a
//! pipeline the validator accepts.

use std::collections::HashSet;

use pipeforge_core::catalog::Category;
use pipeforge_core::game::{apply_action, legal_actions, legal_indices};
use pipeforge_core::{validate_pipeline, ActionSpace, Catalog, EditAction, GameState, MetaFeatures, Pipeline, TaskKind};

/// Legality by definition: perform the raw edit, then ask the validator.
pub fn brute_force_legal(state: &GameState, catalog: &Catalog, action: &EditAction) -> bool {
    let ords = state.pipeline().ordinals().to_vec();
    let kind = state.task().kind();
    let supports = |p: usize| catalog.get(p).unwrap().supports(kind);
    let edited = match *action {
        EditAction::Insert { position, primitive } => {
            if position > ords.len() || !supports(primitive) {
                return false;
            }
            let mut v = ords.clone();
            v.insert(position, primitive);
            v
        }
        EditAction::Delete { position } => {
            if position >= ords.len() {
                return false;
            }
            let mut v = ords.clone();
            v.remove(position);
            v
        }
        EditAction::Replace { position, primitive } => {
            if position >= ords.len() || !supports(primitive) {
                return false;
            }
            let mut v = ords.clone();
            v[position] = primitive;
            v
        }
        EditAction::Commit => {
            return ords
                .last()
                .is_some_and(|&o| catalog.category(o) == Some(Category::Estimate))
        }
    };
    validate_pipeline(catalog, &Pipeline::from_ordinals(edited)).unwrap().is_ok()
}

/// Every non-terminal state reachable from the empty pipeline in at most `depth` moves.
pub fn reachable(catalog: &Catalog, kind: TaskKind, depth: usize) -> Vec<GameState> {
    let space = ActionSpace::new(catalog);
    let start = GameState::initial(MetaFeatures::zeros(), super::task(kind));
    let mut seen = HashSet::new();
    let mut frontier = vec![start.clone()];
    let mut all = vec![start];
    seen.insert((Vec::<usize>::new(), 0usize));
    for _ in 0..depth {
        let mut next = Vec::new();
        for s in &frontier {
            for a in legal_indices(s, catalog).unwrap() {
                let t = apply_action(s, catalog, &space.decode(a).unwrap()).unwrap();
                if t.is_terminal() {
                    continue;
                }
                if seen.insert((t.pipeline().ordinals().to_vec(), t.move_count())) {
                    next.push(t.clone());
                    all.push(t);
                }
            }
        }
        frontier = next;
    }
    all
}

pub struct GrammarReport {
    pub states: usize,
    pub actions_checked: usize,
    /// `(kind, pipeline ordinals, action index)` where the mask and brute force disagree.
    pub mismatches: Vec<(TaskKind, Vec<usize>, usize)>,
}

/// Compares `legal_actions` with brute force on every state reachable in `depth` moves,
/// for every task kind.
pub fn check(catalog: &Catalog, depth: usize) -> GrammarReport {
    let space = ActionSpace::new(catalog);
    let mut report = GrammarReport {
        states: 0,
        actions_checked: 0,
        mismatches: Vec::new(),
    };
    for kind in TaskKind::ALL {
        for state in reachable(catalog, kind, depth) {
            report.states += 1;
            let mask = legal_actions(&state, catalog).unwrap();
            for (a, &legal) in mask.iter().enumerate() {
                let action = space.decode(a).unwrap();
                if legal != brute_force_legal(&state, catalog, &action) {
                    report.mismatches.push((kind, state.pipeline().ordinals().to_vec(), a));
                }
                report.actions_checked += 1;
            }
        }
    }
    report
}
