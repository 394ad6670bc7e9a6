//! The pipeline-synthesis game: state, edit actions, legality, transitions and the
//! fixed-width numeric encoding consumed by the network.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::catalog::{validate_pipeline, Catalog, Category, Pipeline};
use crate::task::{TaskKind, TaskSpec};

/// Number of dataset statistics in the meta-feature block.
pub const META_LEN: usize = 16;
/// One-hot task-kind block width.
pub const TASK_LEN: usize = 3;
/// Move budget per game unless configured otherwise.
pub const DEFAULT_MOVE_BUDGET: usize = 12;

/// Meta-feature indices whose values are ratios and must lie in `[0, 1]`.
const RATIO_SLOTS: [usize; 4] = [4, 7, 13, 15];

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("meta-feature {index} is not finite ({value})")]
    NonFiniteMeta { index: usize, value: f64 },
    #[error("meta-feature {index} is a ratio but equals {value}")]
    RatioOutOfRange { index: usize, value: f64 },
    #[error("the game is over")]
    Terminal,
    #[error("illegal action {action}: {reason}")]
    Illegal { action: String, reason: String },
    #[error("action index {index} is outside the action space of size {size}")]
    BadActionIndex { index: usize, size: usize },
    #[error("primitive ordinal {0} is outside the catalog")]
    UnknownOrdinal(usize),
    #[error("state vector has length {got}, expected {expected}")]
    BadStateVector { got: usize, expected: usize },
}

/// Fixed 16-entry summary of a dataset. Entry order:
///
/// 0 `log1p(n_rows)`, 1 feature columns, 2 numeric columns, 3 categorical columns,
/// 4 missing-cell ratio, 5 class count, 6 class entropy (bits), 7 majority-class ratio,
/// 8 mean of column means, 9 mean of column stds, 10 mean |skewness|,
/// 11 mean |excess kurtosis|, 12 mean |correlation with target|, 13 numeric-column ratio,
/// 14 `log1p(n_rows / n_cols)`, 15 constant-column ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaFeatures([f64; META_LEN]);

impl MetaFeatures {
    pub fn new(values: [f64; META_LEN]) -> Result<MetaFeatures, GameError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(GameError::NonFiniteMeta { index, value });
            }
        }
        for &index in &RATIO_SLOTS {
            let value = values[index];
            if !(0.0..=1.0).contains(&value) {
                return Err(GameError::RatioOutOfRange { index, value });
            }
        }
        Ok(MetaFeatures(values))
    }

    pub fn zeros() -> MetaFeatures {
        MetaFeatures([0.0; META_LEN])
    }

    pub fn values(&self) -> &[f64; META_LEN] {
        &self.0
    }
}

/// The parts of a game state that never change during a game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameContext {
    pub meta: MetaFeatures,
    pub task: TaskSpec,
}

/// One board position: dataset summary, task, current pipeline and move bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    context: Arc<GameContext>,
    pipeline: Pipeline,
    move_count: usize,
    move_budget: usize,
    committed: bool,
}

impl GameState {
    /// Empty-pipeline starting state with the default move budget.
    pub fn initial(meta: MetaFeatures, task: TaskSpec) -> GameState {
        GameState::with_budget(meta, task, DEFAULT_MOVE_BUDGET)
    }

    pub fn with_budget(meta: MetaFeatures, task: TaskSpec, move_budget: usize) -> GameState {
        GameState {
            context: Arc::new(GameContext { meta, task }),
            pipeline: Pipeline::empty(),
            move_count: 0,
            move_budget,
            committed: false,
        }
    }

    pub fn meta(&self) -> &MetaFeatures {
        &self.context.meta
    }

    pub fn task(&self) -> &TaskSpec {
        &self.context.task
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn move_count(&self) -> usize {
        self.move_count
    }

    pub fn move_budget(&self) -> usize {
        self.move_budget
    }

    pub fn committed(&self) -> bool {
        self.committed
    }

    pub fn is_terminal(&self) -> bool {
        is_terminal(self)
    }
}

pub fn is_terminal(state: &GameState) -> bool {
    state.committed || state.move_count >= state.move_budget
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditAction {
    Insert { position: usize, primitive: usize },
    Delete { position: usize },
    Replace { position: usize, primitive: usize },
    Commit,
}

impl EditAction {
    /// Narrative form, e.g. `insert standard-scaler at 1`.
    pub fn describe(&self, catalog: &Catalog) -> String {
        let name = |o: usize| catalog.get(o).map_or_else(|| format!("#{o}"), |p| p.id.clone());
        match *self {
            EditAction::Insert { position, primitive } => {
                format!("insert {} at {position}", name(primitive))
            }
            EditAction::Delete { position } => format!("delete at {position}"),
            EditAction::Replace { position, primitive } => {
                format!("replace at {position} with {}", name(primitive))
            }
            EditAction::Commit => "commit".to_string(),
        }
    }
}

impl fmt::Display for EditAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditAction::Insert { position, primitive } => {
                write!(f, "insert(#{primitive} at {position})")
            }
            EditAction::Delete { position } => write!(f, "delete({position})"),
            EditAction::Replace { position, primitive } => {
                write!(f, "replace({position} with #{primitive})")
            }
            EditAction::Commit => f.write_str("commit"),
        }
    }
}

/// Bijection between edit actions and the dense index range `0..size()`.
///
/// Layout: inserts (`slot * n + primitive`), then deletes (`slot`), then replaces
/// (`slot * n + primitive`), then commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    primitives: usize,
    slots: usize,
}

impl ActionSpace {
    pub fn new(catalog: &Catalog) -> ActionSpace {
        ActionSpace {
            primitives: catalog.len(),
            slots: catalog.max_len(),
        }
    }

    pub fn size(&self) -> usize {
        2 * self.slots * self.primitives + self.slots + 1
    }

    pub fn commit_index(&self) -> usize {
        self.size() - 1
    }

    pub fn encode(&self, action: &EditAction) -> Result<usize, GameError> {
        let (n, l) = (self.primitives, self.slots);
        let bad = || GameError::Illegal {
            action: action.to_string(),
            reason: "does not fit the action space".to_string(),
        };
        match *action {
            EditAction::Insert { position, primitive } => {
                if position >= l || primitive >= n {
                    return Err(bad());
                }
                Ok(position * n + primitive)
            }
            EditAction::Delete { position } => {
                if position >= l {
                    return Err(bad());
                }
                Ok(l * n + position)
            }
            EditAction::Replace { position, primitive } => {
                if position >= l || primitive >= n {
                    return Err(bad());
                }
                Ok(l * n + l + position * n + primitive)
            }
            EditAction::Commit => Ok(self.commit_index()),
        }
    }

    pub fn decode(&self, index: usize) -> Result<EditAction, GameError> {
        let (n, l) = (self.primitives, self.slots);
        let inserts = l * n;
        if index < inserts {
            Ok(EditAction::Insert {
                position: index / n,
                primitive: index % n,
            })
        } else if index < inserts + l {
            Ok(EditAction::Delete {
                position: index - inserts,
            })
        } else if index < inserts + l + l * n {
            let r = index - inserts - l;
            Ok(EditAction::Replace {
                position: r / n,
                primitive: r % n,
            })
        } else if index == self.commit_index() {
            Ok(EditAction::Commit)
        } else {
            Err(GameError::BadActionIndex {
                index,
                size: self.size(),
            })
        }
    }
}

/// `A = 2 * L_max * n + L_max + 1`.
pub fn action_space_size(catalog: &Catalog) -> usize {
    ActionSpace::new(catalog).size()
}

fn illegal(action: &EditAction, reason: impl Into<String>) -> GameError {
    GameError::Illegal {
        action: action.to_string(),
        reason: reason.into(),
    }
}

/// Checks one action against the stage grammar without building the successor.
fn check_action(state: &GameState, catalog: &Catalog, action: &EditAction) -> Result<(), GameError> {
    if is_terminal(state) {
        return Err(GameError::Terminal);
    }
    let ords = state.pipeline.ordinals();
    let len = ords.len();
    let kind = state.task().kind();
    let cat = |o: usize| catalog.category(o).ok_or(GameError::UnknownOrdinal(o));
    let usable = |o: usize| -> Result<Category, GameError> {
        let spec = catalog.get(o).ok_or(GameError::UnknownOrdinal(o))?;
        if !spec.supports(kind) {
            return Err(illegal(action, format!("{} does not support {kind}", spec.id)));
        }
        Ok(spec.category)
    };

    match *action {
        EditAction::Insert { position, primitive } => {
            if position > len {
                return Err(illegal(action, format!("position beyond length {len}")));
            }
            if len >= catalog.max_len() {
                return Err(illegal(action, "pipeline is at its length limit"));
            }
            let c = usable(primitive)?;
            if position > 0 && cat(ords[position - 1])? > c {
                return Err(illegal(action, "stage order would decrease"));
            }
            if position < len && c > cat(ords[position])? {
                return Err(illegal(action, "stage order would decrease"));
            }
            if c == Category::Estimate {
                // Either a following estimator or a preceding one would be a second estimator.
                if position != len || (len > 0 && cat(ords[len - 1])? == Category::Estimate) {
                    return Err(illegal(action, "only one estimator, in last position"));
                }
            }
            Ok(())
        }
        EditAction::Delete { position } => {
            if position >= len {
                return Err(illegal(action, format!("no element at {position}")));
            }
            Ok(())
        }
        EditAction::Replace { position, primitive } => {
            if position >= len {
                return Err(illegal(action, format!("no element at {position}")));
            }
            let c = usable(primitive)?;
            if position > 0 && cat(ords[position - 1])? > c {
                return Err(illegal(action, "stage order would decrease"));
            }
            if position + 1 < len && c > cat(ords[position + 1])? {
                return Err(illegal(action, "stage order would decrease"));
            }
            if c == Category::Estimate && position + 1 != len {
                return Err(illegal(action, "only one estimator, in last position"));
            }
            Ok(())
        }
        EditAction::Commit => match state.pipeline.last() {
            Some(o) if cat(o)? == Category::Estimate => Ok(()),
            _ => Err(illegal(action, "pipeline does not end with an estimator")),
        },
    }
}

/// Legality mask over the full action index range.
pub fn legal_actions(state: &GameState, catalog: &Catalog) -> Result<Vec<bool>, GameError> {
    if is_terminal(state) {
        return Err(GameError::Terminal);
    }
    let space = ActionSpace::new(catalog);
    (0..space.size())
        .map(|i| {
            let action = space.decode(i)?;
            match check_action(state, catalog, &action) {
                Ok(()) => Ok(true),
                Err(GameError::Illegal { .. }) => Ok(false),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Indices of the legal actions, ascending.
pub fn legal_indices(state: &GameState, catalog: &Catalog) -> Result<Vec<usize>, GameError> {
    Ok(legal_actions(state, catalog)?
        .into_iter()
        .enumerate()
        .filter_map(|(i, ok)| ok.then_some(i))
        .collect())
}

/// Returns the successor state; the input is left untouched.
pub fn apply_action(
    state: &GameState,
    catalog: &Catalog,
    action: &EditAction,
) -> Result<GameState, GameError> {
    check_action(state, catalog, action)?;
    let mut next = state.clone();
    match *action {
        EditAction::Insert { position, primitive } => next.pipeline.insert(position, primitive),
        EditAction::Delete { position } => next.pipeline.remove(position),
        EditAction::Replace { position, primitive } => next.pipeline.set(position, primitive),
        EditAction::Commit => next.committed = true,
    }
    next.move_count += 1;
    debug_assert!(validate_pipeline(catalog, &next.pipeline)
        .map(|v| v.is_ok())
        .unwrap_or(false));
    Ok(next)
}

#[derive(Debug, Error, PartialEq)]
#[error("replay failed at action {index}: {source}")]
pub struct ReplayError {
    pub index: usize,
    #[source]
    pub source: GameError,
}

/// Folds `apply_action` over a recorded action list.
pub fn replay_trace(
    initial: &GameState,
    catalog: &Catalog,
    actions: &[EditAction],
) -> Result<GameState, ReplayError> {
    actions
        .iter()
        .enumerate()
        .try_fold(initial.clone(), |state, (index, action)| {
            apply_action(&state, catalog, action).map_err(|source| ReplayError { index, source })
        })
}

/// Flat network input: meta-features, one-hot task kind, then one slot per pipeline
/// position holding the primitive ordinal or the sentinel `n` for an empty slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn len_for(catalog: &Catalog) -> usize {
        META_LEN + TASK_LEN + catalog.max_len()
    }

    /// Wraps raw values, checking only the length against `catalog`.
    pub fn from_values(values: Vec<f64>, catalog: &Catalog) -> Result<StateVector, GameError> {
        let expected = StateVector::len_for(catalog);
        if values.len() != expected {
            return Err(GameError::BadStateVector {
                got: values.len(),
                expected,
            });
        }
        Ok(StateVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn meta(&self) -> &[f64] {
        &self.0[..META_LEN]
    }

    /// Meta-features and task one-hot together.
    pub fn context(&self) -> &[f64] {
        &self.0[..META_LEN + TASK_LEN]
    }

    pub fn slots(&self) -> &[f64] {
        &self.0[META_LEN + TASK_LEN..]
    }

    pub fn task_kind(&self) -> Option<TaskKind> {
        let hot = &self.0[META_LEN..META_LEN + TASK_LEN];
        hot.iter().position(|&v| v == 1.0).and_then(TaskKind::from_one_hot_index)
    }

    /// Pipeline ordinals recovered from the slot block.
    pub fn pipeline(&self, catalog: &Catalog) -> Pipeline {
        let sentinel = catalog.len();
        Pipeline::from_ordinals(
            self.slots()
                .iter()
                .map(|&v| v as usize)
                .take_while(|&o| o != sentinel)
                .collect(),
        )
    }
}

pub fn encode_state(state: &GameState, catalog: &Catalog) -> Result<StateVector, GameError> {
    let n = catalog.len();
    let mut values = Vec::with_capacity(StateVector::len_for(catalog));
    values.extend_from_slice(state.meta().values());
    let mut hot = [0.0; TASK_LEN];
    hot[state.task().kind().one_hot_index()] = 1.0;
    values.extend_from_slice(&hot);
    let ords = state.pipeline.ordinals();
    if ords.len() > catalog.max_len() {
        return Err(GameError::Illegal {
            action: "encode".to_string(),
            reason: format!("pipeline longer than {}", catalog.max_len()),
        });
    }
    for &o in ords {
        if o >= n {
            return Err(GameError::UnknownOrdinal(o));
        }
        values.push(o as f64);
    }
    values.resize(StateVector::len_for(catalog), n as f64);
    Ok(StateVector(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Metric;

    fn binary() -> TaskSpec {
        TaskSpec::new(TaskKind::BinaryClassification, "y", Metric::Accuracy).unwrap()
    }

    fn state_with(catalog: &Catalog, ids: &[&str]) -> GameState {
        let mut s = GameState::initial(MetaFeatures::zeros(), binary());
        s.pipeline = catalog.resolve(ids).unwrap();
        s
    }

    #[test]
    fn action_space_sizes() {
        assert_eq!(action_space_size(&Catalog::builtin()), 169);
        let one = Catalog::from_json(
            r#"[{"id":"lin","category":"estimate","tasks":["regression"],"defaults":{}}]"#,
        )
        .unwrap()
        .with_max_len(1)
        .unwrap();
        assert_eq!(action_space_size(&one), 4);
    }

    #[test]
    fn action_index_round_trip() {
        let c = Catalog::builtin();
        let space = ActionSpace::new(&c);
        for i in 0..space.size() {
            let a = space.decode(i).unwrap();
            assert_eq!(space.encode(&a).unwrap(), i);
        }
        assert!(space.decode(space.size()).is_err());
    }

    #[test]
    fn empty_pipeline_encoding() {
        let c = Catalog::builtin();
        let s = GameState::initial(MetaFeatures::zeros(), binary());
        let v = encode_state(&s, &c).unwrap();
        let mut expected = vec![0.0; 16];
        expected.extend([1.0, 0.0, 0.0]);
        expected.extend([10.0; 8]);
        assert_eq!(v.values(), expected.as_slice());
    }

    #[test]
    fn slot_encoding_uses_ordinals() {
        let c = Catalog::builtin();
        let s = state_with(&c, &["mean-imputer", "sgd-linear"]);
        let v = encode_state(&s, &c).unwrap();
        assert_eq!(v.slots(), &[0.0, 8.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0]);
        assert_eq!(v.pipeline(&c), s.pipeline);
        assert_eq!(v.task_kind(), Some(TaskKind::BinaryClassification));
    }

    #[test]
    fn empty_pipeline_legal_moves() {
        let c = Catalog::builtin();
        let space = ActionSpace::new(&c);
        let s = GameState::initial(MetaFeatures::zeros(), binary());
        let legal = legal_indices(&s, &c).unwrap();
        let expected: Vec<usize> = (0..10)
            .map(|p| space.encode(&EditAction::Insert { position: 0, primitive: p }).unwrap())
            .collect();
        assert_eq!(legal, expected);

        let reg = GameState::initial(
            MetaFeatures::zeros(),
            TaskSpec::new(TaskKind::Regression, "y", Metric::RSquared).unwrap(),
        );
        let legal = legal_indices(&reg, &c).unwrap();
        assert_eq!(legal.len(), 9, "gaussian-nb cannot solve regression");
    }

    #[test]
    fn scaler_estimator_moves() {
        let c = Catalog::builtin();
        let space = ActionSpace::new(&c);
        let s = state_with(&c, &["standard-scaler", "sgd-linear"]);
        let mask = legal_actions(&s, &c).unwrap();
        assert!(mask[space.commit_index()]);
        let clean_at = |position| space.encode(&EditAction::Insert { position, primitive: 0 }).unwrap();
        assert!(mask[clean_at(0)]);
        assert!(!mask[clean_at(2)]);
    }

    #[test]
    fn full_pipeline_blocks_inserts() {
        let c = Catalog::builtin();
        let space = ActionSpace::new(&c);
        let s = state_with(&c, &["mean-imputer"; 8]);
        let mask = legal_actions(&s, &c).unwrap();
        for i in 0..8 * 10 {
            assert!(!mask[i], "insert {:?} should be illegal", space.decode(i).unwrap());
        }
        assert!(mask.iter().any(|&b| b));
    }

    #[test]
    fn transitions() {
        let c = Catalog::builtin();
        let s0 = GameState::initial(MetaFeatures::zeros(), binary());
        let s1 = apply_action(&s0, &c, &EditAction::Insert { position: 0, primitive: 0 }).unwrap();
        assert_eq!(s1.pipeline().ordinals(), &[0]);
        assert_eq!(s1.move_count(), 1);
        assert_eq!(s0.move_count(), 0);
        assert!(s0.pipeline().is_empty());

        let s = state_with(&c, &["mean-imputer", "sgd-linear"]);
        let done = apply_action(&s, &c, &EditAction::Commit).unwrap();
        assert!(done.committed());
        assert!(done.is_terminal());
        assert_eq!(done.pipeline(), s.pipeline());

        let cut = apply_action(&s, &c, &EditAction::Delete { position: 1 }).unwrap();
        let space = ActionSpace::new(&c);
        assert!(!legal_actions(&cut, &c).unwrap()[space.commit_index()]);
    }

    #[test]
    fn illegal_action_names_rule() {
        let c = Catalog::builtin();
        let s = GameState::initial(MetaFeatures::zeros(), binary());
        match apply_action(&s, &c, &EditAction::Commit) {
            Err(GameError::Illegal { reason, .. }) => assert!(reason.contains("estimator")),
            other => panic!("{other:?}"),
        }
        let s = state_with(&c, &["standard-scaler"]);
        match apply_action(&s, &c, &EditAction::Insert { position: 1, primitive: 0 }) {
            Err(GameError::Illegal { reason, .. }) => assert!(reason.contains("stage order")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn termination() {
        let c = Catalog::builtin();
        let fresh = GameState::initial(MetaFeatures::zeros(), binary());
        assert!(!is_terminal(&fresh));
        let mut s = GameState::with_budget(MetaFeatures::zeros(), binary(), 2);
        for _ in 0..2 {
            s = apply_action(&s, &c, &EditAction::Insert { position: 0, primitive: 3 }).unwrap();
        }
        assert!(is_terminal(&s));
        assert!(!s.committed());
        assert_eq!(legal_actions(&s, &c), Err(GameError::Terminal));
    }

    #[test]
    fn replay_basics() {
        let c = Catalog::builtin();
        let s0 = GameState::initial(MetaFeatures::zeros(), binary());
        let end = replay_trace(
            &s0,
            &c,
            &[EditAction::Insert { position: 0, primitive: 8 }, EditAction::Commit],
        )
        .unwrap();
        assert!(end.committed());
        assert_eq!(c.ids(end.pipeline()).unwrap(), vec!["sgd-linear"]);
        assert_eq!(replay_trace(&s0, &c, &[]).unwrap(), s0);

        let err = replay_trace(
            &s0,
            &c,
            &[EditAction::Insert { position: 0, primitive: 3 }, EditAction::Commit],
        )
        .unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn meta_feature_guards() {
        let mut v = [0.0; META_LEN];
        v[4] = 1.5;
        assert!(matches!(MetaFeatures::new(v), Err(GameError::RatioOutOfRange { index: 4, .. })));
        v[4] = 0.5;
        v[0] = f64::NAN;
        assert!(matches!(MetaFeatures::new(v), Err(GameError::NonFiniteMeta { index: 0, .. })));
    }
}
