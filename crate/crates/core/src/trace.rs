//! Game traces: the per-move record of a synthesis game, its JSON-lines file form, and
//! replay verification.
//!
//! File layout, one JSON object per line:
//!
//! ```text
//! {"move":1,"state_vec":[...],"legal":[...],"pi":[...],"action":17}
//! ...
//! {"final_pipeline":["standard-scaler","sgd-linear"],"evaluation":0.93,"status":"ok"}
//! ```
//!
//! `pi` is aligned with `legal`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::game::{
    apply_action, encode_state, legal_indices, ActionSpace, GameState, MetaFeatures,
    DEFAULT_MOVE_BUDGET, META_LEN,
};
use crate::net::TrainingExample;
use crate::task::{Metric, TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameStatus {
    Ok,
    FailedPipeline,
    BudgetExhausted,
}

impl GameStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GameStatus::Ok => "ok",
            GameStatus::FailedPipeline => "failed_pipeline",
            GameStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    #[serde(rename = "move")]
    pub move_number: usize,
    pub state_vec: Vec<f64>,
    pub legal: Vec<usize>,
    pub pi: Vec<f64>,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub final_pipeline: Vec<String>,
    pub evaluation: f64,
    pub status: GameStatus,
}

/// A played game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    pub dataset: String,
    pub task: TaskSpec,
    pub moves: Vec<MoveRecord>,
    pub outcome: TraceOutcome,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no terminating outcome line")]
    MissingOutcome,
    #[error("content after the outcome line (line {0})")]
    TrailingContent(usize),
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Moves plus outcome, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub moves: Vec<MoveRecord>,
    pub outcome: TraceOutcome,
}

impl TraceFile {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.moves {
            out.push_str(&serde_json::to_string(m).expect("move serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.outcome).expect("outcome serializes"));
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<TraceFile, TraceError> {
        let mut moves = Vec::new();
        let mut outcome = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if outcome.is_some() {
                return Err(TraceError::TrailingContent(line_no));
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| TraceError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let parse_err = |e: serde_json::Error| TraceError::Parse {
                line: line_no,
                message: e.to_string(),
            };
            if value.get("final_pipeline").is_some() {
                outcome = Some(serde_json::from_value(value).map_err(parse_err)?);
            } else {
                let record: MoveRecord = serde_json::from_value(value).map_err(parse_err)?;
                if record.pi.len() != record.legal.len() {
                    return Err(TraceError::Parse {
                        line: line_no,
                        message: "pi and legal differ in length".to_string(),
                    });
                }
                moves.push(record);
            }
        }
        Ok(TraceFile {
            moves,
            outcome: outcome.ok_or(TraceError::MissingOutcome)?,
        })
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<TraceFile, TraceError> {
        TraceFile::parse(&std::fs::read_to_string(path)?)
    }
}

impl GameTrace {
    pub fn file(&self) -> TraceFile {
        TraceFile {
            moves: self.moves.clone(),
            outcome: self.outcome.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.file().to_jsonl()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.moves.iter().map(|m| m.action).collect()
    }

    /// One training example per move, all sharing the final evaluation as value target.
    pub fn training_examples(&self, catalog: &Catalog) -> Vec<TrainingExample> {
        let size = ActionSpace::new(catalog).size();
        self.moves
            .iter()
            .map(|m| {
                let mut legal = vec![false; size];
                let mut pi = vec![0.0; size];
                for (&a, &p) in m.legal.iter().zip(&m.pi) {
                    legal[a] = true;
                    pi[a] = p;
                }
                TrainingExample {
                    state_vec: crate::game::StateVector::from_values(m.state_vec.clone(), catalog)
                        .expect("recorded state vectors match the catalog"),
                    legal,
                    pi_target: pi,
                    e: self.outcome.evaluation,
                }
            })
            .collect()
    }
}

/// Where and why a replay diverged from its trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayMismatch {
    /// Move number (as recorded) whose action is blamed.
    pub move_number: usize,
    pub reason: String,
}

/// Starting state implied by a trace: meta-features and task kind come from the first
/// recorded state vector; an empty trace starts from zero meta-features.
pub fn initial_state_of(file: &TraceFile) -> GameState {
    let budget = DEFAULT_MOVE_BUDGET.max(file.moves.len());
    let (meta, kind) = match file.moves.first() {
        Some(m) if m.state_vec.len() >= META_LEN + 3 => {
            let mut values = [0.0; META_LEN];
            values.copy_from_slice(&m.state_vec[..META_LEN]);
            let kind = m.state_vec[META_LEN..META_LEN + 3]
                .iter()
                .position(|&v| v == 1.0)
                .and_then(TaskKind::from_one_hot_index)
                .unwrap_or(TaskKind::BinaryClassification);
            (MetaFeatures::new(values).unwrap_or_else(|_| MetaFeatures::zeros()), kind)
        }
        _ => (MetaFeatures::zeros(), TaskKind::BinaryClassification),
    };
    let metric = if kind.is_classification() {
        Metric::Accuracy
    } else {
        Metric::RSquared
    };
    let task = TaskSpec::new(kind, "", metric).expect("metric chosen to match kind");
    GameState::with_budget(meta, task, budget)
}

/// Re-applies every recorded action and checks that the recorded state vectors, legal
/// sets and final pipeline all agree with the replay.
pub fn verify_replay(file: &TraceFile, catalog: &Catalog) -> Result<GameState, ReplayMismatch> {
    let space = ActionSpace::new(catalog);
    let mut state = initial_state_of(file);
    let mut previous: Option<usize> = None;
    for m in &file.moves {
        let blame_prev = |reason: String| ReplayMismatch {
            move_number: previous.unwrap_or(m.move_number),
            reason,
        };
        let encoded = encode_state(&state, catalog).map_err(|e| blame_prev(e.to_string()))?;
        if encoded.values() != m.state_vec.as_slice() {
            return Err(blame_prev(format!(
                "state before move {} differs from the replayed state",
                m.move_number
            )));
        }
        let fail = |reason: String| ReplayMismatch {
            move_number: m.move_number,
            reason,
        };
        let legal = legal_indices(&state, catalog).map_err(|e| fail(e.to_string()))?;
        if legal != m.legal {
            return Err(fail("recorded legal set differs".to_string()));
        }
        if !legal.contains(&m.action) {
            return Err(fail(format!("action {} is not legal", m.action)));
        }
        let action = space.decode(m.action).map_err(|e| fail(e.to_string()))?;
        state = apply_action(&state, catalog, &action).map_err(|e| fail(e.to_string()))?;
        previous = Some(m.move_number);
    }
    let ids = catalog.ids(state.pipeline()).map_err(|e| ReplayMismatch {
        move_number: previous.unwrap_or(0),
        reason: e.to_string(),
    })?;
    if ids != file.outcome.final_pipeline {
        return Err(ReplayMismatch {
            move_number: previous.unwrap_or(0),
            reason: format!(
                "replayed pipeline [{}] differs from recorded [{}]",
                ids.join(", "),
                file.outcome.final_pipeline.join(", ")
            ),
        });
    }
    if file.outcome.status == GameStatus::Ok && !state.committed() {
        return Err(ReplayMismatch {
            move_number: previous.unwrap_or(0),
            reason: "trace claims success but the replay never commits".to_string(),
        });
    }
    Ok(state)
}
