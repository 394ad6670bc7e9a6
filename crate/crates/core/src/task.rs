//! Task descriptions: what kind of supervised problem a dataset poses and how it is scored.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    BinaryClassification,
    MulticlassClassification,
    Regression,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::BinaryClassification,
        TaskKind::MulticlassClassification,
        TaskKind::Regression,
    ];

    /// Position of this kind in the one-hot task block of the state vector.
    pub fn one_hot_index(self) -> usize {
        match self {
            TaskKind::BinaryClassification => 0,
            TaskKind::MulticlassClassification => 1,
            TaskKind::Regression => 2,
        }
    }

    pub fn from_one_hot_index(index: usize) -> Option<TaskKind> {
        TaskKind::ALL.get(index).copied()
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::BinaryClassification => "binary_classification",
            TaskKind::MulticlassClassification => "multiclass_classification",
            TaskKind::Regression => "regression",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TaskError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1Macro,
    RSquared,
}

impl Metric {
    pub fn compatible_with(self, kind: TaskKind) -> bool {
        match self {
            Metric::Accuracy | Metric::F1Macro => kind.is_classification(),
            Metric::RSquared => !kind.is_classification(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("unknown task kind {0:?}")]
    UnknownKind(String),
    #[error("metric {metric:?} cannot score a {kind} task")]
    IncompatibleMetric { kind: TaskKind, metric: Metric },
    #[error("invalid task document: {0}")]
    Parse(String),
}

/// A supervised task over one dataset column.
///
/// Serialized as `{"kind": .., "target": .., "metric": ..}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TaskDoc", into = "TaskDoc")]
pub struct TaskSpec {
    kind: TaskKind,
    target_column: String,
    metric: Metric,
}

impl TaskSpec {
    pub fn new(
        kind: TaskKind,
        target_column: impl Into<String>,
        metric: Metric,
    ) -> Result<Self, TaskError> {
        if !metric.compatible_with(kind) {
            return Err(TaskError::IncompatibleMetric { kind, metric });
        }
        Ok(Self {
            kind,
            target_column: target_column.into(),
            metric,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        serde_json::from_str(text).map_err(|e| TaskError::Parse(e.to_string()))
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn target_column(&self) -> &str {
        &self.target_column
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }
}

#[derive(Serialize, Deserialize)]
struct TaskDoc {
    kind: TaskKind,
    target: String,
    metric: Metric,
}

impl TryFrom<TaskDoc> for TaskSpec {
    type Error = TaskError;

    fn try_from(doc: TaskDoc) -> Result<Self, Self::Error> {
        TaskSpec::new(doc.kind, doc.target, doc.metric)
    }
}

impl From<TaskSpec> for TaskDoc {
    fn from(t: TaskSpec) -> Self {
        TaskDoc {
            kind: t.kind,
            target: t.target_column,
            metric: t.metric,
        }
    }
}
