//! The primitive vocabulary and the grammar that decides which pipelines are well formed.
//!
//! A catalog is loaded from a JSON array of primitive descriptions. The array index of a
//! primitive is its ordinal; state encodings and action indices depend on it, so ordinals
//! never change for a given document.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::task::TaskKind;

/// Pipeline slot count used unless a catalog is explicitly narrowed or widened.
pub const DEFAULT_MAX_LEN: usize = 8;

const DEFAULT_CATALOG: &str = include_str!("default_catalog.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Clean,
    Transform,
    Select,
    Estimate,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Clean,
        Category::Transform,
        Category::Select,
        Category::Estimate,
    ];

    fn parse(s: &str) -> Option<Category> {
        match s {
            "clean" => Some(Category::Clean),
            "transform" => Some(Category::Transform),
            "select" => Some(Category::Select),
            "estimate" => Some(Category::Estimate),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Clean => "clean",
            Category::Transform => "transform",
            Category::Select => "select",
            Category::Estimate => "estimate",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimitiveSpec {
    pub id: String,
    pub category: Category,
    pub tasks: BTreeSet<TaskKind>,
    pub defaults: BTreeMap<String, serde_json::Value>,
}

impl PrimitiveSpec {
    pub fn supports(&self, kind: TaskKind) -> bool {
        self.tasks.contains(&kind)
    }

    /// Numeric default hyper-parameter, or `fallback` when absent or non-numeric.
    pub fn default_f64(&self, name: &str, fallback: f64) -> f64 {
        self.defaults
            .get(name)
            .and_then(serde_json::Value::as_f64)
            .unwrap_or(fallback)
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog is empty")]
    Empty,
    #[error("primitive at position {0} has an empty id")]
    EmptyId(usize),
    #[error("duplicate primitive id {0:?}")]
    DuplicateId(String),
    #[error("primitive {id:?} has unknown category {category:?}")]
    UnknownCategory { id: String, category: String },
    #[error("primitive {id:?} names unknown task kind {task:?}")]
    UnknownTask { id: String, task: String },
    #[error("primitive {id:?} has default {name:?} that is neither a number nor a string")]
    BadDefault { id: String, name: String },
    #[error("estimator {0:?} declares no compatible task")]
    EstimatorWithoutTask(String),
    #[error("no estimator supports task {task} (declared by {id:?})")]
    MissingEstimator { task: TaskKind, id: String },
    #[error("pipeline length limit must be at least 1")]
    ZeroMaxLen,
    #[error("unknown primitive {0:?}")]
    UnknownPrimitive(String),
    #[error("primitive ordinal {0} is outside the catalog")]
    UnknownOrdinal(usize),
}

#[derive(Deserialize)]
struct RawPrimitive {
    id: String,
    category: String,
    #[serde(default)]
    tasks: Vec<String>,
    #[serde(default)]
    defaults: BTreeMap<String, serde_json::Value>,
}

/// Ordered, immutable set of primitives plus the pipeline length limit.
#[derive(Debug, Clone)]
pub struct Catalog {
    primitives: Vec<PrimitiveSpec>,
    index: HashMap<String, usize>,
    max_len: usize,
}

impl Catalog {
    /// Parses a catalog document. Ordinals follow document order.
    pub fn from_json(text: &str) -> Result<Catalog, CatalogError> {
        let raw: Vec<RawPrimitive> = serde_json::from_str(text)?;
        if raw.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut primitives = Vec::with_capacity(raw.len());
        let mut index = HashMap::with_capacity(raw.len());
        for (pos, r) in raw.into_iter().enumerate() {
            if r.id.is_empty() {
                return Err(CatalogError::EmptyId(pos));
            }
            if index.insert(r.id.clone(), pos).is_some() {
                return Err(CatalogError::DuplicateId(r.id));
            }
            let category = Category::parse(&r.category).ok_or_else(|| {
                CatalogError::UnknownCategory {
                    id: r.id.clone(),
                    category: r.category.clone(),
                }
            })?;
            let mut tasks = BTreeSet::new();
            for t in &r.tasks {
                let kind = t.parse::<TaskKind>().map_err(|_| CatalogError::UnknownTask {
                    id: r.id.clone(),
                    task: t.clone(),
                })?;
                tasks.insert(kind);
            }
            if let Some((name, _)) = r
                .defaults
                .iter()
                .find(|(_, v)| !(v.is_number() || v.is_string()))
            {
                return Err(CatalogError::BadDefault {
                    id: r.id.clone(),
                    name: name.clone(),
                });
            }
            if category == Category::Estimate && tasks.is_empty() {
                return Err(CatalogError::EstimatorWithoutTask(r.id));
            }
            primitives.push(PrimitiveSpec {
                id: r.id,
                category,
                tasks,
                defaults: r.defaults,
            });
        }

        // Every task any primitive claims must be solvable by some estimator.
        let mut declared: BTreeMap<TaskKind, &str> = BTreeMap::new();
        for p in &primitives {
            for &t in &p.tasks {
                declared.entry(t).or_insert(&p.id);
            }
        }
        if declared.is_empty() {
            return Err(CatalogError::MissingEstimator {
                task: TaskKind::BinaryClassification,
                id: primitives[0].id.clone(),
            });
        }
        for (&task, &id) in &declared {
            let solvable = primitives
                .iter()
                .any(|p| p.category == Category::Estimate && p.supports(task));
            if !solvable {
                return Err(CatalogError::MissingEstimator {
                    task,
                    id: id.to_string(),
                });
            }
        }

        Ok(Catalog {
            primitives,
            index,
            max_len: DEFAULT_MAX_LEN,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path)?;
        Catalog::from_json(&text)
    }

    /// The bundled ten-primitive catalog.
    pub fn builtin() -> Catalog {
        Catalog::from_json(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn builtin_document() -> &'static str {
        DEFAULT_CATALOG
    }

    /// Same primitives with a different pipeline length limit.
    pub fn with_max_len(mut self, max_len: usize) -> Result<Catalog, CatalogError> {
        if max_len == 0 {
            return Err(CatalogError::ZeroMaxLen);
        }
        self.max_len = max_len;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn primitives(&self) -> &[PrimitiveSpec] {
        &self.primitives
    }

    pub fn get(&self, ordinal: usize) -> Option<&PrimitiveSpec> {
        self.primitives.get(ordinal)
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn category(&self, ordinal: usize) -> Option<Category> {
        self.get(ordinal).map(|p| p.category)
    }

    /// Hex SHA-256 over the canonical primitive list and the length limit.
    ///
    /// Checkpoints record it so a network is never paired with a catalog of a
    /// different shape.
    pub fn hash(&self) -> String {
        let canonical =
            serde_json::to_string(&self.primitives).expect("primitive specs serialize");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hasher.update(b"\0max_len=");
        hasher.update(self.max_len.to_string().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Resolves primitive ids into a pipeline of ordinals.
    pub fn resolve<S: AsRef<str>>(&self, ids: &[S]) -> Result<Pipeline, CatalogError> {
        ids.iter()
            .map(|id| {
                self.ordinal(id.as_ref())
                    .ok_or_else(|| CatalogError::UnknownPrimitive(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Pipeline::from_ordinals)
    }

    pub fn ids(&self, pipeline: &Pipeline) -> Result<Vec<String>, CatalogError> {
        pipeline
            .ordinals()
            .iter()
            .map(|&o| {
                self.get(o)
                    .map(|p| p.id.clone())
                    .ok_or(CatalogError::UnknownOrdinal(o))
            })
            .collect()
    }

    /// Estimator ordinals that can solve `kind`.
    pub fn estimators_for(&self, kind: TaskKind) -> impl Iterator<Item = usize> + '_ {
        self.primitives
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.category == Category::Estimate && p.supports(kind))
            .map(|(i, _)| i)
    }
}

/// An ordered chain of primitive ordinals, interpreted against one catalog.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pipeline(Vec<usize>);

impl Pipeline {
    pub fn empty() -> Pipeline {
        Pipeline(Vec::new())
    }

    pub fn from_ordinals(ordinals: Vec<usize>) -> Pipeline {
        Pipeline(ordinals)
    }

    pub fn ordinals(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub(crate) fn insert(&mut self, position: usize, ordinal: usize) {
        self.0.insert(position, ordinal);
    }

    pub(crate) fn remove(&mut self, position: usize) {
        self.0.remove(position);
    }

    pub(crate) fn set(&mut self, position: usize, ordinal: usize) {
        self.0[position] = ordinal;
    }

    /// Human-readable form such as `[mean-imputer, sgd-linear]`.
    pub fn display(&self, catalog: &Catalog) -> String {
        let names: Vec<&str> = self
            .0
            .iter()
            .map(|&o| catalog.get(o).map_or("?", |p| p.id.as_str()))
            .collect();
        format!("[{}]", names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The primitive at `position` belongs to an earlier stage than its predecessor.
    CategoryDecrease { position: usize },
    /// An estimator sits at `position` but is not the final element.
    EstimatorNotLast { position: usize },
    MultipleEstimators { count: usize },
    TooLong { len: usize, max: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CategoryDecrease { position } => {
                write!(f, "stage order decreases at position {position}")
            }
            Violation::EstimatorNotLast { position } => {
                write!(f, "estimator at position {position} is not last")
            }
            Violation::MultipleEstimators { count } => {
                write!(f, "{count} estimators (at most one allowed)")
            }
            Violation::TooLong { len, max } => write!(f, "length {len} exceeds limit {max}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Invalid(Vec<Violation>),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }
}

/// Checks the stage grammar: clean < transform < select < estimate, non-decreasing;
/// at most one estimator, and only in last position; length within the catalog limit.
pub fn validate_pipeline(catalog: &Catalog, pipeline: &Pipeline) -> Result<Verdict, CatalogError> {
    let categories = pipeline
        .ordinals()
        .iter()
        .map(|&o| catalog.category(o).ok_or(CatalogError::UnknownOrdinal(o)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut violations = Vec::new();
    if categories.len() > catalog.max_len() {
        violations.push(Violation::TooLong {
            len: categories.len(),
            max: catalog.max_len(),
        });
    }
    let estimators = categories
        .iter()
        .filter(|&&c| c == Category::Estimate)
        .count();
    if estimators > 1 {
        violations.push(Violation::MultipleEstimators { count: estimators });
    }
    for (pos, &c) in categories.iter().enumerate() {
        if c == Category::Estimate && pos + 1 != categories.len() {
            violations.push(Violation::EstimatorNotLast { position: pos });
        }
    }
    for (pos, pair) in categories.windows(2).enumerate() {
        if pair[1] < pair[0] {
            violations.push(Violation::CategoryDecrease { position: pos + 1 });
        }
    }

    if violations.is_empty() {
        Ok(Verdict::Ok)
    } else {
        Ok(Verdict::Invalid(violations))
    }
}

/// Validates a pipeline given as primitive ids.
pub fn validate_ids<S: AsRef<str>>(catalog: &Catalog, ids: &[S]) -> Result<Verdict, CatalogError> {
    validate_pipeline(catalog, &catalog.resolve(ids)?)
}
