//! Client side of the newline-delimited JSON evaluator protocol.
//!
//! The engine launches an evaluator process and talks to it over stdin/stdout. Both
//! sides open with a handshake line `{"v":1,"role":...}`; afterwards every request
//! carries an `id` that the matching response echoes. One request is in flight at a
//! time per connection.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Pipeline};
use crate::task::TaskSpec;

use super::{Environment, EvalStatus, EvaluationResult};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("cannot launch evaluator: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("evaluator I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("evaluator did not answer within {0:?}")]
    Timeout(Duration),
    #[error("evaluator closed its output")]
    Closed,
    #[error("malformed evaluator message: {0}")]
    Malformed(String),
    #[error("protocol version mismatch: evaluator speaks {0}")]
    Version(u32),
    #[error("evaluator connection is unusable after an earlier failure")]
    Dead,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Handshake {
    pub v: u32,
    pub role: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageRef {
    pub id: String,
    pub defaults: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvaluateRequest {
    pub v: u32,
    pub id: u64,
    pub op: String,
    pub pipeline: Vec<StageRef>,
    pub dataset_path: String,
    pub task: TaskSpec,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvaluateResponse {
    pub v: u32,
    pub id: u64,
    pub e: f64,
    pub raw: f64,
    pub fold_scores: Vec<f64>,
    pub status: EvalStatus,
}

impl EvaluateResponse {
    /// Checks the result invariants: `e` finite in `[0, 1]`, zero on failure.
    pub fn validate(&self) -> Result<(), String> {
        if self.v != PROTOCOL_VERSION {
            return Err(format!("response version {}", self.v));
        }
        if !self.e.is_finite() || !(0.0..=1.0).contains(&self.e) {
            return Err(format!("e = {} is outside [0, 1]", self.e));
        }
        if self.status != EvalStatus::Ok && self.e != 0.0 {
            return Err(format!("status {} with non-zero e", self.status.as_str()));
        }
        if !self.raw.is_finite() || self.fold_scores.iter().any(|s| !s.is_finite()) {
            return Err("non-finite raw score".to_string());
        }
        Ok(())
    }
}

/// A live connection to one evaluator process.
pub struct ExternalEvaluator {
    child: Option<Child>,
    stdin: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
    dead: bool,
}

impl ExternalEvaluator {
    /// Launches `command_line` through `sh -c` and performs the handshake.
    pub fn spawn(command_line: &str, timeout: Duration) -> Result<ExternalEvaluator, ExternalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command_line)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(ExternalError::Spawn)?;
        let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut ev = ExternalEvaluator::from_streams(Box::new(stdin), BufReader::new(stdout), timeout);
        ev.child = Some(child);
        ev.handshake()?;
        Ok(ev)
    }

    /// Wraps already-connected streams; no handshake is performed.
    pub fn from_streams<R>(stdin: Box<dyn Write + Send>, reader: R, timeout: Duration) -> ExternalEvaluator
    where
        R: BufRead + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        ExternalEvaluator {
            child: None,
            stdin,
            lines: rx,
            timeout,
            next_id: 1,
            dead: false,
        }
    }

    fn send_line(&mut self, line: &str) -> Result<(), ExternalError> {
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.write_all(b"\n")?;
        self.stdin.flush()?;
        Ok(())
    }

    fn read_line(&mut self) -> Result<String, ExternalError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ExternalError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(ExternalError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(ExternalError::Closed),
        }
    }

    pub fn handshake(&mut self) -> Result<(), ExternalError> {
        let hello = serde_json::to_string(&Handshake {
            v: PROTOCOL_VERSION,
            role: "engine".to_string(),
        })
        .expect("handshake serializes");
        self.send_line(&hello)?;
        let line = self.read_line()?;
        let reply: Handshake =
            serde_json::from_str(&line).map_err(|e| ExternalError::Malformed(e.to_string()))?;
        if reply.v != PROTOCOL_VERSION {
            return Err(ExternalError::Version(reply.v));
        }
        if reply.role != "evaluator" {
            return Err(ExternalError::Malformed(format!("peer role {:?}", reply.role)));
        }
        Ok(())
    }

    /// Sends one request and waits for its validated response.
    pub fn request(
        &mut self,
        pipeline: Vec<StageRef>,
        dataset_path: &str,
        task: &TaskSpec,
        folds: usize,
        seed: u64,
    ) -> Result<EvaluateResponse, ExternalError> {
        if self.dead {
            return Err(ExternalError::Dead);
        }
        let id = self.next_id;
        self.next_id += 1;
        let req = EvaluateRequest {
            v: PROTOCOL_VERSION,
            id,
            op: "evaluate".to_string(),
            pipeline,
            dataset_path: dataset_path.to_string(),
            task: task.clone(),
            folds,
            seed,
        };
        let line = serde_json::to_string(&req).expect("request serializes");
        let outcome = self.send_line(&line).and_then(|()| self.read_line());
        let reply = match outcome {
            Ok(reply) => reply,
            Err(e) => {
                // A lost or late answer would desynchronize ids; drop the connection.
                self.dead = true;
                return Err(e);
            }
        };
        let resp: EvaluateResponse =
            serde_json::from_str(&reply).map_err(|e| ExternalError::Malformed(e.to_string()))?;
        if resp.id != id {
            self.dead = true;
            return Err(ExternalError::Malformed(format!(
                "response id {} for request {id}",
                resp.id
            )));
        }
        resp.validate().map_err(ExternalError::Malformed)?;
        Ok(resp)
    }

    /// Evaluates and folds every protocol failure into a `runtime_failure` result.
    pub fn evaluate(
        &mut self,
        pipeline: Vec<StageRef>,
        dataset_path: &str,
        task: &TaskSpec,
        folds: usize,
        seed: u64,
    ) -> EvaluationResult {
        let started = Instant::now();
        match self.request(pipeline, dataset_path, task, folds, seed) {
            Ok(resp) => EvaluationResult {
                e: resp.e,
                raw_metric: resp.raw,
                fold_scores: resp.fold_scores,
                status: resp.status,
                wall_time: started.elapsed().as_secs_f64(),
                message: None,
                warnings: Vec::new(),
            },
            Err(e) => EvaluationResult::failure(EvalStatus::RuntimeFailure, e.to_string(), started),
        }
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Environment backed by an external evaluator process, with per-pipeline memoization.
pub struct ExternalEnv {
    client: Mutex<ExternalEvaluator>,
    catalog: Arc<Catalog>,
    dataset_path: PathBuf,
    task: TaskSpec,
    folds: usize,
    seed: u64,
    cache: Mutex<HashMap<Pipeline, EvaluationResult>>,
}

impl ExternalEnv {
    pub fn new(
        client: ExternalEvaluator,
        catalog: Arc<Catalog>,
        dataset_path: PathBuf,
        task: TaskSpec,
        folds: usize,
        seed: u64,
    ) -> ExternalEnv {
        ExternalEnv {
            client: Mutex::new(client),
            catalog,
            dataset_path,
            task,
            folds,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn stages(&self, pipeline: &Pipeline) -> Option<Vec<StageRef>> {
        pipeline
            .ordinals()
            .iter()
            .map(|&o| {
                self.catalog.get(o).map(|p| StageRef {
                    id: p.id.clone(),
                    defaults: p.defaults.clone(),
                })
            })
            .collect()
    }
}

impl Environment for ExternalEnv {
    fn evaluate(&self, pipeline: &Pipeline) -> EvaluationResult {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(pipeline) {
            return hit.clone();
        }
        let Some(stages) = self.stages(pipeline) else {
            return EvaluationResult::failure(
                EvalStatus::InvalidPipeline,
                "pipeline references unknown primitives",
                Instant::now(),
            );
        };
        let result = self.client.lock().expect("client lock").evaluate(
            stages,
            &self.dataset_path.to_string_lossy(),
            &self.task,
            self.folds,
            self.seed,
        );
        self.cache
            .lock()
            .expect("cache lock")
            .insert(pipeline.clone(), result.clone());
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_validation() {
        let ok = EvaluateResponse {
            v: 1,
            id: 3,
            e: 0.75,
            raw: 0.75,
            fold_scores: vec![0.75],
            status: EvalStatus::Ok,
        };
        assert!(ok.validate().is_ok());
        let high = EvaluateResponse { e: 1.5, ..ok.clone() };
        assert!(high.validate().unwrap_err().contains("outside"));
        let failed_nonzero = EvaluateResponse {
            status: EvalStatus::RuntimeFailure,
            ..ok.clone()
        };
        assert!(failed_nonzero.validate().is_err());
        let wrong_version = EvaluateResponse { v: 2, ..ok };
        assert!(wrong_version.validate().is_err());
    }

    #[test]
    fn request_wire_shape() {
        let task: TaskSpec =
            serde_json::from_str(r#"{"kind":"regression","target":"y","metric":"r_squared"}"#).unwrap();
        let req = EvaluateRequest {
            v: 1,
            id: 7,
            op: "evaluate".into(),
            pipeline: vec![StageRef {
                id: "sgd-linear".into(),
                defaults: BTreeMap::new(),
            }],
            dataset_path: "d.csv".into(),
            task,
            folds: 5,
            seed: 1,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"v":1,"id":7,"op":"evaluate","pipeline":[{"id":"sgd-linear","defaults":{}}],"dataset_path":"d.csv","task":{"kind":"regression","target":"y","metric":"r_squared"},"folds":5,"seed":1}"#
        );
    }
}
