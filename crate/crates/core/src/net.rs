//! Policy/value sequence network with analytic gradients.
//!
//! The pipeline slots are embedded and run through a GRU whose initial hidden state is
//! a projection of the meta-feature and task block. The final hidden state feeds a
//! policy head (one logit per action, masked softmax over legal actions) and a value
//! head (sigmoid).
//!
//! Training minimizes, averaged over a batch,
//! `-sum(pi * ln max(p, 1e-12)) + (v - e)^2 + beta * |logits|_1`, plus
//! `alpha * |theta|^2` over all parameters.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::game::{action_space_size, StateVector, META_LEN, TASK_LEN};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
pub const CHECKPOINT_VERSION: u32 = 1;
const CONTEXT_LEN: usize = META_LEN + TASK_LEN;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("legal mask has no legal action")]
    NoLegalAction,
    #[error("non-finite {term} term in loss")]
    NonFinite { term: &'static str },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("checkpoint version {0} is not supported")]
    Version(u32),
    #[error("checkpoint was trained for catalog {found}, active catalog is {expected}")]
    CatalogMismatch { expected: String, found: String },
}

/// Shape of the network, fixed by the catalog and the width choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub n: usize,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    #[serde(rename = "A")]
    pub a: usize,
    pub d: usize,
    pub h: usize,
}

impl NetDims {
    pub fn for_catalog(catalog: &Catalog, d: usize, h: usize) -> NetDims {
        NetDims {
            n: catalog.len(),
            l_max: catalog.max_len(),
            a: action_space_size(catalog),
            d,
            h,
        }
    }

    fn state_len(&self) -> usize {
        CONTEXT_LEN + self.l_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// L2 weight on all parameters.
    pub alpha: f64,
    /// L1 weight on the policy logits.
    pub beta: f64,
    pub learning_rate: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            alpha: 1e-4,
            beta: 1e-4,
            learning_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn uniform(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(|_| rng.gen_range(-scale..=scale)).collect(),
        }
    }

    /// `out = self * x` for a `[rows, cols]` matrix.
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let cols = self.shape[1];
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(cols)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += self^T * g`.
    fn matvec_t_acc(&self, g: &[f64], out: &mut [f64]) {
        let cols = self.shape[1];
        for (gi, row) in g.iter().zip(self.data.chunks_exact(cols)) {
            if *gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += gi * w;
            }
        }
    }

    /// `self += g x^T`.
    fn outer_acc(&mut self, g: &[f64], x: &[f64]) {
        let cols = self.shape[1];
        for (gi, row) in g.iter().zip(self.data.chunks_exact_mut(cols)) {
            if *gi == 0.0 {
                continue;
            }
            for (w, xv) in row.iter_mut().zip(x) {
                *w += gi * xv;
            }
        }
    }
}

/// All learnable tensors. Also used, with the same layout, for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub embed: Tensor,
    pub ctx_w: Tensor,
    pub ctx_b: Tensor,
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_n: Tensor,
    pub u_n: Tensor,
    pub b_n: Tensor,
    pub pol_w: Tensor,
    pub pol_b: Tensor,
    pub val_w: Tensor,
    pub val_b: Tensor,
}

pub const GROUP_NAMES: [&str; 16] = [
    "embed", "ctx_w", "ctx_b", "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_n", "u_n", "b_n",
    "pol_w", "pol_b", "val_w", "val_b",
];

impl Weights {
    fn build(dims: &NetDims, mut make: impl FnMut(&[usize]) -> Tensor) -> Weights {
        let NetDims { n, a, d, h, .. } = *dims;
        Weights {
            embed: make(&[n + 1, d]),
            ctx_w: make(&[h, CONTEXT_LEN]),
            ctx_b: make(&[h]),
            w_z: make(&[h, d]),
            u_z: make(&[h, h]),
            b_z: make(&[h]),
            w_r: make(&[h, d]),
            u_r: make(&[h, h]),
            b_r: make(&[h]),
            w_n: make(&[h, d]),
            u_n: make(&[h, h]),
            b_n: make(&[h]),
            pol_w: make(&[a, h]),
            pol_b: make(&[a]),
            val_w: make(&[1, h]),
            val_b: make(&[1]),
        }
    }

    pub fn zeros(dims: &NetDims) -> Weights {
        Weights::build(dims, Tensor::zeros)
    }

    pub fn groups(&self) -> [(&'static str, &Tensor); 16] {
        [
            ("embed", &self.embed),
            ("ctx_w", &self.ctx_w),
            ("ctx_b", &self.ctx_b),
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_n", &self.w_n),
            ("u_n", &self.u_n),
            ("b_n", &self.b_n),
            ("pol_w", &self.pol_w),
            ("pol_b", &self.pol_b),
            ("val_w", &self.val_w),
            ("val_b", &self.val_b),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Tensor); 16] {
        [
            ("embed", &mut self.embed),
            ("ctx_w", &mut self.ctx_w),
            ("ctx_b", &mut self.ctx_b),
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("b_z", &mut self.b_z),
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("b_r", &mut self.b_r),
            ("w_n", &mut self.w_n),
            ("u_n", &mut self.u_n),
            ("b_n", &mut self.b_n),
            ("pol_w", &mut self.pol_w),
            ("pol_b", &mut self.pol_b),
            ("val_w", &mut self.val_w),
            ("val_b", &mut self.val_b),
        ]
    }

    pub fn group(&self, name: &str) -> Option<&Tensor> {
        self.groups().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.groups_mut().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn squared_norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|(_, t)| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    fn scale(&mut self, k: f64) {
        for (_, t) in self.groups_mut() {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k * other`.
    fn add_scaled(&mut self, other: &Weights, k: f64) {
        for ((_, a), (_, b)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += k * y;
            }
        }
    }
}

/// Network parameters together with their shape and training hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub dims: NetDims,
    pub hyper: Hyper,
    pub weights: Weights,
}

/// Masked policy over all actions and the value estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueOutput {
    pub probs: Vec<f64>,
    pub value: f64,
}

/// One self-play sample: state, legality mask, search policy target and final reward.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub state_vec: StateVector,
    pub legal: Vec<bool>,
    pub pi_target: Vec<f64>,
    pub e: f64,
}

/// Anything that maps a state to action priors and a value.
pub trait PolicyValue: Sync {
    fn predict(&self, state: &StateVector, legal: &[bool]) -> Result<PolicyValueOutput, NetError>;
}

/// Uniform priors over legal actions and a constant value.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy {
    pub value: f64,
}

impl PolicyValue for UniformPolicy {
    fn predict(&self, _state: &StateVector, legal: &[bool]) -> Result<PolicyValueOutput, NetError> {
        let count = legal.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(NetError::NoLegalAction);
        }
        let p = 1.0 / count as f64;
        Ok(PolicyValueOutput {
            probs: legal.iter().map(|&b| if b { p } else { 0.0 }).collect(),
            value: self.value,
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Meta-features span many orders of magnitude; compress them before projection.
fn squash_context(context: &[f64]) -> [f64; CONTEXT_LEN] {
    let mut out = [0.0; CONTEXT_LEN];
    for (i, (o, &v)) in out.iter_mut().zip(context).enumerate() {
        *o = if i < META_LEN { v.signum() * v.abs().ln_1p() } else { v };
    }
    out
}

/// Softmax restricted to legal entries; illegal entries are exactly 0.
pub fn masked_softmax(logits: &[f64], legal: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(legal)
        .map(|(&z, &l)| if l { (z - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

struct Step {
    slot: usize,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    rh: Vec<f64>,
}

struct Trace {
    context: [f64; CONTEXT_LEN],
    h0: Vec<f64>,
    steps: Vec<Step>,
    h_last: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    value: f64,
}

impl NetParams {
    /// Uniform `[-0.05, 0.05]` initialization from `seed`.
    pub fn init(catalog: &Catalog, d: usize, h: usize, hyper: Hyper, seed: u64) -> NetParams {
        NetParams::init_dims(NetDims::for_catalog(catalog, d, h), hyper, seed)
    }

    pub fn init_dims(dims: NetDims, hyper: Hyper, seed: u64) -> NetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Weights::build(&dims, |shape| Tensor::uniform(shape, 0.05, &mut rng));
        NetParams {
            dims,
            hyper,
            weights,
        }
    }

    /// Default widths: embedding 16, hidden 64.
    pub fn init_default(catalog: &Catalog, seed: u64) -> NetParams {
        NetParams::init(catalog, 16, 64, Hyper::default(), seed)
    }

    fn check_input(&self, state: &StateVector, legal: &[bool]) -> Result<Vec<usize>, NetError> {
        let dims = &self.dims;
        if state.values().len() != dims.state_len() {
            return Err(NetError::Shape(format!(
                "state vector length {} != {}",
                state.values().len(),
                dims.state_len()
            )));
        }
        if legal.len() != dims.a {
            return Err(NetError::Shape(format!("legal mask length {} != {}", legal.len(), dims.a)));
        }
        if !legal.iter().any(|&b| b) {
            return Err(NetError::NoLegalAction);
        }
        state
            .slots()
            .iter()
            .map(|&v| {
                let o = v as usize;
                if v < 0.0 || v.fract() != 0.0 || o > dims.n {
                    Err(NetError::Shape(format!("slot value {v} outside 0..={}", dims.n)))
                } else {
                    Ok(o)
                }
            })
            .collect()
    }

    fn run(&self, state: &StateVector, legal: &[bool]) -> Result<Trace, NetError> {
        let slots = self.check_input(state, legal)?;
        let w = &self.weights;
        let NetDims { d, h, a, .. } = self.dims;

        let context = squash_context(state.context());
        let mut h0 = vec![0.0; h];
        w.ctx_w.matvec(&context, &mut h0);
        for (x, b) in h0.iter_mut().zip(&w.ctx_b.data) {
            *x = (*x + b).tanh();
        }

        let mut steps = Vec::with_capacity(slots.len());
        let mut hcur = h0.clone();
        let mut tmp = vec![0.0; h];
        for slot in slots {
            let e = &w.embed.data[slot * d..(slot + 1) * d];
            let mut z = vec![0.0; h];
            w.w_z.matvec(e, &mut z);
            w.u_z.matvec(&hcur, &mut tmp);
            for i in 0..h {
                z[i] = sigmoid(z[i] + tmp[i] + w.b_z.data[i]);
            }
            let mut r = vec![0.0; h];
            w.w_r.matvec(e, &mut r);
            w.u_r.matvec(&hcur, &mut tmp);
            for i in 0..h {
                r[i] = sigmoid(r[i] + tmp[i] + w.b_r.data[i]);
            }
            let rh: Vec<f64> = r.iter().zip(&hcur).map(|(a, b)| a * b).collect();
            let mut c = vec![0.0; h];
            w.w_n.matvec(e, &mut c);
            w.u_n.matvec(&rh, &mut tmp);
            for i in 0..h {
                c[i] = (c[i] + tmp[i] + w.b_n.data[i]).tanh();
            }
            let next: Vec<f64> = (0..h).map(|i| (1.0 - z[i]) * c[i] + z[i] * hcur[i]).collect();
            steps.push(Step {
                slot,
                h_prev: std::mem::replace(&mut hcur, next),
                z,
                r,
                c,
                rh,
            });
        }

        let mut logits = vec![0.0; a];
        w.pol_w.matvec(&hcur, &mut logits);
        for (z, b) in logits.iter_mut().zip(&w.pol_b.data) {
            *z += b;
        }
        let probs = masked_softmax(&logits, legal);
        let value_logit: f64 =
            w.val_w.data.iter().zip(&hcur).map(|(a, b)| a * b).sum::<f64>() + w.val_b.data[0];
        Ok(Trace {
            context,
            h0,
            steps,
            h_last: hcur,
            logits,
            probs,
            value: sigmoid(value_logit),
        })
    }

    pub fn forward(&self, state: &StateVector, legal: &[bool]) -> Result<PolicyValueOutput, NetError> {
        let t = self.run(state, legal)?;
        Ok(PolicyValueOutput {
            probs: t.probs,
            value: t.value,
        })
    }

    /// Raw policy logits (before masking).
    pub fn logits(&self, state: &StateVector, legal: &[bool]) -> Result<Vec<f64>, NetError> {
        Ok(self.run(state, legal)?.logits)
    }

    fn check_example(&self, ex: &TrainingExample) -> Result<(), NetError> {
        if ex.pi_target.len() != self.dims.a {
            return Err(NetError::Shape(format!(
                "policy target length {} != {}",
                ex.pi_target.len(),
                self.dims.a
            )));
        }
        Ok(())
    }

    /// Data terms of one example: (cross-entropy, value, logit L1).
    fn example_terms(&self, t: &Trace, ex: &TrainingExample) -> (f64, f64, f64) {
        let ce: f64 = ex
            .pi_target
            .iter()
            .zip(&t.probs)
            .filter(|(&pi, _)| pi != 0.0)
            .map(|(&pi, &p)| -pi * p.max(PROB_FLOOR).ln())
            .sum();
        let dv = t.value - ex.e;
        let l1: f64 = t.logits.iter().map(|z| z.abs()).sum();
        (ce, dv * dv, l1)
    }

    /// Batch loss and its terms `(total, cross_entropy, value, l2, l1)`.
    pub fn loss_terms(&self, batch: &[TrainingExample]) -> Result<LossTerms, NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let (mut ce, mut val, mut l1) = (0.0, 0.0, 0.0);
        for ex in batch {
            self.check_example(ex)?;
            let t = self.run(&ex.state_vec, &ex.legal)?;
            let (c, v, l) = self.example_terms(&t, ex);
            ce += c;
            val += v;
            l1 += l;
        }
        let k = batch.len() as f64;
        let terms = LossTerms {
            cross_entropy: ce / k,
            value: val / k,
            l2: self.hyper.alpha * self.weights.squared_norm(),
            l1: self.hyper.beta * l1 / k,
        };
        terms.check()?;
        Ok(terms)
    }

    pub fn loss(&self, batch: &[TrainingExample]) -> Result<f64, NetError> {
        Ok(self.loss_terms(batch)?.total())
    }

    fn backward(&self, t: &Trace, ex: &TrainingExample, g: &mut Weights) {
        let w = &self.weights;
        let NetDims { d, h, .. } = self.dims;

        // Policy logits.
        let unclamped_mass: f64 = ex
            .pi_target
            .iter()
            .zip(&t.probs)
            .filter(|(_, &p)| p >= PROB_FLOOR)
            .map(|(&pi, _)| pi)
            .sum();
        let beta = self.hyper.beta;
        let dlogits: Vec<f64> = (0..self.dims.a)
            .map(|j| {
                let mut gj = 0.0;
                if ex.legal[j] {
                    gj += t.probs[j] * unclamped_mass;
                    if t.probs[j] >= PROB_FLOOR {
                        gj -= ex.pi_target[j];
                    }
                }
                if t.logits[j] != 0.0 {
                    gj += beta * t.logits[j].signum();
                }
                gj
            })
            .collect();
        g.pol_w.outer_acc(&dlogits, &t.h_last);
        for (b, gj) in g.pol_b.data.iter_mut().zip(&dlogits) {
            *b += gj;
        }
        let mut dh = vec![0.0; h];
        w.pol_w.matvec_t_acc(&dlogits, &mut dh);

        // Value head.
        let dpre = 2.0 * (t.value - ex.e) * t.value * (1.0 - t.value);
        for i in 0..h {
            g.val_w.data[i] += dpre * t.h_last[i];
            dh[i] += dpre * w.val_w.data[i];
        }
        g.val_b.data[0] += dpre;

        // GRU, newest step first.
        let mut da_z = vec![0.0; h];
        let mut da_r = vec![0.0; h];
        let mut da_n = vec![0.0; h];
        let mut drh = vec![0.0; h];
        for s in t.steps.iter().rev() {
            let e = &w.embed.data[s.slot * d..(s.slot + 1) * d];
            let mut dh_prev: Vec<f64> = (0..h).map(|i| dh[i] * s.z[i]).collect();
            for i in 0..h {
                let dc = dh[i] * (1.0 - s.z[i]);
                let dz = dh[i] * (s.h_prev[i] - s.c[i]);
                da_n[i] = dc * (1.0 - s.c[i] * s.c[i]);
                da_z[i] = dz * s.z[i] * (1.0 - s.z[i]);
            }
            drh.iter_mut().for_each(|v| *v = 0.0);
            w.u_n.matvec_t_acc(&da_n, &mut drh);
            for i in 0..h {
                da_r[i] = drh[i] * s.h_prev[i] * s.r[i] * (1.0 - s.r[i]);
                dh_prev[i] += drh[i] * s.r[i];
            }
            g.w_n.outer_acc(&da_n, e);
            g.u_n.outer_acc(&da_n, &s.rh);
            g.w_z.outer_acc(&da_z, e);
            g.u_z.outer_acc(&da_z, &s.h_prev);
            g.w_r.outer_acc(&da_r, e);
            g.u_r.outer_acc(&da_r, &s.h_prev);
            for i in 0..h {
                g.b_n.data[i] += da_n[i];
                g.b_z.data[i] += da_z[i];
                g.b_r.data[i] += da_r[i];
            }
            w.u_z.matvec_t_acc(&da_z, &mut dh_prev);
            w.u_r.matvec_t_acc(&da_r, &mut dh_prev);
            let de = &mut g.embed.data[s.slot * d..(s.slot + 1) * d];
            w.w_n.matvec_t_acc(&da_n, de);
            w.w_z.matvec_t_acc(&da_z, de);
            w.w_r.matvec_t_acc(&da_r, de);
            dh = dh_prev;
        }

        // Context projection.
        let da0: Vec<f64> = (0..h).map(|i| dh[i] * (1.0 - t.h0[i] * t.h0[i])).collect();
        g.ctx_w.outer_acc(&da0, &t.context);
        for (b, v) in g.ctx_b.data.iter_mut().zip(&da0) {
            *b += v;
        }
    }

    /// Analytic gradient of [`NetParams::loss`] with respect to every parameter.
    pub fn gradient(&self, batch: &[TrainingExample]) -> Result<Weights, NetError> {
        Ok(self.loss_and_gradient(batch)?.1)
    }

    pub fn loss_and_gradient(&self, batch: &[TrainingExample]) -> Result<(f64, Weights), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let mut g = Weights::zeros(&self.dims);
        let (mut ce, mut val, mut l1) = (0.0, 0.0, 0.0);
        for ex in batch {
            self.check_example(ex)?;
            let t = self.run(&ex.state_vec, &ex.legal)?;
            let (c, v, l) = self.example_terms(&t, ex);
            ce += c;
            val += v;
            l1 += l;
            self.backward(&t, ex, &mut g);
        }
        let k = batch.len() as f64;
        let terms = LossTerms {
            cross_entropy: ce / k,
            value: val / k,
            l2: self.hyper.alpha * self.weights.squared_norm(),
            l1: self.hyper.beta * l1 / k,
        };
        terms.check()?;
        g.scale(1.0 / k);
        g.add_scaled(&self.weights, 2.0 * self.hyper.alpha);
        Ok((terms.total(), g))
    }

    /// One SGD step `theta <- theta - lr * grad`; returns the loss before the step.
    pub fn train_step(&mut self, batch: &[TrainingExample], learning_rate: f64) -> Result<f64, NetError> {
        let (loss, g) = self.loss_and_gradient(batch)?;
        if learning_rate != 0.0 {
            self.weights.add_scaled(&g, -learning_rate);
        }
        Ok(loss)
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.weights.groups().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn save_checkpoint(&self, catalog_hash: &str, path: impl AsRef<Path>) -> Result<(), NetError> {
        std::fs::write(path, self.to_checkpoint_json(catalog_hash))?;
        Ok(())
    }

    pub fn to_checkpoint_json(&self, catalog_hash: &str) -> String {
        let params = self
            .weights
            .groups()
            .into_iter()
            .map(|(name, t)| (name.to_string(), t.clone()))
            .collect();
        let doc = CheckpointDoc {
            version: CHECKPOINT_VERSION,
            catalog_hash: catalog_hash.to_string(),
            dims: self.dims,
            hyper: Some(self.hyper),
            params,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    /// Loads a checkpoint and checks it was trained for `catalog`.
    pub fn load_checkpoint(path: impl AsRef<Path>, catalog: &Catalog) -> Result<NetParams, NetError> {
        let text = std::fs::read_to_string(path)?;
        NetParams::from_checkpoint_json(&text, catalog)
    }

    pub fn from_checkpoint_json(text: &str, catalog: &Catalog) -> Result<NetParams, NetError> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(NetError::Version(doc.version));
        }
        let expected = catalog.hash();
        if doc.catalog_hash != expected {
            return Err(NetError::CatalogMismatch {
                expected,
                found: doc.catalog_hash,
            });
        }
        let dims = doc.dims;
        let want = NetDims::for_catalog(catalog, dims.d, dims.h);
        if dims != want {
            return Err(NetError::Shape(format!("checkpoint dims {dims:?}, catalog needs {want:?}")));
        }
        let mut weights = Weights::zeros(&dims);
        let mut params = doc.params;
        for (name, slot) in weights.groups_mut() {
            let t = params
                .remove(name)
                .ok_or_else(|| NetError::Shape(format!("missing parameter group {name}")))?;
            if t.shape != slot.shape || t.data.len() != slot.data.len() {
                return Err(NetError::Shape(format!(
                    "group {name} has shape {:?}, expected {:?}",
                    t.shape, slot.shape
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(NetError::Shape(format!("group {name} holds non-finite values")));
            }
            *slot = t;
        }
        if let Some(extra) = params.keys().next() {
            return Err(NetError::Shape(format!("unexpected parameter group {extra}")));
        }
        Ok(NetParams {
            dims,
            hyper: doc.hyper.unwrap_or_default(),
            weights,
        })
    }
}

impl PolicyValue for NetParams {
    fn predict(&self, state: &StateVector, legal: &[bool]) -> Result<PolicyValueOutput, NetError> {
        self.forward(state, legal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub cross_entropy: f64,
    pub value: f64,
    pub l2: f64,
    pub l1: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.cross_entropy + self.value + self.l2 + self.l1
    }

    fn check(&self) -> Result<(), NetError> {
        for (term, v) in [
            ("cross_entropy", self.cross_entropy),
            ("value", self.value),
            ("l2", self.l2),
            ("l1", self.l1),
        ] {
            if !v.is_finite() {
                return Err(NetError::NonFinite { term });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    version: u32,
    catalog_hash: String,
    dims: NetDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyper: Option<Hyper>,
    params: BTreeMap<String, Tensor>,
}
