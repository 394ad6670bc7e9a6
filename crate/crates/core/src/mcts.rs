//! Network-guided Monte-Carlo tree search over edit actions.
//!
//! Selection maximizes `Q(s,a) + c * P(s,a) * sqrt(N(s)) / (1 + N(s,a))`. Each
//! simulation adds exactly one node: non-terminal leaves are valued by the network,
//! terminal leaves by the real evaluation of their pipeline (memoized per search).
//! Nodes are keyed by path, so two edit sequences reaching the same pipeline own
//! separate statistics.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use thiserror::Error;

use crate::catalog::{Catalog, Pipeline};
use crate::eval::Environment;
use crate::game::{apply_action, encode_state, legal_actions, ActionSpace, GameError, GameState};
use crate::net::{NetError, PolicyValue};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("cannot search from a terminal state")]
    TerminalRoot,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid search config: {0}")]
    Config(&'static str),
}

/// Dirichlet noise mixed into the root priors: `(1 - epsilon) * P + epsilon * Dir(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootNoise {
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for RootNoise {
    fn default() -> Self {
        RootNoise {
            alpha: 0.3,
            epsilon: 0.25,
        }
    }
}

/// Value that stands in for `Q(s,a)` on an edge with no visits yet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnvisitedQ {
    Zero,
    /// The parent's mean backed-up value, or its own leaf value before any visit.
    Parent,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Exploration constant `c`.
    pub c: f64,
    pub simulations: usize,
    /// Moves before this index sample with temperature 1; later moves take the argmax.
    pub tau_cutoff: usize,
    pub root_noise: Option<RootNoise>,
    pub unvisited: UnvisitedQ,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            c: 1.0,
            simulations: 100,
            tau_cutoff: 4,
            root_noise: None,
            unvisited: UnvisitedQ::Parent,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SearchError::Config("c must be finite and > 0"));
        }
        if self.simulations == 0 {
            return Err(SearchError::Config("simulations must be >= 1"));
        }
        if let UnvisitedQ::Fixed(v) = self.unvisited {
            if !v.is_finite() {
                return Err(SearchError::Config("unvisited value must be finite"));
            }
        }
        if let Some(noise) = self.root_noise {
            if !(0.0..1.0).contains(&noise.epsilon) {
                return Err(SearchError::Config("noise epsilon must be in [0, 1)"));
            }
            if !(noise.alpha > 0.0) {
                return Err(SearchError::Config("noise alpha must be > 0"));
            }
        }
        Ok(())
    }
}

/// `Q + c * P * sqrt(N(s)) / (1 + N(s,a))`.
pub fn puct_score(q: f64, p: f64, n_s: f64, n_sa: f64, c: f64) -> f64 {
    q + c * p * n_s.sqrt() / (1.0 + n_sa)
}

/// Per-node statistics. Edge arrays are indexed by position in `legal`.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: GameState,
    pub terminal: bool,
    /// Reward of a terminal node.
    pub terminal_value: f64,
    pub legal: Vec<usize>,
    pub prior: Vec<f64>,
    pub visits: Vec<u32>,
    pub total_value: Vec<f64>,
    pub children: Vec<Option<usize>>,
    /// Network value at expansion.
    pub value: f64,
    visit_sum: u64,
}

impl SearchNode {
    fn leaf(state: GameState) -> SearchNode {
        SearchNode {
            state,
            terminal: false,
            terminal_value: 0.0,
            legal: Vec::new(),
            prior: Vec::new(),
            visits: Vec::new(),
            total_value: Vec::new(),
            children: Vec::new(),
            value: 0.0,
            visit_sum: 0,
        }
    }

    /// `N(s) = sum_a N(s,a)`.
    pub fn parent_visits(&self) -> u64 {
        self.visit_sum
    }

    /// Mean value `W / N`, 0 for an unvisited edge.
    pub fn q(&self, edge: usize) -> f64 {
        match self.visits[edge] {
            0 => 0.0,
            n => self.total_value[edge] / n as f64,
        }
    }

    fn is_expanded(&self) -> bool {
        self.terminal || !self.legal.is_empty()
    }

    /// Edge with the highest PUCT score; the lowest action index wins ties.
    fn select(&self, c: f64, unvisited: UnvisitedQ) -> usize {
        let n_s = self.visit_sum as f64;
        let fresh = match unvisited {
            UnvisitedQ::Zero => 0.0,
            UnvisitedQ::Fixed(v) => v,
            UnvisitedQ::Parent if self.visit_sum == 0 => self.value,
            UnvisitedQ::Parent => self.total_value.iter().sum::<f64>() / n_s,
        };
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.legal.len() {
            let q = if self.visits[k] == 0 { fresh } else { self.q(k) };
            let u = puct_score(q, self.prior[k], n_s, self.visits[k] as f64, c);
            if u > best_score {
                best = k;
                best_score = u;
            }
        }
        best
    }
}

/// Arena of search nodes; node 0 is the root.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn new(root: GameState) -> SearchTree {
        SearchTree {
            nodes: vec![SearchNode::leaf(root)],
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Pipeline reached by following the most-visited edge from the root (lowest index on
    /// ties), if that line ends in a commit.
    pub fn principal_pipeline(&self) -> Option<Pipeline> {
        let mut node = self.root();
        loop {
            if node.terminal {
                return node.state.committed().then(|| node.state.pipeline().clone());
            }
            let mut best: Option<usize> = None;
            for (k, &n) in node.visits.iter().enumerate() {
                if n > 0 && best.map_or(true, |b| n > node.visits[b]) {
                    best = Some(k);
                }
            }
            node = self.node(node.children[best?]?);
        }
    }

    /// Installs priors on an unexpanded node.
    pub fn expand(&mut self, id: usize, legal: Vec<usize>, prior: Vec<f64>) {
        let node = &mut self.nodes[id];
        let k = legal.len();
        node.legal = legal;
        node.prior = prior;
        node.visits = vec![0; k];
        node.total_value = vec![0.0; k];
        node.children = vec![None; k];
    }

    /// Adds `value` to every `(node, edge)` on a selection path. Single-player, so the
    /// value is never negated.
    pub fn backup(&mut self, path: &[(usize, usize)], value: f64) {
        for &(id, edge) in path {
            let node = &mut self.nodes[id];
            node.visits[edge] += 1;
            node.total_value[edge] += value;
            node.visit_sum += 1;
        }
    }

    fn push(&mut self, node: SearchNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }
}

/// Search outcome at the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Legal action indices at the root, ascending.
    pub legal: Vec<usize>,
    /// `N(root, a)` for each legal action.
    pub visits: Vec<u32>,
    /// Root priors used by the search (after noise), per legal action.
    pub prior: Vec<f64>,
    /// Mean backed-up value over all root edges.
    pub root_value: f64,
    /// Distinct pipelines the search asked the environment to evaluate.
    pub evaluations: usize,
    pub action_space: usize,
}

impl SearchResult {
    /// Distribution over legal actions, `pi(a) ~ N(root, a)^(1 / tau)`.
    ///
    /// `tau == 0` gives the one-hot argmax (lowest index on ties). With no visits at all
    /// (a one-simulation search) the root priors stand in for the counts.
    pub fn policy(&self, tau: f64) -> Vec<f64> {
        let counts: Vec<f64> = if self.visits.iter().all(|&v| v == 0) {
            self.prior.clone()
        } else {
            self.visits.iter().map(|&v| v as f64).collect()
        };
        if tau == 0.0 {
            let mut best = 0;
            for (k, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = k;
                }
            }
            let mut pi = vec![0.0; counts.len()];
            pi[best] = 1.0;
            return pi;
        }
        let powered: Vec<f64> = counts.iter().map(|c| c.powf(1.0 / tau)).collect();
        let total: f64 = powered.iter().sum();
        powered.iter().map(|p| p / total).collect()
    }

    /// Policy spread over the full action index range.
    pub fn dense_policy(&self, tau: f64) -> Vec<f64> {
        let mut dense = vec![0.0; self.action_space];
        for (&a, p) in self.legal.iter().zip(self.policy(tau)) {
            dense[a] = p;
        }
        dense
    }

    pub fn best_action(&self) -> usize {
        let pi = self.policy(0.0);
        self.legal[pi.iter().position(|&p| p == 1.0).unwrap_or(0)]
    }
}

/// Reward of a terminal state: the evaluation of a committed pipeline, else 0.
pub fn terminal_reward(state: &GameState, env: &dyn Environment) -> f64 {
    if state.committed() {
        env.evaluate(state.pipeline()).e
    } else {
        0.0
    }
}

struct Searcher<'a> {
    catalog: &'a Catalog,
    net: &'a dyn PolicyValue,
    env: &'a dyn Environment,
    memo: HashMap<Pipeline, f64>,
}

impl Searcher<'_> {
    fn reward(&mut self, state: &GameState) -> f64 {
        if !state.committed() {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(state.pipeline()) {
            return v;
        }
        let v = self.env.evaluate(state.pipeline()).e;
        self.memo.insert(state.pipeline().clone(), v);
        v
    }

    /// Priors over legal actions and the value of a non-terminal state.
    fn evaluate_leaf(&self, state: &GameState) -> Result<(Vec<usize>, Vec<f64>, f64), SearchError> {
        let mask = legal_actions(state, self.catalog)?;
        let vec = encode_state(state, self.catalog)?;
        let out = self.net.predict(&vec, &mask)?;
        let legal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let prior = legal.iter().map(|&a| out.probs[a]).collect();
        Ok((legal, prior, out.value))
    }
}

/// Runs `cfg.simulations` simulations from `root`.
///
/// The first simulation expands the root, so after `k` simulations the root edges hold
/// `k - 1` visits in total.
pub fn run_search(
    root: &GameState,
    catalog: &Catalog,
    net: &dyn PolicyValue,
    cfg: &SearchConfig,
    env: &dyn Environment,
) -> Result<SearchResult, SearchError> {
    Ok(search_tree(root, catalog, net, cfg, env)?.0)
}

/// Like [`run_search`] but also hands back the tree.
pub fn search_tree(
    root: &GameState,
    catalog: &Catalog,
    net: &dyn PolicyValue,
    cfg: &SearchConfig,
    env: &dyn Environment,
) -> Result<(SearchResult, SearchTree), SearchError> {
    cfg.validate()?;
    if root.is_terminal() {
        return Err(SearchError::TerminalRoot);
    }
    let space = ActionSpace::new(catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut searcher = Searcher {
        catalog,
        net,
        env,
        memo: HashMap::new(),
    };
    let mut tree = SearchTree::new(root.clone());

    for _ in 0..cfg.simulations {
        if !tree.root().is_expanded() {
            let (legal, mut prior, v) = searcher.evaluate_leaf(root)?;
            tree.nodes[0].value = v;
            if let Some(noise) = cfg.root_noise.filter(|_| legal.len() > 1) {
                let dir = Dirichlet::new_with_size(noise.alpha, legal.len())
                    .map_err(|_| SearchError::Config("bad Dirichlet parameters"))?;
                let sample = dir.sample(&mut rng);
                for (p, n) in prior.iter_mut().zip(sample) {
                    *p = (1.0 - noise.epsilon) * *p + noise.epsilon * n;
                }
            }
            tree.expand(0, legal, prior);
            continue;
        }

        let mut id = 0;
        let mut path = Vec::new();
        let value = loop {
            let node = tree.node(id);
            if node.terminal {
                break node.terminal_value;
            }
            let edge = node.select(cfg.c, cfg.unvisited);
            path.push((id, edge));
            if let Some(child) = node.children[edge] {
                id = child;
                continue;
            }
            let action = space.decode(node.legal[edge])?;
            let state = apply_action(&node.state, catalog, &action)?;
            let mut leaf = SearchNode::leaf(state);
            let value = if leaf.state.is_terminal() {
                let v = searcher.reward(&leaf.state);
                leaf.terminal = true;
                leaf.terminal_value = v;
                let child = tree.push(leaf);
                tree.nodes[id].children[edge] = Some(child);
                v
            } else {
                let (legal, prior, v) = searcher.evaluate_leaf(&leaf.state)?;
                let child = tree.push(leaf);
                tree.nodes[id].children[edge] = Some(child);
                tree.expand(child, legal, prior);
                tree.nodes[child].value = v;
                v
            };
            break value;
        };
        tree.backup(&path, value);
    }

    let r = tree.root();
    let total: f64 = r.total_value.iter().sum();
    let root_value = if r.visit_sum == 0 {
        searcher.evaluate_leaf(root)?.2
    } else {
        total / r.visit_sum as f64
    };
    let result = SearchResult {
        legal: r.legal.clone(),
        visits: r.visits.clone(),
        prior: r.prior.clone(),
        root_value,
        evaluations: searcher.memo.len(),
        action_space: space.size(),
    };
    Ok((result, tree))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn puct_examples() {
        assert!((puct_score(0.2, 0.5, 16.0, 3.0, 1.0) - 0.7).abs() < 1e-15);
        assert_eq!(puct_score(0.9, 0.37, 0.0, 0.0, 5.0), 0.9);
        assert_eq!(puct_score(0.3, 0.0, 100.0, 0.0, 2.0), 0.3);
    }

    fn one_edge_tree() -> SearchTree {
        let c = Catalog::builtin();
        let task = crate::task::TaskSpec::new(
            crate::task::TaskKind::Regression,
            "y",
            crate::task::Metric::RSquared,
        )
        .unwrap();
        let _ = c;
        let mut t = SearchTree::new(GameState::initial(crate::game::MetaFeatures::zeros(), task));
        t.expand(0, vec![5], vec![1.0]);
        t
    }

    #[test]
    fn backup_running_mean() {
        let mut t = one_edge_tree();
        t.backup(&[(0, 0)], 1.0);
        assert_eq!(t.root().visits[0], 1);
        assert_eq!(t.root().q(0), 1.0);

        let mut t = one_edge_tree();
        t.backup(&[(0, 0)], 0.0);
        t.backup(&[(0, 0)], 1.0);
        assert_eq!(t.root().visits[0], 2);
        assert_eq!(t.root().q(0), 0.5);

        let mut t = one_edge_tree();
        for v in [0.2, 0.4, 0.6] {
            t.backup(&[(0, 0)], v);
        }
        assert!((t.root().q(0) - 0.4).abs() < 1e-15);
        assert_eq!(t.root().parent_visits(), 3);
    }

    #[test]
    fn argmax_policy_ties_go_low() {
        let r = SearchResult {
            legal: vec![3, 7, 9],
            visits: vec![4, 6, 6],
            prior: vec![0.2, 0.3, 0.5],
            root_value: 0.0,
            evaluations: 0,
            action_space: 10,
        };
        assert_eq!(r.policy(0.0), vec![0.0, 1.0, 0.0]);
        assert_eq!(r.best_action(), 7);
        let pi = r.policy(1.0);
        assert!((pi[0] - 0.25).abs() < 1e-15);
        assert_eq!(r.dense_policy(1.0)[9], 0.375);
    }

    #[test]
    fn config_validation() {
        let bad = SearchConfig { c: 0.0, ..SearchConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SearchConfig { simulations: 0, ..SearchConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SearchConfig {
            root_noise: Some(RootNoise { alpha: 0.3, epsilon: 1.0 }),
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
