//! Uniform sampling of valid committed pipelines, used by the random-search benchmark.

use std::collections::HashSet;

use rand::Rng;

use crate::catalog::{Catalog, Category, Pipeline};
use crate::eval::Environment;
use crate::task::TaskKind;

/// Draws pipelines uniformly from every valid pipeline ending in an estimator that
/// supports the task.
#[derive(Debug, Clone)]
pub struct PipelineSampler {
    /// Non-estimator primitives usable for the task, grouped by category in order.
    stages: Vec<(Category, Vec<usize>)>,
    estimators: Vec<usize>,
    /// `ways[r][g]`: sequences of `r` stages whose categories start at group `g` or later.
    ways: Vec<Vec<u128>>,
    max_len: usize,
}

impl PipelineSampler {
    pub fn new(catalog: &Catalog, kind: TaskKind) -> PipelineSampler {
        let mut stages: Vec<(Category, Vec<usize>)> = Vec::new();
        let mut estimators = Vec::new();
        for (o, p) in catalog.primitives().iter().enumerate() {
            if !p.supports(kind) {
                continue;
            }
            if p.category == Category::Estimate {
                estimators.push(o);
                continue;
            }
            match stages.iter_mut().find(|(c, _)| *c == p.category) {
                Some((_, v)) => v.push(o),
                None => stages.push((p.category, vec![o])),
            }
        }
        stages.sort_by_key(|(c, _)| *c);
        let max_len = catalog.max_len();
        let groups = stages.len();
        let mut ways = vec![vec![0u128; groups + 1]; max_len];
        for row in ways.iter_mut().take(1) {
            row.iter_mut().for_each(|w| *w = 1);
        }
        for r in 1..max_len {
            for g in (0..groups).rev() {
                // First stage in group g, or skip group g entirely.
                ways[r][g] = stages[g].1.len() as u128 * ways[r - 1][g] + ways[r][g + 1];
            }
        }
        PipelineSampler {
            stages,
            estimators,
            ways,
            max_len,
        }
    }

    /// Number of distinct valid pipelines.
    pub fn count(&self) -> u128 {
        let prefixes: u128 = self.ways.iter().map(|row| row[0]).sum();
        prefixes * self.estimators.len() as u128
    }

    /// Every valid pipeline, shortest first, then by ordinal sequence.
    pub fn enumerate(&self) -> Vec<Pipeline> {
        fn extend(
            stages: &[(Category, Vec<usize>)],
            from: usize,
            left: usize,
            prefix: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if left == 0 {
                out.push(prefix.clone());
                return;
            }
            for g in from..stages.len() {
                for &o in &stages[g].1 {
                    prefix.push(o);
                    extend(stages, g, left - 1, prefix, out);
                    prefix.pop();
                }
            }
        }
        let mut out = Vec::new();
        for r in 0..self.max_len {
            let mut prefixes = Vec::new();
            extend(&self.stages, 0, r, &mut Vec::new(), &mut prefixes);
            prefixes.sort();
            for prefix in prefixes {
                for &e in &self.estimators {
                    let mut ords = prefix.clone();
                    ords.push(e);
                    out.push(Pipeline::from_ordinals(ords));
                }
            }
        }
        out
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<Pipeline> {
        let total = self.count();
        if total == 0 {
            return None;
        }
        let mut pick = rng.gen_range(0..total) / self.estimators.len() as u128;
        let estimator = self.estimators[rng.gen_range(0..self.estimators.len())];
        let mut r = 0;
        while pick >= self.ways[r][0] {
            pick -= self.ways[r][0];
            r += 1;
        }
        let mut out = Vec::with_capacity(r + 1);
        let mut g = 0;
        while r > 0 {
            let here = self.stages[g].1.len() as u128 * self.ways[r - 1][g];
            if pick < here {
                let members = &self.stages[g].1;
                let per = self.ways[r - 1][g];
                out.push(members[(pick / per) as usize]);
                pick %= per;
                r -= 1;
            } else {
                pick -= here;
                g += 1;
            }
        }
        out.push(estimator);
        debug_assert!(out.len() <= self.max_len);
        Some(Pipeline::from_ordinals(out))
    }
}

/// Best evaluation among `budget` distinct uniformly drawn pipelines (fewer if the
/// pipeline space is smaller). Returns the best `e` and the number evaluated.
pub fn random_search<R: Rng>(
    sampler: &PipelineSampler,
    env: &dyn Environment,
    budget: usize,
    rng: &mut R,
) -> (f64, usize) {
    let budget = (budget as u128).min(sampler.count()) as usize;
    let mut seen = HashSet::new();
    let mut best = 0.0f64;
    while seen.len() < budget {
        let Some(p) = sampler.sample(rng) else { break };
        if seen.insert(p.clone()) {
            best = best.max(env.evaluate(&p).e);
        }
    }
    (best, seen.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::validate_pipeline;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_small_catalog() {
        // Binary task, L=2: one optional non-estimator stage (8 choices) then one of 2 estimators.
        let c = Catalog::builtin().with_max_len(2).unwrap();
        let s = PipelineSampler::new(&c, TaskKind::BinaryClassification);
        assert_eq!(s.count(), 18);
        let r = PipelineSampler::new(&c, TaskKind::Regression);
        assert_eq!(r.count(), 9);
    }

    #[test]
    fn samples_are_valid_and_cover_the_space() {
        let c = Catalog::builtin().with_max_len(3).unwrap();
        let s = PipelineSampler::new(&c, TaskKind::MulticlassClassification);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = HashSet::new();
        for _ in 0..20_000 {
            let p = s.sample(&mut rng).unwrap();
            assert!(validate_pipeline(&c, &p).unwrap().is_ok());
            seen.insert(p);
        }
        assert_eq!(seen.len() as u128, s.count());
        let all: HashSet<_> = s.enumerate().into_iter().collect();
        assert_eq!(all, seen);
    }
}
