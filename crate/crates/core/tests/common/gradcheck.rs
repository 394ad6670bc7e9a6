//! Central finite-difference check of the analytic network gradient.

use pipeforge_core::net::{Hyper, NetParams};
use pipeforge_core::{Catalog, TrainingExample};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;

pub fn scaled_net(catalog: &Catalog, d: usize, h: usize, seed: u64) -> NetParams {
    let mut net = NetParams::init(catalog, d, h, Hyper::default(), seed);
    // Larger weights keep logits away from the L1 kink and make every term matter.
    for (_, t) in net.weights.groups_mut() {
        t.data.iter_mut().for_each(|x| *x *= 12.0);
    }
    net
}

fn min_abs_logit(net: &NetParams, batch: &[TrainingExample]) -> f64 {
    batch
        .iter()
        .flat_map(|ex| net.logits(&ex.state_vec, &ex.legal).unwrap())
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min)
}

/// A (network, batch) pair whose logits all sit at least 1e-3 from zero.
pub fn draw(catalog: &Catalog, d: usize, h: usize, seed: u64) -> (NetParams, Vec<TrainingExample>) {
    for attempt in 0.. {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + attempt);
        let net = scaled_net(catalog, d, h, rng.gen());
        let batch: Vec<_> = (0..3).map(|_| super::random_example(&mut rng, catalog)).collect();
        if min_abs_logit(&net, &batch) > 1e-3 {
            return (net, batch);
        }
    }
    unreachable!()
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Max relative error over up to `per_group` coordinates of `group`.
pub fn group_error(net: &NetParams, batch: &[TrainingExample], group: &str, per_group: usize, seed: u64) -> f64 {
    let grad = net.gradient(batch).unwrap();
    let g = grad.group(group).unwrap();
    let len = g.data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = if len <= per_group {
        (0..len).collect()
    } else {
        sample(&mut rng, len, per_group).into_vec()
    };
    let mut worst: f64 = 0.0;
    for k in coords {
        let mut plus = net.clone();
        plus.weights.group_mut(group).unwrap().data[k] += STEP;
        let mut minus = net.clone();
        minus.weights.group_mut(group).unwrap().data[k] -= STEP;
        let numeric = (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * STEP);
        worst = worst.max(relative_error(g.data[k], numeric));
    }
    worst
}
