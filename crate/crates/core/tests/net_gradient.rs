mod common;

use common::gradcheck;

use pipeforge_core::net::{masked_softmax, NetParams, GROUP_NAMES, PROB_FLOOR};
use pipeforge_core::{Catalog, TrainingExample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn small_network_every_coordinate() {
    let catalog = Catalog::builtin().with_max_len(3).unwrap();
    let (net, batch) = gradcheck::draw(&catalog, 4, 6, 1);
    for name in GROUP_NAMES {
        let err = gradcheck::group_error(&net, &batch, name, usize::MAX, 0);
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn default_network_sampled_coordinates() {
    let catalog = Catalog::builtin();
    for draw_seed in 0..2 {
        let (net, batch) = gradcheck::draw(&catalog, 16, 64, 10 + draw_seed);
        for (gi, name) in GROUP_NAMES.iter().enumerate() {
            let err = gradcheck::group_error(&net, &batch, name, 12, draw_seed * 100 + gi as u64);
            assert!(err < 1e-4, "draw {draw_seed} {name}: relative error {err:e}");
        }
    }
}

/// Loss recomputed from forward outputs only, independent of the training code path.
fn reference_loss(net: &NetParams, batch: &[TrainingExample]) -> f64 {
    let k = batch.len() as f64;
    let mut data = 0.0;
    for ex in batch {
        let logits = net.logits(&ex.state_vec, &ex.legal).unwrap();
        let probs = masked_softmax(&logits, &ex.legal);
        let out = net.forward(&ex.state_vec, &ex.legal).unwrap();
        for (pi, p) in ex.pi_target.iter().zip(&probs) {
            if *pi > 0.0 {
                data -= pi * p.max(PROB_FLOOR).ln();
            }
        }
        data += (out.value - ex.e).powi(2);
        data += net.hyper.beta * logits.iter().map(|z| z.abs()).sum::<f64>();
    }
    let l2: f64 = net
        .weights
        .groups()
        .iter()
        .flat_map(|(_, t)| t.data.iter())
        .map(|x| x * x)
        .sum();
    data / k + net.hyper.alpha * l2
}

#[test]
fn loss_matches_reference_computation() {
    let catalog = Catalog::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..5 {
        let net = gradcheck::scaled_net(&catalog, 16, 64, seed);
        let batch: Vec<_> = (0..4).map(|_| common::random_example(&mut rng, &catalog)).collect();
        let a = net.loss(&batch).unwrap();
        let b = reference_loss(&net, &batch);
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn training_reduces_loss_on_a_fixed_batch() {
    let catalog = Catalog::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch: Vec<_> = (0..8).map(|_| common::random_example(&mut rng, &catalog)).collect();
    let mut net = NetParams::init_default(&catalog, 3);
    let before = net.loss(&batch).unwrap();
    for _ in 0..200 {
        net.train_step(&batch, 0.05).unwrap();
    }
    let after = net.loss(&batch).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let catalog = Catalog::builtin();
    let net = gradcheck::scaled_net(&catalog, 16, 64, 4);
    let json = net.to_checkpoint_json(&catalog.hash());
    let back = NetParams::from_checkpoint_json(&json, &catalog).unwrap();
    assert_eq!(back.weights, net.weights);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let ex = common::random_example(&mut rng, &catalog);
        assert_eq!(
            net.forward(&ex.state_vec, &ex.legal).unwrap(),
            back.forward(&ex.state_vec, &ex.legal).unwrap()
        );
    }
    let other = Catalog::builtin().with_max_len(4).unwrap();
    assert!(NetParams::from_checkpoint_json(&json, &other).is_err());
}
