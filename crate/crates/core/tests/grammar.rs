mod common;

use common::grammar_oracle;

use std::collections::{HashMap, HashSet};

use pipeforge_core::catalog::Category;
use pipeforge_core::game::{apply_action, encode_state, legal_actions, legal_indices, replay_trace};
use pipeforge_core::sampler::PipelineSampler;
use pipeforge_core::{
    action_space_size, validate_pipeline, ActionSpace, Catalog, EditAction, GameState, MetaFeatures, Pipeline,
    TaskKind,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KINDS: [TaskKind; 3] = [
    TaskKind::BinaryClassification,
    TaskKind::MulticlassClassification,
    TaskKind::Regression,
];

#[test]
fn legal_actions_match_brute_force_at_length_three() {
    let catalog = Catalog::builtin().with_max_len(3).unwrap();
    let report = grammar_oracle::check(&catalog, 3);
    assert!(report.mismatches.is_empty(), "{:?}", &report.mismatches[..report.mismatches.len().min(5)]);
    assert!(report.actions_checked > 10_000);
}

#[test]
fn action_space_sizes() {
    assert_eq!(action_space_size(&Catalog::builtin()), 169);
    let one = Catalog::from_json(r#"[{"id":"e","category":"estimate","tasks":["regression"]}]"#)
        .unwrap()
        .with_max_len(1)
        .unwrap();
    assert_eq!(action_space_size(&one), 4);
}

#[test]
fn every_valid_pipeline_is_reachable_by_inserts() {
    let catalog = Catalog::builtin().with_max_len(4).unwrap();
    let space = ActionSpace::new(&catalog);
    for kind in KINDS {
        // Enumerate pipelines by sampling until the whole space is covered.
        let sampler = PipelineSampler::new(&catalog, kind);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pipelines = HashSet::new();
        while (pipelines.len() as u128) < sampler.count() {
            pipelines.insert(sampler.sample(&mut rng).unwrap());
        }
        for p in pipelines {
            let mut actions: Vec<EditAction> = p
                .ordinals()
                .iter()
                .enumerate()
                .map(|(position, &primitive)| EditAction::Insert { position, primitive })
                .collect();
            actions.push(EditAction::Commit);
            for a in &actions {
                space.encode(a).unwrap();
            }
            let start = GameState::initial(MetaFeatures::zeros(), common::task(kind));
            let end = replay_trace(&start, &catalog, &actions).unwrap();
            assert!(end.committed());
            assert_eq!(end.pipeline(), &p);
        }
    }
}

#[test]
fn encoding_has_no_collisions_over_random_pipelines() {
    let catalog = Catalog::builtin();
    let meta = MetaFeatures::zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut by_vector: HashMap<Vec<u64>, (TaskKind, Pipeline)> = HashMap::new();
    let mut drawn = 0;
    while drawn < 10_000 {
        for kind in KINDS {
            let p = PipelineSampler::new(&catalog, kind).sample(&mut rng).unwrap();
            let actions: Vec<EditAction> = p
                .ordinals()
                .iter()
                .enumerate()
                .map(|(position, &primitive)| EditAction::Insert { position, primitive })
                .collect();
            let s = replay_trace(&GameState::initial(meta, common::task(kind)), &catalog, &actions).unwrap();
            let key: Vec<u64> = encode_state(&s, &catalog).unwrap().values().iter().map(|v| v.to_bits()).collect();
            if let Some(prev) = by_vector.insert(key, (kind, p.clone())) {
                assert_eq!(prev, (kind, p), "two states share an encoding");
            }
            drawn += 1;
        }
    }
}

fn arb_catalog_and_state() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 0usize..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn applying_a_legal_action_keeps_the_pipeline_valid((seed, moves) in arb_catalog_and_state()) {
        let catalog = Catalog::builtin();
        let space = ActionSpace::new(&catalog);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_state(&mut rng, &catalog, moves);
        for a in legal_indices(&s, &catalog).unwrap() {
            let t = apply_action(&s, &catalog, &space.decode(a).unwrap()).unwrap();
            prop_assert!(validate_pipeline(&catalog, t.pipeline()).unwrap().is_ok());
            prop_assert_eq!(t.move_count(), s.move_count() + 1);
            if t.committed() {
                let last = t.pipeline().last().unwrap();
                prop_assert_eq!(catalog.category(last), Some(Category::Estimate));
            }
        }
    }

    #[test]
    fn action_index_round_trip(a in 0usize..169) {
        let space = ActionSpace::new(&Catalog::builtin());
        prop_assert_eq!(space.encode(&space.decode(a).unwrap()).unwrap(), a);
    }

    #[test]
    fn illegal_actions_are_rejected((seed, moves) in arb_catalog_and_state()) {
        let catalog = Catalog::builtin();
        let space = ActionSpace::new(&catalog);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_state(&mut rng, &catalog, moves);
        let mask = legal_actions(&s, &catalog).unwrap();
        for (a, legal) in mask.into_iter().enumerate() {
            if !legal {
                prop_assert!(apply_action(&s, &catalog, &space.decode(a).unwrap()).is_err());
            }
        }
    }

    #[test]
    fn state_vector_shape((seed, moves) in arb_catalog_and_state()) {
        let catalog = Catalog::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_state(&mut rng, &catalog, moves);
        let v = encode_state(&s, &catalog).unwrap();
        prop_assert_eq!(v.values().len(), 16 + 3 + 8);
        prop_assert!(v.slots().iter().all(|&x| x >= 0.0 && x <= 10.0 && x.fract() == 0.0));
        prop_assert_eq!(v.pipeline(&catalog), s.pipeline().clone());
        prop_assert_eq!(v.task_kind(), Some(s.task().kind()));
    }
}
