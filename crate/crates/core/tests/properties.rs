mod common;

use common::{katz_by_walks, simple_paths};
use kgcd::synth::{random_graph, GraphShape};
use kgcd::{
    EntityId, InformativenessTable, LinearizeConfig, Linearizer, ScoreParams, WordTokenizer,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape() -> impl Strategy<Value = (u64, GraphShape)> {
    (
        any::<u64>(),
        2usize..12,
        1usize..4,
        1usize..20,
        any::<bool>(),
    )
        .prop_map(|(seed, e, r, t, l)| {
            (
                seed,
                GraphShape {
                    entities: e,
                    relations: r,
                    triplets: t,
                    self_loops: l,
                },
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_simple_path_round_trips((seed, shape) in shape(), slots in 1u8..=4) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), shape);
        let tok = WordTokenizer::from_graph(&g);
        let lin = Linearizer::new(&g, &tok, LinearizeConfig { slots }).unwrap();
        for e in g.entity_ids() {
            for p in simple_paths(g.triplets(), e, 3) {
                let seq = lin.linearize_path(&p).unwrap();
                prop_assert_eq!(lin.delinearize(seq.ids()).unwrap(), vec![p]);
            }
        }
    }

    #[test]
    fn katz_matches_walk_count((seed, shape) in shape(), k in 1usize..=4, beta in 0.05f64..1.0, m in 0usize..12) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), shape);
        let mention = EntityId((m % shape.entities) as u32);
        let sub = g.as_candidate(&[mention]).unwrap();
        let table = InformativenessTable::build(&sub, ScoreParams { beta, k, ..ScoreParams::default() }).unwrap();
        let oracle = katz_by_walks(g.triplets(), &[mention], beta, k);
        for e in g.entity_ids() {
            let want = oracle.get(&e).copied().unwrap_or(0.0);
            prop_assert!((table.score(e) - want).abs() <= 1e-9, "{:?}: {} vs {}", e, table.score(e), want);
        }
    }
}
