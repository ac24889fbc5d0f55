mod common;

use common::{check_retrieval, oracle_language, random_case, rng, trie_language};
use kgcd::{
    ConstraintError, ConstraintTrie, KnowledgeGraph, LinearizeConfig, Linearizer, TrieConfig,
    WordTokenizer,
};

fn compare(g: &KnowledgeGraph, mentions: &[kgcd::EntityId], cfg: TrieConfig, slots: u8) -> usize {
    let tok = WordTokenizer::from_graph(g);
    let lin = Linearizer::new(g, &tok, LinearizeConfig { slots }).unwrap();
    let sub = g.k_hop_subgraph(mentions, cfg.max_hops).unwrap();
    let expected = oracle_language(&lin, sub.triplets(), mentions, cfg);
    match ConstraintTrie::build(sub, &tok, *lin.specials(), cfg) {
        Ok(trie) => {
            let got = trie_language(&trie, 200_000);
            assert_eq!(got.len(), expected.len(), "language sizes differ");
            assert_eq!(got, expected);
            got.len()
        }
        Err(ConstraintError::NoRetrievableKnowledge) => {
            assert!(expected.is_empty());
            0
        }
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn chained_language_matches_enumeration() {
    let mut r = rng(11);
    let total: usize = (0..60)
        .map(|_| {
            let (g, ms) = random_case(&mut r, 8);
            compare(
                &g,
                &ms,
                TrieConfig {
                    max_hops: 2,
                    max_paths: 2,
                    strict_mentions: false,
                },
                1,
            )
        })
        .sum();
    assert!(total > 1000, "{total}");
}

#[test]
fn strict_language_matches_enumeration() {
    let mut r = rng(12);
    let total: usize = (0..60)
        .map(|_| {
            let (g, ms) = random_case(&mut r, 8);
            compare(
                &g,
                &ms,
                TrieConfig {
                    max_hops: 2,
                    max_paths: 2,
                    strict_mentions: true,
                },
                2,
            )
        })
        .sum();
    assert!(total > 100, "{total}");
}

#[test]
fn three_paths_of_one_hop() {
    let mut r = rng(13);
    for _ in 0..40 {
        let (g, ms) = random_case(&mut r, 6);
        compare(
            &g,
            &ms,
            TrieConfig {
                max_hops: 1,
                max_paths: 3,
                strict_mentions: false,
            },
            2,
        );
    }
}

#[test]
fn every_accepted_sequence_is_a_valid_retrieval() {
    let mut r = rng(14);
    for _ in 0..40 {
        let (g, ms) = random_case(&mut r, 10);
        let cfg = TrieConfig {
            max_hops: 2,
            max_paths: 2,
            strict_mentions: false,
        };
        let tok = WordTokenizer::from_graph(&g);
        let lin = Linearizer::new(&g, &tok, LinearizeConfig::default()).unwrap();
        let sub = g.k_hop_subgraph(&ms, 2).unwrap();
        let Ok(trie) = ConstraintTrie::build(sub.clone(), &tok, *lin.specials(), cfg) else {
            continue;
        };
        for seq in trie_language(&trie, 200_000) {
            check_retrieval(&lin, &sub, cfg, &seq).unwrap();
        }
    }
}

#[test]
fn shared_name_prefixes() {
    // "alpha" is a prefix of "alpha beta"; both must stay reachable.
    let g = KnowledgeGraph::from_triples([
        ("alpha", "links", "alpha beta"),
        ("alpha beta", "links to", "gamma"),
        ("alpha", "links to", "gamma"),
    ]);
    let a = g.entity("alpha").unwrap();
    let n = compare(
        &g,
        &[a],
        TrieConfig {
            max_hops: 2,
            max_paths: 2,
            strict_mentions: false,
        },
        2,
    );
    assert!(n > 0);
}
