//! Synthetic graphs and dialogs for fixtures, benchmarks and property tests.
//!
//! Names are bijective base-n numerals over small word pools, so they are
//! unique and share multi-token prefixes ("alpha", "alpha beta", ...).

use rand::Rng;

use crate::graph::{GraphBuilder, KnowledgeGraph};

const ENTITY_WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "omega", "sigma"];
const RELATION_WORDS: [&str; 4] = ["links", "to", "part", "of"];

fn numeral(mut n: usize, words: &[&str]) -> String {
    let base = words.len();
    let mut parts = Vec::new();
    n += 1;
    while n > 0 {
        n -= 1;
        parts.push(words[n % base]);
        n /= base;
    }
    parts.reverse();
    parts.join(" ")
}

pub fn entity_name(i: usize) -> String {
    numeral(i, &ENTITY_WORDS)
}

pub fn relation_name(i: usize) -> String {
    numeral(i, &RELATION_WORDS)
}

#[derive(Debug, Clone, Copy)]
pub struct GraphShape {
    pub entities: usize,
    pub relations: usize,
    pub triplets: usize,
    /// Allow `(e, r, e)` triplets.
    pub self_loops: bool,
}

/// Uniformly random triplets over the given vocabulary sizes. Every entity
/// name is interned even if it ends up isolated. Duplicate draws are
/// discarded, so the triplet count may fall short on dense shapes.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, shape: GraphShape) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    let names: Vec<String> = (0..shape.entities).map(entity_name).collect();
    let rels: Vec<String> = (0..shape.relations.max(1)).map(relation_name).collect();
    for n in &names {
        b.entity(n);
    }
    if shape.entities == 0 {
        return b.build();
    }
    for _ in 0..shape.triplets {
        let h = rng.random_range(0..shape.entities);
        let mut t = rng.random_range(0..shape.entities);
        if !shape.self_loops && shape.entities > 1 {
            while t == h {
                t = rng.random_range(0..shape.entities);
            }
        }
        let r = rng.random_range(0..rels.len());
        b.add(&names[h], &rels[r], &names[t]);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique_and_share_prefixes() {
        let names: Vec<String> = (0..300).map(entity_name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names[0], "alpha");
        assert_eq!(names[6], "alpha alpha");
        assert_eq!(names[7], "alpha beta");
    }

    #[test]
    fn graph_is_reproducible() {
        let shape = GraphShape {
            entities: 20,
            relations: 3,
            triplets: 40,
            self_loops: false,
        };
        let a = random_graph(&mut ChaCha8Rng::seed_from_u64(3), shape);
        let b = random_graph(&mut ChaCha8Rng::seed_from_u64(3), shape);
        assert_eq!(a.triplets(), b.triplets());
        assert_eq!(a.num_entities(), 20);
        assert!(a.triplets().iter().all(|t| t.head != t.tail));
    }
}
