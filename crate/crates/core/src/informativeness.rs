//! Entity informativeness: graph proximity of an entity to the mention set.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CandidateSubgraph, EntityId, GraphError, KnowledgeGraph, Triplet};
use crate::scalar::{approx_eq_rel, Scalar};

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_KATZ_K: usize = 2;
pub const MAX_KATZ_K: usize = 4;

#[derive(Debug, Error)]
pub enum InformativenessError {
    #[error("mention set is empty")]
    NoMentions,
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("katz path length must be in 1..={MAX_KATZ_K}, got {0}")]
    BadK(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    Connection,
    Katz,
}

/// Which adjacency the scores are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreScope {
    Subgraph,
    FullGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreParams<S> {
    pub variant: ScoreVariant,
    pub beta: S,
    pub k: usize,
    pub scope: ScoreScope,
    /// Follow edge direction (head to tail) instead of the undirected view.
    pub directed: bool,
}

impl<S: Scalar> Default for ScoreParams<S> {
    fn default() -> Self {
        Self {
            variant: ScoreVariant::Katz,
            beta: S::of(DEFAULT_BETA),
            k: DEFAULT_KATZ_K,
            scope: ScoreScope::Subgraph,
            directed: false,
        }
    }
}

/// Number of triplets joining `a` and `b` in either direction.
pub fn connection_score(
    graph: &KnowledgeGraph,
    a: EntityId,
    b: EntityId,
) -> Result<usize, GraphError> {
    for e in [a, b] {
        if !graph.has_entity(e) {
            return Err(GraphError::UnknownEntity(e.to_string()));
        }
    }
    let fwd = graph.outgoing(a).iter().filter(|&&(_, t)| t == b).count();
    if a == b {
        return Ok(fwd);
    }
    let rev = graph.incoming(a).iter().filter(|&&(_, h)| h == b).count();
    Ok(fwd + rev)
}

/// Sparse adjacency over a dense local index; row `i` lists column indices,
/// repeated once per parallel edge.
struct Adjacency {
    index: HashMap<EntityId, usize>,
    rows: Vec<Vec<usize>>,
}

impl Adjacency {
    fn new(entities: &[EntityId], triplets: &[Triplet], directed: bool) -> Self {
        let index: HashMap<EntityId, usize> =
            entities.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut rows = vec![Vec::new(); entities.len()];
        for t in triplets {
            let (h, tl) = (index[&t.head], index[&t.tail]);
            rows[h].push(tl);
            if !directed && h != tl {
                rows[tl].push(h);
            }
        }
        Self { index, rows }
    }

    fn mul<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&j| x[j]).sum())
            .collect()
    }
}

/// Scores for every entity of a candidate subgraph (or the whole graph).
#[derive(Debug, Clone, PartialEq)]
pub struct InformativenessTable<S> {
    mentions: Vec<EntityId>,
    scores: BTreeMap<EntityId, S>,
    params: ScoreParams<S>,
}

impl<S: Scalar> InformativenessTable<S> {
    pub fn build(
        sub: &CandidateSubgraph<'_>,
        params: ScoreParams<S>,
    ) -> Result<Self, InformativenessError> {
        if sub.mentions().is_empty() {
            return Err(InformativenessError::NoMentions);
        }
        if params.variant == ScoreVariant::Katz {
            if !(params.beta > S::zero() && params.beta.is_finite()) {
                return Err(InformativenessError::BadBeta(params.beta.as_f64()));
            }
            if !(1..=MAX_KATZ_K).contains(&params.k) {
                return Err(InformativenessError::BadK(params.k));
            }
        }
        let graph = sub.graph();
        let all: Vec<EntityId>;
        let (entities, triplets) = match params.scope {
            ScoreScope::Subgraph => (sub.entities(), sub.triplets()),
            ScoreScope::FullGraph => {
                all = graph.entity_ids().collect();
                (all.as_slice(), graph.triplets())
            }
        };
        let adj = Adjacency::new(entities, triplets, params.directed);
        let mut indicator = vec![S::zero(); entities.len()];
        for m in sub.mentions() {
            let i = *adj
                .index
                .get(m)
                .ok_or_else(|| GraphError::UnknownEntity(m.to_string()))?;
            indicator[i] = S::one();
        }
        let total = match params.variant {
            // One product with A counts direct edges to each mention.
            ScoreVariant::Connection => adj.mul(&indicator),
            ScoreVariant::Katz => {
                let mut acc = vec![S::zero(); entities.len()];
                let mut walks = indicator;
                let mut decay = S::one();
                for _ in 0..params.k {
                    walks = adj.mul(&walks);
                    decay *= params.beta;
                    for (a, w) in acc.iter_mut().zip(&walks) {
                        *a += decay * *w;
                    }
                }
                acc
            }
        };
        let n = S::of_usize(sub.mentions().len());
        let scores = entities
            .iter()
            .zip(total)
            .map(|(&e, s)| (e, s / n))
            .collect();
        Ok(Self {
            mentions: sub.mentions().to_vec(),
            scores,
            params,
        })
    }

    pub fn katz(
        sub: &CandidateSubgraph<'_>,
        beta: S,
        k: usize,
    ) -> Result<Self, InformativenessError> {
        Self::build(
            sub,
            ScoreParams {
                beta,
                k,
                ..ScoreParams::default()
            },
        )
    }

    pub fn connection(sub: &CandidateSubgraph<'_>) -> Result<Self, InformativenessError> {
        Self::build(
            sub,
            ScoreParams {
                variant: ScoreVariant::Connection,
                ..ScoreParams::default()
            },
        )
    }

    /// Score of `e`; zero for entities outside the table.
    pub fn score(&self, e: EntityId) -> S {
        self.scores.get(&e).copied().unwrap_or_else(S::zero)
    }

    pub fn mentions(&self) -> &[EntityId] {
        &self.mentions
    }

    pub fn params(&self) -> &ScoreParams<S> {
        &self.params
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, S)> + '_ {
        self.scores.iter().map(|(&e, &s)| (e, s))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// True when all listed entities score the same up to relative `rel`.
    pub fn all_equal(&self, entities: &[EntityId], rel: S) -> bool {
        let mut it = entities.iter().map(|&e| self.score(e));
        match it.next() {
            None => true,
            Some(first) => it.all(|s| approx_eq_rel(s, first, rel)),
        }
    }

    /// `{"variant", "beta", "k", "mentions": [..], "scores": {name: score}}`.
    pub fn to_json(&self, graph: &KnowledgeGraph) -> serde_json::Value {
        let scores: serde_json::Map<String, serde_json::Value> = self
            .scores
            .iter()
            .map(|(&e, s)| {
                (
                    graph.entity_name(e).to_string(),
                    serde_json::json!(s.as_f64()),
                )
            })
            .collect();
        serde_json::json!({
            "variant": self.params.variant,
            "scope": self.params.scope,
            "directed": self.params.directed,
            "beta": self.params.beta.as_f64(),
            "k": self.params.k,
            "mentions": self.mentions.iter().map(|&m| graph.entity_name(m)).collect::<Vec<_>>(),
            "scores": scores,
        })
    }
}

/// Table lookup; absent entities score zero.
pub fn informativeness<S: Scalar>(table: &InformativenessTable<S>, e: EntityId) -> S {
    table.score(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sum of beta^len over every undirected walk of length 1..=k from `i` to `m`.
    fn walk_oracle(g: &KnowledgeGraph, i: EntityId, m: EntityId, beta: f64, k: usize) -> f64 {
        fn go(
            g: &KnowledgeGraph,
            at: EntityId,
            m: EntityId,
            beta: f64,
            left: usize,
            depth: usize,
        ) -> f64 {
            let mut total = if depth > 0 && at == m {
                beta.powi(depth as i32)
            } else {
                0.0
            };
            if left == 0 {
                return total;
            }
            for t in g.triplets() {
                let next = if t.head == at {
                    Some(t.tail)
                } else if t.tail == at {
                    Some(t.head)
                } else {
                    None
                };
                if let Some(n) = next {
                    total += go(g, n, m, beta, left - 1, depth + 1);
                }
            }
            total
        }
        go(g, i, m, beta, k, 0)
    }

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_triples([("a", "r", "b"), ("b", "r", "c")])
    }

    #[test]
    fn chain_fixture() {
        let g = chain();
        let a = g.entity("a").unwrap();
        let sub = g.k_hop_subgraph(&[a], 2).unwrap();
        let t = InformativenessTable::<f64>::katz(&sub, 0.5, 2).unwrap();
        assert_eq!(t.score(g.entity("b").unwrap()), 0.5);
        assert_eq!(t.score(g.entity("c").unwrap()), 0.25);
        assert_eq!(t.score(a), 0.25);
        for e in g.entity_ids() {
            assert!((t.score(e) - walk_oracle(&g, e, a, 0.5, 2)).abs() < 1e-12);
        }
    }

    #[test]
    fn k1_reduces_to_connection_degree() {
        let g = KnowledgeGraph::from_triples([
            ("a", "r", "b"),
            ("a", "s", "b"),
            ("c", "r", "a"),
            ("c", "r", "d"),
        ]);
        let ms = [g.entity("a").unwrap(), g.entity("d").unwrap()];
        let sub = g.k_hop_subgraph(&ms, 2).unwrap();
        let katz = InformativenessTable::<f64>::katz(&sub, 0.3, 1).unwrap();
        let conn = InformativenessTable::<f64>::connection(&sub).unwrap();
        for e in g.entity_ids() {
            let direct: usize = ms
                .iter()
                .map(|&m| connection_score(&g, e, m).unwrap())
                .sum();
            assert!((katz.score(e) - 0.3 * direct as f64 / 2.0).abs() < 1e-12);
            assert_eq!(conn.score(e), direct as f64 / 2.0);
        }
    }

    #[test]
    fn connection_counts() {
        let g = KnowledgeGraph::from_triples([("a", "r", "b"), ("b", "s", "a"), ("b", "r", "c")]);
        let id = |n| g.entity(n).unwrap();
        assert_eq!(connection_score(&g, id("a"), id("b")).unwrap(), 2);
        assert_eq!(connection_score(&g, id("c"), id("b")).unwrap(), 1);
        assert_eq!(connection_score(&g, id("a"), id("c")).unwrap(), 0);
        let oracle = g
            .triplets()
            .iter()
            .filter(|t| {
                (t.head, t.tail) == (id("a"), id("b")) || (t.head, t.tail) == (id("b"), id("a"))
            })
            .count();
        assert_eq!(oracle, 2);
        assert!(connection_score(&g, id("a"), EntityId(99)).is_err());
    }

    #[test]
    fn isolated_and_absent_entities_score_zero() {
        let mut b = crate::graph::GraphBuilder::new();
        b.add("a", "r", "b");
        let lone = b.entity("lone");
        let g = b.build();
        let sub = g.k_hop_subgraph(&[lone], 2).unwrap();
        let t = InformativenessTable::<f64>::katz(&sub, 0.5, 2).unwrap();
        assert_eq!(t.score(lone), 0.0);
        assert_eq!(informativeness(&t, g.entity("a").unwrap()), 0.0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn symmetric_entities_tie() {
        let g = KnowledgeGraph::from_triples([("m", "r", "x"), ("m", "r", "y"), ("x", "s", "z")]);
        let m = g.entity("m").unwrap();
        let sub = g.k_hop_subgraph(&[m], 2).unwrap();
        let t = InformativenessTable::<f64>::katz(&sub, 0.5, 1).unwrap();
        assert!(t.all_equal(&[g.entity("x").unwrap(), g.entity("y").unwrap()], 1e-12));
    }

    #[test]
    fn parameters_are_validated() {
        let g = chain();
        let sub = g.k_hop_subgraph(&[g.entity("a").unwrap()], 2).unwrap();
        assert!(matches!(
            InformativenessTable::<f64>::katz(&sub, 0.0, 2).unwrap_err(),
            InformativenessError::BadBeta(0.0)
        ));
        assert!(matches!(
            InformativenessTable::<f64>::katz(&sub, 0.5, 5).unwrap_err(),
            InformativenessError::BadK(5)
        ));
        assert!(matches!(
            InformativenessTable::<f64>::katz(&sub, 0.5, 0).unwrap_err(),
            InformativenessError::BadK(0)
        ));
    }

    #[test]
    fn mention_set_averaging() {
        let g = KnowledgeGraph::from_triples([
            ("a", "r", "b"),
            ("b", "r", "c"),
            ("c", "s", "d"),
            ("d", "r", "a"),
        ]);
        let (a, c) = (g.entity("a").unwrap(), g.entity("c").unwrap());
        let full = |ms: &[EntityId]| {
            InformativenessTable::<f64>::katz(&g.as_candidate(ms).unwrap(), 0.5, 3).unwrap()
        };
        let (ta, tc, both) = (full(&[a]), full(&[c]), full(&[a, c]));
        for e in g.entity_ids() {
            assert!((both.score(e) - (ta.score(e) + tc.score(e)) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn directed_mode_follows_edges() {
        let g = chain();
        let c = g.entity("c").unwrap();
        let sub = g.k_hop_subgraph(&[c], 2).unwrap();
        let params = ScoreParams {
            directed: true,
            ..ScoreParams::<f64>::default()
        };
        let t = InformativenessTable::build(&sub, params).unwrap();
        assert_eq!(t.score(g.entity("b").unwrap()), 0.5);
        assert_eq!(t.score(g.entity("a").unwrap()), 0.25);
        assert_eq!(t.score(c), 0.0);
    }

    #[test]
    fn f32_matches_f64() {
        let g = chain();
        let sub = g.k_hop_subgraph(&[g.entity("a").unwrap()], 2).unwrap();
        let t32 = InformativenessTable::<f32>::katz(&sub, 0.5, 2).unwrap();
        let t64 = InformativenessTable::<f64>::katz(&sub, 0.5, 2).unwrap();
        for (e, s) in t64.iter() {
            assert!((t32.score(e) as f64 - s).abs() < 1e-6);
        }
    }

    #[test]
    fn json_dump_names_entities() {
        let g = chain();
        let sub = g.k_hop_subgraph(&[g.entity("a").unwrap()], 2).unwrap();
        let t = InformativenessTable::<f64>::katz(&sub, 0.5, 2).unwrap();
        let j = t.to_json(&g);
        assert_eq!(j["scores"]["b"], 0.5);
        assert_eq!(j["variant"], "katz");
        assert_eq!(j["mentions"][0], "a");
    }
}
