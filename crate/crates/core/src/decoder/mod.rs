//! Graph-constrained beam decoding.
//!
//! Each step restricts the scorer's distribution to the tokens the
//! constraint trie allows, renormalizes it over that set, and at
//! entity-start positions mixes in a distribution proportional to entity
//! informativeness:
//!
//! `score(w) = alpha * log p_vocab(w) + (1 - alpha) * log p_graph(w)`.
//!
//! Paths are retrieved one at a time. Every path search runs a fresh beam
//! from the committed prefix, so the scorer sees the dialog followed by all
//! paths retrieved so far.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{AllowedToken, ConstraintError, ConstraintTrie, TrieConfig, TrieCursor};
use crate::graph::KnowledgeGraph;
use crate::informativeness::InformativenessTable;
use crate::linearize::{KnowledgePath, SpecialTokens};
use crate::scalar::{log_sum_exp, Scalar};
use crate::tokenizer::TokenId;

pub mod scorer;

pub use scorer::{
    make_mock_scorer, BigramScorer, MockKind, NextTokenScorer, PlantedScorer, ScorerError,
    Serialized, UniformScorer, PLANTED_MASS,
};

pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_BEAM: usize = 5;
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Relative tolerance for the identical-informativeness fallback.
pub const SCORE_TIE_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode configuration: {0}")]
    BadConfig(&'static str),
    #[error("no allowed token with finite probability at position {position}")]
    DeadEnd { position: usize },
    #[error("scorer failed at step {step}: {source}")]
    Scorer { step: usize, source: ScorerError },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodeConfig<S> {
    pub alpha: S,
    pub beam: usize,
    pub max_paths: usize,
    pub max_hops: usize,
    pub epsilon: S,
}

impl<S: Scalar> Default for DecodeConfig<S> {
    fn default() -> Self {
        Self {
            alpha: S::of(DEFAULT_ALPHA),
            beam: DEFAULT_BEAM,
            max_paths: crate::constraint::DEFAULT_MAX_PATHS,
            max_hops: crate::constraint::DEFAULT_MAX_HOPS,
            epsilon: S::of(DEFAULT_EPSILON),
        }
    }
}

impl<S: Scalar> DecodeConfig<S> {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.alpha >= S::zero() && self.alpha <= S::one()) {
            return Err(DecodeError::BadConfig("alpha must lie in [0, 1]"));
        }
        if self.beam == 0 {
            return Err(DecodeError::BadConfig("beam width must be at least 1"));
        }
        if self.epsilon.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(DecodeError::BadConfig("epsilon must be positive"));
        }
        if self.max_paths == 0 || self.max_hops == 0 {
            return Err(DecodeError::BadConfig(
                "max paths and max hops must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn trie_config(&self, strict_mentions: bool) -> TrieConfig {
        TrieConfig {
            max_hops: self.max_hops,
            max_paths: self.max_paths,
            strict_mentions,
        }
    }
}

/// Mixed log-scores for the allowed tokens of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStep<S> {
    /// Allowed tokens with finite scorer probability, ascending.
    pub tokens: Vec<TokenId>,
    pub scores: Vec<S>,
    /// False when no token starts an entity or all candidate entities
    /// score the same, so the graph term was left out.
    pub graph_applied: bool,
}

impl<S: Scalar> MixedStep<S> {
    /// Scores shifted to log-probabilities over the step's tokens.
    pub fn normalized(&self) -> Vec<S> {
        let z = log_sum_exp(self.scores.iter().copied());
        self.scores.iter().map(|&s| s - z).collect()
    }

    pub fn score_of(&self, id: TokenId) -> Option<S> {
        self.tokens
            .iter()
            .position(|&t| t == id)
            .map(|i| self.scores[i])
    }
}

/// Mixes scorer log-probabilities (`vocab_logp[i]` belongs to `allowed[i]`)
/// with informativeness.
pub fn mixed_step<S: Scalar>(
    vocab_logp: &[S],
    allowed: &[AllowedToken],
    table: &InformativenessTable<S>,
    alpha: S,
    epsilon: S,
) -> Result<MixedStep<S>, DecodeError> {
    assert_eq!(
        vocab_logp.len(),
        allowed.len(),
        "one log-probability per allowed token"
    );
    let kept: Vec<usize> = (0..allowed.len())
        .filter(|&i| vocab_logp[i] > S::neg_infinity())
        .collect();
    if kept.is_empty() {
        return Err(DecodeError::DeadEnd { position: 0 });
    }
    let z = log_sum_exp(kept.iter().map(|&i| vocab_logp[i]));
    let mut scores: Vec<S> = kept.iter().map(|&i| vocab_logp[i] - z).collect();

    let starts: Vec<(usize, &[crate::graph::EntityId])> = kept
        .iter()
        .enumerate()
        .filter_map(|(k, &i)| allowed[i].entity_start.as_deref().map(|es| (k, es)))
        .collect();
    let all_entities: Vec<_> = starts
        .iter()
        .flat_map(|(_, es)| es.iter().copied())
        .collect();
    let graph_applied = !starts.is_empty() && !table.all_equal(&all_entities, S::of(SCORE_TIE_REL));
    if graph_applied {
        let weights: Vec<S> = starts
            .iter()
            .map(|(_, es)| es.iter().map(|&e| table.score(e).max(epsilon)).sum())
            .collect();
        let total: S = weights.iter().copied().sum();
        for ((k, _), w) in starts.iter().zip(weights) {
            scores[*k] = alpha * scores[*k] + (S::one() - alpha) * (w / total).ln();
        }
    }
    Ok(MixedStep {
        tokens: kept.iter().map(|&i| allowed[i].id).collect(),
        scores,
        graph_applied,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedPath<S> {
    pub path: KnowledgePath,
    pub logscore: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedSubgraph<S> {
    pub paths: Vec<RetrievedPath<S>>,
    /// Linearization of `paths`, `[SEP]`-joined.
    pub tokens: Vec<TokenId>,
}

impl<S> Default for RetrievedSubgraph<S> {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            tokens: Vec::new(),
        }
    }
}

impl<S: Scalar> RetrievedSubgraph<S> {
    pub fn ranked_paths(&self) -> Vec<KnowledgePath> {
        self.paths.iter().map(|p| p.path.clone()).collect()
    }

    pub fn record(&self, graph: &KnowledgeGraph) -> DecodeRecord {
        DecodeRecord {
            id: None,
            paths: self
                .paths
                .iter()
                .map(|p| PathRecord::new(graph, &p.path, p.logscore.as_f64()))
                .collect(),
            tokens: self.tokens.clone(),
            meta: None,
        }
    }
}

/// One retrieved path as names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub triplets: Vec<[String; 3]>,
    pub orientation: Vec<String>,
    pub logscore: f64,
}

impl PathRecord {
    pub fn new(graph: &KnowledgeGraph, path: &KnowledgePath, logscore: f64) -> Self {
        Self {
            triplets: path
                .steps()
                .iter()
                .map(|s| {
                    let t = s.triplet;
                    [
                        graph.entity_name(t.head).to_string(),
                        graph.relation_name(t.relation).to_string(),
                        graph.entity_name(t.tail).to_string(),
                    ]
                })
                .collect(),
            orientation: path
                .steps()
                .iter()
                .map(|s| s.orientation.as_str().to_string())
                .collect(),
            logscore,
        }
    }
}

/// One line of decode output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub paths: Vec<PathRecord>,
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
struct Hyp<S> {
    cursor: TrieCursor,
    score: S,
}

/// Higher score first, then the lexicographically smaller token sequence
/// (lower token id at the first difference, shorter prefix on a tie).
fn rank<S: Scalar>(a: &Hyp<S>, b: &Hyp<S>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.cursor.tokens().cmp(b.cursor.tokens()))
}

fn scorer_context(dialog: &[TokenId], prefix: &[TokenId]) -> Vec<TokenId> {
    let mut ctx = Vec::with_capacity(dialog.len() + prefix.len());
    ctx.extend_from_slice(dialog);
    ctx.extend_from_slice(prefix);
    ctx
}

/// Sequential constrained beam search.
///
/// Retrieval stops when end-of-retrieval wins a path search or no further
/// path is possible.
pub fn beam_decode<S, Sc>(
    scorer: &Sc,
    trie: &ConstraintTrie<'_>,
    table: &InformativenessTable<S>,
    cfg: &DecodeConfig<S>,
    dialog: &[TokenId],
) -> Result<RetrievedSubgraph<S>, DecodeError>
where
    S: Scalar,
    Sc: NextTokenScorer<S> + ?Sized,
{
    cfg.validate()?;
    let tc = trie.config();
    if tc.max_paths != cfg.max_paths || tc.max_hops != cfg.max_hops {
        return Err(DecodeError::BadConfig(
            "trie and decoder disagree on path or hop limits",
        ));
    }
    let eor = trie.specials().eor();
    let mut committed = trie.cursor();
    let mut paths = Vec::new();
    while let Some(best) = search_segment(scorer, trie, table, cfg, dialog, &committed)? {
        if best.cursor.is_finished() {
            break;
        }
        let path = best
            .cursor
            .completed_paths()
            .last()
            .expect("segment ends on a path")
            .clone();
        log::debug!(
            "retrieved path {} with log-score {}",
            paths.len() + 1,
            best.score
        );
        paths.push(RetrievedPath {
            path,
            logscore: best.score,
        });
        committed = best.cursor;
        let next = trie.allowed_tokens(&committed);
        if next.len() == 1 && next[0].id == eor {
            break;
        }
    }
    Ok(RetrievedSubgraph {
        paths,
        tokens: committed.tokens().to_vec(),
    })
}

/// Beam search from `start` until a path completes or end-of-retrieval.
fn search_segment<S, Sc>(
    scorer: &Sc,
    trie: &ConstraintTrie<'_>,
    table: &InformativenessTable<S>,
    cfg: &DecodeConfig<S>,
    dialog: &[TokenId],
    start: &TrieCursor,
) -> Result<Option<Hyp<S>>, DecodeError>
where
    S: Scalar,
    Sc: NextTokenScorer<S> + ?Sized,
{
    let mut alive = vec![Hyp {
        cursor: start.clone(),
        score: S::zero(),
    }];
    let mut finished: Vec<Hyp<S>> = Vec::new();
    while !alive.is_empty() {
        let mut next = Vec::with_capacity(alive.len() * 4);
        for h in &alive {
            let position = h.cursor.tokens().len();
            let allowed = trie.allowed_tokens(&h.cursor);
            if allowed.is_empty() {
                return Err(DecodeError::DeadEnd { position });
            }
            let step = if allowed.len() == 1 {
                MixedStep {
                    tokens: vec![allowed[0].id],
                    scores: vec![S::zero()],
                    graph_applied: false,
                }
            } else {
                let ids: Vec<TokenId> = allowed.iter().map(|a| a.id).collect();
                let ctx = scorer_context(dialog, h.cursor.tokens());
                let lp =
                    scorer
                        .log_probs_for(&ctx, &ids)
                        .map_err(|source| DecodeError::Scorer {
                            step: position,
                            source,
                        })?;
                if lp.len() != ids.len() {
                    return Err(DecodeError::Scorer {
                        step: position,
                        source: ScorerError::Length {
                            expected: ids.len(),
                            found: lp.len(),
                        },
                    });
                }
                mixed_step(&lp, &allowed, table, cfg.alpha, cfg.epsilon).map_err(|e| match e {
                    DecodeError::DeadEnd { .. } => DecodeError::DeadEnd { position },
                    other => other,
                })?
            };
            for (&tok, &s) in step.tokens.iter().zip(&step.scores) {
                let mut cursor = h.cursor.clone();
                trie.step(&mut cursor, tok)?;
                next.push(Hyp {
                    cursor,
                    score: h.score + s,
                });
            }
        }
        let (done, open): (Vec<_>, Vec<_>) = next
            .into_iter()
            .partition(|h| h.cursor.path_complete() || h.cursor.is_finished());
        finished.extend(done);
        finished.sort_by(rank);
        finished.truncate(cfg.beam);
        alive = open;
        alive.sort_by(rank);
        alive.truncate(cfg.beam);
        // Step scores are log-probabilities, so alive scores only fall.
        if let (Some(f), Some(a)) = (finished.first(), alive.first()) {
            if f.score >= a.score {
                break;
            }
        }
    }
    Ok(finished.into_iter().next())
}

/// Unconstrained control: the same beam search over the whole vocabulary
/// with pure scorer probabilities. Stops at end-of-retrieval or after
/// `max_len` tokens. The returned tokens start with `[Head]` and exclude
/// the end-of-retrieval token.
pub fn free_decode<S, Sc>(
    scorer: &Sc,
    specials: &SpecialTokens,
    beam: usize,
    dialog: &[TokenId],
    max_len: usize,
) -> Result<Vec<TokenId>, DecodeError>
where
    S: Scalar,
    Sc: NextTokenScorer<S> + ?Sized,
{
    if beam == 0 {
        return Err(DecodeError::BadConfig("beam width must be at least 1"));
    }
    let eor = specials.eor();
    let order = |a: &(Vec<TokenId>, S), b: &(Vec<TokenId>, S)| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    };
    let mut alive: Vec<(Vec<TokenId>, S)> = vec![(vec![specials.head()], S::zero())];
    let mut finished: Vec<(Vec<TokenId>, S)> = Vec::new();
    while !alive.is_empty() {
        let mut next = Vec::new();
        for (toks, score) in &alive {
            let ctx = scorer_context(dialog, toks);
            let lp = scorer
                .log_probs(&ctx)
                .map_err(|source| DecodeError::Scorer {
                    step: toks.len(),
                    source,
                })?;
            if lp.len() != scorer.vocab_size() {
                return Err(DecodeError::Scorer {
                    step: toks.len(),
                    source: ScorerError::Length {
                        expected: scorer.vocab_size(),
                        found: lp.len(),
                    },
                });
            }
            for (id, &l) in lp.iter().enumerate() {
                if l > S::neg_infinity() {
                    let mut t = toks.clone();
                    t.push(id as TokenId);
                    next.push((t, *score + l));
                }
            }
        }
        next.sort_by(order);
        next.truncate(beam);
        let (done, open): (Vec<_>, Vec<_>) = next
            .into_iter()
            .partition(|(t, _)| t.last() == Some(&eor) || t.len() >= max_len);
        finished.extend(done);
        finished.sort_by(order);
        finished.truncate(beam);
        alive = open;
        if let (Some(f), Some(a)) = (finished.first(), alive.first()) {
            if f.1 >= a.1 {
                break;
            }
        }
    }
    let mut best = finished
        .into_iter()
        .next()
        .map(|(t, _)| t)
        .unwrap_or_default();
    if best.last() == Some(&eor) {
        best.pop();
    }
    Ok(best)
}
