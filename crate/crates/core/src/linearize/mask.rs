//! Self-supervised reconstruction examples: random path sampling and
//! span-level masking.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Annotation, KnowledgePath, LinearizeError, PathStep, SpanKind, SpecialKind, SpecialTokens,
    TokenSequence,
};
use crate::graph::{EntityId, KnowledgeGraph, Orientation, Triplet};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    /// The first entity of a path.
    HeadEntity,
    Relation,
    /// Any entity reached by a hop.
    TailEntity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedExample {
    pub input: TokenSequence,
    pub target: TokenSequence,
    pub kind: MaskKind,
    /// Masked span within `target`; in `input` it is the single position `span.start`.
    pub span: Range<usize>,
}

impl MaskedExample {
    pub fn record(&self) -> ReconRecord {
        ReconRecord {
            input: self.input.ids().to_vec(),
            target: self.target.ids().to_vec(),
            masked: self.kind,
        }
    }
}

/// One line of the reconstruction JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconRecord {
    pub input: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub masked: MaskKind,
}

/// Replaces one entity or relation span, chosen uniformly, with `[MASK]`.
pub fn mask_for_reconstruction<R: Rng + ?Sized>(
    seq: &TokenSequence,
    specials: &SpecialTokens,
    rng: &mut R,
) -> Result<MaskedExample, LinearizeError> {
    let spans = seq.spans();
    if spans.is_empty() {
        return Err(LinearizeError::NothingToMask);
    }
    let span = &spans[rng.random_range(0..spans.len())];
    let kind = match span.kind {
        SpanKind::Relation(_) => MaskKind::Relation,
        SpanKind::Entity(_) => {
            let after_head = span.range.start > 0
                && seq.annotations()[span.range.start - 1]
                    == Annotation::Special(SpecialKind::Head);
            if after_head {
                MaskKind::HeadEntity
            } else {
                MaskKind::TailEntity
            }
        }
    };
    let mut input = TokenSequence::new();
    for i in 0..span.range.start {
        input.push(seq.ids()[i], seq.annotations()[i]);
    }
    input.push(specials.mask(), Annotation::Special(SpecialKind::Mask));
    for i in span.range.end..seq.len() {
        input.push(seq.ids()[i], seq.annotations()[i]);
    }
    Ok(MaskedExample {
        input,
        target: seq.clone(),
        kind,
        span: span.range.clone(),
    })
}

/// Oriented hops out of `at` that do not revisit `visited`: forward edges
/// first, then reverse edges, each in adjacency order.
pub(crate) fn walk_options(
    graph: &KnowledgeGraph,
    at: EntityId,
    visited: &[EntityId],
) -> Vec<PathStep> {
    let fwd = graph
        .outgoing(at)
        .iter()
        .filter(|(_, t)| !visited.contains(t))
        .map(|&(r, t)| PathStep::new(Triplet::new(at, r, t), Orientation::Forward));
    let rev = graph
        .incoming(at)
        .iter()
        .filter(|(_, h)| !visited.contains(h))
        .map(|&(r, h)| PathStep::new(Triplet::new(h, r, at), Orientation::Reverse));
    fwd.chain(rev).collect()
}

/// Samples `count` random walks over the undirected view.
///
/// Each walk picks a start uniformly among entities with at least one hop
/// to another entity, a target length uniformly in `1..=max_hops`, then
/// uniformly among non-revisiting hops at every step. A walk that reaches
/// a dead end stops early.
pub fn sample_paths<R: Rng + ?Sized>(
    graph: &KnowledgeGraph,
    max_hops: usize,
    count: usize,
    rng: &mut R,
) -> Vec<KnowledgePath> {
    let starts: Vec<EntityId> = graph
        .entity_ids()
        .filter(|&e| !walk_options(graph, e, &[e]).is_empty())
        .collect();
    if starts.is_empty() || max_hops == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let start = starts[rng.random_range(0..starts.len())];
        let target = rng.random_range(1..=max_hops);
        let mut visited = vec![start];
        let mut steps = Vec::with_capacity(target);
        let mut at = start;
        while steps.len() < target {
            let options = walk_options(graph, at, &visited);
            if options.is_empty() {
                break;
            }
            let step = options[rng.random_range(0..options.len())];
            at = step.to();
            visited.push(at);
            steps.push(step);
        }
        out.push(KnowledgePath { steps });
    }
    out
}
