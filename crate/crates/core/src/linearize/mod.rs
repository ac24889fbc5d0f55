//! Structure-aware linearization of knowledge paths.
//!
//! A path `e1 -r1-> e2 -r2-> e3` becomes
//! `[Head] e1 [Int1]* r1 [Int2]* e2 [Int1]* r2 [Int2]* e3 [Tail]`, where each
//! starred marker is `m` consecutive slot tokens. A hop walked from tail to
//! head uses `[Rev1]*`/`[Rev2]*` instead and keeps the relation text as is.
//! Paths are joined with a single `[SEP]`.

mod mask;
mod special;

use std::ops::Range;

use thiserror::Error;

use crate::graph::{EntityId, KnowledgeGraph, Orientation, RelationId, Triplet};
use crate::tokenizer::{TokenId, Tokenizer};

pub use mask::{mask_for_reconstruction, sample_paths, MaskKind, MaskedExample, ReconRecord};
pub use special::{
    LinearizeConfig, MarkerFamily, SpecialKind, SpecialManifest, SpecialTokens, DEFAULT_SLOTS,
    MAX_SLOTS, MIN_SLOTS,
};

#[derive(Debug, Error, PartialEq)]
pub enum LinearizeError {
    #[error("empty path")]
    EmptyPath,
    #[error("step {step} starts at {found} but the previous step ended at {expected}")]
    BrokenChain {
        step: usize,
        expected: EntityId,
        found: EntityId,
    },
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("unknown relation {0}")]
    UnknownRelation(RelationId),
    #[error("position {position}: expected {expected}, found {found}")]
    Grammar {
        position: usize,
        expected: &'static str,
        found: String,
    },
    #[error("position {position}: no {what} named {text:?}")]
    Unresolved {
        position: usize,
        what: &'static str,
        text: String,
    },
    #[error("position {position}: triplet ({head}, {relation}, {tail}) is not in the graph")]
    UnknownTriplet {
        position: usize,
        head: String,
        relation: String,
        tail: String,
    },
    #[error("sequence has no entity or relation span to mask")]
    NothingToMask,
    #[error("slot count {0} outside 1..=4")]
    BadSlots(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathStep {
    pub triplet: Triplet,
    pub orientation: Orientation,
}

impl PathStep {
    pub fn new(triplet: Triplet, orientation: Orientation) -> Self {
        Self {
            triplet,
            orientation,
        }
    }

    /// Entity the step is walked from.
    pub fn from(&self) -> EntityId {
        match self.orientation {
            Orientation::Forward => self.triplet.head,
            Orientation::Reverse => self.triplet.tail,
        }
    }

    /// Entity the step arrives at.
    pub fn to(&self) -> EntityId {
        match self.orientation {
            Orientation::Forward => self.triplet.tail,
            Orientation::Reverse => self.triplet.head,
        }
    }
}

/// A chain of oriented triplets; step `i` ends where step `i + 1` starts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgePath {
    steps: Vec<PathStep>,
}

impl KnowledgePath {
    pub fn new(steps: Vec<PathStep>) -> Result<Self, LinearizeError> {
        if steps.is_empty() {
            return Err(LinearizeError::EmptyPath);
        }
        for (i, w) in steps.windows(2).enumerate() {
            if w[0].to() != w[1].from() {
                return Err(LinearizeError::BrokenChain {
                    step: i + 1,
                    expected: w[0].to(),
                    found: w[1].from(),
                });
            }
        }
        Ok(Self { steps })
    }

    pub fn single(triplet: Triplet, orientation: Orientation) -> Self {
        Self {
            steps: vec![PathStep::new(triplet, orientation)],
        }
    }

    /// Orients a triplet list so that it chains, preferring a walk that
    /// starts at an entity accepted by `prefer_start`, then all-forward.
    pub fn orient(
        triplets: &[Triplet],
        prefer_start: impl Fn(EntityId) -> bool,
    ) -> Result<Self, LinearizeError> {
        let first = *triplets.first().ok_or(LinearizeError::EmptyPath)?;
        let mut options = Vec::new();
        for start in [first.head, first.tail] {
            if let Some(path) = Self::walk_from(start, triplets) {
                options.push(path);
            }
        }
        if options.is_empty() {
            return Err(LinearizeError::BrokenChain {
                step: 1,
                expected: first.tail,
                found: triplets.get(1).map_or(first.tail, |t| t.head),
            });
        }
        let pick = options
            .iter()
            .position(|p| prefer_start(p.start()))
            .unwrap_or(0);
        Ok(options.swap_remove(pick))
    }

    fn walk_from(start: EntityId, triplets: &[Triplet]) -> Option<Self> {
        let mut at = start;
        let mut steps = Vec::with_capacity(triplets.len());
        for t in triplets {
            let orientation = if t.head == at {
                Orientation::Forward
            } else if t.tail == at {
                Orientation::Reverse
            } else {
                return None;
            };
            let step = PathStep::new(*t, orientation);
            at = step.to();
            steps.push(step);
        }
        Some(Self { steps })
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start(&self) -> EntityId {
        self.steps[0].from()
    }

    pub fn end(&self) -> EntityId {
        self.steps[self.steps.len() - 1].to()
    }

    /// Entities in traversal order, `len() + 1` of them.
    pub fn entities(&self) -> Vec<EntityId> {
        std::iter::once(self.start())
            .chain(self.steps.iter().map(PathStep::to))
            .collect()
    }

    pub fn triplets(&self) -> Vec<Triplet> {
        self.steps.iter().map(|s| s.triplet).collect()
    }
}

/// Role of one token position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Annotation {
    Special(SpecialKind),
    Entity(EntityId),
    Relation(RelationId),
    /// Free text, e.g. dialog tokens.
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpanKind {
    Entity(EntityId),
    Relation(RelationId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub kind: SpanKind,
    pub range: Range<usize>,
}

/// Token ids with a parallel per-position annotation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<TokenId>,
    annotations: Vec<Annotation>,
}

impl TokenSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unannotated free text.
    pub fn text(ids: Vec<TokenId>) -> Self {
        let annotations = vec![Annotation::Text; ids.len()];
        Self { ids, annotations }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push(&mut self, id: TokenId, annotation: Annotation) {
        self.ids.push(id);
        self.annotations.push(annotation);
    }

    pub fn extend_from(&mut self, other: &TokenSequence) {
        self.ids.extend_from_slice(&other.ids);
        self.annotations.extend_from_slice(&other.annotations);
    }

    pub fn concat(&self, other: &TokenSequence) -> TokenSequence {
        let mut out = self.clone();
        out.extend_from(other);
        out
    }

    /// Maximal runs of positions annotated with the same entity or relation.
    pub fn spans(&self) -> Vec<Span> {
        let mut spans: Vec<Span> = Vec::new();
        for (i, a) in self.annotations.iter().enumerate() {
            let kind = match *a {
                Annotation::Entity(e) => SpanKind::Entity(e),
                Annotation::Relation(r) => SpanKind::Relation(r),
                _ => continue,
            };
            match spans.last_mut() {
                Some(last) if last.kind == kind && last.range.end == i => last.range.end = i + 1,
                _ => spans.push(Span {
                    kind,
                    range: i..i + 1,
                }),
            }
        }
        spans
    }
}

/// Renders and parses linearized paths for one graph and tokenizer.
pub struct Linearizer<'a, T: Tokenizer + ?Sized> {
    graph: &'a KnowledgeGraph,
    tok: &'a T,
    specials: SpecialTokens,
}

impl<'a, T: Tokenizer + ?Sized> Linearizer<'a, T> {
    pub fn new(
        graph: &'a KnowledgeGraph,
        tok: &'a T,
        cfg: LinearizeConfig,
    ) -> Result<Self, LinearizeError> {
        if !(MIN_SLOTS..=MAX_SLOTS).contains(&cfg.slots) {
            return Err(LinearizeError::BadSlots(cfg.slots));
        }
        Ok(Self {
            graph,
            tok,
            specials: SpecialTokens::allocate(tok, cfg.slots),
        })
    }

    pub fn graph(&self) -> &'a KnowledgeGraph {
        self.graph
    }

    pub fn tokenizer(&self) -> &'a T {
        self.tok
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn entity_tokens(&self, e: EntityId) -> Vec<TokenId> {
        self.tok.encode(self.graph.entity_name(e))
    }

    pub fn relation_tokens(&self, r: RelationId) -> Vec<TokenId> {
        self.tok.encode(self.graph.relation_name(r))
    }

    fn push_special(&self, seq: &mut TokenSequence, kind: SpecialKind) {
        seq.push(self.specials.id(kind), Annotation::Special(kind));
    }

    fn push_marker(&self, seq: &mut TokenSequence, family: MarkerFamily, position: u8) {
        for slot in 1..=self.specials.slots() {
            self.push_special(
                seq,
                SpecialKind::Marker {
                    family,
                    position,
                    slot,
                },
            );
        }
    }

    fn push_entity(&self, seq: &mut TokenSequence, e: EntityId) {
        for id in self.entity_tokens(e) {
            seq.push(id, Annotation::Entity(e));
        }
    }

    fn push_relation(&self, seq: &mut TokenSequence, r: RelationId) {
        for id in self.relation_tokens(r) {
            seq.push(id, Annotation::Relation(r));
        }
    }

    fn check_path(&self, path: &KnowledgePath) -> Result<(), LinearizeError> {
        let path = KnowledgePath::new(path.steps.clone())?;
        for s in path.steps() {
            for e in [s.triplet.head, s.triplet.tail] {
                if !self.graph.has_entity(e) {
                    return Err(LinearizeError::UnknownEntity(e));
                }
            }
            if !self.graph.has_relation(s.triplet.relation) {
                return Err(LinearizeError::UnknownRelation(s.triplet.relation));
            }
        }
        Ok(())
    }

    pub fn linearize_path(&self, path: &KnowledgePath) -> Result<TokenSequence, LinearizeError> {
        self.check_path(path)?;
        let mut seq = TokenSequence::new();
        self.append_path(&mut seq, path);
        Ok(seq)
    }

    fn append_path(&self, seq: &mut TokenSequence, path: &KnowledgePath) {
        self.push_special(seq, SpecialKind::Head);
        self.push_entity(seq, path.start());
        for step in path.steps() {
            let family = match step.orientation {
                Orientation::Forward => MarkerFamily::Int,
                Orientation::Reverse => MarkerFamily::Rev,
            };
            self.push_marker(seq, family, 1);
            self.push_relation(seq, step.triplet.relation);
            self.push_marker(seq, family, 2);
            self.push_entity(seq, step.to());
        }
        self.push_special(seq, SpecialKind::Tail);
    }

    pub fn linearize_subgraph(
        &self,
        paths: &[KnowledgePath],
    ) -> Result<TokenSequence, LinearizeError> {
        let mut seq = TokenSequence::new();
        for (i, p) in paths.iter().enumerate() {
            self.check_path(p)?;
            if i > 0 {
                self.push_special(&mut seq, SpecialKind::Sep);
            }
            self.append_path(&mut seq, p);
        }
        Ok(seq)
    }

    /// Parses a linearized sequence back into paths. A single trailing
    /// `[EOR]` is accepted. Every hop must be a triplet of the graph.
    pub fn delinearize(&self, ids: &[TokenId]) -> Result<Vec<KnowledgePath>, LinearizeError> {
        let mut p = Parser {
            lin: self,
            ids,
            pos: 0,
        };
        let mut paths = Vec::new();
        let eor = self.specials.eor();
        if ids.is_empty() || ids == [eor] {
            return Ok(paths);
        }
        loop {
            paths.push(p.path()?);
            if p.pos == ids.len() || (p.pos + 1 == ids.len() && ids[p.pos] == eor) {
                return Ok(paths);
            }
            p.expect(self.specials.sep(), "[SEP], [EOR] or end of input")?;
        }
    }
}

struct Parser<'p, 'a, T: Tokenizer + ?Sized> {
    lin: &'p Linearizer<'a, T>,
    ids: &'p [TokenId],
    pos: usize,
}

impl<'p, T: Tokenizer + ?Sized> Parser<'p, '_, T> {
    fn describe(&self, at: usize) -> String {
        match self.ids.get(at) {
            None => "end of input".to_string(),
            Some(&id) => match self.lin.specials.kind(id) {
                Some(k) => k.to_string(),
                None => format!("{:?}", self.lin.tok.decode(&[id])),
            },
        }
    }

    fn grammar(&self, expected: &'static str) -> LinearizeError {
        LinearizeError::Grammar {
            position: self.pos,
            expected,
            found: self.describe(self.pos),
        }
    }

    fn expect(&mut self, id: TokenId, expected: &'static str) -> Result<(), LinearizeError> {
        if self.ids.get(self.pos) == Some(&id) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.grammar(expected))
        }
    }

    fn text_span(
        &mut self,
        expected: &'static str,
    ) -> Result<(usize, &'p [TokenId]), LinearizeError> {
        let start = self.pos;
        while self.pos < self.ids.len() && !self.lin.specials.is_special(self.ids[self.pos]) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.grammar(expected));
        }
        Ok((start, &self.ids[start..self.pos]))
    }

    fn entity(&mut self) -> Result<EntityId, LinearizeError> {
        let (start, span) = self.text_span("entity text")?;
        let text = self.lin.tok.decode(span);
        self.lin
            .graph
            .entity(&text)
            .ok_or(LinearizeError::Unresolved {
                position: start,
                what: "entity",
                text,
            })
    }

    fn relation(&mut self) -> Result<RelationId, LinearizeError> {
        let (start, span) = self.text_span("relation text")?;
        let text = self.lin.tok.decode(span);
        self.lin
            .graph
            .relation(&text)
            .ok_or(LinearizeError::Unresolved {
                position: start,
                what: "relation",
                text,
            })
    }

    fn marker(&mut self, family: MarkerFamily, position: u8) -> Result<(), LinearizeError> {
        let expected = match (family, position) {
            (MarkerFamily::Int, 1) => "[Int1] marker",
            (MarkerFamily::Int, _) => "[Int2] marker",
            (MarkerFamily::Rev, 1) => "[Rev1] marker",
            (MarkerFamily::Rev, _) => "[Rev2] marker",
        };
        for slot in 1..=self.lin.specials.slots() {
            self.expect(self.lin.specials.marker(family, position, slot), expected)?;
        }
        Ok(())
    }

    fn path(&mut self) -> Result<KnowledgePath, LinearizeError> {
        let sp = self.lin.specials;
        self.expect(sp.head(), "[Head]")?;
        let mut at = self.entity()?;
        let mut steps = Vec::new();
        loop {
            let next = self.ids.get(self.pos).copied();
            let family = if next == Some(sp.tail()) && !steps.is_empty() {
                self.pos += 1;
                break;
            } else if next == Some(sp.marker(MarkerFamily::Int, 1, 1)) {
                MarkerFamily::Int
            } else if next == Some(sp.marker(MarkerFamily::Rev, 1, 1)) {
                MarkerFamily::Rev
            } else if steps.is_empty() {
                return Err(self.grammar("[Int1] or [Rev1] marker"));
            } else {
                return Err(self.grammar("[Int1] or [Rev1] marker or [Tail]"));
            };
            let step_pos = self.pos;
            self.marker(family, 1)?;
            let relation = self.relation()?;
            self.marker(family, 2)?;
            let to = self.entity()?;
            let (triplet, orientation) = match family {
                MarkerFamily::Int => (Triplet::new(at, relation, to), Orientation::Forward),
                MarkerFamily::Rev => (Triplet::new(to, relation, at), Orientation::Reverse),
            };
            if !self.lin.graph.contains(&triplet) {
                let g = self.lin.graph;
                return Err(LinearizeError::UnknownTriplet {
                    position: step_pos,
                    head: g.entity_name(triplet.head).to_string(),
                    relation: g.relation_name(triplet.relation).to_string(),
                    tail: g.entity_name(triplet.tail).to_string(),
                });
            }
            steps.push(PathStep::new(triplet, orientation));
            at = to;
        }
        Ok(KnowledgePath { steps })
    }
}
