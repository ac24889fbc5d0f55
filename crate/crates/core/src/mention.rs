//! Exact-string entity linking over dialog turns.
//!
//! Each turn is canonicalized (whitespace collapsed, lowercased) with a map
//! back to original offsets, scanned for every entity key at word
//! boundaries, and reduced to non-overlapping longest matches.

use std::collections::HashMap;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{name_key, EntityId, KnowledgeGraph};

#[derive(Debug, Error)]
pub enum DialogError {
    #[error("dialog has no turns")]
    NoTurns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    #[serde(default)]
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogHistory {
    turns: Vec<Turn>,
}

impl DialogHistory {
    pub fn new(turns: Vec<Turn>) -> Result<Self, DialogError> {
        if turns.is_empty() {
            return Err(DialogError::NoTurns);
        }
        Ok(Self { turns })
    }

    /// Convenience for single-speaker text, one turn per string.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Self, DialogError> {
        Self::new(
            texts
                .iter()
                .map(|t| Turn {
                    speaker: String::new(),
                    text: t.as_ref().to_string(),
                })
                .collect(),
        )
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }
}

/// A linked occurrence. `start..end` are character offsets into the turn text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub entity: EntityId,
    pub turn: usize,
    pub start: usize,
    pub end: usize,
}

/// Linked mentions, one per entity, ordered by first occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionSet {
    mentions: Vec<Mention>,
}

impl MentionSet {
    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn entities(&self) -> Vec<EntityId> {
        self.mentions.iter().map(|m| m.entity).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }
}

/// Prebuilt matcher over all entity surface names of a graph.
pub struct MentionLinker {
    matcher: Option<AhoCorasick>,
    pattern_entity: Vec<EntityId>,
}

impl MentionLinker {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let mut keys = Vec::with_capacity(graph.num_entities());
        let mut pattern_entity = Vec::with_capacity(graph.num_entities());
        for e in graph.entity_ids() {
            let key = name_key(graph.entity_name(e));
            if !key.is_empty() {
                keys.push(key);
                pattern_entity.push(e);
            }
        }
        let matcher = if keys.is_empty() {
            None
        } else {
            Some(
                AhoCorasick::builder()
                    .match_kind(MatchKind::Standard)
                    .build(&keys)
                    .expect("entity keys form a valid automaton"),
            )
        };
        Self {
            matcher,
            pattern_entity,
        }
    }

    pub fn link(&self, dialog: &DialogHistory) -> MentionSet {
        let Some(matcher) = &self.matcher else {
            return MentionSet::default();
        };
        let mut first: HashMap<EntityId, Mention> = HashMap::new();
        for (turn_idx, turn) in dialog.turns().iter().enumerate() {
            let canon = CanonicalText::new(&turn.text);
            let mut found: Vec<(usize, usize, EntityId)> = matcher
                .find_overlapping_iter(&canon.text)
                .filter(|m| canon.at_word_boundary(m.start(), m.end()))
                .map(|m| {
                    (
                        m.start(),
                        m.end(),
                        self.pattern_entity[m.pattern().as_usize()],
                    )
                })
                .collect();
            // Longest first, then lower entity id, then leftmost.
            found.sort_by(|a, b| {
                (b.1 - b.0)
                    .cmp(&(a.1 - a.0))
                    .then(a.2.cmp(&b.2))
                    .then(a.0.cmp(&b.0))
            });
            let mut taken: Vec<(usize, usize)> = Vec::new();
            for (s, e, entity) in found {
                if taken.iter().any(|&(ts, te)| s < te && ts < e) {
                    continue;
                }
                taken.push((s, e));
                let (start, end) = canon.original_char_span(&turn.text, s, e);
                let m = Mention {
                    entity,
                    turn: turn_idx,
                    start,
                    end,
                };
                first
                    .entry(entity)
                    .and_modify(|prev| {
                        if (m.turn, m.start) < (prev.turn, prev.start) {
                            *prev = m;
                        }
                    })
                    .or_insert(m);
            }
        }
        let mut mentions: Vec<Mention> = first.into_values().collect();
        mentions.sort_by_key(|m| (m.turn, m.start, m.entity));
        MentionSet { mentions }
    }
}

pub fn link_mentions(dialog: &DialogHistory, graph: &KnowledgeGraph) -> MentionSet {
    MentionLinker::new(graph).link(dialog)
}

/// Lowercased, whitespace-collapsed text with byte offsets back into the source.
struct CanonicalText {
    text: String,
    src_start: Vec<usize>,
    src_end: Vec<usize>,
}

impl CanonicalText {
    fn new(src: &str) -> Self {
        let mut text = String::with_capacity(src.len());
        let mut src_start = Vec::with_capacity(src.len());
        let mut src_end = Vec::with_capacity(src.len());
        let mut pending_space: Option<(usize, usize)> = None;
        for (i, c) in src.char_indices() {
            let end = i + c.len_utf8();
            if c.is_whitespace() {
                if !text.is_empty() && pending_space.is_none() {
                    pending_space = Some((i, end));
                }
                continue;
            }
            if let Some((s, e)) = pending_space.take() {
                text.push(' ');
                src_start.push(s);
                src_end.push(e);
            }
            for lc in c.to_lowercase() {
                let mut buf = [0u8; 4];
                for _ in 0..lc.encode_utf8(&mut buf).len() {
                    src_start.push(i);
                    src_end.push(end);
                }
                text.push(lc);
            }
        }
        Self {
            text,
            src_start,
            src_end,
        }
    }

    fn at_word_boundary(&self, start: usize, end: usize) -> bool {
        let matched = &self.text[start..end];
        let first_word = matched.chars().next().is_some_and(char::is_alphanumeric);
        let last_word = matched
            .chars()
            .next_back()
            .is_some_and(char::is_alphanumeric);
        let before = self.text[..start].chars().next_back();
        let after = self.text[end..].chars().next();
        !(first_word && before.is_some_and(char::is_alphanumeric))
            && !(last_word && after.is_some_and(char::is_alphanumeric))
    }

    fn original_char_span(&self, src: &str, start: usize, end: usize) -> (usize, usize) {
        let b0 = self.src_start[start];
        let b1 = self.src_end[end - 1];
        let c0 = src[..b0].chars().count();
        let c1 = c0 + src[b0..b1].chars().count();
        (c0, c1)
    }
}
