//! Tokenizer adapter interface and a word-piece tokenizer built from the
//! graph's surface names.

use std::collections::HashMap;

pub type TokenId = u32;

/// Text side of the scorer vocabulary. Ids `0..text_vocab_size()` are text
/// tokens; structural special tokens are allocated above that range.
pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId>;

    /// Inverse of `encode` up to canonical whitespace.
    fn decode(&self, ids: &[TokenId]) -> String;

    fn text_vocab_size(&self) -> usize;

    /// A native mask token, if the underlying vocabulary has one.
    fn mask_id(&self) -> Option<TokenId> {
        None
    }

    fn unk_id(&self) -> Option<TokenId> {
        None
    }
}

const SPACE: char = '\u{2581}';
const UNK: &str = "<unk>";

/// Splits text into alphanumeric runs and single punctuation characters;
/// a piece preceded by whitespace (or at the start) carries a `▁` prefix so
/// that decoding restores spacing.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    pieces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl WordTokenizer {
    /// Builds the vocabulary from `texts` in first-seen order. Id 0 is `<unk>`.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tok = Self {
            pieces: vec![UNK.to_string()],
            index: HashMap::from([(UNK.to_string(), 0)]),
        };
        for text in texts {
            for piece in split_pieces(text) {
                if !tok.index.contains_key(&piece) {
                    tok.index.insert(piece.clone(), tok.pieces.len() as TokenId);
                    tok.pieces.push(piece);
                }
            }
        }
        tok
    }

    /// Vocabulary over all entity names (id order) then all relation names.
    pub fn from_graph(graph: &crate::graph::KnowledgeGraph) -> Self {
        let entities = graph.entity_ids().map(|e| graph.entity_name(e));
        let relations = (0..graph.num_relations() as u32)
            .map(|r| graph.relation_name(crate::graph::RelationId(r)));
        Self::from_texts(entities.chain(relations))
    }

    pub fn piece(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }
}

fn split_pieces(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut spaced = true;
    let mut word = String::new();
    let flush = |word: &mut String, spaced: &mut bool, out: &mut Vec<String>| {
        if !word.is_empty() {
            let mut p = String::with_capacity(word.len() + 3);
            if *spaced {
                p.push(SPACE);
            }
            p.push_str(word);
            out.push(p);
            word.clear();
            *spaced = false;
        }
    };
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut spaced, &mut out);
            spaced = true;
        } else if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            flush(&mut word, &mut spaced, &mut out);
            word.push(c);
            flush(&mut word, &mut spaced, &mut out);
        }
    }
    flush(&mut word, &mut spaced, &mut out);
    out
}

impl Tokenizer for WordTokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId> {
        split_pieces(text)
            .into_iter()
            .map(|p| self.index.get(&p).copied().unwrap_or(0))
            .collect()
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        let mut s = String::new();
        for &id in ids {
            match self.pieces.get(id as usize) {
                Some(p) => s.push_str(p),
                None => s.push_str(UNK),
            }
        }
        let s = s.replace(SPACE, " ");
        s.trim_start().to_string()
    }

    fn text_vocab_size(&self) -> usize {
        self.pieces.len()
    }

    fn unk_id(&self) -> Option<TokenId> {
        Some(0)
    }
}
