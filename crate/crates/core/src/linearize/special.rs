//! Structural special tokens and their id allocation.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::tokenizer::{TokenId, Tokenizer};

pub const MIN_SLOTS: u8 = 1;
pub const MAX_SLOTS: u8 = 4;
pub const DEFAULT_SLOTS: u8 = 2;

/// Marker family around a relation: `Int` for a forward hop, `Rev` for a
/// hop traversed from tail to head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarkerFamily {
    Int,
    Rev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecialKind {
    Head,
    Tail,
    Sep,
    EndOfRetrieval,
    /// `position` 1 precedes a relation, 2 precedes the next entity.
    /// `slot` runs over `1..=m` consecutive tokens.
    Marker {
        family: MarkerFamily,
        position: u8,
        slot: u8,
    },
    Mask,
}

impl fmt::Display for SpecialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecialKind::Head => f.write_str("[Head]"),
            SpecialKind::Tail => f.write_str("[Tail]"),
            SpecialKind::Sep => f.write_str("[SEP]"),
            SpecialKind::EndOfRetrieval => f.write_str("[EOR]"),
            SpecialKind::Mask => f.write_str("[MASK]"),
            SpecialKind::Marker {
                family,
                position,
                slot,
            } => {
                let fam = match family {
                    MarkerFamily::Int => "Int",
                    MarkerFamily::Rev => "Rev",
                };
                write!(f, "[{fam}{position}_{slot}]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearizeConfig {
    pub slots: u8,
}

impl Default for LinearizeConfig {
    fn default() -> Self {
        Self {
            slots: DEFAULT_SLOTS,
        }
    }
}

/// Id assignment for a fixed slot count. Layout above the text vocabulary:
/// `[Head] [Tail] [SEP] [EOR]`, then `Int1_*`, `Int2_*`, `Rev1_*`, `Rev2_*`,
/// then `[MASK]` unless the tokenizer supplies its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokens {
    base: TokenId,
    slots: u8,
    native_mask: Option<TokenId>,
}

impl SpecialTokens {
    pub fn allocate<T: Tokenizer + ?Sized>(tok: &T, slots: u8) -> Self {
        assert!(
            (MIN_SLOTS..=MAX_SLOTS).contains(&slots),
            "slot count {slots} outside {MIN_SLOTS}..={MAX_SLOTS}"
        );
        Self {
            base: tok.text_vocab_size() as TokenId,
            slots,
            native_mask: tok.mask_id(),
        }
    }

    pub fn slots(&self) -> u8 {
        self.slots
    }

    /// First special id; every id at or above it is structural.
    pub fn base(&self) -> TokenId {
        self.base
    }

    fn marker_count(&self) -> TokenId {
        4 * self.slots as TokenId
    }

    /// Full scorer vocabulary size: text tokens plus specials.
    pub fn vocab_size(&self) -> usize {
        let own_mask = if self.native_mask.is_some() { 0 } else { 1 };
        (self.base + 4 + self.marker_count() + own_mask) as usize
    }

    pub fn id(&self, kind: SpecialKind) -> TokenId {
        let m = self.slots as TokenId;
        match kind {
            SpecialKind::Head => self.base,
            SpecialKind::Tail => self.base + 1,
            SpecialKind::Sep => self.base + 2,
            SpecialKind::EndOfRetrieval => self.base + 3,
            SpecialKind::Marker {
                family,
                position,
                slot,
            } => {
                debug_assert!((1..=2).contains(&position) && slot >= 1 && slot <= self.slots);
                let fam = match family {
                    MarkerFamily::Int => 0,
                    MarkerFamily::Rev => 2,
                };
                self.base + 4 + (fam + position as TokenId - 1) * m + slot as TokenId - 1
            }
            SpecialKind::Mask => self
                .native_mask
                .unwrap_or(self.base + 4 + self.marker_count()),
        }
    }

    pub fn head(&self) -> TokenId {
        self.id(SpecialKind::Head)
    }

    pub fn tail(&self) -> TokenId {
        self.id(SpecialKind::Tail)
    }

    pub fn sep(&self) -> TokenId {
        self.id(SpecialKind::Sep)
    }

    pub fn eor(&self) -> TokenId {
        self.id(SpecialKind::EndOfRetrieval)
    }

    pub fn mask(&self) -> TokenId {
        self.id(SpecialKind::Mask)
    }

    pub fn marker(&self, family: MarkerFamily, position: u8, slot: u8) -> TokenId {
        self.id(SpecialKind::Marker {
            family,
            position,
            slot,
        })
    }

    pub fn kind(&self, id: TokenId) -> Option<SpecialKind> {
        if Some(id) == self.native_mask {
            return Some(SpecialKind::Mask);
        }
        if id < self.base {
            return None;
        }
        let off = id - self.base;
        let m = self.slots as TokenId;
        Some(match off {
            0 => SpecialKind::Head,
            1 => SpecialKind::Tail,
            2 => SpecialKind::Sep,
            3 => SpecialKind::EndOfRetrieval,
            o if o < 4 + 4 * m => {
                let group = (o - 4) / m;
                let slot = ((o - 4) % m + 1) as u8;
                let (family, position) = match group {
                    0 => (MarkerFamily::Int, 1),
                    1 => (MarkerFamily::Int, 2),
                    2 => (MarkerFamily::Rev, 1),
                    _ => (MarkerFamily::Rev, 2),
                };
                SpecialKind::Marker {
                    family,
                    position,
                    slot,
                }
            }
            o if o == 4 + 4 * m && self.native_mask.is_none() => SpecialKind::Mask,
            _ => return None,
        })
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.kind(id).is_some()
    }

    /// Every special kind with its id, in id order.
    pub fn all(&self) -> Vec<(SpecialKind, TokenId)> {
        let mut kinds = vec![
            SpecialKind::Head,
            SpecialKind::Tail,
            SpecialKind::Sep,
            SpecialKind::EndOfRetrieval,
        ];
        for family in [MarkerFamily::Int, MarkerFamily::Rev] {
            for position in 1..=2 {
                for slot in 1..=self.slots {
                    kinds.push(SpecialKind::Marker {
                        family,
                        position,
                        slot,
                    });
                }
            }
        }
        kinds.push(SpecialKind::Mask);
        let mut all: Vec<_> = kinds.into_iter().map(|k| (k, self.id(k))).collect();
        all.sort_by_key(|&(_, id)| id);
        all
    }

    /// Name → id manifest for scorer-side embedding allocation.
    pub fn manifest(&self) -> SpecialManifest {
        SpecialManifest {
            slots: self.slots,
            text_vocab_size: self.base as usize,
            vocab_size: self.vocab_size(),
            tokens: self
                .all()
                .into_iter()
                .map(|(k, id)| (k.to_string(), id))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecialManifest {
    pub slots: u8,
    pub text_vocab_size: usize,
    pub vocab_size: usize,
    pub tokens: BTreeMap<String, TokenId>,
}
