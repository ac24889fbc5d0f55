//! Graph-constrained generative retrieval of knowledge-graph paths for
//! dialog systems.
//!
//! The pipeline links dialog mentions to graph entities, extracts a k-hop
//! candidate subgraph, and decodes linearized paths with a language-model
//! scorer under a prefix-trie constraint, mixing in entity informativeness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod cli;
pub mod constraint;
pub mod decoder;
pub mod graph;
pub mod informativeness;
pub mod linearize;
pub mod mention;
pub mod pipeline;
pub mod scalar;
pub mod supervision;
pub mod synth;
pub mod tokenizer;

pub use constraint::{AllowedToken, ConstraintError, ConstraintTrie, TrieConfig, TrieCursor};
pub use decoder::{
    beam_decode, free_decode, make_mock_scorer, mixed_step, DecodeConfig, DecodeError,
    DecodeRecord, MixedStep, MockKind, NextTokenScorer, RetrievedPath, RetrievedSubgraph,
    ScorerError,
};
pub use graph::{
    CandidateSubgraph, EntityId, GraphBuilder, GraphError, GraphStats, KnowledgeGraph, Orientation,
    RelationId, Triplet,
};
pub use informativeness::{
    connection_score, informativeness, InformativenessError, InformativenessTable, ScoreParams,
    ScoreScope, ScoreVariant,
};
pub use linearize::{
    mask_for_reconstruction, sample_paths, KnowledgePath, LinearizeConfig, LinearizeError,
    Linearizer, MaskKind, PathStep, SpecialKind, SpecialTokens, TokenSequence,
};
pub use mention::{link_mentions, DialogHistory, Mention, MentionLinker, MentionSet, Turn};
pub use pipeline::{DecodeStatus, Pipeline, PipelineConfig, PipelineError};
pub use scalar::Scalar;
pub use supervision::{
    generation_input, path_at_k, retrieval_target, sequence_nll, EvalReport, GoldAnnotation,
    PathMatch,
};
pub use tokenizer::{TokenId, Tokenizer, WordTokenizer};

pub type ScoreTable = InformativenessTable<f64>;
pub type ScoreTable32 = InformativenessTable<f32>;
pub type Retrieval = RetrievedSubgraph<f64>;
pub type Retrieval32 = RetrievedSubgraph<f32>;
pub type Decoding = DecodeConfig<f64>;
pub type Decoding32 = DecodeConfig<f32>;
