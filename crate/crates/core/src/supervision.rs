//! Training targets, likelihood evaluation and retrieval metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{NextTokenScorer, RetrievedSubgraph, ScorerError};
use crate::graph::{EntityId, GraphError, KnowledgeGraph, Triplet};
use crate::linearize::{KnowledgePath, LinearizeError, Linearizer, TokenSequence};
use crate::mention::{DialogError, DialogHistory, Turn};
use crate::scalar::Scalar;
use crate::tokenizer::{TokenId, Tokenizer};

#[derive(Debug, Error)]
pub enum SupervisionError {
    #[error("gold path {path}: {source}")]
    Gold { path: usize, source: GraphError },
    #[error("gold path {path}: {source}")]
    GoldShape { path: usize, source: LinearizeError },
    #[error("gold path {path}: {triplet:?} is not a triplet of the graph")]
    MissingTriplet { path: usize, triplet: [String; 3] },
    #[error("gold response is empty")]
    EmptyResponse,
    #[error("scorer failed at target index {index}: {source}")]
    Scorer { index: usize, source: ScorerError },
    #[error("non-finite log-probability for target token {token} at index {index}")]
    NonFinite { index: usize, token: TokenId },
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Dialog(#[from] DialogError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TurnInput {
    Text(String),
    Full(Turn),
}

impl From<TurnInput> for Turn {
    fn from(t: TurnInput) -> Self {
        match t {
            TurnInput::Text(text) => Turn {
                speaker: String::new(),
                text,
            },
            TurnInput::Full(t) => t,
        }
    }
}

/// One line of dialog JSONL. Turns are strings or `{speaker, text}`
/// objects; `gold` lists paths as `[head, relation, tail]` name triples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub turns: Vec<TurnInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<Vec<[String; 3]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl DialogRecord {
    pub fn history(&self) -> Result<DialogHistory, DialogError> {
        DialogHistory::new(self.turns.iter().cloned().map(Turn::from).collect())
    }
}

/// Dialog tokens in turn order.
pub fn dialog_tokens<T: Tokenizer + ?Sized>(dialog: &DialogHistory, tok: &T) -> Vec<TokenId> {
    dialog
        .turns()
        .iter()
        .flat_map(|t| tok.encode(&t.text))
        .collect()
}

fn lookup(graph: &KnowledgeGraph, h: &str, r: &str, t: &str) -> Result<Triplet, GraphError> {
    Ok(Triplet::new(
        graph.require_entity(h)?,
        graph.require_relation(r)?,
        graph.require_entity(t)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoldAnnotation {
    pub paths: Vec<KnowledgePath>,
    pub response: Option<Vec<TokenId>>,
}

impl GoldAnnotation {
    /// Resolves name triples against the graph. Each path is oriented to
    /// start at a mentioned entity when possible.
    pub fn resolve<T: Tokenizer + ?Sized>(
        graph: &KnowledgeGraph,
        gold: &[Vec<[String; 3]>],
        response: Option<&str>,
        mentions: &[EntityId],
        tok: &T,
    ) -> Result<Self, SupervisionError> {
        let mut paths = Vec::with_capacity(gold.len());
        for (i, rows) in gold.iter().enumerate() {
            let mut triplets = Vec::with_capacity(rows.len());
            for [h, r, t] in rows {
                let triplet = lookup(graph, h, r, t)
                    .map_err(|source| SupervisionError::Gold { path: i, source })?;
                if !graph.contains(&triplet) {
                    return Err(SupervisionError::MissingTriplet {
                        path: i,
                        triplet: [h.clone(), r.clone(), t.clone()],
                    });
                }
                triplets.push(triplet);
            }
            let path = KnowledgePath::orient(&triplets, |e| mentions.contains(&e))
                .map_err(|source| SupervisionError::GoldShape { path: i, source })?;
            paths.push(path);
        }
        let response = match response {
            None => None,
            Some(text) => {
                let ids = tok.encode(text);
                if ids.is_empty() {
                    return Err(SupervisionError::EmptyResponse);
                }
                Some(ids)
            }
        };
        Ok(Self { paths, response })
    }
}

/// The sequence a trained retriever should emit for `gold`.
pub fn retrieval_target<T: Tokenizer + ?Sized>(
    gold: &GoldAnnotation,
    lin: &Linearizer<'_, T>,
) -> Result<TokenSequence, SupervisionError> {
    if gold.paths.is_empty() {
        return Ok(TokenSequence::new());
    }
    Ok(lin.linearize_subgraph(&gold.paths)?)
}

/// Generator input: the linearized retrieval followed by the dialog.
pub fn generation_input<S: Scalar, T: Tokenizer + ?Sized>(
    retrieved: &RetrievedSubgraph<S>,
    dialog_tokens: &[TokenId],
    lin: &Linearizer<'_, T>,
) -> Result<TokenSequence, SupervisionError> {
    let z = if retrieved.paths.is_empty() {
        TokenSequence::new()
    } else {
        lin.linearize_subgraph(&retrieved.ranked_paths())?
    };
    Ok(z.concat(&TokenSequence::text(dialog_tokens.to_vec())))
}

/// Negative log-likelihood of `target` after `context`, by the chain rule.
pub fn sequence_nll<S, Sc>(
    scorer: &Sc,
    target: &[TokenId],
    context: &[TokenId],
) -> Result<S, SupervisionError>
where
    S: Scalar,
    Sc: NextTokenScorer<S> + ?Sized,
{
    let mut ctx = context.to_vec();
    let mut total = S::zero();
    for (index, &token) in target.iter().enumerate() {
        let lp = scorer
            .log_probs_for(&ctx, &[token])
            .map_err(|source| SupervisionError::Scorer { index, source })?;
        let l = lp.first().copied().unwrap_or_else(S::nan);
        if !l.is_finite() {
            return Err(SupervisionError::NonFinite { index, token });
        }
        total -= l;
        ctx.push(token);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMatch {
    /// Same triplets in the same or reversed order.
    #[default]
    Triplets,
    /// Same entity sequence, forwards or backwards.
    Entities,
}

fn same_path(a: &KnowledgePath, b: &KnowledgePath, mode: PathMatch) -> bool {
    let (x, y) = match mode {
        PathMatch::Triplets => (
            a.triplets()
                .into_iter()
                .map(|t| (t.head.0, t.relation.0, t.tail.0))
                .collect::<Vec<_>>(),
            b.triplets()
                .into_iter()
                .map(|t| (t.head.0, t.relation.0, t.tail.0))
                .collect::<Vec<_>>(),
        ),
        PathMatch::Entities => (
            a.entities().into_iter().map(|e| (e.0, 0, 0)).collect(),
            b.entities().into_iter().map(|e| (e.0, 0, 0)).collect(),
        ),
    };
    x == y || x.iter().eq(y.iter().rev())
}

/// Whether any gold path is among the first `k` ranked paths.
pub fn path_at_k(
    ranked: &[KnowledgePath],
    gold: &[KnowledgePath],
    k: usize,
    mode: PathMatch,
) -> bool {
    assert!(k >= 1, "path@k needs k >= 1");
    ranked
        .iter()
        .take(k)
        .any(|r| gold.iter().any(|g| same_path(r, g, mode)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "path@1")]
    pub path_at_1: f64,
    #[serde(rename = "path@3")]
    pub path_at_3: f64,
    pub n: usize,
    pub skipped: usize,
    pub mean_nll: f64,
}

/// Per-dialog evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogEval {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// False when the dialog has no gold paths.
    pub evaluated: bool,
    #[serde(rename = "path@1")]
    pub hit_at_1: bool,
    #[serde(rename = "path@3")]
    pub hit_at_3: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nll: Option<f64>,
}

impl DialogEval {
    pub fn new(
        id: Option<String>,
        ranked: &[KnowledgePath],
        gold: &[KnowledgePath],
        mode: PathMatch,
        nll: Option<f64>,
    ) -> Self {
        let evaluated = !gold.is_empty();
        Self {
            id,
            evaluated,
            hit_at_1: evaluated && path_at_k(ranked, gold, 1, mode),
            hit_at_3: evaluated && path_at_k(ranked, gold, 3, mode),
            nll,
        }
    }
}

impl EvalReport {
    /// Corpus means over evaluated dialogs.
    pub fn aggregate(rows: &[DialogEval]) -> Self {
        let done: Vec<&DialogEval> = rows.iter().filter(|r| r.evaluated).collect();
        let n = done.len();
        let mean = |f: &dyn Fn(&DialogEval) -> bool| {
            if n == 0 {
                0.0
            } else {
                done.iter().filter(|r| f(r)).count() as f64 / n as f64
            }
        };
        let nlls: Vec<f64> = done.iter().filter_map(|r| r.nll).collect();
        Self {
            path_at_1: mean(&|r| r.hit_at_1),
            path_at_3: mean(&|r| r.hit_at_3),
            n,
            skipped: rows.len() - n,
            mean_nll: if nlls.is_empty() {
                0.0
            } else {
                nlls.iter().sum::<f64>() / nlls.len() as f64
            },
        }
    }
}
