//! End-to-end retrieval for one dialog: link mentions, extract the
//! candidate subgraph, build the trie and the informativeness table, decode.

use serde::Serialize;
use thiserror::Error;

use crate::constraint::{ConstraintError, ConstraintTrie};
use crate::decoder::{
    beam_decode, DecodeConfig, DecodeError, DecodeRecord, NextTokenScorer, RetrievedSubgraph,
};
use crate::graph::{GraphError, KnowledgeGraph};
use crate::informativeness::{InformativenessError, InformativenessTable, ScoreParams};
use crate::linearize::{LinearizeConfig, LinearizeError, Linearizer, SpecialTokens, DEFAULT_SLOTS};
use crate::mention::{DialogHistory, MentionLinker, MentionSet};
use crate::scalar::Scalar;
use crate::supervision::dialog_tokens;
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Informativeness(#[from] InformativenessError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig<S> {
    pub slots: u8,
    pub score: ScoreParams<S>,
    pub decode: DecodeConfig<S>,
    pub strict_mentions: bool,
}

impl<S: Scalar> Default for PipelineConfig<S> {
    fn default() -> Self {
        Self {
            slots: DEFAULT_SLOTS,
            score: ScoreParams::default(),
            decode: DecodeConfig::default(),
            strict_mentions: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeStatus {
    Ok,
    /// No knowledge graph entity occurs in the dialog.
    NoMentions,
    /// Mentions exist but none has an incident triplet.
    NoKnowledge,
}

#[derive(Debug, Clone)]
pub struct DialogDecode<S> {
    pub mentions: MentionSet,
    pub status: DecodeStatus,
    pub candidate_triplets: usize,
    pub retrieved: RetrievedSubgraph<S>,
}

pub struct Pipeline<'g, T: Tokenizer + ?Sized, S> {
    graph: &'g KnowledgeGraph,
    tok: &'g T,
    linker: MentionLinker,
    lin: Linearizer<'g, T>,
    cfg: PipelineConfig<S>,
}

impl<'g, T: Tokenizer + ?Sized, S: Scalar> Pipeline<'g, T, S> {
    pub fn new(
        graph: &'g KnowledgeGraph,
        tok: &'g T,
        cfg: PipelineConfig<S>,
    ) -> Result<Self, PipelineError> {
        cfg.decode.validate()?;
        let lin = Linearizer::new(graph, tok, LinearizeConfig { slots: cfg.slots })?;
        Ok(Self {
            graph,
            tok,
            linker: MentionLinker::new(graph),
            lin,
            cfg,
        })
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn tokenizer(&self) -> &'g T {
        self.tok
    }

    pub fn linearizer(&self) -> &Linearizer<'g, T> {
        &self.lin
    }

    pub fn specials(&self) -> &SpecialTokens {
        self.lin.specials()
    }

    pub fn config(&self) -> &PipelineConfig<S> {
        &self.cfg
    }

    pub fn link(&self, dialog: &DialogHistory) -> MentionSet {
        self.linker.link(dialog)
    }

    /// Candidate subgraph and constraint trie for a mention set; `None` when
    /// nothing is retrievable.
    pub fn trie(&self, mentions: &MentionSet) -> Result<Option<ConstraintTrie<'g>>, PipelineError> {
        if mentions.is_empty() {
            return Ok(None);
        }
        let sub = self
            .graph
            .k_hop_subgraph(&mentions.entities(), self.cfg.decode.max_hops)?;
        let trie_cfg = self.cfg.decode.trie_config(self.cfg.strict_mentions);
        match ConstraintTrie::build(sub, self.tok, *self.lin.specials(), trie_cfg) {
            Ok(t) => Ok(Some(t)),
            Err(ConstraintError::NoRetrievableKnowledge) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn decode<Sc>(
        &self,
        dialog: &DialogHistory,
        scorer: &Sc,
    ) -> Result<DialogDecode<S>, PipelineError>
    where
        Sc: NextTokenScorer<S> + ?Sized,
    {
        let mentions = self.link(dialog);
        self.decode_linked(dialog, mentions, scorer)
    }

    pub fn decode_linked<Sc>(
        &self,
        dialog: &DialogHistory,
        mentions: MentionSet,
        scorer: &Sc,
    ) -> Result<DialogDecode<S>, PipelineError>
    where
        Sc: NextTokenScorer<S> + ?Sized,
    {
        let empty = |mentions, status| DialogDecode {
            mentions,
            status,
            candidate_triplets: 0,
            retrieved: RetrievedSubgraph::default(),
        };
        if mentions.is_empty() {
            return Ok(empty(mentions, DecodeStatus::NoMentions));
        }
        let Some(trie) = self.trie(&mentions)? else {
            return Ok(empty(mentions, DecodeStatus::NoKnowledge));
        };
        let table = InformativenessTable::build(trie.subgraph(), self.cfg.score)?;
        let context = dialog_tokens(dialog, self.tok);
        let retrieved = beam_decode(scorer, &trie, &table, &self.cfg.decode, &context)?;
        Ok(DialogDecode {
            candidate_triplets: trie.subgraph().triplets().len(),
            mentions,
            status: DecodeStatus::Ok,
            retrieved,
        })
    }

    /// Output record with run metadata.
    pub fn record(&self, d: &DialogDecode<S>, id: Option<String>) -> DecodeRecord {
        let mut rec = d.retrieved.record(self.graph);
        rec.id = id;
        let mentions: Vec<&str> = d
            .mentions
            .entities()
            .into_iter()
            .map(|e| self.graph.entity_name(e))
            .collect();
        let c = &self.cfg;
        rec.meta = Some(serde_json::json!({
            "status": d.status,
            "mentions": mentions,
            "candidate_triplets": d.candidate_triplets,
            "alpha": c.decode.alpha.as_f64(),
            "beam": c.decode.beam,
            "max_paths": c.decode.max_paths,
            "max_hops": c.decode.max_hops,
            "epsilon": c.decode.epsilon.as_f64(),
            "slots": c.slots,
            "score": c.score.variant,
            "beta": c.score.beta.as_f64(),
            "katz_k": c.score.k,
            "strict_mentions": c.strict_mentions,
            "p_vocab": "renormalized-over-allowed",
        }));
        rec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::UniformScorer;
    use crate::tokenizer::WordTokenizer;

    #[test]
    fn statuses() {
        let mut b = crate::graph::GraphBuilder::new();
        b.add("Lionel Messi", "plays_for", "Inter Miami");
        b.entity("Pele");
        let g = b.build();
        let tok = WordTokenizer::from_graph(&g);
        let p = Pipeline::<_, f64>::new(&g, &tok, PipelineConfig::default()).unwrap();
        let scorer = UniformScorer::new(p.specials().vocab_size());
        let run = |text: &str| {
            p.decode(&DialogHistory::from_texts(&[text]).unwrap(), &scorer)
                .unwrap()
        };

        let none = run("hello there");
        assert_eq!(none.status, DecodeStatus::NoMentions);
        assert!(none.retrieved.paths.is_empty());

        assert_eq!(run("what about Pele?").status, DecodeStatus::NoKnowledge);

        let ok = run("Do you know Lionel Messi?");
        assert_eq!(ok.status, DecodeStatus::Ok);
        assert_eq!(ok.retrieved.paths.len(), 1);
        let rec = p.record(&ok, Some("d1".into()));
        let j = serde_json::to_value(&rec).unwrap();
        assert_eq!(j["meta"]["mentions"][0], "Lionel Messi");
        assert_eq!(j["meta"]["status"], "ok");
        assert_eq!(j["paths"][0]["triplets"][0][1], "plays_for");
    }
}
