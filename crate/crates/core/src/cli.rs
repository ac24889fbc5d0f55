//! `kgcd` command line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::{BigramScorer, DecodeConfig, NextTokenScorer, PlantedScorer, UniformScorer};
use crate::graph::{KnowledgeGraph, Orientation, Triplet};
use crate::informativeness::{InformativenessTable, ScoreParams, ScoreScope, ScoreVariant};
use crate::linearize::{
    mask_for_reconstruction, sample_paths, KnowledgePath, LinearizeConfig, Linearizer, PathStep,
};
use crate::mention::{DialogHistory, MentionSet};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::supervision::{
    dialog_tokens, retrieval_target, sequence_nll, DialogEval, DialogRecord, EvalReport,
    GoldAnnotation, PathMatch,
};
use crate::tokenizer::{TokenId, Tokenizer, WordTokenizer};
use crate::DecodeRecord;

const CHUNK: usize = 256;

#[derive(Debug, Parser)]
#[command(
    name = "kgcd",
    version,
    about = "Graph-constrained retrieval of knowledge paths for dialogs"
)]
pub struct Cli {
    /// Worker threads for per-dialog parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a triplet TSV and print graph statistics.
    Ingest { kg: PathBuf },
    /// Report mentioned entities per dialog.
    Link {
        #[arg(long)]
        kg: PathBuf,
        dialogs: PathBuf,
    },
    /// Retrieve knowledge paths for each dialog.
    Decode {
        #[arg(long)]
        kg: PathBuf,
        dialogs: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// uniform, planted, or ngram:<corpus>
        #[arg(long, default_value = "uniform")]
        scorer: ScorerSpec,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample masked reconstruction examples from random paths.
    ReconSample {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        hops: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        slots: u8,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score decode results against gold paths.
    Eval {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dialogs: PathBuf,
        #[arg(long = "match", value_enum, default_value_t = MatchArg::Triplets)]
        match_mode: MatchArg,
        /// Scorer for the gold retrieval NLL.
        #[arg(long, default_value = "uniform")]
        scorer: ScorerSpec,
        #[arg(long, default_value_t = 2)]
        slots: u8,
        /// Per-dialog JSONL breakdown.
        #[arg(long)]
        breakdown: Option<PathBuf>,
    },
    /// Print the special-token manifest.
    Manifest {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long, default_value_t = 2)]
        slots: u8,
    },
    /// Render the constraint trie for a dialog as Graphviz DOT.
    TrieDot {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        text: String,
        #[command(flatten)]
        run: RunArgs,
        /// Maximum number of trie nodes to expand.
        #[arg(long, default_value_t = 500)]
        limit: usize,
    },
    /// Dump informativeness scores for a dialog.
    Score {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        text: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long = "katz-k", default_value_t = 2)]
    pub katz_k: usize,
    #[arg(long, value_enum, default_value_t = ScoreArg::Katz)]
    pub score: ScoreArg,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 2)]
    pub hops: usize,
    #[arg(long = "max-paths", default_value_t = 3)]
    pub max_paths: usize,
    #[arg(long, default_value_t = 2)]
    pub slots: u8,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Recorded in the output metadata; decoding itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only mentioned entities may start a path.
    #[arg(long = "strict-mentions")]
    pub strict_mentions: bool,
    /// Compute informativeness over the whole graph.
    #[arg(long = "full-graph-scores")]
    pub full_graph_scores: bool,
    /// Follow edge direction when computing informativeness.
    #[arg(long)]
    pub directed: bool,
}

impl RunArgs {
    pub fn pipeline_config(&self) -> Result<PipelineConfig<f64>> {
        if !(crate::linearize::MIN_SLOTS..=crate::linearize::MAX_SLOTS).contains(&self.slots) {
            bail!("--slots must be between 1 and 4");
        }
        let cfg = PipelineConfig {
            slots: self.slots,
            score: ScoreParams {
                variant: self.score.into(),
                beta: self.beta,
                k: self.katz_k,
                scope: if self.full_graph_scores {
                    ScoreScope::FullGraph
                } else {
                    ScoreScope::Subgraph
                },
                directed: self.directed,
            },
            decode: DecodeConfig {
                alpha: self.alpha,
                beam: self.beam,
                max_paths: self.max_paths,
                max_hops: self.hops,
                epsilon: self.epsilon,
            },
            strict_mentions: self.strict_mentions,
        };
        cfg.decode.validate()?;
        if cfg.score.variant == ScoreVariant::Katz {
            if !(self.beta > 0.0 && self.beta.is_finite()) {
                bail!("--beta must be positive");
            }
            if !(1..=crate::informativeness::MAX_KATZ_K).contains(&self.katz_k) {
                bail!("--katz-k must be between 1 and 4");
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreArg {
    Katz,
    Connection,
}

impl From<ScoreArg> for ScoreVariant {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Katz => ScoreVariant::Katz,
            ScoreArg::Connection => ScoreVariant::Connection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchArg {
    Triplets,
    Entities,
}

impl From<MatchArg> for PathMatch {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::Triplets => PathMatch::Triplets,
            MatchArg::Entities => PathMatch::Entities,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerSpec {
    Uniform,
    /// Plants each dialog's gold paths.
    Planted,
    /// Bigram model over a corpus file: one sequence per line, either a
    /// JSON array of token ids or plain text.
    Ngram(PathBuf),
}

impl FromStr for ScorerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "planted" => Ok(Self::Planted),
            _ => match s.strip_prefix("ngram:") {
                Some(p) if !p.is_empty() => Ok(Self::Ngram(PathBuf::from(p))),
                _ => Err(format!(
                    "unknown scorer {s:?}; expected uniform, planted or ngram:<path>"
                )),
            },
        }
    }
}

fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

fn create(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        None => Box::new(BufWriter::new(io::stdout().lock())),
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
    })
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let g = KnowledgeGraph::load_tsv(open(path)?)
        .with_context(|| format!("loading {}", path.display()))?;
    log::info!(
        "loaded {} triplets from {}",
        g.triplets().len(),
        path.display()
    );
    Ok(g)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Maps non-blank JSONL lines in parallel chunks, writing results in input
/// order. `f` receives the 1-based line number.
fn map_lines<F>(
    input: Box<dyn BufRead>,
    out: &mut dyn Write,
    pool: &rayon::ThreadPool,
    f: F,
) -> Result<()>
where
    F: Fn(usize, &str) -> Result<String> + Sync,
{
    let mut lines = input.lines().enumerate();
    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        for (i, line) in lines.by_ref() {
            let line = line.with_context(|| format!("reading line {}", i + 1))?;
            if !line.trim().is_empty() {
                chunk.push((i + 1, line));
            }
            if chunk.len() == CHUNK {
                break;
            }
        }
        if chunk.is_empty() {
            return Ok(());
        }
        let results: Vec<Result<String>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(n, l)| f(*n, l).with_context(|| format!("line {n}")))
                .collect()
        });
        for r in results {
            writeln!(out, "{}", r?)?;
        }
    }
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{} line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn load_corpus<T: Tokenizer + ?Sized>(path: &Path, tok: &T) -> Result<Vec<Vec<TokenId>>> {
    let mut corpus = Vec::new();
    for line in open(path)?.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match serde_json::from_str::<Vec<TokenId>>(trimmed) {
            Ok(ids) => corpus.push(ids),
            Err(_) => corpus.push(tok.encode(trimmed)),
        }
    }
    Ok(corpus)
}

type SharedScorer = Box<dyn NextTokenScorer<f64> + Send + Sync>;

/// Scorer shared by every dialog; `None` for the per-dialog planted scorer.
fn shared_scorer<T: Tokenizer + ?Sized>(
    spec: &ScorerSpec,
    tok: &T,
    vocab: usize,
) -> Result<Option<SharedScorer>> {
    Ok(match spec {
        ScorerSpec::Uniform => Some(Box::new(UniformScorer::new(vocab))),
        ScorerSpec::Planted => None,
        ScorerSpec::Ngram(path) => {
            let corpus = load_corpus(path, tok)?;
            Some(Box::new(BigramScorer::train(
                corpus.iter().map(Vec::as_slice),
                vocab,
            )?))
        }
    })
}

fn gold_for(
    pipeline: &Pipeline<'_, WordTokenizer, f64>,
    rec: &DialogRecord,
    mentions: &MentionSet,
) -> Result<GoldAnnotation> {
    let gold = rec.gold.as_deref().unwrap_or(&[]);
    Ok(GoldAnnotation::resolve(
        pipeline.graph(),
        gold,
        None,
        &mentions.entities(),
        pipeline.tokenizer(),
    )?)
}

/// Gold retrieval sequence terminated by end-of-retrieval.
fn gold_target(
    pipeline: &Pipeline<'_, WordTokenizer, f64>,
    gold: &GoldAnnotation,
) -> Result<Vec<TokenId>> {
    let mut target = retrieval_target(gold, pipeline.linearizer())?
        .ids()
        .to_vec();
    if !target.is_empty() {
        target.push(pipeline.specials().eor());
    }
    Ok(target)
}

fn cmd_ingest(kg: &Path) -> Result<()> {
    let g = load_graph(kg)?;
    println!("{}", serde_json::to_string(&g.stats())?);
    Ok(())
}

#[derive(Serialize)]
struct LinkSpan<'a> {
    entity: &'a str,
    turn: usize,
    start: usize,
    end: usize,
}

fn cmd_link(kg: &Path, dialogs: &Path, jobs: usize) -> Result<()> {
    let g = load_graph(kg)?;
    let linker = crate::mention::MentionLinker::new(&g);
    let pool = pool(jobs)?;
    let mut out = create(None)?;
    map_lines(open(dialogs)?, &mut out, &pool, |_, line| {
        let rec: DialogRecord = serde_json::from_str(line)?;
        let m = linker.link(&rec.history()?);
        let mentions: Vec<&str> = m.entities().into_iter().map(|e| g.entity_name(e)).collect();
        let spans: Vec<LinkSpan> = m
            .mentions()
            .iter()
            .map(|s| LinkSpan {
                entity: g.entity_name(s.entity),
                turn: s.turn,
                start: s.start,
                end: s.end,
            })
            .collect();
        let mut j = serde_json::json!({ "mentions": mentions, "spans": spans });
        if let Some(id) = rec.id {
            j["id"] = id.into();
        }
        Ok(serde_json::to_string(&j)?)
    })?;
    out.flush()?;
    Ok(())
}

fn cmd_decode(
    kg: &Path,
    dialogs: &Path,
    run: &RunArgs,
    spec: &ScorerSpec,
    out: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let g = load_graph(kg)?;
    let tok = WordTokenizer::from_graph(&g);
    let cfg = run.pipeline_config()?;
    let pipeline = Pipeline::new(&g, &tok, cfg)?;
    let vocab = pipeline.specials().vocab_size();
    let shared = shared_scorer(spec, &tok, vocab)?;
    let jobs = match &shared {
        Some(s) if !s.supports_concurrency() => 1,
        _ => jobs,
    };
    let pool = pool(jobs)?;
    let mut sink = create(out)?;
    map_lines(open(dialogs)?, &mut sink, &pool, |_, line| {
        let rec: DialogRecord = serde_json::from_str(line)?;
        let history = rec.history()?;
        let mentions = pipeline.link(&history);
        let decoded = match &shared {
            Some(s) => pipeline.decode_linked(&history, mentions, s.as_ref())?,
            None => {
                let gold = gold_for(&pipeline, &rec, &mentions)?;
                let target = gold_target(&pipeline, &gold)?;
                if target.is_empty() {
                    log::warn!("dialog {:?} has no gold paths; planting nothing", rec.id);
                    pipeline.decode_linked(&history, mentions, &UniformScorer::new(vocab))?
                } else {
                    pipeline.decode_linked(
                        &history,
                        mentions,
                        &PlantedScorer::new(target, vocab),
                    )?
                }
            }
        };
        let mut record = pipeline.record(&decoded, rec.id.clone());
        if let (Some(meta), Some(seed)) = (record.meta.as_mut(), run.seed) {
            meta["seed"] = seed.into();
        }
        Ok(serde_json::to_string(&record)?)
    })?;
    sink.flush()?;
    Ok(())
}

fn cmd_recon(
    kg: &Path,
    count: usize,
    hops: usize,
    seed: u64,
    slots: u8,
    out: Option<&Path>,
) -> Result<()> {
    let g = load_graph(kg)?;
    let tok = WordTokenizer::from_graph(&g);
    let lin = Linearizer::new(&g, &tok, LinearizeConfig { slots })?;
    if hops == 0 {
        bail!("--hops must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paths = sample_paths(&g, hops, count, &mut rng);
    if paths.is_empty() && count > 0 {
        bail!("graph has no triplet between distinct entities to sample from");
    }
    let mut sink = create(out)?;
    for p in &paths {
        let seq = lin.linearize_path(p)?;
        let ex = mask_for_reconstruction(&seq, lin.specials(), &mut rng)?;
        writeln!(sink, "{}", serde_json::to_string(&ex.record())?)?;
    }
    sink.flush()?;
    Ok(())
}

fn record_paths(g: &KnowledgeGraph, rec: &DecodeRecord) -> Result<Vec<KnowledgePath>> {
    rec.paths
        .iter()
        .map(|p| {
            if p.triplets.len() != p.orientation.len() {
                bail!(
                    "path has {} triplets but {} orientations",
                    p.triplets.len(),
                    p.orientation.len()
                );
            }
            let steps = p
                .triplets
                .iter()
                .zip(&p.orientation)
                .map(|([h, r, t], o)| {
                    let triplet = Triplet::new(
                        g.require_entity(h)?,
                        g.require_relation(r)?,
                        g.require_entity(t)?,
                    );
                    let o = match o.as_str() {
                        "fwd" => Orientation::Forward,
                        "rev" => Orientation::Reverse,
                        other => bail!("unknown orientation {other:?}"),
                    };
                    Ok(PathStep::new(triplet, o))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KnowledgePath::new(steps)?)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    kg: &Path,
    results: &Path,
    dialogs: &Path,
    mode: PathMatch,
    spec: &ScorerSpec,
    slots: u8,
    breakdown: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let g = load_graph(kg)?;
    let tok = WordTokenizer::from_graph(&g);
    let cfg = PipelineConfig {
        slots,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::new(&g, &tok, cfg)?;
    let vocab = pipeline.specials().vocab_size();
    let shared = shared_scorer(spec, &tok, vocab)?;
    let decoded: Vec<DecodeRecord> = read_records(results)?;
    let gold: Vec<DialogRecord> = read_records(dialogs)?;
    if decoded.len() != gold.len() {
        bail!(
            "{} decode results but {} dialogs",
            decoded.len(),
            gold.len()
        );
    }
    let pool = pool(jobs)?;
    let rows: Vec<DialogEval> = pool.install(|| {
        decoded
            .par_iter()
            .zip(gold.par_iter())
            .enumerate()
            .map(|(i, (d, rec))| -> Result<DialogEval> {
                if let (Some(a), Some(b)) = (&d.id, &rec.id) {
                    if a != b {
                        bail!(
                            "record {}: result id {a:?} does not match dialog id {b:?}",
                            i + 1
                        );
                    }
                }
                let history = rec.history()?;
                let mentions = pipeline.link(&history);
                let annotation = gold_for(&pipeline, rec, &mentions)
                    .with_context(|| format!("record {}", i + 1))?;
                let ranked = record_paths(&g, d).with_context(|| format!("record {}", i + 1))?;
                let target = gold_target(&pipeline, &annotation)?;
                let nll = if target.is_empty() {
                    None
                } else {
                    let context = dialog_tokens(&history, &tok);
                    let value: f64 = match &shared {
                        Some(s) => sequence_nll(s.as_ref(), &target, &context)?,
                        None => sequence_nll(
                            &PlantedScorer::new(target.clone(), vocab),
                            &target,
                            &context,
                        )?,
                    };
                    Some(value)
                };
                Ok(DialogEval::new(
                    rec.id.clone(),
                    &ranked,
                    &annotation.paths,
                    mode,
                    nll,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    if let Some(path) = breakdown {
        let mut sink = create(Some(path))?;
        for r in &rows {
            writeln!(sink, "{}", serde_json::to_string(r)?)?;
        }
        sink.flush()?;
    }
    println!("{}", serde_json::to_string(&EvalReport::aggregate(&rows))?);
    Ok(())
}

fn cmd_manifest(kg: &Path, slots: u8) -> Result<()> {
    let g = load_graph(kg)?;
    let tok = WordTokenizer::from_graph(&g);
    let lin = Linearizer::new(&g, &tok, LinearizeConfig { slots })?;
    println!(
        "{}",
        serde_json::to_string_pretty(&lin.specials().manifest())?
    );
    Ok(())
}

fn cmd_trie_dot(kg: &Path, text: &str, run: &RunArgs, limit: usize) -> Result<()> {
    let g = load_graph(kg)?;
    let tok = WordTokenizer::from_graph(&g);
    let pipeline = Pipeline::new(&g, &tok, run.pipeline_config()?)?;
    let mentions = pipeline.link(&DialogHistory::from_texts(&[text])?);
    let trie = pipeline
        .trie(&mentions)?
        .ok_or_else(|| anyhow!("no retrievable knowledge for this text"))?;
    trie.expand_all(limit);
    print!("{}", trie.to_dot());
    Ok(())
}

fn cmd_score(kg: &Path, text: &str, run: &RunArgs) -> Result<()> {
    let g = load_graph(kg)?;
    let tok = WordTokenizer::from_graph(&g);
    let cfg = run.pipeline_config()?;
    let pipeline = Pipeline::new(&g, &tok, cfg)?;
    let mentions = pipeline.link(&DialogHistory::from_texts(&[text])?);
    if mentions.is_empty() {
        bail!("no entity of the graph is mentioned");
    }
    let sub = g.k_hop_subgraph(&mentions.entities(), cfg.decode.max_hops)?;
    let table = InformativenessTable::build(&sub, cfg.score)?;
    println!("{}", serde_json::to_string(&table.to_json(&g))?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs;
    match &cli.command {
        Command::Ingest { kg } => cmd_ingest(kg),
        Command::Link { kg, dialogs } => cmd_link(kg, dialogs, jobs),
        Command::Decode {
            kg,
            dialogs,
            run,
            scorer,
            out,
        } => cmd_decode(kg, dialogs, run, scorer, out.as_deref(), jobs),
        Command::ReconSample {
            kg,
            count,
            hops,
            seed,
            slots,
            out,
        } => cmd_recon(kg, *count, *hops, *seed, *slots, out.as_deref()),
        Command::Eval {
            kg,
            results,
            dialogs,
            match_mode,
            scorer,
            slots,
            breakdown,
        } => cmd_eval(
            kg,
            results,
            dialogs,
            (*match_mode).into(),
            scorer,
            *slots,
            breakdown.as_deref(),
            jobs,
        ),
        Command::Manifest { kg, slots } => cmd_manifest(kg, *slots),
        Command::TrieDot {
            kg,
            text,
            run,
            limit,
        } => cmd_trie_dot(kg, text, run, *limit),
        Command::Score { kg, text, run } => cmd_score(kg, text, run),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest { .. } => "ingest",
        Command::Link { .. } => "link",
        Command::Decode { .. } => "decode",
        Command::ReconSample { .. } => "recon-sample",
        Command::Eval { .. } => "eval",
        Command::Manifest { .. } => "manifest",
        Command::TrieDot { .. } => "trie-dot",
        Command::Score { .. } => "score",
    }
}

/// Entry point: parses arguments, runs, and reports failures as one JSON
/// object on stderr. Returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KGCD_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let head = msg
                .split("\n\n")
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            let first = head.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!(
                "{}",
                serde_json::json!({ "error": first, "command": "usage", "usage": msg.trim_end() })
            );
            return 2;
        }
    };
    let name = command_name(&cli.command);
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            let j = serde_json::json!({ "error": e.to_string(), "command": name, "causes": chain });
            eprintln!("{j}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults() {
        let cli = Cli::parse_from(["kgcd", "decode", "--kg", "g.tsv", "d.jsonl"]);
        let Command::Decode { run, scorer, .. } = cli.command else {
            panic!("expected decode");
        };
        let cfg = run.pipeline_config().unwrap();
        assert_eq!(cfg.decode.alpha, 0.8);
        assert_eq!(cfg.decode.beam, 5);
        assert_eq!(cfg.decode.max_hops, 2);
        assert_eq!(cfg.decode.max_paths, 3);
        assert_eq!(cfg.score.beta, 0.5);
        assert_eq!(cfg.score.k, 2);
        assert_eq!(cfg.slots, 2);
        assert_eq!(scorer, ScorerSpec::Uniform);
    }

    #[test]
    fn scorer_specs() {
        assert_eq!(
            "planted".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Planted
        );
        assert_eq!(
            "ngram:corpus.txt".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Ngram(PathBuf::from("corpus.txt"))
        );
        assert!("ngram:".parse::<ScorerSpec>().is_err());
        assert!("gpt".parse::<ScorerSpec>().is_err());
    }

    #[test]
    fn out_of_range_flags_are_rejected() {
        for args in [
            vec!["--alpha", "1.5"],
            vec!["--beta", "0"],
            vec!["--katz-k", "7"],
            vec!["--slots", "9"],
            vec!["--beam", "0"],
        ] {
            let mut argv = vec!["kgcd", "decode", "--kg", "g", "d"];
            argv.extend(args.iter().copied());
            let Command::Decode { run, .. } = Cli::parse_from(argv).command else {
                unreachable!()
            };
            assert!(run.pipeline_config().is_err(), "{args:?}");
        }
    }
}
