//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance suite. Nothing here calls into the decoder, the trie or the
//! informativeness internals it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use kgcd::synth::{entity_name, random_graph, GraphShape};
use kgcd::{
    CandidateSubgraph, ConstraintTrie, EntityId, KnowledgeGraph, KnowledgePath, Linearizer,
    NextTokenScorer, Orientation, PathStep, TokenId, Tokenizer, TrieConfig, TrieCursor, Triplet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random graph plus one or two mentions drawn from its entities.
pub fn random_case(rng: &mut ChaCha8Rng, max_triplets: usize) -> (KnowledgeGraph, Vec<EntityId>) {
    let entities = rng.random_range(2..=8);
    let shape = GraphShape {
        entities,
        relations: rng.random_range(1..=3),
        triplets: rng.random_range(1..=max_triplets),
        self_loops: rng.random_bool(0.2),
    };
    let g = random_graph(rng, shape);
    let n = rng.random_range(1..=2.min(entities));
    let mut ms: Vec<EntityId> = Vec::new();
    while ms.len() < n {
        let e = EntityId(rng.random_range(0..entities) as u32);
        if !ms.contains(&e) {
            ms.push(e);
        }
    }
    (g, ms)
}

// ---------------------------------------------------------------- Katz

/// Brute-force Katz: enumerates every walk of length 1..=k from each mention
/// over `triplets` (undirected, one step per triplet incidence) and adds
/// `beta^len` at its endpoint, averaged over mentions.
pub fn katz_by_walks(
    triplets: &[Triplet],
    mentions: &[EntityId],
    beta: f64,
    k: usize,
) -> HashMap<EntityId, f64> {
    fn walk(
        triplets: &[Triplet],
        at: EntityId,
        weight: f64,
        beta: f64,
        left: usize,
        out: &mut HashMap<EntityId, f64>,
    ) {
        if left == 0 {
            return;
        }
        for t in triplets {
            let next = if t.head == at {
                t.tail
            } else if t.tail == at {
                t.head
            } else {
                continue;
            };
            let w = weight * beta;
            *out.entry(next).or_default() += w;
            walk(triplets, next, w, beta, left - 1, out);
        }
    }
    let mut out = HashMap::new();
    for &m in mentions {
        walk(triplets, m, 1.0, beta, k, &mut out);
    }
    for v in out.values_mut() {
        *v /= mentions.len() as f64;
    }
    out
}

// ---------------------------------------------------------------- trie

/// Every simple path of 1..=max_hops hops over `triplets` starting at `start`,
/// with each hop walked forwards or backwards.
pub fn simple_paths(triplets: &[Triplet], start: EntityId, max_hops: usize) -> Vec<KnowledgePath> {
    fn go(
        triplets: &[Triplet],
        at: EntityId,
        max_hops: usize,
        steps: &mut Vec<PathStep>,
        seen: &mut Vec<EntityId>,
        out: &mut Vec<KnowledgePath>,
    ) {
        if steps.len() == max_hops {
            return;
        }
        for t in triplets {
            for (o, from, to) in [
                (Orientation::Forward, t.head, t.tail),
                (Orientation::Reverse, t.tail, t.head),
            ] {
                if from != at || seen.contains(&to) {
                    continue;
                }
                steps.push(PathStep::new(*t, o));
                seen.push(to);
                out.push(KnowledgePath::new(steps.clone()).unwrap());
                go(triplets, to, max_hops, steps, seen, out);
                steps.pop();
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(
        triplets,
        start,
        max_hops,
        &mut Vec::new(),
        &mut vec![start],
        &mut out,
    );
    out
}

/// Every token sequence the trie should accept: 1..=max_paths distinct
/// simple paths, each starting at a mention or (unless strict) at an entity
/// of an earlier path, linearized and closed with `[EOR]`.
pub fn oracle_language<T: Tokenizer + ?Sized>(
    lin: &Linearizer<'_, T>,
    triplets: &[Triplet],
    mentions: &[EntityId],
    cfg: TrieConfig,
) -> BTreeSet<Vec<TokenId>> {
    fn go<T: Tokenizer + ?Sized>(
        lin: &Linearizer<'_, T>,
        triplets: &[Triplet],
        cfg: TrieConfig,
        emitted: &mut Vec<KnowledgePath>,
        starts: &BTreeSet<EntityId>,
        out: &mut BTreeSet<Vec<TokenId>>,
    ) {
        for &s in starts {
            for p in simple_paths(triplets, s, cfg.max_hops) {
                if emitted.contains(&p) {
                    continue;
                }
                let mut next_starts = starts.clone();
                if !cfg.strict_mentions {
                    next_starts.extend(p.entities());
                }
                emitted.push(p);
                let mut seq = lin.linearize_subgraph(emitted).unwrap().ids().to_vec();
                seq.push(lin.specials().eor());
                out.insert(seq);
                if emitted.len() < cfg.max_paths {
                    go(lin, triplets, cfg, emitted, &next_starts, out);
                }
                emitted.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    let starts: BTreeSet<EntityId> = mentions.iter().copied().collect();
    go(lin, triplets, cfg, &mut Vec::new(), &starts, &mut out);
    out
}

/// Every complete sequence reachable by walking the trie's allowed tokens.
/// Panics if a non-finished cursor has no allowed token.
pub fn trie_language(trie: &ConstraintTrie<'_>, cap: usize) -> BTreeSet<Vec<TokenId>> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<TrieCursor> = vec![trie.cursor()];
    while let Some(cur) = stack.pop() {
        if cur.is_finished() {
            out.insert(cur.tokens().to_vec());
            assert!(out.len() <= cap, "trie language exceeds {cap} sequences");
            continue;
        }
        let allowed = trie.allowed_tokens(&cur);
        assert!(!allowed.is_empty(), "dead end after {:?}", cur.tokens());
        for a in allowed {
            stack.push(trie.advanced(&cur, a.id).unwrap());
        }
    }
    out
}

// ---------------------------------------------------------------- validity

/// Checks that `tokens` (without `[EOR]`) parse into distinct simple paths of
/// the candidate subgraph that respect the hop, path and start limits.
pub fn check_retrieval<T: Tokenizer + ?Sized>(
    lin: &Linearizer<'_, T>,
    sub: &CandidateSubgraph<'_>,
    cfg: TrieConfig,
    tokens: &[TokenId],
) -> Result<Vec<KnowledgePath>, String> {
    let paths = lin.delinearize(tokens).map_err(|e| e.to_string())?;
    if paths.is_empty() || paths.len() > cfg.max_paths {
        return Err(format!("{} paths", paths.len()));
    }
    let mut starts: BTreeSet<EntityId> = sub.mentions().iter().copied().collect();
    for (i, p) in paths.iter().enumerate() {
        if p.len() > cfg.max_hops {
            return Err(format!("path {i} has {} hops", p.len()));
        }
        if let Some(t) = p.triplets().iter().find(|t| !sub.contains(t)) {
            return Err(format!(
                "path {i} uses {t:?} outside the candidate subgraph"
            ));
        }
        let ents = p.entities();
        let distinct: BTreeSet<_> = ents.iter().collect();
        if distinct.len() != ents.len() {
            return Err(format!("path {i} revisits an entity"));
        }
        if !starts.contains(&p.start()) {
            return Err(format!("path {i} starts outside the start set"));
        }
        if paths[..i].contains(p) {
            return Err(format!("path {i} repeats an earlier path"));
        }
        if !cfg.strict_mentions {
            starts.extend(ents);
        }
    }
    Ok(paths)
}

// ---------------------------------------------------------------- reference beam

fn lse(xs: &[f64]) -> f64 {
    let m = xs
        .iter()
        .fold(f64::NEG_INFINITY, |m, &x| if x > m { x } else { m });
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone)]
struct RefHyp {
    cursor: TrieCursor,
    score: f64,
}

fn ref_order(a: &RefHyp, b: &RefHyp) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap()
        .then_with(|| a.cursor.tokens().cmp(b.cursor.tokens()))
}

/// Pure-scorer constrained beam search written against the public trie
/// API only: per-path segments, scorer log-probabilities renormalized over
/// the allowed tokens, single allowed tokens taken for free.
pub fn reference_decode<Sc: NextTokenScorer<f64> + ?Sized>(
    scorer: &Sc,
    trie: &ConstraintTrie<'_>,
    beam: usize,
    dialog: &[TokenId],
) -> (Vec<(KnowledgePath, f64)>, Vec<TokenId>) {
    let eor = trie.specials().eor();
    let mut committed = trie.cursor();
    let mut paths = Vec::new();
    loop {
        let mut alive = vec![RefHyp {
            cursor: committed.clone(),
            score: 0.0,
        }];
        let mut done: Vec<RefHyp> = Vec::new();
        while !alive.is_empty() {
            let mut next = Vec::new();
            for h in &alive {
                let allowed = trie.allowed_tokens(&h.cursor);
                let choices: Vec<(TokenId, f64)> = if allowed.len() == 1 {
                    vec![(allowed[0].id, 0.0)]
                } else {
                    let mut ctx = dialog.to_vec();
                    ctx.extend_from_slice(h.cursor.tokens());
                    let full = scorer.log_probs(&ctx).unwrap();
                    let kept: Vec<(TokenId, f64)> = allowed
                        .iter()
                        .map(|a| (a.id, full[a.id as usize]))
                        .filter(|&(_, l)| l > f64::NEG_INFINITY)
                        .collect();
                    let z = lse(&kept.iter().map(|&(_, l)| l).collect::<Vec<_>>());
                    kept.into_iter().map(|(t, l)| (t, l - z)).collect()
                };
                for (t, s) in choices {
                    next.push(RefHyp {
                        cursor: trie.advanced(&h.cursor, t).unwrap(),
                        score: h.score + s,
                    });
                }
            }
            let (fin, open): (Vec<_>, Vec<_>) = next
                .into_iter()
                .partition(|h| h.cursor.path_complete() || h.cursor.is_finished());
            done.extend(fin);
            done.sort_by(ref_order);
            done.truncate(beam);
            alive = open;
            alive.sort_by(ref_order);
            alive.truncate(beam);
            if let (Some(f), Some(a)) = (done.first(), alive.first()) {
                if f.score >= a.score {
                    break;
                }
            }
        }
        let Some(best) = done.into_iter().next() else {
            break;
        };
        if best.cursor.is_finished() {
            break;
        }
        paths.push((
            best.cursor.completed_paths().last().unwrap().clone(),
            best.score,
        ));
        committed = best.cursor;
        let allowed = trie.allowed_tokens(&committed);
        if allowed.len() == 1 && allowed[0].id == eor {
            break;
        }
    }
    (paths, committed.tokens().to_vec())
}

// ---------------------------------------------------------------- planted corpus

/// A synthetic graph with dialogs whose gold paths start at a mentioned entity.
pub struct PlantedCorpus {
    pub tsv: String,
    pub dialogs: String,
    pub count: usize,
}

/// Random simple walk of 1..=max_hops hops from `start` over the whole graph.
pub fn random_walk(
    rng: &mut ChaCha8Rng,
    g: &KnowledgeGraph,
    start: EntityId,
    max_hops: usize,
) -> Option<Vec<Triplet>> {
    let hops = rng.random_range(1..=max_hops);
    let mut at = start;
    let mut seen = vec![start];
    let mut out = Vec::new();
    for _ in 0..hops {
        let options: Vec<Triplet> = g
            .triplets()
            .iter()
            .copied()
            .filter(|t| {
                (t.head == at && !seen.contains(&t.tail))
                    || (t.tail == at && !seen.contains(&t.head))
            })
            .collect();
        if options.is_empty() {
            break;
        }
        let t = options[rng.random_range(0..options.len())];
        at = if t.head == at { t.tail } else { t.head };
        seen.push(at);
        out.push(t);
    }
    (!out.is_empty()).then_some(out)
}

pub fn planted_corpus(seed: u64, dialogs: usize) -> PlantedCorpus {
    let mut r = rng(seed);
    let shape = GraphShape {
        entities: 60,
        relations: 6,
        triplets: 150,
        self_loops: false,
    };
    let g = random_graph(&mut r, shape);
    let mut tsv = String::new();
    for t in g.triplets() {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}",
            g.entity_name(t.head),
            g.relation_name(t.relation),
            g.entity_name(t.tail)
        );
    }
    let names = |t: &Triplet| {
        [
            g.entity_name(t.head).to_string(),
            g.relation_name(t.relation).to_string(),
            g.entity_name(t.tail).to_string(),
        ]
    };
    let mut out = String::new();
    let mut made = 0;
    while made < dialogs {
        let m = EntityId(r.random_range(0..shape.entities) as u32);
        let Some(first) = random_walk(&mut r, &g, m, 2) else {
            continue;
        };
        let mut gold = vec![first.iter().map(names).collect::<Vec<_>>()];
        if r.random_bool(0.5) {
            if let Some(second) = random_walk(&mut r, &g, m, 2) {
                let second: Vec<_> = second.iter().map(names).collect();
                if second != gold[0] {
                    gold.push(second);
                }
            }
        }
        let rec = serde_json::json!({
            "id": format!("d{made}"),
            "turns": ["hi there", format!("what do you know about {} ?", entity_name(m.0 as usize))],
            "gold": gold,
        });
        let _ = writeln!(out, "{rec}");
        made += 1;
    }
    PlantedCorpus {
        tsv,
        dialogs: out,
        count: dialogs,
    }
}

pub fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, content).unwrap();
    p
}
