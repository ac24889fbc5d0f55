//! Prefix automaton over every valid linearization of a candidate subgraph.
//!
//! The trie is session-independent: a node encodes the partial path written
//! so far (entities, hops, and the token position inside the current entity
//! or relation name). Children are materialized on first visit. Everything
//! that depends on the decode session (which entities may start a path,
//! which paths were already emitted) lives in [`TrieCursor`] and is applied
//! as a viability filter: a token is allowed only if at least one accepted
//! completion remains below it, so a cursor never reaches a dead end.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::graph::{CandidateSubgraph, EntityId, Orientation, RelationId, Triplet};
use crate::linearize::{KnowledgePath, MarkerFamily, PathStep, SpecialKind, SpecialTokens};
use crate::tokenizer::{TokenId, Tokenizer};

pub const DEFAULT_MAX_HOPS: usize = 2;
pub const DEFAULT_MAX_PATHS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("no retrievable knowledge: no mentioned entity has an incident triplet")]
    NoRetrievableKnowledge,
    #[error("{what} {name:?} tokenizes to an empty, unknown or duplicate token sequence")]
    AmbiguousTokens { what: &'static str, name: String },
    #[error("token {token} is not allowed at position {position}")]
    Violation { token: TokenId, position: usize },
    #[error("invalid trie configuration: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrieConfig {
    /// Maximum hops per path.
    pub max_hops: usize,
    /// Maximum number of paths per retrieval.
    pub max_paths: usize,
    /// Only mentioned entities may start a path. Otherwise entities of
    /// already retrieved paths may start later paths as well.
    pub strict_mentions: bool,
}

impl Default for TrieConfig {
    fn default() -> Self {
        Self {
            max_hops: DEFAULT_MAX_HOPS,
            max_paths: DEFAULT_MAX_PATHS,
            strict_mentions: false,
        }
    }
}

type NodeId = u32;
const ROOT: NodeId = 0;

#[derive(Debug, Default)]
struct Prefix {
    steps: Vec<PathStep>,
    /// Visited entities, first entity first; empty only at the root.
    entities: Vec<EntityId>,
}

impl Prefix {
    fn extended(&self, step: Option<PathStep>, entity: EntityId) -> Prefix {
        let mut steps = self.steps.clone();
        steps.extend(step);
        let mut entities = self.entities.clone();
        entities.push(entity);
        Prefix { steps, entities }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    from: EntityId,
    relation: RelationId,
    orientation: Orientation,
}

impl Pending {
    fn step(&self, to: EntityId) -> PathStep {
        let t = match self.orientation {
            Orientation::Forward => Triplet::new(self.from, self.relation, to),
            Orientation::Reverse => Triplet::new(to, self.relation, self.from),
        };
        PathStep::new(t, self.orientation)
    }
}

fn family_of(o: Orientation) -> MarkerFamily {
    match o {
        Orientation::Forward => MarkerFamily::Int,
        Orientation::Reverse => MarkerFamily::Rev,
    }
}

#[derive(Debug)]
enum State {
    /// Inside (or before) an entity name; `candidates` share the first
    /// `consumed` tokens.
    Entity {
        prefix: Arc<Prefix>,
        pending: Option<Pending>,
        candidates: Arc<[EntityId]>,
        consumed: usize,
    },
    /// Inside a run of marker slots, `slot < m` tokens written.
    Marker {
        prefix: Arc<Prefix>,
        from: EntityId,
        orientation: Orientation,
        position: u8,
        slot: u8,
        relation: Option<RelationId>,
    },
    Relation {
        prefix: Arc<Prefix>,
        from: EntityId,
        orientation: Orientation,
        candidates: Arc<[RelationId]>,
        consumed: usize,
    },
    /// `[Tail]` written; the path is complete.
    Tail { path: KnowledgePath },
}

#[derive(Debug)]
struct Node {
    state: State,
    children: Option<Arc<[(TokenId, NodeId)]>>,
}

/// A token the cursor may emit next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllowedToken {
    pub id: TokenId,
    /// Set when the token starts an entity name: the entities it may begin.
    pub entity_start: Option<Vec<EntityId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    InPath(NodeId),
    AfterTail,
    Finished,
}

/// Session-private decoding position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrieCursor {
    position: Position,
    tokens: Vec<TokenId>,
    emitted: Vec<KnowledgePath>,
    starts: BTreeSet<EntityId>,
}

impl TrieCursor {
    /// Every token emitted so far, including auto-emitted `[Head]`s.
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn completed_paths(&self) -> &[KnowledgePath] {
        &self.emitted
    }

    /// True right after a `[Tail]`.
    pub fn path_complete(&self) -> bool {
        self.position == Position::AfterTail
    }

    /// True after end-of-retrieval.
    pub fn is_finished(&self) -> bool {
        self.position == Position::Finished
    }

    /// Entities allowed to start the next path.
    pub fn start_entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.starts.iter().copied()
    }
}

/// Lazily expanded prefix tree for one candidate subgraph.
pub struct ConstraintTrie<'g> {
    sub: CandidateSubgraph<'g>,
    specials: SpecialTokens,
    cfg: TrieConfig,
    entity_tokens: HashMap<EntityId, Vec<TokenId>>,
    relation_tokens: HashMap<RelationId, Vec<TokenId>>,
    /// `(entity, orientation)` → relation → reachable entities, sorted.
    hops: HashMap<(EntityId, Orientation), BTreeMap<RelationId, Vec<EntityId>>>,
    nodes: RwLock<Vec<Node>>,
}

impl<'g> ConstraintTrie<'g> {
    pub fn build<T: Tokenizer + ?Sized>(
        sub: CandidateSubgraph<'g>,
        tok: &T,
        specials: SpecialTokens,
        cfg: TrieConfig,
    ) -> Result<Self, ConstraintError> {
        if cfg.max_hops == 0 {
            return Err(ConstraintError::BadConfig("max_hops must be at least 1"));
        }
        if cfg.max_paths == 0 {
            return Err(ConstraintError::BadConfig("max_paths must be at least 1"));
        }
        let graph = sub.graph();
        let unk = tok.unk_id();
        let mut hops: HashMap<(EntityId, Orientation), BTreeMap<RelationId, Vec<EntityId>>> =
            HashMap::new();
        for t in sub.triplets() {
            hops.entry((t.head, Orientation::Forward))
                .or_default()
                .entry(t.relation)
                .or_default()
                .push(t.tail);
            hops.entry((t.tail, Orientation::Reverse))
                .or_default()
                .entry(t.relation)
                .or_default()
                .push(t.head);
        }
        for by_rel in hops.values_mut() {
            for targets in by_rel.values_mut() {
                targets.sort_unstable();
            }
        }

        let mut entity_tokens = HashMap::new();
        let mut seen: HashMap<Vec<TokenId>, EntityId> = HashMap::new();
        for &e in sub.entities() {
            let ids = tok.encode(graph.entity_name(e));
            if ids.is_empty()
                || ids.iter().any(|&t| Some(t) == unk)
                || seen.insert(ids.clone(), e).is_some()
            {
                return Err(ConstraintError::AmbiguousTokens {
                    what: "entity",
                    name: graph.entity_name(e).to_string(),
                });
            }
            entity_tokens.insert(e, ids);
        }
        let mut relation_tokens = HashMap::new();
        let mut seen: HashMap<Vec<TokenId>, RelationId> = HashMap::new();
        let relations: BTreeSet<RelationId> = sub.triplets().iter().map(|t| t.relation).collect();
        for r in relations {
            let ids = tok.encode(graph.relation_name(r));
            if ids.is_empty()
                || ids.iter().any(|&t| Some(t) == unk)
                || seen.insert(ids.clone(), r).is_some()
            {
                return Err(ConstraintError::AmbiguousTokens {
                    what: "relation",
                    name: graph.relation_name(r).to_string(),
                });
            }
            relation_tokens.insert(r, ids);
        }

        let trie = Self {
            sub,
            specials,
            cfg,
            entity_tokens,
            relation_tokens,
            hops,
            nodes: RwLock::new(Vec::new()),
        };
        let roots: Vec<EntityId> = trie
            .sub
            .entities()
            .iter()
            .copied()
            .filter(|&e| trie.has_hop(&[e], e))
            .collect();
        let retrievable = trie
            .sub
            .mentions()
            .iter()
            .any(|m| roots.binary_search(m).is_ok());
        if !retrievable {
            return Err(ConstraintError::NoRetrievableKnowledge);
        }
        trie.nodes.write().unwrap().push(Node {
            state: State::Entity {
                prefix: Arc::new(Prefix::default()),
                pending: None,
                candidates: roots.into(),
                consumed: 0,
            },
            children: None,
        });
        Ok(trie)
    }

    pub fn subgraph(&self) -> &CandidateSubgraph<'g> {
        &self.sub
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn config(&self) -> &TrieConfig {
        &self.cfg
    }

    /// Number of materialized nodes.
    pub fn expanded_nodes(&self) -> usize {
        self.nodes.read().unwrap().len()
    }

    /// A fresh cursor with `[Head]` already emitted.
    pub fn cursor(&self) -> TrieCursor {
        TrieCursor {
            position: Position::InPath(ROOT),
            tokens: vec![self.specials.head()],
            emitted: Vec::new(),
            starts: self.sub.mentions().iter().copied().collect(),
        }
    }

    fn targets(&self, from: EntityId, o: Orientation, r: RelationId) -> &[EntityId] {
        self.hops
            .get(&(from, o))
            .and_then(|m| m.get(&r))
            .map_or(&[], Vec::as_slice)
    }

    fn relations(
        &self,
        from: EntityId,
        o: Orientation,
    ) -> impl Iterator<Item = (RelationId, &[EntityId])> {
        self.hops
            .get(&(from, o))
            .into_iter()
            .flat_map(|m| m.iter().map(|(&r, t)| (r, t.as_slice())))
    }

    /// Whether `at` has a hop to an entity outside `visited`.
    fn has_hop(&self, visited: &[EntityId], at: EntityId) -> bool {
        [Orientation::Forward, Orientation::Reverse]
            .into_iter()
            .any(|o| {
                self.relations(at, o)
                    .any(|(_, ts)| ts.iter().any(|t| !visited.contains(t)))
            })
    }

    fn open_relations(&self, prefix: &Prefix, from: EntityId, o: Orientation) -> Vec<RelationId> {
        self.relations(from, o)
            .filter(|(_, ts)| ts.iter().any(|t| !prefix.entities.contains(t)))
            .map(|(r, _)| r)
            .collect()
    }

    fn open_targets(&self, prefix: &Prefix, p: Pending) -> Vec<EntityId> {
        self.targets(p.from, p.orientation, p.relation)
            .iter()
            .copied()
            .filter(|t| !prefix.entities.contains(t))
            .collect()
    }

    /// State after the last slot of a marker run.
    fn after_marker(
        &self,
        prefix: &Arc<Prefix>,
        from: EntityId,
        orientation: Orientation,
        position: u8,
        relation: Option<RelationId>,
    ) -> State {
        if position == 1 {
            State::Relation {
                prefix: prefix.clone(),
                from,
                orientation,
                candidates: self.open_relations(prefix, from, orientation).into(),
                consumed: 0,
            }
        } else {
            let pending = Pending {
                from,
                relation: relation.expect("second marker follows a relation"),
                orientation,
            };
            State::Entity {
                prefix: prefix.clone(),
                pending: Some(pending),
                candidates: self.open_targets(prefix, pending).into(),
                consumed: 0,
            }
        }
    }

    fn marker_state(
        &self,
        prefix: &Arc<Prefix>,
        from: EntityId,
        orientation: Orientation,
        position: u8,
        slot: u8,
        relation: Option<RelationId>,
    ) -> State {
        if slot == self.specials.slots() {
            self.after_marker(prefix, from, orientation, position, relation)
        } else {
            State::Marker {
                prefix: prefix.clone(),
                from,
                orientation,
                position,
                slot,
                relation,
            }
        }
    }

    fn expand(&self, state: &State) -> Vec<(TokenId, State)> {
        let mut out = Vec::new();
        match state {
            State::Entity {
                prefix,
                pending,
                candidates,
                consumed,
            } => {
                let mut groups: BTreeMap<TokenId, Vec<EntityId>> = BTreeMap::new();
                let mut complete = None;
                for &c in candidates.iter() {
                    let toks = &self.entity_tokens[&c];
                    match toks.get(*consumed) {
                        Some(&t) => groups.entry(t).or_default().push(c),
                        None => complete = Some(c),
                    }
                }
                for (t, group) in groups {
                    out.push((
                        t,
                        State::Entity {
                            prefix: prefix.clone(),
                            pending: *pending,
                            candidates: group.into(),
                            consumed: consumed + 1,
                        },
                    ));
                }
                if let Some(c) = complete {
                    let next = Arc::new(prefix.extended(pending.map(|p| p.step(c)), c));
                    if !next.steps.is_empty() {
                        out.push((
                            self.specials.tail(),
                            State::Tail {
                                path: KnowledgePath::new(next.steps.clone())
                                    .expect("trie paths chain by construction"),
                            },
                        ));
                    }
                    if next.steps.len() < self.cfg.max_hops {
                        for o in [Orientation::Forward, Orientation::Reverse] {
                            if !self.open_relations(&next, c, o).is_empty() {
                                out.push((
                                    self.specials.marker(family_of(o), 1, 1),
                                    self.marker_state(&next, c, o, 1, 1, None),
                                ));
                            }
                        }
                    }
                }
            }
            State::Marker {
                prefix,
                from,
                orientation,
                position,
                slot,
                relation,
            } => {
                let next = slot + 1;
                out.push((
                    self.specials
                        .marker(family_of(*orientation), *position, next),
                    self.marker_state(prefix, *from, *orientation, *position, next, *relation),
                ));
            }
            State::Relation {
                prefix,
                from,
                orientation,
                candidates,
                consumed,
            } => {
                let mut groups: BTreeMap<TokenId, Vec<RelationId>> = BTreeMap::new();
                let mut complete = None;
                for &r in candidates.iter() {
                    match self.relation_tokens[&r].get(*consumed) {
                        Some(&t) => groups.entry(t).or_default().push(r),
                        None => complete = Some(r),
                    }
                }
                for (t, group) in groups {
                    out.push((
                        t,
                        State::Relation {
                            prefix: prefix.clone(),
                            from: *from,
                            orientation: *orientation,
                            candidates: group.into(),
                            consumed: consumed + 1,
                        },
                    ));
                }
                if let Some(r) = complete {
                    out.push((
                        self.specials.marker(family_of(*orientation), 2, 1),
                        self.marker_state(prefix, *from, *orientation, 2, 1, Some(r)),
                    ));
                }
            }
            State::Tail { .. } => {}
        }
        out.sort_by_key(|&(t, _)| t);
        out
    }

    fn children(&self, node: NodeId) -> Arc<[(TokenId, NodeId)]> {
        if let Some(c) = &self.nodes.read().unwrap()[node as usize].children {
            return c.clone();
        }
        let mut nodes = self.nodes.write().unwrap();
        if let Some(c) = &nodes[node as usize].children {
            return c.clone();
        }
        let expanded = self.expand(&nodes[node as usize].state);
        let mut kids = Vec::with_capacity(expanded.len());
        for (tok, state) in expanded {
            let id = nodes.len() as NodeId;
            nodes.push(Node {
                state,
                children: None,
            });
            kids.push((tok, id));
        }
        let kids: Arc<[(TokenId, NodeId)]> = kids.into();
        nodes[node as usize].children = Some(kids.clone());
        kids
    }

    // Viability: does any accepted, not yet emitted path lie below a state?

    fn start_ok(&self, prefix: &Prefix, cur: &TrieCursor) -> bool {
        prefix
            .entities
            .first()
            .is_none_or(|e| cur.starts.contains(e))
    }

    fn completes(
        &self,
        steps: &mut Vec<PathStep>,
        visited: &mut Vec<EntityId>,
        at: EntityId,
        cur: &TrieCursor,
    ) -> bool {
        if !steps.is_empty() && !cur.emitted.iter().any(|p| p.steps() == steps.as_slice()) {
            return true;
        }
        if steps.len() >= self.cfg.max_hops {
            return false;
        }
        for o in [Orientation::Forward, Orientation::Reverse] {
            let Some(by_rel) = self.hops.get(&(at, o)) else {
                continue;
            };
            for (&r, targets) in by_rel {
                for &t in targets {
                    if visited.contains(&t) {
                        continue;
                    }
                    let step = Pending {
                        from: at,
                        relation: r,
                        orientation: o,
                    }
                    .step(t);
                    steps.push(step);
                    visited.push(t);
                    let ok = self.completes(steps, visited, t, cur);
                    steps.pop();
                    visited.pop();
                    if ok {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn entity_viable(
        &self,
        prefix: &Prefix,
        pending: Option<Pending>,
        c: EntityId,
        cur: &TrieCursor,
    ) -> bool {
        if prefix.entities.is_empty() && !cur.starts.contains(&c) {
            return false;
        }
        if !self.start_ok(prefix, cur) {
            return false;
        }
        let mut steps = prefix.steps.clone();
        steps.extend(pending.map(|p| p.step(c)));
        let mut visited = prefix.entities.clone();
        visited.push(c);
        self.completes(&mut steps, &mut visited, c, cur)
    }

    fn relation_viable(
        &self,
        prefix: &Prefix,
        from: EntityId,
        o: Orientation,
        r: RelationId,
        cur: &TrieCursor,
    ) -> bool {
        let pending = Pending {
            from,
            relation: r,
            orientation: o,
        };
        self.targets(from, o, r)
            .iter()
            .filter(|t| !prefix.entities.contains(t))
            .any(|&t| self.entity_viable(prefix, Some(pending), t, cur))
    }

    fn viable(&self, state: &State, cur: &TrieCursor) -> bool {
        match state {
            State::Tail { path } => !cur.emitted.contains(path),
            State::Entity {
                prefix,
                pending,
                candidates,
                ..
            } => candidates
                .iter()
                .any(|&c| self.entity_viable(prefix, *pending, c, cur)),
            State::Marker {
                prefix,
                from,
                orientation,
                relation,
                ..
            } => {
                self.start_ok(prefix, cur)
                    && match relation {
                        Some(r) => self.relation_viable(prefix, *from, *orientation, *r, cur),
                        None => self
                            .open_relations(prefix, *from, *orientation)
                            .into_iter()
                            .any(|r| self.relation_viable(prefix, *from, *orientation, r, cur)),
                    }
            }
            State::Relation {
                prefix,
                from,
                orientation,
                candidates,
                ..
            } => {
                self.start_ok(prefix, cur)
                    && candidates
                        .iter()
                        .any(|&r| self.relation_viable(prefix, *from, *orientation, r, cur))
            }
        }
    }

    /// Whether a new path can still be started from the cursor's start set.
    fn new_path_possible(&self, cur: &TrieCursor) -> bool {
        let nodes = self.nodes.read().unwrap();
        self.viable(&nodes[ROOT as usize].state, cur)
    }

    /// Exact set of tokens the cursor may emit next, sorted by id.
    pub fn allowed_tokens(&self, cur: &TrieCursor) -> Vec<AllowedToken> {
        match cur.position {
            Position::Finished => Vec::new(),
            Position::AfterTail => {
                let mut out = Vec::with_capacity(2);
                if cur.emitted.len() < self.cfg.max_paths && self.new_path_possible(cur) {
                    out.push(AllowedToken {
                        id: self.specials.sep(),
                        entity_start: None,
                    });
                }
                out.push(AllowedToken {
                    id: self.specials.eor(),
                    entity_start: None,
                });
                out
            }
            Position::InPath(node) => {
                let kids = self.children(node);
                let nodes = self.nodes.read().unwrap();
                let entity_start = matches!(
                    nodes[node as usize].state,
                    State::Entity { consumed: 0, .. }
                );
                let mut out = Vec::with_capacity(kids.len());
                for &(tok, child) in kids.iter() {
                    let state = &nodes[child as usize].state;
                    if entity_start {
                        let State::Entity {
                            prefix,
                            pending,
                            candidates,
                            ..
                        } = state
                        else {
                            unreachable!("entity-start children are entity states");
                        };
                        let ents: Vec<EntityId> = candidates
                            .iter()
                            .copied()
                            .filter(|&c| self.entity_viable(prefix, *pending, c, cur))
                            .collect();
                        if !ents.is_empty() {
                            out.push(AllowedToken {
                                id: tok,
                                entity_start: Some(ents),
                            });
                        }
                    } else if self.viable(state, cur) {
                        out.push(AllowedToken {
                            id: tok,
                            entity_start: None,
                        });
                    }
                }
                out
            }
        }
    }

    /// Moves the cursor by one token. `[SEP]` also emits the next `[Head]`.
    pub fn advance(&self, cur: &mut TrieCursor, token: TokenId) -> Result<(), ConstraintError> {
        let violation = ConstraintError::Violation {
            token,
            position: cur.tokens.len(),
        };
        if !self.allowed_tokens(cur).iter().any(|a| a.id == token) {
            return Err(violation);
        }
        self.step(cur, token)
    }

    /// Transition without the viability check; `token` must come from
    /// [`allowed_tokens`](Self::allowed_tokens) for the same cursor.
    pub(crate) fn step(&self, cur: &mut TrieCursor, token: TokenId) -> Result<(), ConstraintError> {
        let violation = ConstraintError::Violation {
            token,
            position: cur.tokens.len(),
        };
        match cur.position {
            Position::Finished => return Err(violation),
            Position::AfterTail => {
                cur.tokens.push(token);
                if token == self.specials.sep() {
                    cur.tokens.push(self.specials.head());
                    cur.position = Position::InPath(ROOT);
                } else {
                    cur.position = Position::Finished;
                }
            }
            Position::InPath(node) => {
                let kids = self.children(node);
                let Some(child) = kids.iter().find(|&&(t, _)| t == token).map(|&(_, c)| c) else {
                    return Err(violation);
                };
                cur.tokens.push(token);
                let nodes = self.nodes.read().unwrap();
                if let State::Tail { path } = &nodes[child as usize].state {
                    if !self.cfg.strict_mentions {
                        cur.starts.extend(path.entities());
                    }
                    cur.emitted.push(path.clone());
                    cur.position = Position::AfterTail;
                } else {
                    cur.position = Position::InPath(child);
                }
            }
        }
        Ok(())
    }

    /// Hops still available to the path being written.
    pub fn remaining_hops(&self, cur: &TrieCursor) -> usize {
        let used = match cur.position {
            Position::InPath(node) => match &self.nodes.read().unwrap()[node as usize].state {
                State::Entity {
                    prefix, pending, ..
                } => prefix.steps.len() + usize::from(pending.is_some()),
                State::Marker { prefix, .. } | State::Relation { prefix, .. } => {
                    prefix.steps.len() + 1
                }
                State::Tail { path } => path.len(),
            },
            _ => 0,
        };
        self.cfg.max_hops.saturating_sub(used)
    }

    /// Non-mutating form of [`advance`](Self::advance).
    pub fn advanced(
        &self,
        cur: &TrieCursor,
        token: TokenId,
    ) -> Result<TrieCursor, ConstraintError> {
        let mut next = cur.clone();
        self.advance(&mut next, token)?;
        Ok(next)
    }

    /// Materializes nodes depth-first until `limit` nodes exist.
    pub fn expand_all(&self, limit: usize) {
        let mut frontier = vec![ROOT];
        while let Some(n) = frontier.pop() {
            if self.expanded_nodes() >= limit {
                break;
            }
            frontier.extend(self.children(n).iter().map(|&(_, c)| c));
        }
    }

    /// Graphviz rendering of the materialized part of the trie.
    pub fn to_dot(&self) -> String {
        let graph = self.sub.graph();
        let nodes = self.nodes.read().unwrap();
        let mut s =
            String::from("digraph trie {\n  rankdir=LR;\n  node [shape=circle, label=\"\"];\n");
        for (i, n) in nodes.iter().enumerate() {
            let label = match &n.state {
                State::Tail { .. } => "accept".to_string(),
                State::Entity {
                    candidates,
                    consumed,
                    ..
                } if candidates.len() == 1 && *consumed > 0 => {
                    graph.entity_name(candidates[0]).replace('"', "\\\"")
                }
                State::Relation {
                    candidates,
                    consumed,
                    ..
                } if candidates.len() == 1 && *consumed > 0 => {
                    graph.relation_name(candidates[0]).replace('"', "\\\"")
                }
                _ => String::new(),
            };
            let shape = if matches!(n.state, State::Tail { .. }) {
                "doublecircle"
            } else {
                "circle"
            };
            let _ = writeln!(s, "  n{i} [shape={shape}, label=\"{label}\"];");
        }
        for (i, n) in nodes.iter().enumerate() {
            for &(tok, child) in n.children.iter().flat_map(|c| c.iter()) {
                let label = match self.specials.kind(tok) {
                    Some(k) => k.to_string(),
                    None => format!("#{tok}"),
                };
                let _ = writeln!(s, "  n{i} -> n{child} [label=\"{label}\"];");
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Marker kind helper for callers inspecting allowed tokens.
pub fn is_marker(specials: &SpecialTokens, id: TokenId) -> bool {
    matches!(specials.kind(id), Some(SpecialKind::Marker { .. }))
}
