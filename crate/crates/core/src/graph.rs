//! Knowledge graph store: vocabularies, triplets, forward/reverse adjacency,
//! and k-hop candidate subgraph extraction around mentioned entities.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: empty {field} field")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: {source}")]
    Read {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("no mentioned entities")]
    NoMentions,
    #[error("hop count must be at least 1")]
    ZeroHops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triplet {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }

    /// The endpoint opposite to `e`, if `e` is an endpoint.
    pub fn other(&self, e: EntityId) -> Option<EntityId> {
        if self.head == e {
            Some(self.tail)
        } else if self.tail == e {
            Some(self.head)
        } else {
            None
        }
    }
}

/// Direction in which a triplet is traversed. `Reverse` walks from the
/// tail to the head without changing the relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    Forward,
    Reverse,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Forward => "fwd",
            Orientation::Reverse => "rev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
    Both,
}

/// One adjacency entry as seen from a queried entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Neighbor {
    pub relation: RelationId,
    pub entity: EntityId,
    /// `Reverse` when the queried entity is the tail of the triplet.
    pub orientation: Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub triplets: usize,
}

/// Trims and collapses internal whitespace. Case is preserved.
pub fn canonical_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lookup key: canonical form, lowercased character by character.
pub fn name_key(s: &str) -> String {
    canonical_name(s)
        .chars()
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Default, Clone)]
struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn intern(&mut self, raw: &str) -> u32 {
        let key = name_key(raw);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(canonical_name(raw));
        self.index.insert(key, id);
        id
    }

    fn lookup(&self, raw: &str) -> Option<u32> {
        self.index.get(&name_key(raw)).copied()
    }
}

/// Immutable knowledge graph. Entity and relation ids are dense and
/// assigned in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    triplets: Vec<Triplet>,
    triplet_index: HashMap<Triplet, usize>,
    forward: Vec<Vec<(RelationId, EntityId)>>,
    reverse: Vec<Vec<(RelationId, EntityId)>>,
}

/// Incremental constructor; `build` sorts adjacency lists.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: KnowledgeGraph,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        let id = EntityId(self.graph.entities.intern(name));
        while self.graph.forward.len() <= id.index() {
            self.graph.forward.push(Vec::new());
            self.graph.reverse.push(Vec::new());
        }
        id
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        RelationId(self.graph.relations.intern(name))
    }

    /// Adds a triplet; duplicates are ignored. Returns true if it was new.
    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.entity(head);
        let r = self.relation(relation);
        let t = self.entity(tail);
        self.add_ids(Triplet::new(h, r, t))
    }

    fn add_ids(&mut self, t: Triplet) -> bool {
        let g = &mut self.graph;
        if g.triplet_index.contains_key(&t) {
            return false;
        }
        g.triplet_index.insert(t, g.triplets.len());
        g.triplets.push(t);
        g.forward[t.head.index()].push((t.relation, t.tail));
        g.reverse[t.tail.index()].push((t.relation, t.head));
        true
    }

    pub fn build(mut self) -> KnowledgeGraph {
        for list in self
            .graph
            .forward
            .iter_mut()
            .chain(self.graph.reverse.iter_mut())
        {
            list.sort_unstable();
        }
        self.graph
    }
}

impl KnowledgeGraph {
    /// Parses `head<TAB>relation<TAB>tail` rows. Blank lines are skipped.
    pub fn load_tsv<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut builder = GraphBuilder::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| GraphError::Read {
                line: line_no,
                source,
            })?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(GraphError::ColumnCount {
                    line: line_no,
                    found: fields.len(),
                });
            }
            for (field, name) in fields.iter().zip(["head", "relation", "tail"]) {
                if field.trim().is_empty() {
                    return Err(GraphError::EmptyField {
                        line: line_no,
                        field: name,
                    });
                }
            }
            builder.add(fields[0], fields[1], fields[2]);
        }
        Ok(builder.build())
    }

    pub fn from_triples<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        let mut builder = GraphBuilder::new();
        for (h, r, t) in rows {
            builder.add(h, r, t);
        }
        builder.build()
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            entities: self.num_entities(),
            relations: self.num_relations(),
            triplets: self.triplets.len(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.names.len()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.num_entities() as u32).map(EntityId)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entities.names[e.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relations.names[r.index()]
    }

    /// Case- and whitespace-insensitive lookup.
    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.lookup(name).map(EntityId)
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relations.lookup(name).map(RelationId)
    }

    pub fn require_entity(&self, name: &str) -> Result<EntityId, GraphError> {
        self.entity(name)
            .ok_or_else(|| GraphError::UnknownEntity(name.to_string()))
    }

    pub fn require_relation(&self, name: &str) -> Result<RelationId, GraphError> {
        self.relation(name)
            .ok_or_else(|| GraphError::UnknownRelation(name.to_string()))
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        e.index() < self.num_entities()
    }

    pub fn has_relation(&self, r: RelationId) -> bool {
        r.index() < self.num_relations()
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.triplet_index.contains_key(t)
    }

    /// Position of the triplet in load order.
    pub fn triplet_position(&self, t: &Triplet) -> Option<usize> {
        self.triplet_index.get(t).copied()
    }

    /// Outgoing `(relation, tail)` pairs, sorted.
    pub fn outgoing(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.forward[e.index()]
    }

    /// Incoming `(relation, head)` pairs, sorted.
    pub fn incoming(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.reverse[e.index()]
    }

    pub fn neighbors(
        &self,
        e: EntityId,
        direction: Direction,
    ) -> Result<Vec<Neighbor>, GraphError> {
        if !self.has_entity(e) {
            return Err(GraphError::UnknownEntity(e.to_string()));
        }
        let out = self.outgoing(e).iter().map(|&(relation, entity)| Neighbor {
            relation,
            entity,
            orientation: Orientation::Forward,
        });
        let inc = self.incoming(e).iter().map(|&(relation, entity)| Neighbor {
            relation,
            entity,
            orientation: Orientation::Reverse,
        });
        let mut list: Vec<Neighbor> = match direction {
            Direction::Outgoing => out.collect(),
            Direction::Incoming => inc.collect(),
            Direction::Both => out.chain(inc).collect(),
        };
        list.sort_unstable();
        Ok(list)
    }

    /// Number of entities adjacent in the undirected view, counting multi-edges.
    pub fn degree(&self, e: EntityId) -> usize {
        self.forward[e.index()].len() + self.reverse[e.index()].len()
    }

    /// Extracts the candidate subgraph: every entity within `k` undirected
    /// hops of some mention, and every triplet with both endpoints in that
    /// ball and at least one endpoint within `k - 1` hops.
    pub fn k_hop_subgraph(
        &self,
        mentions: &[EntityId],
        k: usize,
    ) -> Result<CandidateSubgraph<'_>, GraphError> {
        if mentions.is_empty() {
            return Err(GraphError::NoMentions);
        }
        if k == 0 {
            return Err(GraphError::ZeroHops);
        }
        for &m in mentions {
            if !self.has_entity(m) {
                return Err(GraphError::UnknownEntity(m.to_string()));
            }
        }
        let hops = self.bfs(mentions, k);
        let mut picked: HashSet<usize> = HashSet::new();
        for (&e, &d) in &hops {
            if d + 1 > k {
                continue;
            }
            for &(r, t) in self.outgoing(e) {
                picked.insert(self.triplet_index[&Triplet::new(e, r, t)]);
            }
            for &(r, h) in self.incoming(e) {
                picked.insert(self.triplet_index[&Triplet::new(h, r, e)]);
            }
        }
        let mut positions: Vec<usize> = picked.into_iter().collect();
        positions.sort_unstable();
        let triplets = positions.into_iter().map(|i| self.triplets[i]).collect();
        let mut entities: Vec<EntityId> = hops.keys().copied().collect();
        entities.sort_unstable();
        Ok(CandidateSubgraph::new(
            self, mentions, entities, hops, triplets,
        ))
    }

    /// The whole graph as a candidate; hop distances are recorded for
    /// entities reachable from the mentions.
    pub fn as_candidate(&self, mentions: &[EntityId]) -> Result<CandidateSubgraph<'_>, GraphError> {
        if mentions.is_empty() {
            return Err(GraphError::NoMentions);
        }
        let hops = self.bfs(mentions, usize::MAX);
        Ok(CandidateSubgraph::new(
            self,
            mentions,
            self.entity_ids().collect(),
            hops,
            self.triplets.clone(),
        ))
    }

    fn bfs(&self, sources: &[EntityId], k: usize) -> HashMap<EntityId, usize> {
        let mut dist = HashMap::new();
        let mut queue = VecDeque::new();
        for &m in sources {
            if dist.insert(m, 0).is_none() {
                queue.push_back(m);
            }
        }
        while let Some(e) = queue.pop_front() {
            let d = dist[&e];
            if d >= k {
                continue;
            }
            let next = self
                .outgoing(e)
                .iter()
                .chain(self.incoming(e))
                .map(|&(_, n)| n);
            for n in next {
                if let std::collections::hash_map::Entry::Vacant(v) = dist.entry(n) {
                    v.insert(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}

/// Oriented incident edges of one entity inside a candidate subgraph.
#[derive(Debug, Clone, Default)]
pub struct LocalEdges {
    pub forward: Vec<(RelationId, EntityId)>,
    pub reverse: Vec<(RelationId, EntityId)>,
}

impl LocalEdges {
    pub fn by_orientation(&self, o: Orientation) -> &[(RelationId, EntityId)] {
        match o {
            Orientation::Forward => &self.forward,
            Orientation::Reverse => &self.reverse,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty() && self.reverse.is_empty()
    }
}

/// Retrieval candidates around a mention set.
#[derive(Debug, Clone)]
pub struct CandidateSubgraph<'g> {
    graph: &'g KnowledgeGraph,
    mentions: Vec<EntityId>,
    entities: Vec<EntityId>,
    hops: HashMap<EntityId, usize>,
    triplets: Vec<Triplet>,
    triplet_set: HashSet<Triplet>,
    local: HashMap<EntityId, LocalEdges>,
}

impl<'g> CandidateSubgraph<'g> {
    fn new(
        graph: &'g KnowledgeGraph,
        mentions: &[EntityId],
        entities: Vec<EntityId>,
        hops: HashMap<EntityId, usize>,
        triplets: Vec<Triplet>,
    ) -> Self {
        let mut mentions = mentions.to_vec();
        mentions.sort_unstable();
        mentions.dedup();
        let mut local: HashMap<EntityId, LocalEdges> = HashMap::new();
        for t in &triplets {
            local
                .entry(t.head)
                .or_default()
                .forward
                .push((t.relation, t.tail));
            local
                .entry(t.tail)
                .or_default()
                .reverse
                .push((t.relation, t.head));
        }
        for edges in local.values_mut() {
            edges.forward.sort_unstable();
            edges.reverse.sort_unstable();
        }
        let triplet_set = triplets.iter().copied().collect();
        Self {
            graph,
            mentions,
            entities,
            hops,
            triplets,
            triplet_set,
            local,
        }
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    /// Sorted, deduplicated mention set.
    pub fn mentions(&self) -> &[EntityId] {
        &self.mentions
    }

    /// Entities of the ball, sorted by id.
    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.triplet_set.contains(t)
    }

    pub fn hop(&self, e: EntityId) -> Option<usize> {
        self.hops.get(&e).copied()
    }

    pub fn edges(&self, e: EntityId) -> Option<&LocalEdges> {
        self.local.get(&e)
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_triples([("a", "r_ab", "b"), ("b", "r_bc", "c")])
    }

    #[test]
    fn load_scarlet_letter() {
        let tsv = "Scarlet Letter\twritten by\tN.Hawthorne\n\
                   N.Hawthorne\tborn in\tSalem\n\
                   Salem\tlocated in\tMassachusetts\n";
        let g = KnowledgeGraph::load_tsv(tsv.as_bytes()).unwrap();
        let t = Triplet::new(
            g.entity("Scarlet Letter").unwrap(),
            g.relation("written by").unwrap(),
            g.entity("N.Hawthorne").unwrap(),
        );
        assert!(g.contains(&t));
        assert_eq!(
            g.stats(),
            GraphStats {
                entities: 4,
                relations: 3,
                triplets: 3
            }
        );
    }

    #[test]
    fn load_empty_and_duplicates() {
        let g = KnowledgeGraph::load_tsv(&b""[..]).unwrap();
        assert_eq!(g.stats().entities, 0);
        assert_eq!(g.stats().triplets, 0);

        let g = KnowledgeGraph::load_tsv("x\tr\ty\nx\tr\ty\n".as_bytes()).unwrap();
        assert_eq!(
            g.stats(),
            GraphStats {
                entities: 2,
                relations: 1,
                triplets: 1
            }
        );
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        let err = KnowledgeGraph::load_tsv("a\tb\tc\na\tb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::ColumnCount { line: 2, found: 2 }));
        let err = KnowledgeGraph::load_tsv("a\t \tc\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            GraphError::EmptyField {
                line: 1,
                field: "relation"
            }
        ));
    }

    #[test]
    fn names_are_canonicalized() {
        let g = KnowledgeGraph::from_triples([("  Lionel   Messi ", "plays for", "Inter Miami")]);
        let e = g.entity("lionel messi").unwrap();
        assert_eq!(g.entity_name(e), "Lionel Messi");
        assert_eq!(g.entity("LIONEL\tMESSI"), Some(e));
    }

    #[test]
    fn neighbors_of_chain_middle() {
        let g = chain();
        let (a, b, c) = (
            g.entity("a").unwrap(),
            g.entity("b").unwrap(),
            g.entity("c").unwrap(),
        );
        let n = g.neighbors(b, Direction::Both).unwrap();
        assert_eq!(
            n,
            vec![
                Neighbor {
                    relation: g.relation("r_ab").unwrap(),
                    entity: a,
                    orientation: Orientation::Reverse
                },
                Neighbor {
                    relation: g.relation("r_bc").unwrap(),
                    entity: c,
                    orientation: Orientation::Forward
                },
            ]
        );
        assert!(g.neighbors(EntityId(99), Direction::Both).is_err());
    }

    #[test]
    fn isolated_entity_has_no_neighbors() {
        let mut b = GraphBuilder::new();
        b.add("a", "r", "b");
        let lone = b.entity("lonely");
        let g = b.build();
        assert!(g.neighbors(lone, Direction::Both).unwrap().is_empty());
    }

    #[test]
    fn mila_kunis_incoming() {
        let g = KnowledgeGraph::from_triples([
            (
                "Ashton Kutcher",
                "romantic relationship (with celebrities)",
                "Mila Kunis",
            ),
            ("Friends with Benefits", "starred_actors", "Mila Kunis"),
            (
                "Friends with Benefits",
                "starred_actors",
                "Patricia Clarkson",
            ),
        ]);
        let mila = g.entity("Mila Kunis").unwrap();
        let inc = g.neighbors(mila, Direction::Incoming).unwrap();
        assert!(inc.iter().any(|n| {
            g.relation_name(n.relation) == "romantic relationship (with celebrities)"
                && g.entity_name(n.entity) == "Ashton Kutcher"
                && n.orientation == Orientation::Reverse
        }));
    }

    #[test]
    fn one_hop_on_chain() {
        let g = chain();
        let a = g.entity("a").unwrap();
        let sub = g.k_hop_subgraph(&[a], 1).unwrap();
        assert_eq!(sub.triplets().len(), 1);
        assert_eq!(g.entity_name(sub.triplets()[0].tail), "b");
        assert_eq!(sub.hop(g.entity("b").unwrap()), Some(1));
        assert_eq!(sub.hop(g.entity("c").unwrap()), None);
    }

    #[test]
    fn messi_two_hop_ball() {
        let g = KnowledgeGraph::from_triples([
            ("Messi", "plays for", "Inter Miami"),
            ("Inter Miami", "located in", "Miami"),
            ("Miami", "located in", "Florida"),
            ("Messi", "born in", "Rosario"),
            ("Ronaldo", "rival of", "Messi"),
            ("Ronaldo", "plays for", "Al Nassr"),
        ]);
        let messi = g.entity("Messi").unwrap();
        let sub = g.k_hop_subgraph(&[messi], 2).unwrap();
        let names: Vec<&str> = sub.entities().iter().map(|&e| g.entity_name(e)).collect();
        assert_eq!(
            names,
            vec![
                "Messi",
                "Inter Miami",
                "Miami",
                "Rosario",
                "Ronaldo",
                "Al Nassr"
            ]
        );
        // Miami -> Florida has no endpoint within one hop of Messi.
        assert_eq!(sub.triplets().len(), 5);
    }

    #[test]
    fn k_hop_errors() {
        let g = chain();
        assert!(matches!(
            g.k_hop_subgraph(&[], 2),
            Err(GraphError::NoMentions)
        ));
        assert!(matches!(
            g.k_hop_subgraph(&[EntityId(0)], 0),
            Err(GraphError::ZeroHops)
        ));
    }

    #[test]
    fn transpose_consistency() {
        let g = KnowledgeGraph::from_triples([
            ("a", "r", "b"),
            ("b", "r", "a"),
            ("a", "s", "a"),
            ("c", "r", "a"),
        ]);
        let mut fwd_total = 0;
        for t in g.triplets() {
            assert!(g.outgoing(t.head).contains(&(t.relation, t.tail)));
            assert!(g.incoming(t.tail).contains(&(t.relation, t.head)));
        }
        for e in g.entity_ids() {
            fwd_total += g.outgoing(e).len();
        }
        assert_eq!(fwd_total, g.triplets().len());
    }
}
