//! Multi-relational knowledge graph storage and node embeddings.
//!
//! Concepts and relations are interned into dense ids in order of first
//! appearance. Duplicate triples are dropped at load so that downstream
//! transition probabilities and convolution sums never double-count an edge.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{KesError, Result};

/// Dense index into the concept table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense index into the relation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: ConceptId,
    pub relation: RelationId,
    pub tail: ConceptId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Neighbor {
    pub relation: RelationId,
    pub concept: ConceptId,
    pub direction: Direction,
}

/// Lowercases and maps runs of whitespace to a single underscore.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Default, Clone)]
struct Interner {
    labels: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, label: String) -> u32 {
        if let Some(&id) = self.ids.get(&label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.ids.insert(label.clone(), id);
        self.labels.push(label);
        id
    }
}

/// Immutable multi-relational directed graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    concepts: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    out_index: Vec<Vec<(RelationId, ConceptId)>>,
    in_index: Vec<Vec<(RelationId, ConceptId)>>,
    fingerprint: String,
}

/// Incremental builder; `build` freezes the graph.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    concepts: Interner,
    relations: Interner,
    triples: Vec<Triple>,
    seen: std::collections::HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a concept without edges and returns its id.
    pub fn add_concept(&mut self, label: &str) -> ConceptId {
        ConceptId(self.concepts.intern(normalize_label(label)))
    }

    /// Adds a triple; returns false when it was already present.
    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let head = ConceptId(self.concepts.intern(normalize_label(head)));
        let relation = RelationId(self.relations.intern(normalize_label(relation)));
        let tail = ConceptId(self.concepts.intern(normalize_label(tail)));
        let triple = Triple { head, relation, tail };
        if self.seen.insert(triple) {
            self.triples.push(triple);
            true
        } else {
            false
        }
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.concepts.labels.len();
        let mut out_index = vec![Vec::new(); n];
        let mut in_index = vec![Vec::new(); n];
        let mut hasher = Sha256::new();
        for t in &self.triples {
            out_index[t.head.index()].push((t.relation, t.tail));
            in_index[t.tail.index()].push((t.relation, t.head));
        }
        for list in out_index.iter_mut().chain(in_index.iter_mut()) {
            list.sort_unstable();
        }
        for label in &self.concepts.labels {
            hasher.update(label.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update([1u8]);
        for label in &self.relations.labels {
            hasher.update(label.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update([1u8]);
        for t in &self.triples {
            hasher.update(t.head.0.to_le_bytes());
            hasher.update(t.relation.0.to_le_bytes());
            hasher.update(t.tail.0.to_le_bytes());
        }
        KnowledgeGraph {
            concepts: self.concepts,
            relations: self.relations,
            triples: self.triples,
            out_index,
            in_index,
            fingerprint: hex::encode(hasher.finalize()),
        }
    }
}

impl KnowledgeGraph {
    /// Parses the tab-separated triple format. `origin` is only used in error
    /// messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut builder = GraphBuilder::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KesError::parse(
                    origin,
                    lineno + 1,
                    format!(
                        "expected 3 tab-separated fields (head, relation, tail), found {}",
                        fields.len()
                    ),
                ));
            }
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err(KesError::parse(origin, lineno + 1, "empty field"));
            }
            builder.add_triple(fields[0], fields[1], fields[2]);
        }
        Ok(builder.build())
    }

    pub fn num_concepts(&self) -> usize {
        self.concepts.labels.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.labels.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn concept_id(&self, label: &str) -> Option<ConceptId> {
        self.concepts.ids.get(label).map(|&id| ConceptId(id))
    }

    /// Looks up a label after applying the usual normalization.
    pub fn lookup(&self, label: &str) -> Option<ConceptId> {
        self.concept_id(&normalize_label(label))
    }

    pub fn concept_label(&self, id: ConceptId) -> Option<&str> {
        self.concepts.labels.get(id.index()).map(String::as_str)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.ids.get(label).map(|&id| RelationId(id))
    }

    pub fn relation_label(&self, id: RelationId) -> Option<&str> {
        self.relations.labels.get(id.index()).map(String::as_str)
    }

    pub fn concept_labels(&self) -> impl Iterator<Item = (ConceptId, &str)> {
        self.concepts
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (ConceptId(i as u32), l.as_str()))
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        id.index() < self.num_concepts()
    }

    pub fn out_edges(&self, id: ConceptId) -> &[(RelationId, ConceptId)] {
        &self.out_index[id.index()]
    }

    pub fn in_edges(&self, id: ConceptId) -> &[(RelationId, ConceptId)] {
        &self.in_index[id.index()]
    }

    /// Content hash over concepts, relations and triples.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Out- and in-edges of `id`, sorted by (relation, neighbor, direction).
    pub fn neighbors(&self, id: ConceptId) -> Result<Vec<Neighbor>> {
        if !self.contains(id) {
            return Err(KesError::Argument(format!("unknown concept id {id}")));
        }
        let out = self.out_index[id.index()].iter().map(|&(r, c)| Neighbor {
            relation: r,
            concept: c,
            direction: Direction::Out,
        });
        let inc = self.in_index[id.index()].iter().map(|&(r, c)| Neighbor {
            relation: r,
            concept: c,
            direction: Direction::In,
        });
        let mut all: Vec<Neighbor> = out.chain(inc).collect();
        all.sort_unstable();
        Ok(all)
    }

    /// Distinct concepts adjacent to `id` in either direction, excluding `id`.
    pub fn adjacent_concepts(&self, id: ConceptId) -> BTreeSet<ConceptId> {
        self.out_index[id.index()]
            .iter()
            .chain(self.in_index[id.index()].iter())
            .map(|&(_, c)| c)
            .filter(|&c| c != id)
            .collect()
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            concepts: self.num_concepts(),
            relations: self.num_relations(),
            triples: self.num_triples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct GraphSummary {
    pub concepts: usize,
    pub relations: usize,
    pub triples: usize,
}

/// Reads a triple file. An empty file yields an empty graph.
pub fn load_graph(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KesError::io(path, e))?;
    let graph = KnowledgeGraph::parse(&text, path)?;
    log::info!(
        "loaded {}: {} concepts, {} relations, {} triples",
        path.display(),
        graph.num_concepts(),
        graph.num_relations(),
        graph.num_triples()
    );
    Ok(graph)
}

/// Deterministic pseudo-random vector with entries uniform in
/// `[-0.5/dim, 0.5/dim]`, seeded by hashing `(seed, label)`.
pub fn fallback_vector(seed: u64, label: &str, dim: usize) -> Array1<f64> {
    let mut hasher = Sha256::new();
    hasher.update(b"kes-fallback-v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let bound = 0.5 / dim as f64;
    Array1::from_iter((0..dim).map(|_| rng.gen_range(-bound..=bound)))
}

/// Parsed embedding file: normalized label and vector per line.
pub(crate) fn read_embedding_file(path: &Path, dim: usize) -> Result<Vec<(String, Vec<f64>)>> {
    if dim == 0 {
        return Err(KesError::Argument("embedding dim must be positive".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| KesError::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(label) = fields.next() else {
            continue;
        };
        let values = fields
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| KesError::parse(path, lineno + 1, format!("bad number: {e}")))?;
        if values.len() != dim {
            return Err(KesError::parse(
                path,
                lineno + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        rows.push((normalize_label(label), values));
    }
    Ok(rows)
}

/// Node embeddings for every concept of a graph.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    seed: u64,
    vectors: Array2<f64>,
    covered: Vec<bool>,
}

impl EmbeddingTable {
    /// Table made only of fallback vectors.
    pub fn fallback(graph: &KnowledgeGraph, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(KesError::Argument("embedding dim must be positive".into()));
        }
        let mut vectors = Array2::zeros((graph.num_concepts(), dim));
        for (id, label) in graph.concept_labels() {
            vectors
                .row_mut(id.index())
                .assign(&fallback_vector(seed, label, dim));
        }
        Ok(Self {
            dim,
            seed,
            vectors,
            covered: vec![false; graph.num_concepts()],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vector(&self, id: ConceptId) -> ArrayView1<'_, f64> {
        self.vectors.row(id.index())
    }

    pub fn is_covered(&self, id: ConceptId) -> bool {
        self.covered[id.index()]
    }

    /// Fraction of concepts with a file-provided vector.
    pub fn coverage(&self) -> f64 {
        if self.covered.is_empty() {
            return 0.0;
        }
        self.covered.iter().filter(|&&c| c).count() as f64 / self.covered.len() as f64
    }

    /// Replaces the vector of `id` and marks it covered.
    pub fn set_vector(&mut self, id: ConceptId, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(KesError::Argument(format!(
                "vector has {} values, table width is {}",
                values.len(),
                self.dim
            )));
        }
        if id.index() >= self.covered.len() {
            return Err(KesError::Argument(format!("unknown concept id {}", id.0)));
        }
        self.vectors.row_mut(id.index()).assign(&ArrayView1::from(values));
        self.covered[id.index()] = true;
        Ok(())
    }

    /// Fallback vector for a label outside the graph, e.g. a reserved
    /// supernode label.
    pub fn fallback_for(&self, label: &str) -> Array1<f64> {
        fallback_vector(self.seed, label, self.dim)
    }
}

/// Loads node embeddings; concepts missing from the file get fallback vectors.
/// Labels in the file that are not graph concepts are ignored.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    graph: &KnowledgeGraph,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let rows = read_embedding_file(path, dim)?;
    let mut table = EmbeddingTable::fallback(graph, dim, seed)?;
    for (label, values) in rows {
        if let Some(id) = graph.concept_id(&label) {
            table.set_vector(id, &values)?;
        }
    }
    log::info!(
        "loaded {}: embedding coverage {:.4}",
        path.display(),
        table.coverage()
    );
    Ok(table)
}
