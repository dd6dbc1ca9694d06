//! Contextual subgraph extraction.
//!
//! The pipeline for one premise/hypothesis pair is: link both texts to
//! concepts, expand the linked seed set by one hop, score the expansion with
//! Personalized PageRank, drop non-seed nodes whose max-normalized score is
//! below θ, then add self-loops and the premise/hypothesis supernodes.

mod format;
mod ppr;
mod stats;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{KesError, Result};
use crate::kg_store::{ConceptId, KnowledgeGraph, Triple};
use crate::linker::{link_concepts, tokenize, StopList, DEFAULT_MAX_LINK_LEN};

pub use format::{parse_subgraph, write_subgraph};
pub use ppr::{ppr_scores, ScoreVector};
pub use stats::{corpus_stats, ThetaStats};

/// Filtering thresholds explored during hyperparameter tuning.
pub const THETA_GRID: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

pub const PREMISE_SUPERNODE_LABEL: &str = "__premise__";
pub const HYPOTHESIS_SUPERNODE_LABEL: &str = "__hypothesis__";

/// Concepts linked from the premise and from the hypothesis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedSet {
    pub premise: BTreeSet<ConceptId>,
    pub hypothesis: BTreeSet<ConceptId>,
}

impl SeedSet {
    pub fn new(
        premise: impl IntoIterator<Item = ConceptId>,
        hypothesis: impl IntoIterator<Item = ConceptId>,
    ) -> Self {
        SeedSet {
            premise: premise.into_iter().collect(),
            hypothesis: hypothesis.into_iter().collect(),
        }
    }

    pub fn union(&self) -> BTreeSet<ConceptId> {
        self.premise.union(&self.hypothesis).copied().collect()
    }

    pub fn contains(&self, c: ConceptId) -> bool {
        self.premise.contains(&c) || self.hypothesis.contains(&c)
    }

    pub fn is_empty(&self) -> bool {
        self.premise.is_empty() && self.hypothesis.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PprConfig {
    /// Teleport probability.
    pub alpha: f64,
    /// Convergence threshold on the L1 change between iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Filter threshold on max-normalized scores.
    pub theta: f64,
}

impl Default for PprConfig {
    fn default() -> Self {
        PprConfig {
            alpha: 0.15,
            tol: 1e-10,
            max_iter: 1000,
            theta: THETA_GRID[0],
        }
    }
}

impl PprConfig {
    pub fn with_theta(self, theta: f64) -> Self {
        PprConfig { theta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(KesError::Argument(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.tol > 0.0) {
            return Err(KesError::Argument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(KesError::Argument("max_iter must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(KesError::Argument(format!(
                "theta must lie in [0,1], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// One-hop neighborhood of a seed set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Expansion {
    /// Sorted ascending.
    pub nodes: Vec<ConceptId>,
    /// Every graph triple with both endpoints in `nodes`, sorted.
    pub triples: Vec<Triple>,
}

impl Expansion {
    /// Distinct `(head, tail)` pairs with the relation dropped, excluding
    /// triples whose head equals their tail.
    pub fn directed_edges(&self) -> Vec<(ConceptId, ConceptId)> {
        let set: BTreeSet<_> = self
            .triples
            .iter()
            .filter(|t| t.head != t.tail)
            .map(|t| (t.head, t.tail))
            .collect();
        set.into_iter().collect()
    }

    /// Distinct unordered pairs `(lo, hi)` used for PPR transitions.
    pub fn undirected_edges(&self) -> Vec<(ConceptId, ConceptId)> {
        let set: BTreeSet<_> = self
            .triples
            .iter()
            .filter(|t| t.head != t.tail)
            .map(|t| (t.head.min(t.tail), t.head.max(t.tail)))
            .collect();
        set.into_iter().collect()
    }
}

/// Seed set plus all its neighbors, and every triple among them.
pub fn expand_one_hop(graph: &KnowledgeGraph, seed: &SeedSet) -> Result<Expansion> {
    let seeds = seed.union();
    if let Some(bad) = seeds.iter().find(|c| !graph.contains(**c)) {
        return Err(KesError::Argument(format!(
            "seed concept {bad} is not in the graph"
        )));
    }
    let mut nodes = seeds.clone();
    for &s in &seeds {
        nodes.extend(graph.adjacent_concepts(s));
    }
    let mut triples = Vec::new();
    for &u in &nodes {
        for &(relation, tail) in graph.out_edges(u) {
            if nodes.contains(&tail) {
                triples.push(Triple {
                    head: u,
                    relation,
                    tail,
                });
            }
        }
    }
    triples.sort_unstable();
    Ok(Expansion {
        nodes: nodes.into_iter().collect(),
        triples,
    })
}

/// Concept nodes and KG edges kept after θ-filtering, before augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSubgraph {
    /// Kept concepts, sorted ascending.
    pub nodes: Vec<ConceptId>,
    /// Max-normalized score of each kept node.
    pub scores: BTreeMap<ConceptId, f64>,
    /// Directed, relation-collapsed KG edges among kept nodes.
    pub edges: Vec<(ConceptId, ConceptId)>,
    pub seed: SeedSet,
    pub theta: f64,
}

/// Normalizes scores by their maximum and keeps a node iff it is a seed or its
/// normalized score is at least `theta`. Edges touching a dropped node go too.
pub fn normalize_and_filter(
    expansion: &Expansion,
    scores: &ScoreVector,
    seed: &SeedSet,
    theta: f64,
) -> Result<FilteredSubgraph> {
    let max = expansion
        .nodes
        .iter()
        .map(|c| scores.get(*c))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| KesError::Internal("score vector does not cover the expansion".into()))?
        .into_iter()
        .fold(0.0_f64, f64::max);
    if !(max > 0.0) {
        return Err(KesError::Internal("all PPR scores are zero".into()));
    }
    let mut kept = BTreeMap::new();
    for &c in &expansion.nodes {
        let normalized = scores.get(c).unwrap_or(0.0) / max;
        if seed.contains(c) || normalized >= theta {
            kept.insert(c, normalized);
        }
    }
    let edges = expansion
        .directed_edges()
        .into_iter()
        .filter(|(h, t)| kept.contains_key(h) && kept.contains_key(t))
        .collect();
    Ok(FilteredSubgraph {
        nodes: kept.keys().copied().collect(),
        scores: kept,
        edges,
        seed: seed.clone(),
        theta,
    })
}

/// Concepts sort before the two supernodes, so ascending key order is also
/// ascending node id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKey {
    Concept(ConceptId),
    PremiseSupernode,
    HypothesisSupernode,
}

impl NodeKey {
    pub fn is_supernode(self) -> bool {
        !matches!(self, NodeKey::Concept(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    Kg = 0,
    SelfLoop = 1,
}

impl EdgeType {
    pub const ALL: [EdgeType; 2] = [EdgeType::Kg, EdgeType::SelfLoop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Kg => "kg",
            EdgeType::SelfLoop => "self_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphNode {
    pub key: NodeKey,
    /// Normalized PPR score; `None` for supernodes.
    pub score: Option<f64>,
    pub in_premise: bool,
    pub in_hypothesis: bool,
}

impl SubgraphNode {
    pub fn is_seed(&self) -> bool {
        self.in_premise || self.in_hypothesis
    }
}

/// Directed edge between local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubgraphEdge {
    pub src: usize,
    pub kind: EdgeType,
    pub dst: usize,
}

/// Augmented subgraph ready for encoding. Nodes are sorted by key; edges
/// reference nodes by position.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualSubgraph {
    pub nodes: Vec<SubgraphNode>,
    pub edges: Vec<SubgraphEdge>,
    pub theta: f64,
    pub alpha: f64,
}

impl ContextualSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, key: NodeKey) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.key.cmp(&key)).ok()
    }

    pub fn premise_supernode(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn hypothesis_supernode(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.nodes.iter().filter_map(|n| match n.key {
            NodeKey::Concept(c) => Some(c),
            _ => None,
        })
    }

    pub fn seed(&self) -> SeedSet {
        let mut seed = SeedSet::default();
        for n in &self.nodes {
            if let NodeKey::Concept(c) = n.key {
                if n.in_premise {
                    seed.premise.insert(c);
                }
                if n.in_hypothesis {
                    seed.hypothesis.insert(c);
                }
            }
        }
        seed
    }

    pub fn edges_of(&self, kind: EdgeType) -> impl Iterator<Item = &SubgraphEdge> + '_ {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    /// KG edges between concept nodes, excluding supernode links.
    pub fn concept_edges(&self) -> impl Iterator<Item = &SubgraphEdge> + '_ {
        self.edges_of(EdgeType::Kg)
            .filter(|e| !self.nodes[e.src].key.is_supernode() && !self.nodes[e.dst].key.is_supernode())
    }

    /// Nodes and concept edges that do not involve only mentioned concepts:
    /// `(new nodes, new edges)`.
    pub fn unmentioned_counts(&self) -> (usize, usize) {
        let new_nodes = self
            .nodes
            .iter()
            .filter(|n| !n.key.is_supernode() && !n.is_seed())
            .count();
        let new_edges = self
            .concept_edges()
            .filter(|e| !self.nodes[e.src].is_seed() || !self.nodes[e.dst].is_seed())
            .count();
        (new_nodes, new_edges)
    }
}

/// Adds both supernodes, bidirectional KG-typed supernode links and one
/// self-loop per node.
pub fn augment(filtered: &FilteredSubgraph, alpha: f64) -> ContextualSubgraph {
    let seed = &filtered.seed;
    let mut nodes: Vec<SubgraphNode> = filtered
        .nodes
        .iter()
        .map(|&c| SubgraphNode {
            key: NodeKey::Concept(c),
            score: filtered.scores.get(&c).copied(),
            in_premise: seed.premise.contains(&c),
            in_hypothesis: seed.hypothesis.contains(&c),
        })
        .collect();
    for key in [NodeKey::PremiseSupernode, NodeKey::HypothesisSupernode] {
        nodes.push(SubgraphNode {
            key,
            score: None,
            in_premise: false,
            in_hypothesis: false,
        });
    }
    let index: BTreeMap<ConceptId, usize> = filtered.nodes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let vp = nodes.len() - 2;
    let vh = nodes.len() - 1;

    let mut edges: Vec<SubgraphEdge> = filtered
        .edges
        .iter()
        .map(|(h, t)| SubgraphEdge {
            src: index[h],
            kind: EdgeType::Kg,
            dst: index[t],
        })
        .collect();
    for (side, concepts) in [(vp, &seed.premise), (vh, &seed.hypothesis)] {
        for c in concepts {
            if let Some(&i) = index.get(c) {
                edges.push(SubgraphEdge {
                    src: side,
                    kind: EdgeType::Kg,
                    dst: i,
                });
                edges.push(SubgraphEdge {
                    src: i,
                    kind: EdgeType::Kg,
                    dst: side,
                });
            }
        }
    }
    for i in 0..nodes.len() {
        edges.push(SubgraphEdge {
            src: i,
            kind: EdgeType::SelfLoop,
            dst: i,
        });
    }
    edges.sort_unstable();
    edges.dedup();
    ContextualSubgraph {
        nodes,
        edges,
        theta: filtered.theta,
        alpha,
    }
}

/// Expansion with PPR scores, independent of θ. `scores` is `None` when the
/// seed set is empty.
#[derive(Debug, Clone)]
pub struct ScoredExpansion {
    pub seed: SeedSet,
    pub expansion: Expansion,
    pub scores: Option<ScoreVector>,
    pub alpha: f64,
}

impl ScoredExpansion {
    pub fn filter(&self, theta: f64) -> Result<ContextualSubgraph> {
        let filtered = match &self.scores {
            Some(scores) => normalize_and_filter(&self.expansion, scores, &self.seed, theta)?,
            None => FilteredSubgraph {
                nodes: Vec::new(),
                scores: BTreeMap::new(),
                edges: Vec::new(),
                seed: self.seed.clone(),
                theta,
            },
        };
        Ok(augment(&filtered, self.alpha))
    }
}

/// Text-to-subgraph pipeline over one graph.
#[derive(Debug, Clone)]
pub struct Extractor<'g> {
    graph: &'g KnowledgeGraph,
    stoplist: StopList,
    max_link_len: usize,
    ppr: PprConfig,
}

impl<'g> Extractor<'g> {
    pub fn new(graph: &'g KnowledgeGraph, ppr: PprConfig) -> Result<Self> {
        ppr.validate()?;
        Ok(Extractor {
            graph,
            stoplist: StopList::default(),
            max_link_len: DEFAULT_MAX_LINK_LEN,
            ppr,
        })
    }

    pub fn with_stoplist(mut self, stoplist: StopList) -> Self {
        self.stoplist = stoplist;
        self
    }

    pub fn with_max_link_len(mut self, max_link_len: usize) -> Result<Self> {
        if max_link_len == 0 {
            return Err(KesError::Argument("max_link_len must be at least 1".into()));
        }
        self.max_link_len = max_link_len;
        Ok(self)
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn ppr_config(&self) -> &PprConfig {
        &self.ppr
    }

    pub fn max_link_len(&self) -> usize {
        self.max_link_len
    }

    pub fn stoplist(&self) -> &StopList {
        &self.stoplist
    }

    pub fn link_pair(&self, premise: &str, hypothesis: &str) -> Result<SeedSet> {
        let link = |text: &str| -> Result<BTreeSet<ConceptId>> {
            Ok(link_concepts(&tokenize(text), self.graph, self.max_link_len, &self.stoplist)?.concepts())
        };
        Ok(SeedSet {
            premise: link(premise)?,
            hypothesis: link(hypothesis)?,
        })
    }

    /// Links, expands and scores a pair; the result can be filtered at any θ.
    pub fn score(&self, premise: &str, hypothesis: &str) -> Result<ScoredExpansion> {
        let seed = self.link_pair(premise, hypothesis)?;
        let expansion = expand_one_hop(self.graph, &seed)?;
        let scores = if seed.is_empty() {
            None
        } else {
            Some(ppr_scores(
                &expansion.nodes,
                &expansion.undirected_edges(),
                &seed,
                &self.ppr,
            )?)
        };
        Ok(ScoredExpansion {
            seed,
            expansion,
            scores,
            alpha: self.ppr.alpha,
        })
    }

    pub fn extract(&self, premise: &str, hypothesis: &str) -> Result<ContextualSubgraph> {
        self.score(premise, hypothesis)?.filter(self.ppr.theta)
    }
}

/// One-shot extraction with the default stop-list and window cap.
pub fn extract_contextual_subgraph(
    graph: &KnowledgeGraph,
    premise: &str,
    hypothesis: &str,
    cfg: &PprConfig,
) -> Result<ContextualSubgraph> {
    Extractor::new(graph, *cfg)?.extract(premise, hypothesis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_store::GraphBuilder;

    fn chain() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_triple("a", "r", "b");
        b.add_triple("b", "r", "c");
        b.build()
    }

    fn id(g: &KnowledgeGraph, l: &str) -> ConceptId {
        g.concept_id(l).unwrap()
    }

    #[test]
    fn one_hop_excludes_two_hop_nodes() {
        let g = chain();
        let seed = SeedSet::new([id(&g, "a")], []);
        let e = expand_one_hop(&g, &seed).unwrap();
        assert_eq!(e.nodes, vec![id(&g, "a"), id(&g, "b")]);
        assert_eq!(e.undirected_edges(), vec![(id(&g, "a"), id(&g, "b"))]);
    }

    #[test]
    fn one_hop_keeps_edges_between_neighbors() {
        let g = chain();
        let seed = SeedSet::new([id(&g, "a"), id(&g, "c")], []);
        let e = expand_one_hop(&g, &seed).unwrap();
        assert_eq!(e.nodes.len(), 3);
        assert_eq!(
            e.undirected_edges(),
            vec![(id(&g, "a"), id(&g, "b")), (id(&g, "b"), id(&g, "c"))]
        );
    }

    #[test]
    fn empty_seed_expands_to_nothing() {
        let e = expand_one_hop(&chain(), &SeedSet::default()).unwrap();
        assert!(e.nodes.is_empty() && e.triples.is_empty());
    }

    fn star_scores() -> (KnowledgeGraph, Expansion, ScoreVector, SeedSet) {
        let mut b = GraphBuilder::new();
        for leaf in ["x", "y", "z"] {
            b.add_triple("hub", "r", leaf);
        }
        b.add_triple("x", "r", "y");
        let g = b.build();
        let seed = SeedSet::new([id(&g, "x")], [id(&g, "z")]);
        let e = expand_one_hop(&g, &seed).unwrap();
        let s = ppr_scores(&e.nodes, &e.undirected_edges(), &seed, &PprConfig::default()).unwrap();
        (g, e, s, seed)
    }

    #[test]
    fn theta_zero_keeps_everything() {
        let (_, e, s, seed) = star_scores();
        let f = normalize_and_filter(&e, &s, &seed, 0.0).unwrap();
        assert_eq!(f.nodes, e.nodes);
        assert_eq!(f.edges, e.directed_edges());
    }

    #[test]
    fn theta_one_keeps_seeds_and_argmax() {
        let (_, e, s, seed) = star_scores();
        let f = normalize_and_filter(&e, &s, &seed, 1.0).unwrap();
        let max = e.nodes.iter().map(|c| s.get(*c).unwrap()).fold(0.0, f64::max);
        let mut expected: BTreeSet<ConceptId> = seed.union();
        expected.extend(e.nodes.iter().filter(|c| s.get(**c).unwrap() == max));
        assert_eq!(f.nodes, expected.into_iter().collect::<Vec<_>>());
        assert!(f.scores.values().any(|&v| v == 1.0));
    }

    #[test]
    fn low_scoring_seeds_survive() {
        let (g, e, s, seed) = star_scores();
        let f = normalize_and_filter(&e, &s, &seed, 1.0).unwrap();
        let z = id(&g, "z");
        assert!(f.scores[&z] < 1.0);
        assert!(f.nodes.contains(&z));
    }

    #[test]
    fn augment_counts() {
        let filtered = FilteredSubgraph {
            nodes: vec![ConceptId(0), ConceptId(1), ConceptId(2)],
            scores: [(ConceptId(0), 1.0), (ConceptId(1), 0.5), (ConceptId(2), 0.7)].into(),
            edges: vec![(ConceptId(0), ConceptId(1))],
            seed: SeedSet::new([ConceptId(0), ConceptId(1)], [ConceptId(2)]),
            theta: 0.2,
        };
        let sg = augment(&filtered, 0.15);
        assert_eq!(sg.num_nodes(), 5);
        assert_eq!(sg.edges_of(EdgeType::SelfLoop).count(), 5);
        let super_incident = sg
            .edges
            .iter()
            .filter(|e| e.kind == EdgeType::Kg)
            .filter(|e| sg.nodes[e.src].key.is_supernode() || sg.nodes[e.dst].key.is_supernode())
            .count();
        assert_eq!(super_incident, 6);
        assert_eq!(sg.nodes[sg.premise_supernode()].key, NodeKey::PremiseSupernode);
        assert_eq!(
            sg.nodes[sg.hypothesis_supernode()].key,
            NodeKey::HypothesisSupernode
        );
    }

    #[test]
    fn empty_premise_leaves_isolated_supernode() {
        let filtered = FilteredSubgraph {
            nodes: vec![ConceptId(4)],
            scores: [(ConceptId(4), 1.0)].into(),
            edges: vec![],
            seed: SeedSet::new([], [ConceptId(4)]),
            theta: 0.2,
        };
        let sg = augment(&filtered, 0.15);
        let vp = sg.premise_supernode();
        let touching: Vec<_> = sg.edges.iter().filter(|e| e.src == vp || e.dst == vp).collect();
        assert_eq!(touching.len(), 1);
        assert_eq!(touching[0].kind, EdgeType::SelfLoop);
    }

    #[test]
    fn supernodes_sort_after_every_concept() {
        assert!(NodeKey::Concept(ConceptId(u32::MAX)) < NodeKey::PremiseSupernode);
        assert!(NodeKey::PremiseSupernode < NodeKey::HypothesisSupernode);
    }

    #[test]
    fn unlinked_pair_gives_supernodes_only() {
        let g = chain();
        let sg = extract_contextual_subgraph(&g, "nothing here", "at all", &PprConfig::default()).unwrap();
        assert_eq!(sg.num_nodes(), 2);
        assert_eq!(sg.edges.len(), 2);
        assert!(sg.edges.iter().all(|e| e.kind == EdgeType::SelfLoop));
    }

    #[test]
    fn config_validation() {
        assert!(PprConfig::default().validate().is_ok());
        assert!(PprConfig {
            alpha: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PprConfig {
            tol: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PprConfig {
            max_iter: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PprConfig::default().with_theta(1.5).validate().is_err());
    }
}
