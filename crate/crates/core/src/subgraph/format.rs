//! Line-oriented text serialization of contextual subgraphs.
//!
//! ```text
//! KES-SUBGRAPH v1 nodes=<n> edges=<m> theta=<θ> alpha=<α>
//! NODE <id> <label> <normalized score or -> <flags>
//! EDGE <src id> <kg|self_loop> <dst id>
//! ```
//!
//! Concept ids are the graph's integer ids; the supernodes are `vp` and `vh`.
//! Flags are three characters: `p` (mentioned in premise), `h` (mentioned in
//! hypothesis), `s` (seed), with `-` for an unset flag. Scores are written in
//! shortest round-trip form, so parsing restores them exactly.

use std::io::{self, Write};

use crate::error::{KesError, Result};
use crate::kg_store::{ConceptId, KnowledgeGraph};

use super::{
    ContextualSubgraph, EdgeType, NodeKey, SubgraphEdge, SubgraphNode, HYPOTHESIS_SUPERNODE_LABEL,
    PREMISE_SUPERNODE_LABEL,
};

const MAGIC: &str = "KES-SUBGRAPH";
const VERSION: &str = "v1";

fn node_id(key: NodeKey) -> String {
    match key {
        NodeKey::Concept(c) => c.to_string(),
        NodeKey::PremiseSupernode => "vp".into(),
        NodeKey::HypothesisSupernode => "vh".into(),
    }
}

pub fn write_subgraph<W: Write>(
    sg: &ContextualSubgraph,
    graph: &KnowledgeGraph,
    out: &mut W,
) -> io::Result<()> {
    writeln!(
        out,
        "{MAGIC} {VERSION} nodes={} edges={} theta={} alpha={}",
        sg.nodes.len(),
        sg.edges.len(),
        sg.theta,
        sg.alpha
    )?;
    for node in &sg.nodes {
        let label = match node.key {
            NodeKey::Concept(c) => graph.concept_label(c).unwrap_or("?"),
            NodeKey::PremiseSupernode => PREMISE_SUPERNODE_LABEL,
            NodeKey::HypothesisSupernode => HYPOTHESIS_SUPERNODE_LABEL,
        };
        let score = node.score.map_or_else(|| "-".to_string(), |s| s.to_string());
        let flags: String = [
            if node.in_premise { 'p' } else { '-' },
            if node.in_hypothesis { 'h' } else { '-' },
            if node.is_seed() { 's' } else { '-' },
        ]
        .into_iter()
        .collect();
        writeln!(out, "NODE {} {label} {score} {flags}", node_id(node.key))?;
    }
    for e in &sg.edges {
        writeln!(
            out,
            "EDGE {} {} {}",
            node_id(sg.nodes[e.src].key),
            e.kind.name(),
            node_id(sg.nodes[e.dst].key)
        )?;
    }
    Ok(())
}

impl ContextualSubgraph {
    pub fn to_text(&self, graph: &KnowledgeGraph) -> String {
        let mut buf = Vec::new();
        write_subgraph(self, graph, &mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serialization is UTF-8")
    }
}

fn bad(line: usize, msg: impl Into<String>) -> KesError {
    KesError::parse("<subgraph>", line, msg)
}

fn parse_key(s: &str, line: usize) -> Result<NodeKey> {
    match s {
        "vp" => Ok(NodeKey::PremiseSupernode),
        "vh" => Ok(NodeKey::HypothesisSupernode),
        other => other
            .parse::<u32>()
            .map(|id| NodeKey::Concept(ConceptId(id)))
            .map_err(|_| bad(line, format!("bad node id {other:?}"))),
    }
}

fn header_field<'a>(field: Option<&'a str>, name: &str) -> Result<&'a str> {
    field
        .and_then(|f| f.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| bad(1, format!("missing header field {name}")))
}

/// Parses the text form. Labels are informational and not validated.
pub fn parse_subgraph(text: &str) -> Result<ContextualSubgraph> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty input"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) || fields.next() != Some(VERSION) {
        return Err(bad(1, "not a v1 subgraph header"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(1, format!("bad number {s:?}")));
    let n_nodes = num(header_field(fields.next(), "nodes")?)? as usize;
    let n_edges = num(header_field(fields.next(), "edges")?)? as usize;
    let theta = num(header_field(fields.next(), "theta")?)?;
    let alpha = num(header_field(fields.next(), "alpha")?)?;

    let mut nodes = Vec::with_capacity(n_nodes);
    let mut raw_edges = Vec::with_capacity(n_edges);
    for (lineno, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => continue,
            ["NODE", id, _label, score, flags] => {
                let key = parse_key(id, lineno)?;
                let score = match *score {
                    "-" => None,
                    s => Some(s.parse::<f64>().map_err(|_| bad(lineno, "bad score"))?),
                };
                let f: Vec<char> = flags.chars().collect();
                if f.len() != 3 {
                    return Err(bad(lineno, "flags must have 3 characters"));
                }
                nodes.push(SubgraphNode {
                    key,
                    score,
                    in_premise: f[0] == 'p',
                    in_hypothesis: f[1] == 'h',
                });
            }
            ["EDGE", src, kind, dst] => {
                let kind = match *kind {
                    "kg" => EdgeType::Kg,
                    "self_loop" => EdgeType::SelfLoop,
                    other => return Err(bad(lineno, format!("unknown edge type {other:?}"))),
                };
                raw_edges.push((parse_key(src, lineno)?, kind, parse_key(dst, lineno)?, lineno));
            }
            _ => return Err(bad(lineno, format!("unrecognized line {line:?}"))),
        }
    }
    if nodes.len() != n_nodes || raw_edges.len() != n_edges {
        return Err(bad(1, "header counts do not match the body"));
    }
    if nodes.windows(2).any(|w| w[0].key >= w[1].key) {
        return Err(bad(1, "nodes must be sorted by id"));
    }
    let mut sg = ContextualSubgraph {
        nodes,
        edges: Vec::with_capacity(n_edges),
        theta,
        alpha,
    };
    for (src, kind, dst, lineno) in raw_edges {
        let lookup = |k: NodeKey| {
            sg.node_index(k)
                .ok_or_else(|| bad(lineno, format!("edge references unknown node {}", node_id(k))))
        };
        let edge = SubgraphEdge {
            src: lookup(src)?,
            kind,
            dst: lookup(dst)?,
        };
        sg.edges.push(edge);
    }
    Ok(sg)
}
