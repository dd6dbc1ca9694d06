//! Personalized PageRank by power iteration on an undirected edge list.

use std::collections::BTreeMap;

use crate::error::{KesError, Result};
use crate::kg_store::ConceptId;

use super::{PprConfig, SeedSet};

/// PPR score per node, plus convergence bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: BTreeMap<ConceptId, f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ScoreVector {
    pub fn get(&self, c: ConceptId) -> Option<f64> {
        self.scores.get(&c).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConceptId, f64)> + '_ {
        self.scores.iter().map(|(&c, &s)| (c, s))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.scores.values().sum()
    }
}

/// Iterates `R <- (1-α) A R + α p` from `R = p`, where `p` is uniform over the
/// seeds present in `nodes` and `A` is the column-stochastic transition matrix
/// of the undirected graph. A node with no incident edge sends its whole mass
/// to `p`, so the total stays 1.
pub fn ppr_scores(
    nodes: &[ConceptId],
    edges: &[(ConceptId, ConceptId)],
    seed: &SeedSet,
    cfg: &PprConfig,
) -> Result<ScoreVector> {
    cfg.validate()?;
    let index: BTreeMap<ConceptId, usize> = nodes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    if index.len() != nodes.len() {
        return Err(KesError::Argument("duplicate node in PPR input".into()));
    }
    let n = nodes.len();

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) else {
            return Err(KesError::Argument(format!(
                "edge ({a}, {b}) has an endpoint outside the node set"
            )));
        };
        if i != j {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }

    let seeds: Vec<usize> = seed
        .union()
        .iter()
        .filter_map(|c| index.get(c).copied())
        .collect();
    if seeds.is_empty() {
        return Err(KesError::DegenerateSeed);
    }
    let mut jump = vec![0.0; n];
    for &s in &seeds {
        jump[s] = 1.0 / seeds.len() as f64;
    }

    let alpha = cfg.alpha;
    let mut rank = jump.clone();
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&v| adjacency[v].is_empty()).map(|v| rank[v]).sum();
        for u in 0..n {
            let inflow: f64 = adjacency[u]
                .iter()
                .map(|&v| rank[v] / adjacency[v].len() as f64)
                .sum();
            next[u] = (1.0 - alpha) * (inflow + dangling * jump[u]) + alpha * jump[u];
        }
        let change: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "PPR stopped at max_iter={} before reaching tol={}",
            cfg.max_iter,
            cfg.tol
        );
    }
    Ok(ScoreVector {
        scores: nodes.iter().copied().zip(rank).collect(),
        iterations,
        converged,
    })
}
