//! Corpus-level subgraph size statistics per filtering threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::error::{KesError, Result};

use super::Extractor;

/// Averages over a corpus at one θ. Node and edge counts exclude what the
/// texts mention explicitly: a node counts when it is not a seed, an edge when
/// at least one endpoint is not a seed. Supernodes and self-loops never count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaStats {
    pub theta: f64,
    pub mean_new_nodes: f64,
    pub mean_new_edges: f64,
    pub mean_mentioned_concepts: f64,
    pub examples: usize,
}

/// Per-example counts at each threshold: `(new_nodes, new_edges, mentioned)`.
fn example_counts(
    extractor: &Extractor<'_>,
    example: &Example,
    thetas: &[f64],
) -> Result<Vec<(usize, usize, usize)>> {
    let scored = extractor.score(&example.premise, &example.hypothesis)?;
    let mentioned = scored.seed.union().len();
    thetas
        .iter()
        .map(|&theta| {
            let (nodes, edges) = scored.filter(theta)?.unmentioned_counts();
            Ok((nodes, edges, mentioned))
        })
        .collect()
}

/// Scores every example once and filters it at each θ. With `jobs > 1`
/// examples are processed on a thread pool; per-example results are reduced
/// in corpus order either way.
pub fn corpus_stats(
    extractor: &Extractor<'_>,
    examples: &[Example],
    thetas: &[f64],
    jobs: usize,
) -> Result<Vec<ThetaStats>> {
    if examples.is_empty() {
        return Err(KesError::Data(
            "corpus statistics need at least one example".into(),
        ));
    }
    let per_example: Vec<Vec<(usize, usize, usize)>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| KesError::Internal(e.to_string()))?;
        pool.install(|| {
            examples
                .par_iter()
                .map(|ex| example_counts(extractor, ex, thetas))
                .collect::<Result<_>>()
        })?
    } else {
        examples
            .iter()
            .map(|ex| example_counts(extractor, ex, thetas))
            .collect::<Result<_>>()?
    };

    let n = examples.len() as f64;
    Ok(thetas
        .iter()
        .enumerate()
        .map(|(t, &theta)| {
            let (mut nodes, mut edges, mut mentioned) = (0usize, 0usize, 0usize);
            for counts in &per_example {
                nodes += counts[t].0;
                edges += counts[t].1;
                mentioned += counts[t].2;
            }
            ThetaStats {
                theta,
                mean_new_nodes: nodes as f64 / n,
                mean_new_edges: edges as f64 / n,
                mean_mentioned_concepts: mentioned as f64 / n,
                examples: examples.len(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::kg_store::GraphBuilder;
    use crate::subgraph::PprConfig;

    #[test]
    fn degenerate_example_has_zero_averages() {
        let mut b = GraphBuilder::new();
        b.add_triple("dog", "isa", "animal");
        let g = b.build();
        let ex = Extractor::new(&g, PprConfig::default()).unwrap();
        let corpus = [Example::new("nothing", "linked", Label::Neutral)];
        let stats = corpus_stats(&ex, &corpus, &[0.2, 0.8], 1).unwrap();
        for s in stats {
            assert_eq!(s.mean_new_nodes, 0.0);
            assert_eq!(s.mean_new_edges, 0.0);
            assert_eq!(s.mean_mentioned_concepts, 0.0);
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        let g = GraphBuilder::new().build();
        let ex = Extractor::new(&g, PprConfig::default()).unwrap();
        assert!(corpus_stats(&ex, &[], &[0.2], 1).is_err());
    }
}
