//! Generated knowledge-ablation corpus.
//!
//! Each example names one concept in the premise and one in the hypothesis,
//! wrapped in the same filler words. The label is `entails` exactly when the
//! graph has a triple joining the two concepts and `neutral` otherwise. Every
//! concept appears in one example only, so the text alone carries no usable
//! signal outside the training pairs. Concepts also get a few private leaf
//! neighbors, identically distributed across both labels, so the subgraphs
//! are not trivially small.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{write_dataset, Example, Label};
use crate::error::{KesError, Result};
use crate::kg_store::{EmbeddingTable, GraphBuilder, KnowledgeGraph};

const RELATIONS: [&str; 3] = ["related_to", "part_of", "is_a"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AblationSpec {
    pub train_pairs: usize,
    pub dev_pairs: usize,
    pub test_pairs: usize,
    /// Each concept gets between 1 and this many leaf neighbors.
    pub max_leaves: usize,
    /// Width of the generated node embeddings.
    pub dim: usize,
    pub seed: u64,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            train_pairs: 3200,
            dev_pairs: 200,
            test_pairs: 1000,
            max_leaves: 2,
            dim: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationCorpus {
    pub triples: Vec<[String; 3]>,
    /// Node embedding rows: uniform on `[0, 1)`, so every vector shares a
    /// positive mean direction.
    pub embeddings: Vec<(String, Vec<f64>)>,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub dim: usize,
}

/// File locations written by [`AblationCorpus::write_dir`].
#[derive(Debug, Clone, Serialize)]
pub struct AblationPaths {
    pub kg_triples: PathBuf,
    pub kg_embeddings: PathBuf,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

pub fn generate_ablation(spec: &AblationSpec) -> Result<AblationCorpus> {
    if spec.train_pairs < 2
        || spec.dev_pairs < 2
        || spec.test_pairs < 2
        || spec.dim == 0
        || spec.max_leaves == 0
    {
        return Err(KesError::Argument(
            "every split needs at least two pairs; dim and max_leaves must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = AblationCorpus {
        triples: Vec::new(),
        embeddings: Vec::new(),
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        dim: spec.dim,
    };
    let mut next_concept = 0usize;
    let mut next_leaf = 0usize;
    let mut splits = [
        (spec.train_pairs, Vec::new()),
        (spec.dev_pairs, Vec::new()),
        (spec.test_pairs, Vec::new()),
    ];
    for (pairs, out) in splits.iter_mut() {
        for i in 0..*pairs {
            let connected = i % 2 == 0;
            let a = format!("c{next_concept:05}");
            let b = format!("c{:05}", next_concept + 1);
            next_concept += 2;
            for c in [&a, &b] {
                corpus
                    .embeddings
                    .push((c.clone(), random_row(&mut rng, spec.dim)));
                for _ in 0..rng.gen_range(1..=spec.max_leaves) {
                    let leaf = format!("leaf{next_leaf:05}");
                    next_leaf += 1;
                    corpus
                        .embeddings
                        .push((leaf.clone(), random_row(&mut rng, spec.dim)));
                    let rel = RELATIONS[rng.gen_range(0..RELATIONS.len())].to_string();
                    corpus.triples.push(orient(&mut rng, c.clone(), rel, leaf));
                }
            }
            if connected {
                let rel = RELATIONS[rng.gen_range(0..RELATIONS.len())].to_string();
                corpus.triples.push(orient(&mut rng, a.clone(), rel, b.clone()));
            }
            let label = if connected { Label::Entails } else { Label::Neutral };
            out.push(Example::new(
                format!("the {a} is here"),
                format!("the {b} is here"),
                label,
            ));
        }
        out.shuffle(&mut rng);
    }
    let [(_, train), (_, dev), (_, test)] = splits;
    corpus.train = train;
    corpus.dev = dev;
    corpus.test = test;
    Ok(corpus)
}

fn random_row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn orient(rng: &mut ChaCha8Rng, a: String, rel: String, b: String) -> [String; 3] {
    if rng.gen_bool(0.5) {
        [a, rel, b]
    } else {
        [b, rel, a]
    }
}

impl AblationCorpus {
    pub fn graph(&self) -> KnowledgeGraph {
        let mut builder = GraphBuilder::new();
        for [h, r, t] in &self.triples {
            builder.add_triple(h, r, t);
        }
        builder.build()
    }

    /// Node table holding the generated rows.
    pub fn node_table(&self, graph: &KnowledgeGraph, seed: u64) -> Result<EmbeddingTable> {
        let mut table = EmbeddingTable::fallback(graph, self.dim, seed)?;
        for (label, values) in &self.embeddings {
            if let Some(id) = graph.concept_id(label) {
                table.set_vector(id, values)?;
            }
        }
        Ok(table)
    }

    pub fn triples_text(&self) -> String {
        let mut out = String::new();
        for [h, r, t] in &self.triples {
            let _ = writeln!(out, "{h}\t{r}\t{t}");
        }
        out
    }

    pub fn embeddings_text(&self) -> String {
        let mut out = String::new();
        for (label, values) in &self.embeddings {
            out.push_str(label);
            for v in values {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<AblationPaths> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| KesError::io(dir, e))?;
        let paths = AblationPaths {
            kg_triples: dir.join("triples.tsv"),
            kg_embeddings: dir.join("node_embeddings.txt"),
            train: dir.join("train.jsonl"),
            dev: dir.join("dev.jsonl"),
            test: dir.join("test.jsonl"),
        };
        fs::write(&paths.kg_triples, self.triples_text()).map_err(|e| KesError::io(&paths.kg_triples, e))?;
        fs::write(&paths.kg_embeddings, self.embeddings_text())
            .map_err(|e| KesError::io(&paths.kg_embeddings, e))?;
        write_dataset(&paths.train, &self.train)?;
        write_dataset(&paths.dev, &self.dev)?;
        write_dataset(&paths.test, &self.test)?;
        Ok(paths)
    }
}
