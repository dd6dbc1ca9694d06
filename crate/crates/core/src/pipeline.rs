//! Turns raw examples into model inputs: subgraph extraction (optionally
//! cached), initial node states, pooled word vectors.

use rayon::prelude::*;

use crate::cache::SubgraphCache;
use crate::dataset::Example;
use crate::error::{KesError, Result};
use crate::kg_store::EmbeddingTable;
use crate::linker::tokenize;
use crate::model::{GraphInput, ModelDims, PreparedExample};
use crate::rgcn::{init_node_states, Propagation};
use crate::subgraph::{ContextualSubgraph, Extractor};
use crate::text_encoder::WordEmbeddingTable;

pub struct Pipeline<'a> {
    pub extractor: Extractor<'a>,
    pub node_table: &'a EmbeddingTable,
    pub word_table: &'a WordEmbeddingTable,
    pub cache: Option<SubgraphCache>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        extractor: Extractor<'a>,
        node_table: &'a EmbeddingTable,
        word_table: &'a WordEmbeddingTable,
    ) -> Self {
        Pipeline {
            extractor,
            node_table,
            word_table,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: SubgraphCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Errors when the tables cannot feed a model with `dims`.
    pub fn check_dims(&self, dims: &ModelDims) -> Result<()> {
        if self.word_table.dim() != dims.word_dim {
            return Err(KesError::Config(format!(
                "word embeddings have width {}, model expects {}",
                self.word_table.dim(),
                dims.word_dim
            )));
        }
        if dims.use_graph && self.node_table.dim() != dims.graph_dim {
            return Err(KesError::Config(format!(
                "graph embeddings have width {}, model expects {}",
                self.node_table.dim(),
                dims.graph_dim
            )));
        }
        Ok(())
    }

    pub fn subgraph(&self, premise: &str, hypothesis: &str) -> Result<ContextualSubgraph> {
        match &self.cache {
            Some(cache) => cache.extract(&self.extractor, premise, hypothesis),
            None => self.extractor.extract(premise, hypothesis),
        }
    }

    pub fn prepare(&self, ex: &Example, dims: &ModelDims) -> Result<PreparedExample> {
        let label = ex.label.index();
        if label >= dims.num_classes {
            return Err(KesError::Data(format!(
                "label {} is not valid for a {}-class model",
                ex.label, dims.num_classes
            )));
        }
        let text_input = self
            .word_table
            .pooled_pair(&tokenize(&ex.premise), &tokenize(&ex.hypothesis));
        let graph = if dims.use_graph {
            let sg = self.subgraph(&ex.premise, &ex.hypothesis)?;
            Some(GraphInput {
                propagation: Propagation::from_subgraph(&sg),
                states: init_node_states(&sg, self.node_table),
            })
        } else {
            None
        };
        Ok(PreparedExample {
            text_input,
            graph,
            label,
        })
    }

    /// Prepares a dataset, in parallel when `jobs > 1`. Output order matches
    /// input order.
    pub fn prepare_all(
        &self,
        examples: &[Example],
        dims: &ModelDims,
        jobs: usize,
    ) -> Result<Vec<PreparedExample>> {
        self.check_dims(dims)?;
        if jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| KesError::Internal(e.to_string()))?;
            pool.install(|| examples.par_iter().map(|ex| self.prepare(ex, dims)).collect())
        } else {
            examples.iter().map(|ex| self.prepare(ex, dims)).collect()
        }
    }
}
