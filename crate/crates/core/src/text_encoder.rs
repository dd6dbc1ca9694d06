//! Text branch: any encoder mapping a token pair to a fixed-width vector can
//! sit here. The shipped baseline mean-pools word vectors of each sentence,
//! concatenates the two pools and applies a bias-free projection with ReLU.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;

use crate::error::{KesError, Result};
use crate::kg_store::{fallback_vector, read_embedding_file};
use crate::linker::TokenSequence;
use crate::rgcn::{glorot, outer, relu};

/// Behavioral contract of a text model: a fixed-width vector per token pair.
pub trait TextEncoder {
    fn output_dim(&self) -> usize;
    fn encode(&self, premise: &TokenSequence, hypothesis: &TokenSequence) -> Array1<f64>;
}

/// Word vectors; out-of-vocabulary tokens get the deterministic fallback.
#[derive(Debug, Clone)]
pub struct WordEmbeddingTable {
    dim: usize,
    seed: u64,
    vectors: HashMap<String, Array1<f64>>,
}

impl WordEmbeddingTable {
    pub fn fallback_only(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(KesError::Argument("word embedding dim must be positive".into()));
        }
        Ok(WordEmbeddingTable {
            dim,
            seed,
            vectors: HashMap::new(),
        })
    }

    pub fn load(path: impl AsRef<Path>, dim: usize, seed: u64) -> Result<Self> {
        let rows = read_embedding_file(path.as_ref(), dim)?;
        let mut table = Self::fallback_only(dim, seed)?;
        for (token, values) in rows {
            table.vectors.insert(token, Array1::from(values));
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector(&self, token: &str) -> Array1<f64> {
        match self.vectors.get(token) {
            Some(v) => v.clone(),
            None => fallback_vector(self.seed, token, self.dim),
        }
    }

    /// Mean of the token vectors; the zero vector for an empty sequence.
    pub fn mean_pool(&self, tokens: &TokenSequence) -> Array1<f64> {
        let mut acc = Array1::zeros(self.dim);
        for t in tokens.tokens() {
            acc += &self.vector(t);
        }
        if !tokens.is_empty() {
            acc /= tokens.len() as f64;
        }
        acc
    }

    /// `[mean(premise); mean(hypothesis)]`, the baseline encoder's input.
    pub fn pooled_pair(&self, premise: &TokenSequence, hypothesis: &TokenSequence) -> Array1<f64> {
        concatenate![Axis(0), self.mean_pool(premise), self.mean_pool(hypothesis)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEncoderParams {
    /// `(2 · word_dim) × K`.
    pub projection: Array2<f64>,
}

impl BaselineEncoderParams {
    pub fn zeros(word_dim: usize, out_dim: usize) -> Self {
        BaselineEncoderParams {
            projection: Array2::zeros((2 * word_dim, out_dim)),
        }
    }

    pub fn random<R: Rng>(word_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        BaselineEncoderParams {
            projection: glorot(2 * word_dim, out_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.ncols()
    }

    /// `ReLU(x P)` for a pooled pair `x`.
    pub fn project(&self, pooled: &Array1<f64>) -> Array1<f64> {
        pooled.dot(&self.projection).mapv(relu)
    }

    pub(crate) fn backward(&self, pooled: &Array1<f64>, d_out: &Array1<f64>, grad: &mut Self) {
        let pre = pooled.dot(&self.projection);
        let d_pre = d_out * &pre.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
        grad.projection += &outer(pooled, &d_pre);
    }
}

/// Baseline encoder bound to its word table.
#[derive(Debug, Clone, Copy)]
pub struct BaselineTextEncoder<'a> {
    pub params: &'a BaselineEncoderParams,
    pub table: &'a WordEmbeddingTable,
}

impl TextEncoder for BaselineTextEncoder<'_> {
    fn output_dim(&self) -> usize {
        self.params.output_dim()
    }

    fn encode(&self, premise: &TokenSequence, hypothesis: &TokenSequence) -> Array1<f64> {
        self.params.project(&self.table.pooled_pair(premise, hypothesis))
    }
}

/// Mean-pool, concatenate, project, ReLU.
pub fn encode_text_pair(
    params: &BaselineEncoderParams,
    premise: &TokenSequence,
    hypothesis: &TokenSequence,
    table: &WordEmbeddingTable,
) -> Result<Array1<f64>> {
    if params.input_dim() != 2 * table.dim() {
        return Err(KesError::Config(format!(
            "text projection expects input width {}, word table gives {}",
            params.input_dim(),
            2 * table.dim()
        )));
    }
    Ok(BaselineTextEncoder { params, table }.encode(premise, hypothesis))
}
