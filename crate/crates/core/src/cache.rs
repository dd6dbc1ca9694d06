//! On-disk cache of extracted subgraphs keyed by a content hash of everything
//! extraction depends on.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{KesError, Result};
use crate::kg_store::KnowledgeGraph;
use crate::subgraph::{parse_subgraph, ContextualSubgraph, Extractor};

#[derive(Debug, Clone)]
pub struct SubgraphCache {
    dir: PathBuf,
}

impl SubgraphCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| KesError::io(&dir, e))?;
        Ok(SubgraphCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hash of graph content, extraction settings and the text pair.
    pub fn key(extractor: &Extractor<'_>, premise: &str, hypothesis: &str) -> String {
        let cfg = extractor.ppr_config();
        let mut h = Sha256::new();
        h.update(b"kes-subgraph-v1\0");
        h.update(extractor.graph().fingerprint().as_bytes());
        for v in [cfg.alpha, cfg.tol, cfg.theta] {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update((cfg.max_iter as u64).to_le_bytes());
        h.update((extractor.max_link_len() as u64).to_le_bytes());
        h.update(extractor.stoplist().fingerprint().as_bytes());
        h.update([0u8]);
        h.update(premise.as_bytes());
        h.update([0u8]);
        h.update(hypothesis.as_bytes());
        hex::encode(h.finalize())
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.subgraph"))
    }

    pub fn get(&self, key: &str) -> Option<ContextualSubgraph> {
        let text = fs::read_to_string(self.path_for(key)).ok()?;
        match parse_subgraph(&text) {
            Ok(sg) => Some(sg),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &str, sg: &ContextualSubgraph, graph: &KnowledgeGraph) -> Result<()> {
        let path = self.path_for(key);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, sg.to_text(graph)).map_err(|e| KesError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| KesError::io(&path, e))
    }

    /// Cached extraction; computes and stores on a miss.
    pub fn extract(
        &self,
        extractor: &Extractor<'_>,
        premise: &str,
        hypothesis: &str,
    ) -> Result<ContextualSubgraph> {
        let key = Self::key(extractor, premise, hypothesis);
        if let Some(sg) = self.get(&key) {
            return Ok(sg);
        }
        let sg = extractor.extract(premise, hypothesis)?;
        self.put(&key, &sg, extractor.graph())?;
        Ok(sg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_store::GraphBuilder;
    use crate::subgraph::PprConfig;

    #[test]
    fn miss_then_hit_returns_same_graph() {
        let mut b = GraphBuilder::new();
        b.add_triple("dog", "isa", "animal");
        b.add_triple("animal", "hasa", "fur");
        let g = b.build();
        let ex = Extractor::new(&g, PprConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = SubgraphCache::open(dir.path()).unwrap();
        let first = cache.extract(&ex, "a dog", "an animal").unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let second = cache.extract(&ex, "a dog", "an animal").unwrap();
        assert_eq!(first, second);
        assert_eq!(first, ex.extract("a dog", "an animal").unwrap());

        let other = Extractor::new(&g, PprConfig::default().with_theta(0.8)).unwrap();
        assert_ne!(
            SubgraphCache::key(&ex, "a dog", "an animal"),
            SubgraphCache::key(&other, "a dog", "an animal")
        );
    }
}
