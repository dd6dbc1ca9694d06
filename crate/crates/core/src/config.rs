//! Run configuration: a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! and falls back to its default. An empty value for a path key leaves the
//! path unset. `theta_grid` is a comma-separated list. Floats are written in
//! shortest round-trip form, so `parse(to_text(c)) == c` for every config.
//!
//! | key | default |
//! |---|---|
//! | `kg_triples`, `kg_embeddings`, `word_embeddings`, `stoplist` | unset |
//! | `train_data`, `dev_data`, `test_data` | unset |
//! | `cache_dir`, `checkpoint_dir` | unset |
//! | `alpha` | 0.15 |
//! | `tol` | 1e-10 |
//! | `max_iter` | 1000 |
//! | `theta` | 0.2 |
//! | `theta_grid` | 0.2,0.4,0.6,0.8 |
//! | `max_link_len` | 4 |
//! | `word_dim`, `text_dim`, `graph_dim`, `hidden_dim` | 300 |
//! | `gcn_layers` | 1 |
//! | `num_classes` | 3 |
//! | `use_graph` | true |
//! | `post_linear` | before_readout |
//! | `epochs` | 140 |
//! | `patience` | 20 |
//! | `batch_size` | 64 |
//! | `learning_rate` | 0.0001 |
//! | `seed` | 0 |
//! | `jobs` | 1 |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{KesError, Result};
use crate::linker::DEFAULT_MAX_LINK_LEN;
use crate::model::ModelDims;
use crate::rgcn::PostLinearPlacement;
use crate::subgraph::{PprConfig, THETA_GRID};
use crate::trainer::TrainConfig;

pub const PATH_KEYS: [&str; 9] = [
    "kg_triples",
    "kg_embeddings",
    "word_embeddings",
    "stoplist",
    "train_data",
    "dev_data",
    "test_data",
    "cache_dir",
    "checkpoint_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kg_triples: Option<PathBuf>,
    pub kg_embeddings: Option<PathBuf>,
    pub word_embeddings: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub dev_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,

    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub theta: f64,
    pub theta_grid: Vec<f64>,
    pub max_link_len: usize,

    pub dims: ModelDims,

    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ppr = PprConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            kg_triples: None,
            kg_embeddings: None,
            word_embeddings: None,
            stoplist: None,
            train_data: None,
            dev_data: None,
            test_data: None,
            cache_dir: None,
            checkpoint_dir: None,
            alpha: ppr.alpha,
            tol: ppr.tol,
            max_iter: ppr.max_iter,
            theta: ppr.theta,
            theta_grid: THETA_GRID.to_vec(),
            max_link_len: DEFAULT_MAX_LINK_LEN,
            dims: ModelDims::default(),
            epochs: train.epochs,
            patience: train.patience,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            seed: train.seed,
            jobs: 1,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("bad value {value:?} for {key}: {e}"))
}

impl RunConfig {
    pub fn ppr(&self) -> PprConfig {
        PprConfig {
            alpha: self.alpha,
            tol: self.tol,
            max_iter: self.max_iter,
            theta: self.theta,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            theta: self.theta,
            seed: self.seed,
        }
    }

    fn path_slot(&mut self, key: &str) -> Option<&mut Option<PathBuf>> {
        Some(match key {
            "kg_triples" => &mut self.kg_triples,
            "kg_embeddings" => &mut self.kg_embeddings,
            "word_embeddings" => &mut self.word_embeddings,
            "stoplist" => &mut self.stoplist,
            "train_data" => &mut self.train_data,
            "dev_data" => &mut self.dev_data,
            "test_data" => &mut self.test_data,
            "cache_dir" => &mut self.cache_dir,
            "checkpoint_dir" => &mut self.checkpoint_dir,
            _ => return None,
        })
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        match key {
            "kg_triples" => self.kg_triples.as_deref(),
            "kg_embeddings" => self.kg_embeddings.as_deref(),
            "word_embeddings" => self.word_embeddings.as_deref(),
            "stoplist" => self.stoplist.as_deref(),
            "train_data" => self.train_data.as_deref(),
            "dev_data" => self.dev_data.as_deref(),
            "test_data" => self.test_data.as_deref(),
            "cache_dir" => self.cache_dir.as_deref(),
            "checkpoint_dir" => self.checkpoint_dir.as_deref(),
            _ => None,
        }
    }

    /// Sets one key from its text form. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        if let Some(slot) = self.path_slot(key) {
            *slot = (!value.is_empty()).then(|| PathBuf::from(value));
            return Ok(());
        }
        match key {
            "alpha" => self.alpha = parse_value(key, value)?,
            "tol" => self.tol = parse_value(key, value)?,
            "max_iter" => self.max_iter = parse_value(key, value)?,
            "theta" => self.theta = parse_value(key, value)?,
            "theta_grid" => {
                self.theta_grid = value
                    .split(',')
                    .map(|v| parse_value(key, v.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "max_link_len" => self.max_link_len = parse_value(key, value)?,
            "word_dim" => self.dims.word_dim = parse_value(key, value)?,
            "text_dim" => self.dims.text_dim = parse_value(key, value)?,
            "graph_dim" => self.dims.graph_dim = parse_value(key, value)?,
            "gcn_layers" => self.dims.gcn_layers = parse_value(key, value)?,
            "hidden_dim" => self.dims.hidden_dim = parse_value(key, value)?,
            "num_classes" => self.dims.num_classes = parse_value(key, value)?,
            "use_graph" => self.dims.use_graph = parse_value(key, value)?,
            "post_linear" => {
                self.dims.post_linear = match value {
                    "before_readout" => PostLinearPlacement::BeforeReadout,
                    "after_readout" => PostLinearPlacement::AfterReadout,
                    _ => return Err(format!("bad value {value:?} for post_linear")),
                }
            }
            "epochs" => self.epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "jobs" => self.jobs = parse_value(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(KesError::parse(origin, lineno + 1, "expected key = value"));
            };
            cfg.set(key.trim(), value)
                .map_err(|m| KesError::parse(origin, lineno + 1, m))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KesError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let post = match self.dims.post_linear {
            PostLinearPlacement::BeforeReadout => "before_readout",
            PostLinearPlacement::AfterReadout => "after_readout",
        };
        let grid: Vec<String> = self.theta_grid.iter().map(|t| format!("{t:?}")).collect();
        vec![
            ("kg_triples", path(&self.kg_triples)),
            ("kg_embeddings", path(&self.kg_embeddings)),
            ("word_embeddings", path(&self.word_embeddings)),
            ("stoplist", path(&self.stoplist)),
            ("train_data", path(&self.train_data)),
            ("dev_data", path(&self.dev_data)),
            ("test_data", path(&self.test_data)),
            ("cache_dir", path(&self.cache_dir)),
            ("checkpoint_dir", path(&self.checkpoint_dir)),
            ("alpha", format!("{:?}", self.alpha)),
            ("tol", format!("{:?}", self.tol)),
            ("max_iter", self.max_iter.to_string()),
            ("theta", format!("{:?}", self.theta)),
            ("theta_grid", grid.join(",")),
            ("max_link_len", self.max_link_len.to_string()),
            ("word_dim", self.dims.word_dim.to_string()),
            ("text_dim", self.dims.text_dim.to_string()),
            ("graph_dim", self.dims.graph_dim.to_string()),
            ("gcn_layers", self.dims.gcn_layers.to_string()),
            ("hidden_dim", self.dims.hidden_dim.to_string()),
            ("num_classes", self.dims.num_classes.to_string()),
            ("use_graph", self.dims.use_graph.to_string()),
            ("post_linear", post.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Checks value ranges. Path existence is checked by [`require_paths`](Self::require_paths).
    pub fn validate(&self) -> Result<()> {
        self.ppr().validate()?;
        self.dims.validate()?;
        self.train_config().validate()?;
        if self.max_link_len == 0 {
            return Err(KesError::Config("max_link_len must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(KesError::Config("jobs must be positive".into()));
        }
        if self.theta_grid.is_empty() || self.theta_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(KesError::Config("theta_grid values must lie in [0,1]".into()));
        }
        Ok(())
    }

    /// Requires that each named path key is set and exists on disk.
    pub fn require_paths(&self, keys: &[&str]) -> Result<()> {
        for key in keys {
            let Some(p) = self.path(key) else {
                return Err(KesError::Config(format!("{key} is not set")));
            };
            if !p.exists() {
                return Err(KesError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
                ));
            }
        }
        Ok(())
    }
}
