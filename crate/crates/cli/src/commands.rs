use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kes_core::cache::SubgraphCache;
use kes_core::checkpoint;
use kes_core::config::{RunConfig, PATH_KEYS};
use kes_core::dataset::{load_dataset, Example, Label};
use kes_core::gradcheck::{gradcheck_suite, GRADCHECK_EPSILON};
use kes_core::kg_store::{load_embeddings, load_graph, EmbeddingTable, KnowledgeGraph};
use kes_core::linker::StopList;
use kes_core::model::{forward, softmax, ModelParams, PreparedExample};
use kes_core::pipeline::Pipeline;
use kes_core::subgraph::{corpus_stats, Extractor};
use kes_core::synthetic::{generate_ablation, AblationSpec};
use kes_core::text_encoder::WordEmbeddingTable;
use kes_core::trainer::{evaluate, train as run_training, TrainOutcome};
use kes_core::{KesError, Result};
use serde_json::{json, Value};

/// Write errors on stdout (e.g. a closed pipe) are ignored.
fn emit_text(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit(v: &Value) {
    emit_text(&format!(
        "{}\n",
        serde_json::to_string_pretty(v).expect("json values serialize")
    ));
}

fn config_echo(cfg: &RunConfig) -> Value {
    Value::Object(
        cfg.entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v)))
            .collect(),
    )
}

/// Fails fast on unset required paths and on any configured input file that
/// does not exist. Output directories are created on demand instead.
fn check_paths(cfg: &RunConfig, required: &[&str]) -> Result<()> {
    cfg.require_paths(required)?;
    let inputs: Vec<&str> = PATH_KEYS
        .into_iter()
        .filter(|k| !matches!(*k, "cache_dir" | "checkpoint_dir"))
        .filter(|k| cfg.path(k).is_some())
        .collect();
    cfg.require_paths(&inputs)
}

struct Resources {
    graph: KnowledgeGraph,
    stoplist: StopList,
}

struct Tables {
    nodes: EmbeddingTable,
    words: WordEmbeddingTable,
}

fn load_resources(cfg: &RunConfig) -> Result<Resources> {
    let graph = load_graph(cfg.path("kg_triples").expect("checked by check_paths"))?;
    let stoplist = match cfg.path("stoplist") {
        Some(p) => StopList::load(p)?,
        None => StopList::default(),
    };
    Ok(Resources { graph, stoplist })
}

fn load_tables(cfg: &RunConfig, graph: &KnowledgeGraph) -> Result<Tables> {
    let nodes = match cfg.path("kg_embeddings") {
        Some(p) => load_embeddings(p, graph, cfg.dims.graph_dim, cfg.seed)?,
        None => EmbeddingTable::fallback(graph, cfg.dims.graph_dim, cfg.seed)?,
    };
    let words = match cfg.path("word_embeddings") {
        Some(p) => WordEmbeddingTable::load(p, cfg.dims.word_dim, cfg.seed)?,
        None => WordEmbeddingTable::fallback_only(cfg.dims.word_dim, cfg.seed)?,
    };
    Ok(Tables { nodes, words })
}

fn extractor<'a>(res: &'a Resources, cfg: &RunConfig, theta: f64) -> Result<Extractor<'a>> {
    Extractor::new(&res.graph, cfg.ppr().with_theta(theta))?
        .with_stoplist(res.stoplist.clone())
        .with_max_link_len(cfg.max_link_len)
}

fn cache(cfg: &RunConfig) -> Result<Option<SubgraphCache>> {
    cfg.path("cache_dir").map(SubgraphCache::open).transpose()
}

fn pipeline<'a>(res: &'a Resources, tables: &'a Tables, cfg: &RunConfig, theta: f64) -> Result<Pipeline<'a>> {
    let p = Pipeline::new(extractor(res, cfg, theta)?, &tables.nodes, &tables.words);
    Ok(match cache(cfg)? {
        Some(c) => p.with_cache(c),
        None => p,
    })
}

fn data_path(cfg: &RunConfig, explicit: Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = explicit
        .or_else(|| cfg.path(key).map(Path::to_path_buf))
        .ok_or_else(|| KesError::Config(format!("no dataset given and {key} is not set")))?;
    if !p.exists() {
        return Err(KesError::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    Ok(p)
}

pub fn build_graph(cfg: &RunConfig) -> Result<bool> {
    check_paths(cfg, &["kg_triples"])?;
    let graph = load_graph(cfg.path("kg_triples").unwrap())?;
    let coverage = match cfg.path("kg_embeddings") {
        Some(p) => Some(load_embeddings(p, &graph, cfg.dims.graph_dim, cfg.seed)?.coverage()),
        None => None,
    };
    let s = graph.summary();
    emit(&json!({
        "concepts": s.concepts,
        "relations": s.relations,
        "triples": s.triples,
        "embedding_dim": cfg.dims.graph_dim,
        "embedding_coverage": coverage,
        "fingerprint": graph.fingerprint(),
    }));
    Ok(true)
}

pub fn extract(cfg: &RunConfig, premise: &str, hypothesis: &str) -> Result<bool> {
    check_paths(cfg, &["kg_triples"])?;
    let res = load_resources(cfg)?;
    let ex = extractor(&res, cfg, cfg.theta)?;
    let sg = match cache(cfg)? {
        Some(c) => c.extract(&ex, premise, hypothesis)?,
        None => ex.extract(premise, hypothesis)?,
    };
    emit_text(&sg.to_text(&res.graph));
    Ok(true)
}

pub fn stats(cfg: &RunConfig, data: Option<PathBuf>) -> Result<bool> {
    check_paths(cfg, &["kg_triples"])?;
    let path = data_path(cfg, data, "train_data")?;
    let examples = load_dataset(&path, cfg.dims.num_classes)?;
    let res = load_resources(cfg)?;
    let rows = corpus_stats(
        &extractor(&res, cfg, cfg.theta)?,
        &examples,
        &cfg.theta_grid,
        cfg.jobs,
    )?;
    emit(&json!({
        "data": path,
        "examples": examples.len(),
        "rows": rows,
    }));
    Ok(true)
}

struct Splits {
    train: Vec<PreparedExample>,
    dev: Vec<PreparedExample>,
    test: Option<Vec<PreparedExample>>,
}

fn prepare_splits(
    res: &Resources,
    tables: &Tables,
    cfg: &RunConfig,
    theta: f64,
    raw: &[Vec<Example>; 3],
) -> Result<Splits> {
    let pipe = pipeline(res, tables, cfg, theta)?;
    let prep = |d: &[Example]| pipe.prepare_all(d, &cfg.dims, cfg.jobs);
    Ok(Splits {
        train: prep(&raw[0])?,
        dev: prep(&raw[1])?,
        test: if cfg.test_data.is_some() {
            Some(prep(&raw[2])?)
        } else {
            None
        },
    })
}

fn load_splits(cfg: &RunConfig) -> Result<[Vec<Example>; 3]> {
    let load = |key: &str| match cfg.path(key) {
        Some(p) => load_dataset(p, cfg.dims.num_classes),
        None => Ok(Vec::new()),
    };
    Ok([load("train_data")?, load("dev_data")?, load("test_data")?])
}

fn training_report(out: &TrainOutcome) -> Value {
    json!({
        "history": out.history,
        "best_epoch": out.best_epoch,
        "best_dev_acc": out.best_dev_acc,
        "stopped_early": out.stopped_early,
        "optimizer_steps": out.optimizer_steps,
    })
}

fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| KesError::io(dir, e))?;
    }
    checkpoint::save(params, path)
}

pub fn train(cfg: &RunConfig, out: Option<PathBuf>) -> Result<bool> {
    check_paths(cfg, &["kg_triples", "train_data", "dev_data"])?;
    let res = load_resources(cfg)?;
    let tables = load_tables(cfg, &res.graph)?;
    let raw = load_splits(cfg)?;
    let splits = prepare_splits(&res, &tables, cfg, cfg.theta, &raw)?;
    let outcome = run_training(
        ModelParams::random(cfg.dims, cfg.seed),
        &splits.train,
        &splits.dev,
        &cfg.train_config(),
        cfg.jobs,
    )?;
    let ckpt = out.or_else(|| cfg.checkpoint_dir.as_ref().map(|d| d.join("model.json")));
    if let Some(p) = &ckpt {
        save_checkpoint(&outcome.params, p)?;
    } else {
        log::warn!("no --out and no checkpoint_dir: trained parameters are not saved");
    }
    let test = match &splits.test {
        Some(t) => Some(evaluate(&outcome.params, t, cfg.jobs)?),
        None => None,
    };
    let mut report = training_report(&outcome);
    report["config"] = config_echo(cfg);
    report["checkpoint"] = json!(ckpt);
    report["test"] = json!(test);
    emit(&report);
    Ok(true)
}

pub fn eval(cfg: &RunConfig, ckpt: &Path, data: Option<PathBuf>) -> Result<bool> {
    check_paths(cfg, &["kg_triples"])?;
    let path = data_path(cfg, data, "test_data")?;
    let params = checkpoint::load_compatible(ckpt, &cfg.dims)?;
    let res = load_resources(cfg)?;
    let tables = load_tables(cfg, &res.graph)?;
    let examples = load_dataset(&path, cfg.dims.num_classes)?;
    let prepared = pipeline(&res, &tables, cfg, cfg.theta)?.prepare_all(&examples, &cfg.dims, cfg.jobs)?;
    let e = evaluate(&params, &prepared, cfg.jobs)?;
    emit(&json!({
        "data": path,
        "accuracy": e.accuracy,
        "correct": e.correct,
        "total": e.total,
        "labels": Label::all(cfg.dims.num_classes),
        "confusion": e.confusion,
    }));
    Ok(true)
}

pub fn predict(cfg: &RunConfig, ckpt: &Path, premise: &str, hypothesis: &str) -> Result<bool> {
    check_paths(cfg, &["kg_triples"])?;
    let params = checkpoint::load_compatible(ckpt, &cfg.dims)?;
    let res = load_resources(cfg)?;
    let tables = load_tables(cfg, &res.graph)?;
    // the label is ignored by the forward pass
    let ex = Example::new(premise, hypothesis, Label::Entails);
    let pipe = pipeline(&res, &tables, cfg, cfg.theta)?;
    pipe.check_dims(&cfg.dims)?;
    let probs = softmax(&forward(&params, &pipe.prepare(&ex, &cfg.dims)?));
    let labels = Label::all(cfg.dims.num_classes);
    // first maximum wins, as in evaluation
    let best = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
    let table: serde_json::Map<String, Value> = labels
        .iter()
        .zip(probs.iter())
        .map(|(l, &p)| (l.to_string(), json!(p)))
        .collect();
    emit(&json!({
        "label": labels[best],
        "probabilities": table,
    }));
    Ok(true)
}

pub fn gradcheck(cfg: &RunConfig, models: usize) -> Result<bool> {
    if models == 0 {
        return Err(KesError::Argument("--models must be positive".into()));
    }
    let suite = gradcheck_suite(models, cfg.seed, GRADCHECK_EPSILON);
    let per_model: Vec<Value> = suite
        .seeds
        .iter()
        .zip(&suite.reports)
        .map(|(s, r)| json!({"seed": s, "max_rel_error": r.max_rel_error}))
        .collect();
    emit(&json!({
        "models": models,
        "epsilon": suite.epsilon,
        "tolerance": suite.tolerance,
        "max_rel_error": suite.max_rel_error,
        "passed": suite.passed(),
        "per_model": per_model,
    }));
    Ok(suite.passed())
}

pub fn sweep(cfg: &RunConfig) -> Result<bool> {
    check_paths(cfg, &["kg_triples", "train_data", "dev_data"])?;
    let res = load_resources(cfg)?;
    let tables = load_tables(cfg, &res.graph)?;
    let raw = load_splits(cfg)?;
    let mut rows = Vec::new();
    for &theta in &cfg.theta_grid {
        let splits = prepare_splits(&res, &tables, cfg, theta, &raw)?;
        let tc = kes_core::trainer::TrainConfig {
            theta,
            ..cfg.train_config()
        };
        let outcome = run_training(
            ModelParams::random(cfg.dims, cfg.seed),
            &splits.train,
            &splits.dev,
            &tc,
            cfg.jobs,
        )?;
        let ckpt = cfg
            .checkpoint_dir
            .as_ref()
            .map(|d| d.join(format!("model_theta_{theta}.json")));
        if let Some(p) = &ckpt {
            save_checkpoint(&outcome.params, p)?;
        }
        let test = match &splits.test {
            Some(t) => Some(evaluate(&outcome.params, t, cfg.jobs)?),
            None => None,
        };
        log::info!("theta {theta}: best dev accuracy {:.4}", outcome.best_dev_acc);
        let mut row = training_report(&outcome);
        row["theta"] = json!(theta);
        row["checkpoint"] = json!(ckpt);
        row["test"] = json!(test);
        rows.push(row);
    }
    emit(&json!({
        "config": config_echo(cfg),
        "runs": rows,
    }));
    Ok(true)
}

pub fn synth(cfg: &RunConfig, out: &Path, sizes: [usize; 3], max_leaves: usize, dim: usize) -> Result<bool> {
    let corpus = generate_ablation(&AblationSpec {
        train_pairs: sizes[0],
        dev_pairs: sizes[1],
        test_pairs: sizes[2],
        max_leaves,
        dim,
        seed: cfg.seed,
    })?;
    fs::create_dir_all(out).map_err(|e| KesError::io(out, e))?;
    // absolute paths so the config works from any directory
    let out = &fs::canonicalize(out).map_err(|e| KesError::io(out, e))?;
    let paths = corpus.write_dir(out)?;
    let mut run = RunConfig {
        kg_triples: Some(paths.kg_triples.clone()),
        kg_embeddings: Some(paths.kg_embeddings.clone()),
        train_data: Some(paths.train.clone()),
        dev_data: Some(paths.dev.clone()),
        test_data: Some(paths.test.clone()),
        checkpoint_dir: Some(out.join("checkpoints")),
        theta: 0.8,
        ..RunConfig::default()
    };
    run.dims.word_dim = dim;
    run.dims.text_dim = dim;
    run.dims.graph_dim = dim;
    run.dims.hidden_dim = 2 * dim;
    run.dims.num_classes = 2;
    let conf = out.join("kes.conf");
    fs::write(&conf, run.to_text()).map_err(|e| KesError::io(&conf, e))?;
    emit(&json!({
        "config": conf,
        "concepts": corpus.graph().num_concepts(),
        "triples": corpus.triples.len(),
        "train": corpus.train.len(),
        "dev": corpus.dev.len(),
        "test": corpus.test.len(),
    }));
    Ok(true)
}
