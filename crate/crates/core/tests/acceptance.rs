//! End-to-end acceptance checks. Runs without the libtest harness so every
//! line is printed whether or not it passes; exits nonzero if any check fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    dense_encode, dense_ppr, fixture, fixture_graph, fixture_pairs, max_abs_diff, random_ppr_instance,
};
use kes_core::checkpoint;
use kes_core::config::RunConfig;
use kes_core::dataset::{Example, Label};
use kes_core::gradcheck::{gradcheck_suite, GRADCHECK_EPSILON, GRADCHECK_TOLERANCE};
use kes_core::kg_store::{load_embeddings, ConceptId, EmbeddingTable, GraphBuilder, KnowledgeGraph};
use kes_core::model::{ModelDims, ModelParams, PreparedExample};
use kes_core::pipeline::Pipeline;
use kes_core::rgcn::{encode_states, encode_subgraph, EncoderParams, PostLinearPlacement, Propagation};
use kes_core::subgraph::{
    augment, corpus_stats, ppr_scores, Extractor, FilteredSubgraph, PprConfig, SeedSet, THETA_GRID,
};
use kes_core::synthetic::{generate_ablation, AblationCorpus, AblationSpec};
use kes_core::text_encoder::WordEmbeddingTable;
use kes_core::trainer::{evaluate, train, TrainConfig, TrainOutcome};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type PprInstance = (Vec<ConceptId>, Vec<(ConceptId, ConceptId)>, SeedSet);

fn ppr_graphs() -> Vec<PprInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..100).map(|_| random_ppr_instance(&mut rng, 10)).collect()
}

fn ppr_oracle() -> Outcome {
    let graphs = ppr_graphs();
    let cfg = PprConfig::default();
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for (nodes, edges, seed) in &graphs {
        let r = ppr_scores(nodes, edges, seed, &cfg).unwrap();
        let want = dense_ppr(nodes, edges, seed, cfg.alpha);
        let got: Vec<f64> = nodes.iter().map(|&c| r.get(c).unwrap()).collect();
        worst = worst.max(max_abs_diff(&got, &want));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-8 && elapsed < Duration::from_secs(5),
        format!("100 graphs, max |iterative - direct| = {worst:.2e} (< 1e-8), {elapsed:.2?} (< 5s)"),
    )
}

fn ppr_conservation() -> Outcome {
    let cfg = PprConfig::default();
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (nodes, edges, seed) in ppr_graphs() {
        let r = ppr_scores(&nodes, &edges, &seed, &cfg).unwrap();
        worst = worst.max((r.total() - 1.0).abs());
        count += 1;
    }
    let g = fixture_graph();
    let ex = Extractor::new(&g, cfg).unwrap();
    for pair in fixture_pairs() {
        if let Some(r) = ex.score(&pair.premise, &pair.hypothesis).unwrap().scores {
            worst = worst.max((r.total() - 1.0).abs());
            count += 1;
        }
    }
    outcome(
        worst < 1e-9,
        format!("{count} graphs, max |sum - 1| = {worst:.2e} (< 1e-9)"),
    )
}

fn two_node() -> Outcome {
    let (a, b) = (ConceptId(0), ConceptId(1));
    let r = ppr_scores(&[a, b], &[(a, b)], &SeedSet::new([a], []), &PprConfig::default()).unwrap();
    let (ra, rb) = (r.get(a).unwrap(), r.get(b).unwrap());
    let err = (ra - 0.5405).abs().max((rb - 0.4595).abs());
    outcome(
        err < 1e-4,
        format!("a = {ra:.6}, b = {rb:.6}; max error vs (0.5405, 0.4595) = {err:.2e} (< 1e-4)"),
    )
}

/// 300 pairs of one to three random concept mentions over a random graph
/// with 60 concepts and 150 triples.
fn random_corpus() -> (KnowledgeGraph, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 60;
    let mut b = GraphBuilder::new();
    for i in 0..n {
        b.add_concept(&format!("w{i}"));
    }
    for _ in 0..150 {
        let (h, t) = (rng.gen_range(0..n), rng.gen_range(0..n));
        b.add_triple(&format!("w{h}"), "related_to", &format!("w{t}"));
    }
    let text = |rng: &mut ChaCha8Rng| {
        let k = rng.gen_range(1..4);
        (0..k)
            .map(|_| format!("w{}", rng.gen_range(0..n)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let examples = (0..300)
        .map(|_| Example::new(text(&mut rng), text(&mut rng), Label::Neutral))
        .collect();
    (b.build(), examples)
}

fn theta_monotonicity() -> Outcome {
    let g = fixture_graph();
    let ex = Extractor::new(&g, PprConfig::default()).unwrap();
    let mut nested = true;
    for pair in fixture_pairs() {
        let scored = ex.score(&pair.premise, &pair.hypothesis).unwrap();
        let sets: Vec<BTreeSet<ConceptId>> = THETA_GRID
            .iter()
            .map(|&t| scored.filter(t).unwrap().concepts().collect())
            .collect();
        nested &= sets.windows(2).all(|w| w[1].is_subset(&w[0]));
    }
    let (sg, examples) = random_corpus();
    let stats = corpus_stats(
        &Extractor::new(&sg, PprConfig::default()).unwrap(),
        &examples,
        &THETA_GRID,
        4,
    )
    .unwrap();
    let non_increasing = stats
        .windows(2)
        .all(|w| w[1].mean_new_nodes <= w[0].mean_new_nodes && w[1].mean_new_edges <= w[0].mean_new_edges);
    let strict = stats
        .windows(2)
        .all(|w| w[1].mean_new_nodes < w[0].mean_new_nodes && w[1].mean_new_edges < w[0].mean_new_edges);
    let table: Vec<String> = stats
        .iter()
        .map(|s| {
            format!(
                "{}: {:.3} nodes / {:.3} edges",
                s.theta, s.mean_new_nodes, s.mean_new_edges
            )
        })
        .collect();
    outcome(
        nested && non_increasing,
        format!(
            "fixture node sets nested: {nested}; random-graph corpus averages non-increasing: {non_increasing} (strictly: {strict}) [{}]",
            table.join(", ")
        ),
    )
}

fn random_small_subgraph(rng: &mut ChaCha8Rng) -> kes_core::subgraph::ContextualSubgraph {
    let n = rng.gen_range(0..=6);
    let ids: Vec<ConceptId> = (0..n as u32).map(ConceptId).collect();
    let mut seed = SeedSet::default();
    for &c in &ids {
        if rng.gen_bool(0.4) {
            seed.premise.insert(c);
        }
        if rng.gen_bool(0.4) {
            seed.hypothesis.insert(c);
        }
    }
    let density = rng.gen_range(0.0..0.7);
    let mut edges = Vec::new();
    for &a in &ids {
        for &b in &ids {
            if a != b && rng.gen_bool(density) {
                edges.push((a, b));
            }
        }
    }
    augment(
        &FilteredSubgraph {
            nodes: ids.clone(),
            scores: ids.iter().map(|&c| (c, 1.0)).collect(),
            edges,
            seed,
            theta: 0.2,
        },
        0.15,
    )
}

fn rgcn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0_f64;
    let mut max_nodes = 0;
    for i in 0..100 {
        let sg = random_small_subgraph(&mut rng);
        max_nodes = max_nodes.max(sg.num_nodes());
        let d = rng.gen_range(1..=8);
        let placement = if i % 2 == 0 {
            PostLinearPlacement::BeforeReadout
        } else {
            PostLinearPlacement::AfterReadout
        };
        let layers = rng.gen_range(1..=2);
        let params = EncoderParams::random(d, layers, placement, &mut rng);
        let x0 = Array2::from_shape_fn((sg.num_nodes(), d), |_| rng.gen_range(-1.0..1.0));
        let got = encode_states(&params, &Propagation::from_subgraph(&sg), &x0)
            .unwrap()
            .g_out();
        worst = worst.max(max_abs_diff(
            got.as_slice().unwrap(),
            &dense_encode(&params, &sg, &x0),
        ));
    }
    outcome(
        worst < 1e-9,
        format!("100 subgraphs (<= {max_nodes} nodes), max entry difference = {worst:.2e} (< 1e-9)"),
    )
}

fn relabeled(g: &KnowledgeGraph, rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let mut labels: Vec<&str> = g.concept_labels().map(|(_, l)| l).collect();
    labels.shuffle(rng);
    let mut b = GraphBuilder::new();
    for l in labels {
        b.add_concept(l);
    }
    let mut triples = g.triples().to_vec();
    triples.shuffle(rng);
    for t in triples {
        b.add_triple(
            g.concept_label(t.head).unwrap(),
            g.relation_label(t.relation).unwrap(),
            g.concept_label(t.tail).unwrap(),
        );
    }
    b.build()
}

fn permutation_invariance() -> Outcome {
    let g = fixture_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let params = EncoderParams::random(4, 2, PostLinearPlacement::BeforeReadout, &mut rng);
    let encode = |graph: &KnowledgeGraph, pair: &Example| {
        let table = load_embeddings(fixture("node_embeddings.txt"), graph, 4, 0).unwrap();
        let sg = Extractor::new(graph, PprConfig::default())
            .unwrap()
            .extract(&pair.premise, &pair.hypothesis)
            .unwrap();
        encode_subgraph(&params, &sg, &table).unwrap().g_out()
    };
    let mut worst = 0.0_f64;
    let pairs = fixture_pairs();
    for pair in &pairs {
        let base = encode(&g, pair);
        for _ in 0..20 {
            let out = encode(&relabeled(&g, &mut rng), pair);
            worst = worst.max(max_abs_diff(out.as_slice().unwrap(), base.as_slice().unwrap()));
        }
    }
    outcome(
        worst <= 1e-10,
        format!(
            "{} fixtures x 20 relabelings, max |g_out change| = {worst:.2e} (<= 1e-10)",
            pairs.len()
        ),
    )
}

fn width_contract() -> Outcome {
    let g = fixture_graph();
    let table = EmbeddingTable::fallback(&g, 300, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = EncoderParams::random(300, 1, PostLinearPlacement::BeforeReadout, &mut rng);
    let sg = Extractor::new(&g, PprConfig::default())
        .unwrap()
        .extract("A dog runs in the park.", "An animal is outside.")
        .unwrap();
    let width = encode_subgraph(&params, &sg, &table).unwrap().g_out().len();
    let dims = ModelDims::default();
    outcome(
        width == 900 && dims.classifier_input() == dims.text_dim + 900,
        format!(
            "d = 300 gives width(g_out) = {width}; classifier input = {}",
            dims.classifier_input()
        ),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let suite = gradcheck_suite(20, 0, GRADCHECK_EPSILON);
    let elapsed = start.elapsed();
    let tensors: usize = suite.reports.iter().map(|r| r.tensors.len()).sum();
    outcome(
        suite.max_rel_error < GRADCHECK_TOLERANCE && elapsed < Duration::from_secs(60),
        format!(
            "20 models, {tensors} tensors, eps = {GRADCHECK_EPSILON:e}, max relative error = {:.2e} (< 1e-4), {elapsed:.2?} (< 60s)",
            suite.max_rel_error
        ),
    )
}

/// Reduced widths for desk runtime; the optimizer settings are the defaults.
fn ablation_dims(use_graph: bool) -> ModelDims {
    ModelDims {
        word_dim: 16,
        text_dim: 16,
        graph_dim: 16,
        gcn_layers: 1,
        hidden_dim: 32,
        num_classes: 2,
        use_graph,
        post_linear: PostLinearPlacement::BeforeReadout,
    }
}

const ABLATION_THETA: f64 = 0.8;

fn prepare_ablation(
    corpus: &AblationCorpus,
    dims: &ModelDims,
) -> (Vec<PreparedExample>, Vec<PreparedExample>, Vec<PreparedExample>) {
    let graph = corpus.graph();
    let nodes = corpus.node_table(&graph, 0).unwrap();
    let words = WordEmbeddingTable::fallback_only(dims.word_dim, 0).unwrap();
    let ppr = PprConfig::default().with_theta(ABLATION_THETA);
    let pipe = Pipeline::new(Extractor::new(&graph, ppr).unwrap(), &nodes, &words);
    (
        pipe.prepare_all(&corpus.train, dims, 4).unwrap(),
        pipe.prepare_all(&corpus.dev, dims, 4).unwrap(),
        pipe.prepare_all(&corpus.test, dims, 4).unwrap(),
    )
}

fn knowledge_ablation() -> Outcome {
    let start = Instant::now();
    let corpus = generate_ablation(&AblationSpec::default()).unwrap();
    let cfg = TrainConfig {
        theta: ABLATION_THETA,
        ..TrainConfig::default()
    };
    let mut acc = [0.0; 2];
    for (slot, use_graph) in [(0, true), (1, false)] {
        let dims = ablation_dims(use_graph);
        let (tr, dv, te) = prepare_ablation(&corpus, &dims);
        let out = train(ModelParams::random(dims, cfg.seed), &tr, &dv, &cfg, 4).unwrap();
        acc[slot] = evaluate(&out.params, &te, 4).unwrap().accuracy;
    }
    let elapsed = start.elapsed();
    let chance = 0.5;
    outcome(
        acc[0] >= 0.9 && (acc[1] - chance).abs() <= 0.05 && elapsed < Duration::from_secs(600),
        format!(
            "{} test pairs: graph model {:.2}% (>= 90%), text-only {:.2}% (50% +/- 5), {elapsed:.2?} (< 10 min)",
            corpus.test.len(),
            100.0 * acc[0],
            100.0 * acc[1]
        ),
    )
}

fn small_run(jobs: usize) -> (TrainOutcome, String) {
    let corpus = generate_ablation(&AblationSpec {
        train_pairs: 130,
        dev_pairs: 40,
        test_pairs: 2,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let dims = ablation_dims(true);
    let (tr, dv, _) = prepare_ablation(&corpus, &dims);
    let cfg = TrainConfig {
        seed: 5,
        ..TrainConfig::default()
    };
    let out = train(ModelParams::random(dims, 5), &tr, &dv, &cfg, jobs).unwrap();
    let ck = checkpoint::to_json(&out.params).unwrap();
    (out, ck)
}

fn training_protocol() -> Outcome {
    let echo = RunConfig::default().to_text();
    let want = [
        "epochs = 140",
        "patience = 20",
        "batch_size = 64",
        "learning_rate = 0.0001",
    ];
    let echoed = want.iter().all(|w| echo.lines().any(|l| l == *w));
    let cfg = TrainConfig::default();
    let (out, _) = small_run(1);
    let n = out.history.len();
    let numbered = out.history.iter().enumerate().all(|(i, r)| r.epoch == i + 1);
    let stop_rule = if out.stopped_early {
        n < cfg.epochs && n == out.best_epoch + cfg.patience + 1
    } else {
        n == cfg.epochs
    };
    // 130 training examples in batches of 64: 64 + 64 + 2
    let steps_ok = out.optimizer_steps == 3 * n as u64;
    outcome(
        echoed && numbered && stop_rule && steps_ok,
        format!(
            "config echo lists {}: {echoed}; history {n} epochs (best {}, stopped early: {}) consistent with 140/20: {stop_rule}; {} Adam steps = 3 per epoch: {steps_ok}",
            want.join(", "),
            out.best_epoch,
            out.stopped_early,
            out.optimizer_steps
        ),
    )
}

fn determinism() -> Outcome {
    let (a, ck_a) = small_run(1);
    let (b, ck_b) = small_run(1);
    let (c, ck_c) = small_run(4);
    let same = a.history == b.history && ck_a == ck_b;
    let same_parallel_eval = a.history == c.history && ck_a == ck_c;
    outcome(
        same && same_parallel_eval,
        format!(
            "identical histories and checkpoint bytes ({} bytes) across two runs: {same}; with 4 evaluation threads: {same_parallel_eval}",
            ck_a.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("PPR oracle equivalence", ppr_oracle),
        ("PPR conservation", ppr_conservation),
        ("two-node analytic case", two_node),
        ("theta monotonicity", theta_monotonicity),
        ("R-GCN dense-oracle equivalence", rgcn_oracle),
        ("permutation invariance", permutation_invariance),
        ("width contract", width_contract),
        ("gradient check", gradient_check),
        ("synthetic knowledge ablation", knowledge_ablation),
        ("training protocol conformance", training_protocol),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
