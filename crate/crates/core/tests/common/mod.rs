#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use kes_core::dataset::{load_dataset, Example};
use kes_core::kg_store::{load_embeddings, load_graph, ConceptId, EmbeddingTable, KnowledgeGraph};
use kes_core::rgcn::{EncoderParams, PostLinearPlacement};
use kes_core::subgraph::{ContextualSubgraph, EdgeType, SeedSet};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_graph() -> KnowledgeGraph {
    load_graph(fixture("kg.tsv")).unwrap()
}

pub fn fixture_table(graph: &KnowledgeGraph, seed: u64) -> EmbeddingTable {
    load_embeddings(fixture("node_embeddings.txt"), graph, 4, seed).unwrap()
}

pub fn fixture_pairs() -> Vec<Example> {
    load_dataset(fixture("pairs.jsonl"), 3).unwrap()
}

/// Random undirected graph over concepts `0..n` with a random nonempty seed.
pub fn random_ppr_instance<R: Rng>(
    rng: &mut R,
    max_nodes: usize,
) -> (Vec<ConceptId>, Vec<(ConceptId, ConceptId)>, SeedSet) {
    let n = rng.gen_range(1..=max_nodes);
    let nodes: Vec<ConceptId> = (0..n as u32).map(ConceptId).collect();
    let density = rng.gen_range(0.0..0.7);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                edges.push((nodes[a], nodes[b]));
            }
        }
    }
    let mut seed = SeedSet::default();
    while seed.is_empty() {
        for &c in &nodes {
            match rng.gen_range(0..6) {
                0 => {
                    seed.premise.insert(c);
                }
                1 => {
                    seed.hypothesis.insert(c);
                }
                _ => {}
            }
        }
    }
    (nodes, edges, seed)
}

/// `R = α (I − (1−α) A)⁻¹ p` by dense LU. `A` is column-stochastic over the
/// undirected edges; a node without neighbors sends its mass along `p`.
pub fn dense_ppr(
    nodes: &[ConceptId],
    edges: &[(ConceptId, ConceptId)],
    seed: &SeedSet,
    alpha: f64,
) -> Vec<f64> {
    let n = nodes.len();
    let pos = |c: ConceptId| nodes.iter().position(|&x| x == c).unwrap();
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        adj[pos(a)].insert(pos(b));
        adj[pos(b)].insert(pos(a));
    }
    let seeds: Vec<usize> = seed
        .union()
        .into_iter()
        .filter(|c| nodes.contains(c))
        .map(pos)
        .collect();
    let mut p = DVector::zeros(n);
    for &s in &seeds {
        p[s] = 1.0 / seeds.len() as f64;
    }
    let mut a = DMatrix::zeros(n, n);
    for v in 0..n {
        if adj[v].is_empty() {
            for u in 0..n {
                a[(u, v)] = p[u];
            }
        } else {
            for &u in &adj[v] {
                a[(u, v)] = 1.0 / adj[v].len() as f64;
            }
        }
    }
    let m = DMatrix::identity(n, n) - a * (1.0 - alpha);
    let r = m.lu().solve(&(p * alpha)).expect("nonsingular");
    r.iter().copied().collect()
}

fn to_dm(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn relu_dm(m: DMatrix<f64>) -> DMatrix<f64> {
    m.map(|x| x.max(0.0))
}

/// `D_r^{-1/2} A_r D_r^{-1/2}` with `A_r[dst, src] = 1` per edge and `D_r`
/// counting distinct neighbors in the symmetrized pattern.
pub fn dense_normalized_adjacency(sg: &ContextualSubgraph, kind: EdgeType) -> DMatrix<f64> {
    let n = sg.num_nodes();
    let mut a = DMatrix::zeros(n, n);
    let mut sym = DMatrix::<f64>::zeros(n, n);
    for e in sg.edges.iter().filter(|e| e.kind == kind) {
        a[(e.dst, e.src)] = 1.0;
        sym[(e.dst, e.src)] = 1.0;
        sym[(e.src, e.dst)] = 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = sym.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(inv_sqrt));
    &d * a * &d
}

/// Full encoder in dense matrix form; returns `g_out`.
pub fn dense_encode(params: &EncoderParams, sg: &ContextualSubgraph, x0: &Array2<f64>) -> Vec<f64> {
    let adj: Vec<DMatrix<f64>> = EdgeType::ALL
        .iter()
        .map(|&k| dense_normalized_adjacency(sg, k))
        .collect();
    let mut h = to_dm(x0);
    for layer in &params.layers {
        let mut acc = DMatrix::zeros(h.nrows(), layer.weights[0].ncols());
        for k in EdgeType::ALL {
            acc += &adj[k.index()] * &h * to_dm(&layer.weights[k.index()]);
        }
        h = relu_dm(acc);
    }
    let post = to_dm(&params.post_linear);
    let w = to_dm(&params.readout);
    let ones = DMatrix::from_element(1, h.nrows(), 1.0);
    let (s_g, node_states) = match params.placement {
        PostLinearPlacement::BeforeReadout => {
            let z = relu_dm(&h * post);
            (relu_dm(&ones * &z * w), z)
        }
        PostLinearPlacement::AfterReadout => (relu_dm(relu_dm(&ones * &h * w) * post), h),
    };
    let vp = sg.premise_supernode();
    let vh = sg.hypothesis_supernode();
    let mut out: Vec<f64> = s_g.iter().copied().collect();
    out.extend(node_states.row(vp).iter());
    out.extend(node_states.row(vh).iter());
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn array_max_abs_diff(a: &Array1<f64>, b: &[f64]) -> f64 {
    max_abs_diff(a.as_slice().unwrap(), b)
}
