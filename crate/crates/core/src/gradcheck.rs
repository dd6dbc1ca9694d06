//! Central finite-difference verification of the analytic gradients.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::kg_store::ConceptId;
use crate::model::{backward, forward, loss, GraphInput, ModelDims, ModelParams, PreparedExample};
use crate::rgcn::{PostLinearPlacement, Propagation};
use crate::subgraph::{augment, FilteredSubgraph, SeedSet};

/// Pass threshold on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPSILON: f64 = 1e-4;
/// Denominator floor of the relative error. Below it the check is absolute.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares every analytic gradient entry with `(L(θ+ε) − L(θ−ε)) / 2ε`.
pub fn check_gradients(params: &ModelParams, ex: &PreparedExample, eps: f64) -> GradCheckReport {
    let (_, _, grads) = backward(params, ex);
    let analytic: Vec<(String, Array2<f64>)> =
        grads.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(analytic.len());
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        let mut max_rel = 0.0_f64;
        let mut max_abs = 0.0_f64;
        for idx in 0..grad.len() {
            let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
            let original = probe.tensors()[ti].1[[r, c]];
            probe.tensors_mut()[ti][[r, c]] = original + eps;
            let plus = loss(&forward(&probe, ex), ex.label).expect("label in range");
            probe.tensors_mut()[ti][[r, c]] = original - eps;
            let minus = loss(&forward(&probe, ex), ex.label).expect("label in range");
            probe.tensors_mut()[ti][[r, c]] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad[[r, c]];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            entries: grad.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    GradCheckReport {
        tensors,
        max_rel_error,
    }
}

/// Dimensions of the tiny gradient-check model.
pub fn tiny_dims() -> ModelDims {
    ModelDims {
        word_dim: 4,
        text_dim: 4,
        graph_dim: 4,
        gcn_layers: 1,
        hidden_dim: 4,
        num_classes: 3,
        use_graph: true,
        post_linear: PostLinearPlacement::BeforeReadout,
    }
}

/// Random tiny model plus a random example whose subgraph has three concept
/// nodes and the two supernodes. Odd seeds use two convolution layers and
/// every third seed places the linear layer after the readout, so all
/// backward paths get exercised.
pub fn random_tiny_instance(seed: u64) -> (ModelParams, PreparedExample) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims {
        gcn_layers: if seed % 2 == 1 { 2 } else { 1 },
        post_linear: if seed % 3 == 2 {
            PostLinearPlacement::AfterReadout
        } else {
            PostLinearPlacement::BeforeReadout
        },
        ..tiny_dims()
    };
    let params = ModelParams::random_with(dims, &mut rng);

    let concepts: Vec<ConceptId> = (0..3).map(ConceptId).collect();
    let mut seed_set = SeedSet::default();
    for &c in &concepts {
        match rng.gen_range(0..4) {
            0 => {
                seed_set.premise.insert(c);
            }
            1 => {
                seed_set.hypothesis.insert(c);
            }
            2 => {
                seed_set.premise.insert(c);
                seed_set.hypothesis.insert(c);
            }
            _ => {}
        }
    }
    let mut edges = Vec::new();
    for &a in &concepts {
        for &b in &concepts {
            if a != b && rng.gen_bool(0.4) {
                edges.push((a, b));
            }
        }
    }
    let filtered = FilteredSubgraph {
        nodes: concepts.clone(),
        scores: concepts.iter().map(|&c| (c, rng.gen_range(0.2..=1.0))).collect(),
        edges,
        seed: seed_set,
        theta: 0.2,
    };
    let sg = augment(&filtered, 0.15);
    let states = Array2::from_shape_fn((sg.num_nodes(), dims.graph_dim), |_| rng.gen_range(-1.0..1.0));
    let text_input = Array1::from_shape_fn(2 * dims.word_dim, |_| rng.gen_range(-1.0..1.0));
    let ex = PreparedExample {
        text_input,
        graph: Some(GraphInput {
            propagation: Propagation::from_subgraph(&sg),
            states,
        }),
        label: rng.gen_range(0..dims.num_classes),
    };
    (params, ex)
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seeds: Vec<u64>,
    pub reports: Vec<GradCheckReport>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub epsilon: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Runs [`check_gradients`] on `models` random tiny instances.
pub fn gradcheck_suite(models: usize, base_seed: u64, eps: f64) -> SuiteReport {
    let seeds: Vec<u64> = (0..models as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let reports: Vec<GradCheckReport> = seeds
        .iter()
        .map(|&s| {
            let (p, ex) = random_tiny_instance(s);
            check_gradients(&p, &ex, eps)
        })
        .collect();
    let max_rel_error = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    SuiteReport {
        seeds,
        reports,
        max_rel_error,
        tolerance: GRADCHECK_TOLERANCE,
        epsilon: eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgraph::EdgeType;

    #[test]
    fn tiny_instances_pass() {
        let suite = gradcheck_suite(6, 100, GRADCHECK_EPSILON);
        for r in &suite.reports {
            for t in &r.tensors {
                assert!(
                    t.max_rel_error < GRADCHECK_TOLERANCE,
                    "{} rel {} abs {}",
                    t.name,
                    t.max_rel_error,
                    t.max_abs_error
                );
            }
        }
        assert!(suite.passed());
    }

    #[test]
    fn unused_edge_type_has_zero_gradient() {
        // supernodes only: no kg edges at all
        let (mut params, mut ex) = random_tiny_instance(4);
        let sg = augment(
            &FilteredSubgraph {
                nodes: vec![],
                scores: Default::default(),
                edges: vec![],
                seed: SeedSet::default(),
                theta: 0.2,
            },
            0.15,
        );
        let g = ex.graph.as_mut().unwrap();
        g.propagation = Propagation::from_subgraph(&sg);
        g.states = Array2::from_elem((2, 4), 0.3);
        params.dims.gcn_layers = 1;
        let (_, _, grads) = backward(&params, &ex);
        let kg = &grads.graph.as_ref().unwrap().layers[0].weights[EdgeType::Kg.index()];
        assert!(kg.iter().all(|&x| x == 0.0));
    }
}
