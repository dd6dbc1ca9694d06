//! The combined model: text encoding and graph encoding are concatenated and
//! fed to a one-hidden-layer feedforward classifier.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KesError, Result};
use crate::rgcn::{self, glorot, outer, relu, EncoderParams, PostLinearPlacement, Propagation};
use crate::text_encoder::BaselineEncoderParams;

/// Shapes of every parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Word-embedding width of the text branch.
    pub word_dim: usize,
    /// Text encoding width `K`.
    pub text_dim: usize,
    /// Graph embedding width `d`; `g_out` has width `3d`.
    pub graph_dim: usize,
    pub gcn_layers: usize,
    /// Classifier hidden width.
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// `false` builds the text-only baseline without a graph branch.
    pub use_graph: bool,
    pub post_linear: PostLinearPlacement,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            word_dim: 300,
            text_dim: 300,
            graph_dim: 300,
            gcn_layers: 1,
            hidden_dim: 300,
            num_classes: 3,
            use_graph: true,
            post_linear: PostLinearPlacement::BeforeReadout,
        }
    }
}

impl ModelDims {
    pub fn classifier_input(&self) -> usize {
        self.text_dim + if self.use_graph { 3 * self.graph_dim } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.num_classes) {
            return Err(KesError::Config(format!(
                "num_classes must be 2 or 3, got {}",
                self.num_classes
            )));
        }
        let sizes = [
            ("word_dim", self.word_dim),
            ("text_dim", self.text_dim),
            ("graph_dim", self.graph_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(KesError::Config(format!("{name} must be positive")));
        }
        Ok(())
    }
}

/// `scores = ReLU(f H + b_h) O + b_o`. Biases are `1 × n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub hidden: Array2<f64>,
    pub hidden_bias: Array2<f64>,
    pub output: Array2<f64>,
    pub output_bias: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub text: BaselineEncoderParams,
    pub graph: Option<EncoderParams>,
    pub classifier: ClassifierParams,
}

/// Gradients with the same shapes as the parameters they belong to.
pub type GradientSet = ModelParams;

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let input = dims.classifier_input();
        ModelParams {
            dims,
            text: BaselineEncoderParams::zeros(dims.word_dim, dims.text_dim),
            graph: dims
                .use_graph
                .then(|| EncoderParams::zeros(dims.graph_dim, dims.gcn_layers, dims.post_linear)),
            classifier: ClassifierParams {
                hidden: Array2::zeros((input, dims.hidden_dim)),
                hidden_bias: Array2::zeros((1, dims.hidden_dim)),
                output: Array2::zeros((dims.hidden_dim, dims.num_classes)),
                output_bias: Array2::zeros((1, dims.num_classes)),
            },
        }
    }

    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn random(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b65_735f_696e_6974);
        Self::random_with(dims, &mut rng)
    }

    pub fn random_with<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let input = dims.classifier_input();
        let text = BaselineEncoderParams::random(dims.word_dim, dims.text_dim, rng);
        let graph = dims
            .use_graph
            .then(|| EncoderParams::random(dims.graph_dim, dims.gcn_layers, dims.post_linear, rng));
        let classifier = ClassifierParams {
            hidden: glorot(input, dims.hidden_dim, rng),
            hidden_bias: Array2::zeros((1, dims.hidden_dim)),
            output: glorot(dims.hidden_dim, dims.num_classes, rng),
            output_bias: Array2::zeros((1, dims.num_classes)),
        };
        ModelParams {
            dims,
            text,
            graph,
            classifier,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Every parameter tensor with its stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![("text.projection".to_string(), &self.text.projection)];
        if let Some(g) = &self.graph {
            for (l, layer) in g.layers.iter().enumerate() {
                out.push((format!("graph.layer{l}.kg"), &layer.weights[0]));
                out.push((format!("graph.layer{l}.self_loop"), &layer.weights[1]));
            }
            out.push(("graph.post_linear".into(), &g.post_linear));
            out.push(("graph.readout".into(), &g.readout));
        }
        let c = &self.classifier;
        out.push(("classifier.hidden".into(), &c.hidden));
        out.push(("classifier.hidden_bias".into(), &c.hidden_bias));
        out.push(("classifier.output".into(), &c.output));
        out.push(("classifier.output_bias".into(), &c.output_bias));
        out
    }

    /// Mutable view of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.text.projection];
        if let Some(g) = &mut self.graph {
            for layer in &mut g.layers {
                let [kg, self_loop] = &mut layer.weights;
                out.push(kg);
                out.push(self_loop);
            }
            out.push(&mut g.post_linear);
            out.push(&mut g.readout);
        }
        let c = &mut self.classifier;
        out.push(&mut c.hidden);
        out.push(&mut c.hidden_bias);
        out.push(&mut c.output);
        out.push(&mut c.output_bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks tensor shapes against `dims`.
    pub fn check(&self) -> Result<()> {
        self.dims.validate()?;
        let expected = ModelParams::zeros(self.dims);
        let mine = self.tensors();
        let theirs = expected.tensors();
        if mine.len() != theirs.len() {
            return Err(KesError::Config(
                "parameter groups do not match model dims".into(),
            ));
        }
        for ((name, a), (_, b)) in mine.iter().zip(&theirs) {
            if a.shape() != b.shape() {
                return Err(KesError::Config(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            *t *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        let others: Vec<Array2<f64>> = other.tensors().into_iter().map(|(_, t)| t.clone()).collect();
        for (t, o) in self.tensors_mut().into_iter().zip(&others) {
            *t += o;
        }
    }
}

/// Graph-branch input of one example: message lists and initial node states.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub propagation: Propagation,
    pub states: Array2<f64>,
}

/// An example with every fixed (non-trainable) input precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    /// `[mean(premise words); mean(hypothesis words)]`.
    pub text_input: Array1<f64>,
    pub graph: Option<GraphInput>,
    pub label: usize,
}

struct Trace {
    t_out: Array1<f64>,
    graph: Option<rgcn::GraphTrace>,
    features: Array1<f64>,
    hidden_pre: Array1<f64>,
    hidden: Array1<f64>,
}

fn forward_traced(params: &ModelParams, ex: &PreparedExample) -> (Array1<f64>, Trace) {
    let t_out = params.text.project(&ex.text_input);
    let (features, graph_trace) = match (&params.graph, &ex.graph) {
        (Some(gp), Some(gi)) => {
            let (enc, trace) = rgcn::forward_traced(gp, &gi.propagation, &gi.states);
            (concatenate![Axis(0), t_out, enc.g_out()], Some(trace))
        }
        (None, _) => (t_out.clone(), None),
        (Some(_), None) => panic!("graph-branch model given an example without graph input"),
    };
    let c = &params.classifier;
    let hidden_pre = features.dot(&c.hidden) + c.hidden_bias.row(0);
    let hidden = hidden_pre.mapv(relu);
    let scores = hidden.dot(&c.output) + c.output_bias.row(0);
    (
        scores,
        Trace {
            t_out,
            graph: graph_trace,
            features,
            hidden_pre,
            hidden,
        },
    )
}

/// Raw class scores.
pub fn forward(params: &ModelParams, ex: &PreparedExample) -> Array1<f64> {
    forward_traced(params, ex).0
}

pub fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exp = scores.mapv(|x| (x - max).exp());
    let z = exp.sum();
    exp / z
}

/// Softmax cross-entropy with max subtraction.
pub fn loss(scores: &Array1<f64>, gold: usize) -> Result<f64> {
    if gold >= scores.len() {
        return Err(KesError::Data(format!(
            "gold class {gold} out of range for {} classes",
            scores.len()
        )));
    }
    let max = scores.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let log_z = scores.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    Ok(log_z - scores[gold])
}

/// Lowest index among the maximal scores.
pub fn argmax(scores: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Gradients of an arbitrary upstream signal `∂L/∂scores`.
pub fn backward_from(params: &ModelParams, ex: &PreparedExample, d_scores: &Array1<f64>) -> GradientSet {
    let (_, trace) = forward_traced(params, ex);
    let mut grads = params.zeros_like();
    accumulate_backward(params, ex, &trace, d_scores, &mut grads);
    grads
}

fn accumulate_backward(
    params: &ModelParams,
    ex: &PreparedExample,
    trace: &Trace,
    d_scores: &Array1<f64>,
    grads: &mut GradientSet,
) {
    let c = &params.classifier;
    let gc = &mut grads.classifier;
    gc.output += &outer(&trace.hidden, d_scores);
    gc.output_bias.row_mut(0).scaled_add(1.0, d_scores);
    let d_hidden = c.output.dot(d_scores);
    let d_hidden_pre = d_hidden * trace.hidden_pre.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    gc.hidden += &outer(&trace.features, &d_hidden_pre);
    gc.hidden_bias.row_mut(0).scaled_add(1.0, &d_hidden_pre);
    let d_features = c.hidden.dot(&d_hidden_pre);

    let k = params.dims.text_dim;
    let d_t = d_features.slice(s![0..k]).to_owned();
    params.text.backward(&ex.text_input, &d_t, &mut grads.text);
    debug_assert_eq!(trace.t_out.len(), k);

    if let (Some(gp), Some(gi), Some(gt), Some(gg)) =
        (&params.graph, &ex.graph, &trace.graph, &mut grads.graph)
    {
        let d_g = d_features.slice(s![k..]).to_owned();
        rgcn::backward(gp, &gi.propagation, gt, &d_g, gg);
    }
}

/// Loss, scores and exact gradients for one example.
pub fn backward(params: &ModelParams, ex: &PreparedExample) -> (f64, Array1<f64>, GradientSet) {
    let mut grads = params.zeros_like();
    let (loss, scores) = backward_into(params, ex, 1.0, &mut grads);
    (loss, scores, grads)
}

/// Adds `weight · ∂loss/∂θ` into `grads`; returns the loss and raw scores.
pub fn backward_into(
    params: &ModelParams,
    ex: &PreparedExample,
    weight: f64,
    grads: &mut GradientSet,
) -> (f64, Array1<f64>) {
    let (scores, trace) = forward_traced(params, ex);
    let loss = loss(&scores, ex.label).expect("prepared labels are in range");
    let mut d_scores = softmax(&scores);
    d_scores[ex.label] -= 1.0;
    d_scores *= weight;
    accumulate_backward(params, ex, &trace, &d_scores, grads);
    (loss, scores)
}
