//! Relational graph convolution over contextual subgraphs.
//!
//! One layer computes, for every node `u`,
//!
//! ```text
//! h'_u = ReLU( Σ_r Σ_{v -> u under r} W_r h_v / sqrt(deg_r(u) · deg_r(v)) )
//! ```
//!
//! where `deg_r(x)` is the number of distinct nodes joined to `x` by an
//! `r`-typed edge in either direction (a self-loop counts `x` once). Node
//! states are rows, weights are `d_in × d_out`, so a layer is
//! `ReLU(Σ_r Â_r X W_r)`.
//!
//! After the convolution layers a linear layer with ReLU is applied, then the
//! sum readout `s_G = ReLU((Σ_v h_v) W)`. The encoding is `[s_G; h_vp; h_vh]`.

use std::collections::BTreeSet;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KesError, Result};
use crate::kg_store::EmbeddingTable;
use crate::subgraph::{
    ContextualSubgraph, EdgeType, NodeKey, HYPOTHESIS_SUPERNODE_LABEL, PREMISE_SUPERNODE_LABEL,
};

pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub(crate) fn relu_mask(pre: &Array2<f64>) -> Array2<f64> {
    pre.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 })
}

/// Glorot-uniform `rows × cols` matrix.
pub(crate) fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound))
}

/// Where the extra linear layer sits relative to the readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostLinearPlacement {
    /// Applied to every node state after the convolution; readout and
    /// supernode states see its output.
    #[default]
    BeforeReadout,
    /// Applied to the pooled vector only.
    AfterReadout,
}

/// One weight matrix per edge type, indexed by [`EdgeType::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub weights: [Array2<f64>; 2],
}

impl GcnLayer {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        GcnLayer {
            weights: [Array2::zeros((d_in, d_out)), Array2::zeros((d_in, d_out))],
        }
    }

    pub fn weight(&self, kind: EdgeType) -> &Array2<f64> {
        &self.weights[kind.index()]
    }

    pub fn d_in(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weights[0].ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<GcnLayer>,
    /// `d × d`, followed by ReLU.
    pub post_linear: Array2<f64>,
    /// Readout matrix `W` in `s_G = ReLU((Σ_v h_v) W)`.
    pub readout: Array2<f64>,
    pub placement: PostLinearPlacement,
}

impl EncoderParams {
    pub fn zeros(dim: usize, num_layers: usize, placement: PostLinearPlacement) -> Self {
        EncoderParams {
            layers: (0..num_layers).map(|_| GcnLayer::zeros(dim, dim)).collect(),
            post_linear: Array2::zeros((dim, dim)),
            readout: Array2::zeros((dim, dim)),
            placement,
        }
    }

    pub fn random<R: Rng>(
        dim: usize,
        num_layers: usize,
        placement: PostLinearPlacement,
        rng: &mut R,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|_| GcnLayer {
                weights: [glorot(dim, dim, rng), glorot(dim, dim, rng)],
            })
            .collect();
        EncoderParams {
            layers,
            post_linear: glorot(dim, dim, rng),
            readout: glorot(dim, dim, rng),
            placement,
        }
    }

    pub fn dim(&self) -> usize {
        self.post_linear.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(self.dim(), GcnLayer::d_in)
    }

    /// Width of `g_out`.
    pub fn output_dim(&self) -> usize {
        3 * self.dim()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.dim();
        let square = |m: &Array2<f64>| m.nrows() == d && m.ncols() == d;
        if !square(&self.post_linear) || !square(&self.readout) {
            return Err(KesError::Config("post-linear and readout must be d × d".into()));
        }
        let mut width = self.input_dim();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer
                .weights
                .iter()
                .any(|w| w.nrows() != width || w.ncols() != layer.d_out())
            {
                return Err(KesError::Config(format!(
                    "layer {i} weights have inconsistent shapes"
                )));
            }
            width = layer.d_out();
        }
        if width != d {
            return Err(KesError::Config(
                "last layer width differs from encoder dim".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized message lists of one subgraph, one per edge type. Each entry is
/// `(dst, src, 1/c)`, sorted by `(dst, src)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub num_nodes: usize,
    pub messages: [Vec<(usize, usize, f64)>; 2],
    pub premise: usize,
    pub hypothesis: usize,
}

impl Propagation {
    pub fn from_subgraph(sg: &ContextualSubgraph) -> Self {
        let n = sg.num_nodes();
        let mut messages: [Vec<(usize, usize, f64)>; 2] = [Vec::new(), Vec::new()];
        for kind in EdgeType::ALL {
            let mut touching: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
            let edges: BTreeSet<(usize, usize)> = sg.edges_of(kind).map(|e| (e.dst, e.src)).collect();
            for &(dst, src) in &edges {
                touching[dst].insert(src);
                touching[src].insert(dst);
            }
            messages[kind.index()] = edges
                .into_iter()
                .map(|(dst, src)| {
                    let c = ((touching[dst].len() * touching[src].len()) as f64).sqrt();
                    (dst, src, 1.0 / c)
                })
                .collect();
        }
        Propagation {
            num_nodes: n,
            messages,
            premise: sg.premise_supernode(),
            hypothesis: sg.hypothesis_supernode(),
        }
    }

    /// `Â_r X`.
    fn aggregate(&self, kind: EdgeType, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for &(dst, src, coef) in &self.messages[kind.index()] {
            out.row_mut(dst).scaled_add(coef, &x.row(src));
        }
        out
    }

    /// `Â_rᵀ G`.
    fn scatter_back(&self, kind: EdgeType, g: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(g.raw_dim());
        for &(dst, src, coef) in &self.messages[kind.index()] {
            out.row_mut(src).scaled_add(coef, &g.row(dst));
        }
        out
    }
}

/// Initial states: table rows for concepts, reserved-label fallback vectors for
/// the supernodes.
pub fn init_node_states(sg: &ContextualSubgraph, table: &EmbeddingTable) -> Array2<f64> {
    let mut states = Array2::zeros((sg.num_nodes(), table.dim()));
    for (i, node) in sg.nodes.iter().enumerate() {
        match node.key {
            NodeKey::Concept(c) => states.row_mut(i).assign(&table.vector(c)),
            NodeKey::PremiseSupernode => states
                .row_mut(i)
                .assign(&table.fallback_for(PREMISE_SUPERNODE_LABEL)),
            NodeKey::HypothesisSupernode => states
                .row_mut(i)
                .assign(&table.fallback_for(HYPOTHESIS_SUPERNODE_LABEL)),
        }
    }
    states
}

pub fn rgcn_layer_forward(layer: &GcnLayer, prop: &Propagation, states: &Array2<f64>) -> Array2<f64> {
    layer_forward(layer, prop, states).1.mapv(relu)
}

/// Returns the aggregated inputs per edge type and the pre-activation.
fn layer_forward(
    layer: &GcnLayer,
    prop: &Propagation,
    states: &Array2<f64>,
) -> ([Array2<f64>; 2], Array2<f64>) {
    let agg = EdgeType::ALL.map(|kind| prop.aggregate(kind, states));
    let mut pre = Array2::zeros((states.nrows(), layer.d_out()));
    for kind in EdgeType::ALL {
        pre += &agg[kind.index()].dot(layer.weight(kind));
    }
    (agg, pre)
}

/// Sum of rows in ascending row order.
pub(crate) fn sum_rows(states: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut acc = Array1::zeros(states.ncols());
    for row in states.rows() {
        acc += &row;
    }
    acc
}

/// `ReLU((Σ_v h_v) W)`.
pub fn readout(weight: &Array2<f64>, states: &Array2<f64>) -> Array1<f64> {
    sum_rows(states.view()).dot(weight).mapv(relu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoding {
    pub s_g: Array1<f64>,
    pub h_p: Array1<f64>,
    pub h_h: Array1<f64>,
}

impl GraphEncoding {
    /// `[s_G; h_vp; h_vh]`.
    pub fn g_out(&self) -> Array1<f64> {
        concatenate![Axis(0), self.s_g, self.h_p, self.h_h]
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GraphTrace {
    /// `states[l]` is the input of layer `l`; the last entry is the
    /// convolution output.
    states: Vec<Array2<f64>>,
    aggregated: Vec<[Array2<f64>; 2]>,
    pre: Vec<Array2<f64>>,
    /// Pre-activation of the post-linear layer.
    post_pre: Array2<f64>,
    /// Output of the post-linear layer (BeforeReadout) or its input pooled
    /// vector (AfterReadout) reshaped to one row.
    post_out: Array2<f64>,
    pooled: Array1<f64>,
    readout_pre: Array1<f64>,
}

pub(crate) fn forward_traced(
    params: &EncoderParams,
    prop: &Propagation,
    x0: &Array2<f64>,
) -> (GraphEncoding, GraphTrace) {
    let mut states = vec![x0.clone()];
    let mut aggregated = Vec::with_capacity(params.layers.len());
    let mut pres = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (agg, pre) = layer_forward(layer, prop, states.last().unwrap());
        states.push(pre.mapv(relu));
        aggregated.push(agg);
        pres.push(pre);
    }
    let conv = states.last().unwrap();
    match params.placement {
        PostLinearPlacement::BeforeReadout => {
            let post_pre = conv.dot(&params.post_linear);
            let post_out = post_pre.mapv(relu);
            let pooled = sum_rows(post_out.view());
            let readout_pre = pooled.dot(&params.readout);
            let enc = GraphEncoding {
                s_g: readout_pre.mapv(relu),
                h_p: post_out.row(prop.premise).to_owned(),
                h_h: post_out.row(prop.hypothesis).to_owned(),
            };
            let trace = GraphTrace {
                states,
                aggregated,
                pre: pres,
                post_pre,
                post_out,
                pooled,
                readout_pre,
            };
            (enc, trace)
        }
        PostLinearPlacement::AfterReadout => {
            let pooled = sum_rows(conv.view());
            let readout_pre = pooled.dot(&params.readout);
            let q = readout_pre.mapv(relu).insert_axis(Axis(0));
            let post_pre = q.dot(&params.post_linear);
            let enc = GraphEncoding {
                s_g: post_pre.row(0).mapv(relu),
                h_p: conv.row(prop.premise).to_owned(),
                h_h: conv.row(prop.hypothesis).to_owned(),
            };
            let trace = GraphTrace {
                states,
                aggregated,
                pre: pres,
                post_pre,
                post_out: q,
                pooled,
                readout_pre,
            };
            (enc, trace)
        }
    }
}

/// Gradients of the encoder parameters given `∂L/∂g_out`.
pub(crate) fn backward(
    params: &EncoderParams,
    prop: &Propagation,
    trace: &GraphTrace,
    d_g_out: &Array1<f64>,
    grads: &mut EncoderParams,
) {
    let d = params.dim();
    let d_s = d_g_out.slice(s![0..d]);
    let d_hp = d_g_out.slice(s![d..2 * d]);
    let d_hh = d_g_out.slice(s![2 * d..3 * d]);
    let conv = trace.states.last().unwrap();

    let mut d_conv: Array2<f64>;
    match params.placement {
        PostLinearPlacement::BeforeReadout => {
            // s = ReLU(pooled W_ro), pooled = Σ rows of P
            let d_ro_pre = &d_s * &trace.readout_pre.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            grads.readout += &outer(&trace.pooled, &d_ro_pre);
            let d_pooled = params.readout.dot(&d_ro_pre);
            let mut d_post = Array2::zeros(trace.post_out.raw_dim());
            for mut row in d_post.rows_mut() {
                row.assign(&d_pooled);
            }
            d_post.row_mut(prop.premise).scaled_add(1.0, &d_hp);
            d_post.row_mut(prop.hypothesis).scaled_add(1.0, &d_hh);
            let d_post_pre = d_post * relu_mask(&trace.post_pre);
            grads.post_linear += &conv.t().dot(&d_post_pre);
            d_conv = d_post_pre.dot(&params.post_linear.t());
        }
        PostLinearPlacement::AfterReadout => {
            let d_post_pre = (&d_s * &trace.post_pre.row(0).mapv(|z| if z > 0.0 { 1.0 } else { 0.0 }))
                .insert_axis(Axis(0));
            grads.post_linear += &trace.post_out.t().dot(&d_post_pre);
            let d_q = d_post_pre.row(0).dot(&params.post_linear.t());
            let d_ro_pre = &d_q * &trace.readout_pre.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            grads.readout += &outer(&trace.pooled, &d_ro_pre);
            let d_pooled = params.readout.dot(&d_ro_pre);
            d_conv = Array2::zeros(conv.raw_dim());
            for mut row in d_conv.rows_mut() {
                row.assign(&d_pooled);
            }
            d_conv.row_mut(prop.premise).scaled_add(1.0, &d_hp);
            d_conv.row_mut(prop.hypothesis).scaled_add(1.0, &d_hh);
        }
    }

    for l in (0..params.layers.len()).rev() {
        let d_pre = &d_conv * &relu_mask(&trace.pre[l]);
        let layer = &params.layers[l];
        let mut d_in = Array2::zeros(trace.states[l].raw_dim());
        for kind in EdgeType::ALL {
            let i = kind.index();
            grads.layers[l].weights[i] += &trace.aggregated[l][i].t().dot(&d_pre);
            if l > 0 {
                d_in += &prop.scatter_back(kind, &d_pre.dot(&layer.weights[i].t()));
            }
        }
        d_conv = d_in;
    }
}

pub(crate) fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Full encoder forward pass for one subgraph.
pub fn encode_subgraph(
    params: &EncoderParams,
    sg: &ContextualSubgraph,
    table: &EmbeddingTable,
) -> Result<GraphEncoding> {
    params.check()?;
    if table.dim() != params.input_dim() {
        return Err(KesError::Config(format!(
            "embedding dim {} does not match encoder input dim {}",
            table.dim(),
            params.input_dim()
        )));
    }
    let prop = Propagation::from_subgraph(sg);
    let x0 = init_node_states(sg, table);
    encode_states(params, &prop, &x0)
}

/// Encodes explicit initial node states, one row per node of `prop`.
pub fn encode_states(params: &EncoderParams, prop: &Propagation, x0: &Array2<f64>) -> Result<GraphEncoding> {
    params.check()?;
    if x0.nrows() != prop.num_nodes || x0.ncols() != params.input_dim() {
        return Err(KesError::Config(format!(
            "node states are {}x{}, expected {}x{}",
            x0.nrows(),
            x0.ncols(),
            prop.num_nodes,
            params.input_dim()
        )));
    }
    Ok(forward_traced(params, prop, x0).0)
}
