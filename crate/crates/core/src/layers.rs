//! Node/edge encoders, GIN message passing, GraphNorm and the layer stack.

use std::sync::Arc;

use crate::autodiff::{dropout, Mode, ParamId, ParamStore, Segments, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::GraphBatch;
use crate::rng::RngStream;

/// Bound for embedding-row initialization.
pub const EMBEDDING_INIT: f64 = 0.1;
pub const GRAPHNORM_EPS: f64 = 1e-5;

/// Parameter factory: every tensor gets its own random stream derived from
/// the model seed and its name, so the initial value of a parameter does not
/// depend on which other parameters exist.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub seed: u64,
}

impl Init<'_> {
    pub fn uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64) -> ParamId {
        let mut rng = RngStream::derive(self.seed, &format!("init/{name}"));
        let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
        self.store.insert(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn constant(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> ParamId {
        self.store.insert(name, Tensor::full(rows, cols, value))
    }

    /// Weight `fan_in x fan_out` uniform in `±1/sqrt(fan_in)`.
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
        self.uniform(name, fan_in, fan_out, 1.0 / (fan_in as f64).sqrt())
    }
}

/// Two-layer perceptron `relu(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn new(init: &mut Init, prefix: &str, input: usize, hidden: usize, output: usize) -> Self {
        let bound1 = 1.0 / (input as f64).sqrt();
        let bound2 = 1.0 / (hidden as f64).sqrt();
        Mlp {
            w1: init.linear(&format!("{prefix}.w1"), input, hidden),
            b1: init.uniform(&format!("{prefix}.b1"), 1, hidden, bound1),
            w2: init.linear(&format!("{prefix}.w2"), hidden, output),
            b2: init.uniform(&format!("{prefix}.b2"), 1, output, bound2),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.relu(h);
        let h = tape.matmul(h, w2)?;
        tape.add_row(h, b2)
    }
}

/// Initial node representation: per-column embedding tables summed, or a
/// single shared trainable vector for featureless graphs.
#[derive(Clone, Debug)]
pub enum NodeEncoder {
    Shared(ParamId),
    Tables(Vec<ParamId>),
}

impl NodeEncoder {
    pub fn new(init: &mut Init, vocab: &[usize], dim: usize) -> Self {
        if vocab.is_empty() {
            NodeEncoder::Shared(init.uniform("node_enc.shared", 1, dim, EMBEDDING_INIT))
        } else {
            NodeEncoder::Tables(
                vocab
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| init.uniform(&format!("node_enc.col{k}"), v, dim, EMBEDDING_INIT))
                    .collect(),
            )
        }
    }
}

/// Per-layer edge feature encoder (same two shapes as [`NodeEncoder`]).
#[derive(Clone, Debug)]
pub enum EdgeEncoder {
    Constant(ParamId),
    Tables(Vec<ParamId>),
}

impl EdgeEncoder {
    pub fn new(init: &mut Init, prefix: &str, vocab: &[usize], dim: usize) -> Self {
        if vocab.is_empty() {
            EdgeEncoder::Constant(init.uniform(&format!("{prefix}.const"), 1, dim, EMBEDDING_INIT))
        } else {
            EdgeEncoder::Tables(
                vocab
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        init.uniform(&format!("{prefix}.col{k}"), v, dim, EMBEDDING_INIT)
                    })
                    .collect(),
            )
        }
    }
}

fn sum_lookups(
    tape: &mut Tape,
    store: &ParamStore,
    tables: &[ParamId],
    codes: &[Arc<[usize]>],
    what: &str,
) -> Result<Var> {
    if tables.len() != codes.len() {
        return Err(Error::Config(format!(
            "{what} encoder has {} tables but the batch has {} feature columns",
            tables.len(),
            codes.len()
        )));
    }
    let mut acc: Option<Var> = None;
    for (&t, c) in tables.iter().zip(codes) {
        let table = tape.param(store, t);
        let rows = tape.gather_rows(table, c.clone()).map_err(|_| {
            Error::Dataset(format!(
                "{what} feature code out of range for a table of {} rows",
                store.value(t).rows()
            ))
        })?;
        acc = Some(match acc {
            None => rows,
            Some(a) => tape.add(a, rows)?,
        });
    }
    acc.ok_or_else(|| Error::Config(format!("{what} encoder has no tables")))
}

/// `[N_total x d]` initial node representations.
pub fn encode_nodes(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &NodeEncoder,
    batch: &GraphBatch,
) -> Result<Var> {
    match enc {
        NodeEncoder::Shared(p) => {
            if !batch.node_feat_cols.is_empty() {
                return Err(Error::Config(
                    "model expects featureless nodes but the batch has node features".into(),
                ));
            }
            let v = tape.param(store, *p);
            let idx: Arc<[usize]> = vec![0; batch.num_nodes()].into();
            tape.gather_rows(v, idx)
        }
        NodeEncoder::Tables(tables) => sum_lookups(tape, store, tables, &batch.node_feat_cols, "node"),
    }
}

/// `m_n = sum over inbound edges (n' -> n) of relu(h_n' + f_edge(e))`.
/// Nodes without inbound edges get a zero row.
pub fn gin_message(
    tape: &mut Tape,
    store: &ParamStore,
    h_prev: Var,
    batch: &GraphBatch,
    edge_enc: &EdgeEncoder,
) -> Result<Var> {
    if tape.shape(h_prev).0 != batch.num_nodes() {
        return Err(Error::Config(format!(
            "gin_message: {} node rows for a batch of {} nodes",
            tape.shape(h_prev).0,
            batch.num_nodes()
        )));
    }
    let from = tape.gather_rows(h_prev, batch.src.clone())?;
    let with_edge = match edge_enc {
        EdgeEncoder::Constant(p) => {
            let c = tape.param(store, *p);
            tape.add_row(from, c)?
        }
        EdgeEncoder::Tables(tables) => {
            let e = sum_lookups(tape, store, tables, &batch.edge_feat_cols, "edge")?;
            tape.add(from, e)?
        }
    };
    let act = tape.relu(with_edge);
    tape.scatter_add_rows(act, batch.dst.clone(), batch.num_nodes())
}

#[derive(Clone, Debug)]
pub struct GinLayerParams {
    pub eps: ParamId,
    pub mlp: Mlp,
    pub edge_encoder: EdgeEncoder,
}

impl GinLayerParams {
    /// `eps` starts at 0; the MLP is `d -> 2d -> d`.
    pub fn new(init: &mut Init, layer: usize, edge_vocab: &[usize], dim: usize) -> Self {
        let prefix = format!("gin.{layer}");
        GinLayerParams {
            eps: init.constant(&format!("{prefix}.eps"), 1, 1, 0.0),
            mlp: Mlp::new(init, &format!("{prefix}.mlp"), dim, 2 * dim, dim),
            edge_encoder: EdgeEncoder::new(init, &format!("{prefix}.edge"), edge_vocab, dim),
        }
    }
}

/// `h_n = mlp((1 + eps) h_prev_n + m_n)`.
pub fn gin_update(
    tape: &mut Tape,
    store: &ParamStore,
    h_prev: Var,
    m: Var,
    params: &GinLayerParams,
) -> Result<Var> {
    let eps = tape.param(store, params.eps);
    let scaled = tape.scale_by(h_prev, eps)?;
    let self_term = tape.add(h_prev, scaled)?;
    let pre = tape.add(self_term, m)?;
    params.mlp.forward(tape, store, pre)
}

#[derive(Clone, Debug)]
pub struct GraphNormParams {
    pub alpha: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl GraphNormParams {
    /// alpha = gamma = 1, beta = 0.
    pub fn new(init: &mut Init, layer: usize, dim: usize) -> Self {
        let prefix = format!("gin.{layer}.norm");
        GraphNormParams {
            alpha: init.constant(&format!("{prefix}.alpha"), 1, dim, 1.0),
            gamma: init.constant(&format!("{prefix}.gamma"), 1, dim, 1.0),
            beta: init.constant(&format!("{prefix}.beta"), 1, dim, 0.0),
        }
    }
}

/// Per-graph normalization with a learnable mean scale:
/// `gamma * (h - alpha*mu) / sqrt(var + eps) + beta`, statistics per graph
/// and feature.
pub fn graphnorm(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    segments: &Segments,
    params: &GraphNormParams,
) -> Result<Var> {
    segments.check_nonempty()?;
    let ids: Arc<[usize]> = segments.ids().into();
    let inv: Arc<[f64]> = segments.counts().iter().map(|&c| 1.0 / c as f64).collect();
    let g = segments.num_segments();

    let sums = tape.scatter_add_rows(h, ids.clone(), g)?;
    let mean = tape.scale_rows(sums, inv.clone())?;
    let mean_b = tape.gather_rows(mean, ids.clone())?;
    let alpha = tape.param(store, params.alpha);
    let shift = tape.mul_row(mean_b, alpha)?;
    let centered = tape.sub(h, shift)?;

    let sq = tape.mul(centered, centered)?;
    let sq_sums = tape.scatter_add_rows(sq, ids.clone(), g)?;
    let var = tape.scale_rows(sq_sums, inv)?;
    let var = tape.add_scalar(var, GRAPHNORM_EPS);
    let inv_std = tape.powf(var, -0.5);
    let inv_std_b = tape.gather_rows(inv_std, ids)?;
    let normed = tape.mul(centered, inv_std_b)?;

    let gamma = tape.param(store, params.gamma);
    let beta = tape.param(store, params.beta);
    let scaled = tape.mul_row(normed, gamma)?;
    tape.add_row(scaled, beta)
}

/// One message-passing layer with its optional normalization.
#[derive(Clone, Debug)]
pub struct GinBlock {
    pub gin: GinLayerParams,
    pub norm: Option<GraphNormParams>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub node: NodeEncoder,
    pub blocks: Vec<GinBlock>,
    pub dropout: f64,
}

/// `h^(0)` plus the output of every layer.
#[derive(Clone, Debug)]
pub struct LayerwiseNodeReps {
    pub input: Var,
    pub layers: Vec<Var>,
}

/// `h0 = encode_nodes`; per layer: message -> update -> [graphnorm] ->
/// dropout. No dropout is applied to `h0`.
pub fn forward_stack(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &Encoder,
    batch: &GraphBatch,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<LayerwiseNodeReps> {
    if enc.blocks.is_empty() {
        return Err(Error::Config("the GNN needs at least one layer".into()));
    }
    let input = encode_nodes(tape, store, &enc.node, batch)?;
    let mut h = input;
    let mut layers = Vec::with_capacity(enc.blocks.len());
    for block in &enc.blocks {
        let m = gin_message(tape, store, h, batch, &block.gin.edge_encoder)?;
        let mut next = gin_update(tape, store, h, m, &block.gin)?;
        if let Some(norm) = &block.norm {
            next = graphnorm(tape, store, next, &batch.segments, norm)?;
        }
        next = dropout(tape, next, enc.dropout, mode, rng)?;
        layers.push(next);
        h = next;
    }
    Ok(LayerwiseNodeReps { input, layers })
}
