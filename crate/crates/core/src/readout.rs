//! Graph readouts: per-layer attention pooling with MLAP aggregation, naive
//! last-layer pooling, and jumping-knowledge (JK) aggregation followed by a
//! single pooling.

use std::sync::Arc;

use crate::autodiff::{segment_softmax, ParamStore, Segments, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{Init, Mlp};

/// Scoring network `in -> d -> 1` with relu.
#[derive(Clone, Debug)]
pub struct AttentionGate {
    pub mlp: Mlp,
}

impl AttentionGate {
    pub fn new(init: &mut Init, index: usize, input: usize, hidden: usize) -> Self {
        AttentionGate {
            mlp: Mlp::new(init, &format!("gate.{index}"), input, hidden, 1),
        }
    }

    /// `[N x 1]` attention scores.
    pub fn scores(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        let expected = store.value(self.mlp.w1).rows();
        if tape.shape(h).1 != expected {
            return Err(Error::Config(format!(
                "attention gate expects {expected} input columns, got {}",
                tape.shape(h).1
            )));
        }
        self.mlp.forward(tape, store, h)
    }

    /// Same computation as [`AttentionGate::scores`] on plain tensors, used
    /// where no gradient is needed.
    pub fn scores_eval(&self, store: &ParamStore, h: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(h.clone());
        let s = self.scores(&mut tape, store, x)?;
        Ok(tape.value(s).data().to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlapMode {
    Sum,
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JkMode {
    Sum,
    Concat,
    MaxPool,
}

/// Graph-level outputs of a readout. `per_layer` is only populated by MLAP.
#[derive(Clone, Debug)]
pub struct LayerwiseGraphReps {
    pub per_layer: Vec<Var>,
    pub aggregated: Var,
}

/// `h_G = sum_n softmax_G(gate(h))_n h_n` for every graph in the batch.
pub fn attention_pool(
    tape: &mut Tape,
    store: &ParamStore,
    h: Var,
    segments: &Arc<Segments>,
    gate: &AttentionGate,
) -> Result<Var> {
    let scores = gate.scores(tape, store, h)?;
    tape.segment_softmax_weighted_sum(h, scores, segments.clone())
}

/// Combines layer-wise graph representations. `weights` (an `L x 1`
/// tensor on the tape) is required for [`MlapMode::Weighted`].
pub fn mlap_aggregate(
    tape: &mut Tape,
    layer_reps: &[Var],
    mode: MlapMode,
    weights: Option<Var>,
) -> Result<Var> {
    if layer_reps.is_empty() {
        return Err(Error::Config("mlap_aggregate: no layers".into()));
    }
    match mode {
        MlapMode::Sum => sum_vars(tape, layer_reps),
        MlapMode::Weighted => {
            let w = weights.ok_or_else(|| {
                Error::Config("weighted aggregation needs a weight vector".into())
            })?;
            if tape.shape(w) != (layer_reps.len(), 1) {
                return Err(Error::Config(format!(
                    "weight vector has shape {:?}, expected ({}, 1)",
                    tape.shape(w),
                    layer_reps.len()
                )));
            }
            let mut terms = Vec::with_capacity(layer_reps.len());
            for (l, &h) in layer_reps.iter().enumerate() {
                let wl = tape.gather_rows(w, vec![l].into())?;
                terms.push(tape.scale_by(h, wl)?);
            }
            sum_vars(tape, &terms)
        }
    }
}

fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Result<Var> {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = tape.add(acc, v)?;
    }
    Ok(acc)
}

/// Per-node aggregation over layers.
pub fn jk_aggregate(tape: &mut Tape, node_layer_reps: &[Var], mode: JkMode) -> Result<Var> {
    if node_layer_reps.is_empty() {
        return Err(Error::Config("jk_aggregate: no layers".into()));
    }
    match mode {
        JkMode::Sum => sum_vars(tape, node_layer_reps),
        JkMode::Concat if node_layer_reps.len() == 1 => Ok(node_layer_reps[0]),
        JkMode::Concat => tape.concat_cols(node_layer_reps),
        JkMode::MaxPool => tape.max_over(node_layer_reps),
    }
}

/// Attention pooling over JK-aggregated node representations.
pub fn jk_readout(
    tape: &mut Tape,
    store: &ParamStore,
    h_jk: Var,
    segments: &Arc<Segments>,
    gate: &AttentionGate,
) -> Result<Var> {
    attention_pool(tape, store, h_jk, segments, gate)
}

/// Attention pooling over the last layer only.
pub fn naive_readout(
    tape: &mut Tape,
    store: &ParamStore,
    h_last: Var,
    segments: &Arc<Segments>,
    gate: &AttentionGate,
) -> Result<Var> {
    attention_pool(tape, store, h_last, segments, gate)
}

/// Checks that MLAP-Sum with every layer's attention pinned to the JK-Sum
/// attention `a = softmax_G(gate(sum_l h^(l)))` reproduces the JK-Sum
/// readout. Returns the largest absolute difference.
///
/// The MLAP side is evaluated with plain loops over `a`; the JK side goes
/// through the tape primitives.
pub fn mlap_jk_equivalence_check(
    store: &ParamStore,
    node_layer_reps: &[Tensor],
    segments: &Arc<Segments>,
    jk_gate: &AttentionGate,
) -> Result<f64> {
    let Some(first) = node_layer_reps.first() else {
        return Err(Error::Config("equivalence check needs at least one layer".into()));
    };
    let (n, d) = first.shape();
    if node_layer_reps.iter().any(|t| t.shape() != (n, d)) || segments.num_rows() != n {
        return Err(Error::Config("equivalence check: inconsistent shapes".into()));
    }

    // MLAP side: sum_l sum_n a_n h_n^(l)
    let mut summed = Tensor::zeros(n, d);
    for t in node_layer_reps {
        summed.add_assign(t);
    }
    let scores = jk_gate.scores_eval(store, &summed)?;
    let a = segment_softmax(&scores, segments);
    let mut mlap = Tensor::zeros(segments.num_segments(), d);
    for t in node_layer_reps {
        for (i, &g) in segments.ids().iter().enumerate() {
            for (o, &x) in mlap.row_slice_mut(g).iter_mut().zip(t.row_slice(i)) {
                *o += a[i] * x;
            }
        }
    }

    // JK side
    let mut tape = Tape::new();
    let vars: Vec<Var> = node_layer_reps.iter().map(|t| tape.constant(t.clone())).collect();
    let h_jk = jk_aggregate(&mut tape, &vars, JkMode::Sum)?;
    let jk = jk_readout(&mut tape, store, h_jk, segments, jk_gate)?;
    Ok(mlap.max_abs_diff(tape.value(jk)))
}
