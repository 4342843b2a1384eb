//! Layer-wise representations, probes, rank statistics and CSV exports.

mod export;
mod probe;
mod stats;

pub use export::{
    embeddings_csv, mlap_weights, parse_embeddings_csv, stats_csv, weights_csv, Comparison,
    EmbeddingRow, MlapWeights,
};
pub use probe::{probe_suite, probe_train, ProbeResult, ProbeSuite, ProbeTask, PROBE_BATCH, PROBE_EPOCHS, PROBE_LR};
pub use stats::{
    bonferroni, exact_two_sided_p, mann_whitney_u, two_sided_normal_p, u_null_counts, StatResult,
    MAX_EXACT_N,
};

use crate::autodiff::{Mode, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{batch, Dataset};
use crate::model::{Model, Readout};
use crate::par::{map_range, Execution};
use crate::rng::RngStream;
use crate::train::EVAL_BATCH;

/// Graph representations of one dataset split under an MLAP model.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDump {
    /// `h_G^(l)` for `l = 1..L`, each `G x d`.
    pub per_layer: Vec<Tensor>,
    pub aggregated: Tensor,
    pub labels: Vec<usize>,
    pub split: String,
}

impl EmbeddingDump {
    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    /// The rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize], split: &str) -> EmbeddingDump {
        EmbeddingDump {
            per_layer: self.per_layer.iter().map(|t| t.select_rows(idx)).collect(),
            aggregated: self.aggregated.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            split: split.to_string(),
        }
    }
}

/// Runs an MLAP model in eval mode and collects every layer-wise graph
/// representation together with the aggregated one.
pub fn extract_embeddings(model: &Model, data: &Dataset, split: &str, exec: Execution) -> Result<EmbeddingDump> {
    if !matches!(model.readout, Readout::Mlap { .. }) {
        return Err(Error::Config(format!(
            "layer-wise embeddings need an MLAP model, got {}",
            model.config.arch
        )));
    }
    if data.is_empty() {
        return Err(Error::Evaluation("empty dataset".into()));
    }
    let chunks = data.len().div_ceil(EVAL_BATCH);
    let parts = map_range(exec, chunks, |c| -> Result<(Vec<Tensor>, Tensor)> {
        let lo = c * EVAL_BATCH;
        let hi = (lo + EVAL_BATCH).min(data.len());
        let b = batch(&data.graphs[lo..hi])?;
        let mut tape = Tape::with_execution(Execution::Sequential);
        let out = model.forward(&mut tape, &b, Mode::Eval, &mut RngStream::new(0))?;
        let layers = out.graphs.per_layer.iter().map(|&v| tape.value(v).clone()).collect();
        Ok((layers, tape.value(out.graphs.aggregated).clone()))
    });
    let l = model.config.layers;
    let d = model.config.dim;
    let mut per_layer = vec![Vec::with_capacity(data.len() * d); l];
    let mut agg = Vec::with_capacity(data.len() * d);
    for part in parts {
        let (layers, a) = part?;
        for (dst, t) in per_layer.iter_mut().zip(&layers) {
            dst.extend_from_slice(t.data());
        }
        agg.extend_from_slice(a.data());
    }
    let g = data.len();
    Ok(EmbeddingDump {
        per_layer: per_layer.into_iter().map(|v| Tensor::from_vec(g, d, v)).collect(),
        aggregated: Tensor::from_vec(g, d, agg),
        labels: data.labels(),
        split: split.to_string(),
    })
}
