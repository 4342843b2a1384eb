//! CSV renderings of embeddings, MLAP layer weights and test statistics.
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a value
//! back yields the identical `f64`.

use std::fmt::Write as _;

use super::{EmbeddingDump, StatResult};
use crate::error::{Error, Result};
use crate::model::{Model, Readout};

/// `layer,label,f0..f{d-1}`; one block of rows per layer (`1..L`) followed
/// by the aggregated block tagged `agg`.
pub fn embeddings_csv(dump: &EmbeddingDump) -> String {
    let d = dump.aggregated.cols();
    let mut s = String::from("layer,label");
    for k in 0..d {
        let _ = write!(s, ",f{k}");
    }
    s.push('\n');
    let blocks = dump
        .per_layer
        .iter()
        .enumerate()
        .map(|(l, t)| ((l + 1).to_string(), t))
        .chain(std::iter::once(("agg".to_string(), &dump.aggregated)));
    for (tag, t) in blocks {
        for (r, y) in dump.labels.iter().enumerate() {
            let _ = write!(s, "{tag},{y}");
            for v in t.row_slice(r) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub layer: String,
    pub label: usize,
    pub values: Vec<f64>,
}

pub fn parse_embeddings_csv(text: &str) -> Result<Vec<EmbeddingRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Usage("empty embeddings CSV".into()))?;
    let width = header.split(',').count();
    if !header.starts_with("layer,label") {
        return Err(Error::Usage(format!("unexpected header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |msg: &str| Error::Usage(format!("embeddings CSV line {}: {msg}", i + 2));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(bad("wrong number of columns"));
            }
            Ok(EmbeddingRow {
                layer: cells[0].to_string(),
                label: cells[1].parse().map_err(|_| bad("bad label"))?,
                values: cells[2..]
                    .iter()
                    .map(|c| c.parse::<f64>().map_err(|_| bad("bad value")))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlapWeights {
    pub values: Vec<f64>,
    /// False for MLAP-Sum, which has no learned weights; `values` is then a
    /// placeholder of ones.
    pub applicable: bool,
}

pub fn mlap_weights(model: &Model) -> Result<MlapWeights> {
    match &model.readout {
        Readout::Mlap { weights: Some(id), .. } => Ok(MlapWeights {
            values: model.params.value(*id).data().to_vec(),
            applicable: true,
        }),
        Readout::Mlap { weights: None, .. } => Ok(MlapWeights {
            values: vec![1.0; model.config.layers],
            applicable: false,
        }),
        _ => Err(Error::Config(format!(
            "layer weights exist only for MLAP models, got {}",
            model.config.arch
        ))),
    }
}

/// `layer,weight` with layers numbered from 1.
pub fn weights_csv(w: &MlapWeights) -> String {
    let mut s = String::from("layer,weight\n");
    for (l, v) in w.values.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", l + 1);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub name: String,
    pub result: StatResult,
    pub p_bonferroni: f64,
}

/// `comparison,U,z,p,p_bonferroni,r,n1,n2`.
pub fn stats_csv(rows: &[Comparison]) -> String {
    let mut s = String::from("comparison,U,z,p,p_bonferroni,r,n1,n2\n");
    for c in rows {
        let r = &c.result;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            c.name, r.u, r.z, r.p, c.p_bonferroni, r.r, r.n1, r.n2
        );
    }
    s
}
