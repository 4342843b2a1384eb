//! Linear probes on frozen graph representations.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{AdamState, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};
use crate::layers::Init;
use crate::model::{Head, HeadKind};
use crate::par::{map_range, Execution};
use crate::rng::RngStream;
use crate::train::{default_metric, loss, score};

use super::EmbeddingDump;

pub const PROBE_EPOCHS: usize = 30;
pub const PROBE_LR: f64 = 1e-3;
pub const PROBE_BATCH: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeTask {
    Full,
    /// Center component type, `label / 3`.
    Center,
    /// Peripheral component type, `label % 3`.
    Peripheral,
}

impl fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeTask::Full => "full",
            ProbeTask::Center => "center",
            ProbeTask::Peripheral => "peripheral",
        })
    }
}

impl FromStr for ProbeTask {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(ProbeTask::Full),
            "center" => Ok(ProbeTask::Center),
            "peripheral" => Ok(ProbeTask::Peripheral),
            other => Err(format!("unknown task `{other}` (full|center|peripheral)")),
        }
    }
}

impl ProbeTask {
    pub fn map_label(self, label: usize) -> usize {
        match self {
            ProbeTask::Full => label,
            ProbeTask::Center => label / 3,
            ProbeTask::Peripheral => label % 3,
        }
    }

    /// Head for this task given the head of the trained model.
    pub fn head_kind(self, model_head: HeadKind) -> Result<HeadKind> {
        match (self, model_head) {
            (ProbeTask::Full, h) => Ok(h),
            (_, HeadKind::Multiclass { num_classes: 9 }) => Ok(HeadKind::Multiclass { num_classes: 3 }),
            (t, _) => Err(Error::Config(format!(
                "the {t} probe task needs a nine-class synthetic model"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub train_metric: f64,
    pub test_metric: f64,
}

/// Row order used for training: by label, then by the row values. Probes are
/// therefore unaffected by the order in which samples are supplied.
fn canonical_order(x: &Tensor, y: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            x.row_slice(a)
                .iter()
                .zip(x.row_slice(b))
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

fn logits(store: &ParamStore, head: &Head, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::with_execution(Execution::Sequential);
    let h = tape.constant(x.clone());
    let z = head.logits(&mut tape, store, h)?;
    Ok(tape.value(z).clone())
}

/// Trains a fresh head on `(train_x, train_y)` for 30 epochs of Adam
/// (lr 1e-3, batch 50) and scores it on both splits. The metric is the
/// error rate for multiclass heads and ROC-AUC for binary heads.
pub fn probe_train(
    train_x: &Tensor,
    train_y: &[usize],
    test_x: &Tensor,
    test_y: &[usize],
    kind: HeadKind,
    seed: u64,
) -> Result<ProbeResult> {
    if train_x.rows() != train_y.len() || test_x.rows() != test_y.len() {
        return Err(Error::Config("probe: embedding rows and labels disagree".into()));
    }
    if train_y.is_empty() || test_y.is_empty() {
        return Err(Error::Config("probe: empty split".into()));
    }
    if train_x.cols() != test_x.cols() {
        return Err(Error::Config("probe: train and test widths differ".into()));
    }
    let mut store = ParamStore::new();
    let head = Head::new(
        &mut Init {
            store: &mut store,
            seed,
        },
        kind,
        train_x.cols(),
        "probe",
    );
    let mut adam = AdamState::new(&store);
    let base = canonical_order(train_x, train_y);
    for epoch in 0..PROBE_EPOCHS {
        let mut order = base.clone();
        RngStream::derive_indexed(seed, "probe/shuffle", epoch as u64).shuffle(&mut order);
        for idx in order.chunks(PROBE_BATCH) {
            let xb = train_x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            let mut tape = Tape::with_execution(Execution::Sequential);
            let h = tape.constant(xb);
            let z = head.logits(&mut tape, &store, h)?;
            let l = loss(&mut tape, kind, z, &yb)?;
            if !tape.value(l).item().is_finite() {
                return Err(Error::Numeric(format!("probe loss diverged at epoch {epoch}")));
            }
            tape.backward(l)?;
            tape.accumulate_param_grads(&mut store);
            adam.step(&mut store, PROBE_LR);
        }
    }
    let metric = default_metric(kind);
    Ok(ProbeResult {
        train_metric: score(&logits(&store, &head, train_x)?, train_y, metric)?,
        test_metric: score(&logits(&store, &head, test_x)?, test_y, metric)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSuite {
    pub task: ProbeTask,
    /// One result per message-passing layer, in layer order.
    pub layers: Vec<ProbeResult>,
    /// Probe on the aggregated representation.
    pub aggregated: ProbeResult,
}

/// Probes every layer-wise representation and the aggregated one. Layer `l`
/// (0-based) uses seed `seed + l`; the aggregated probe uses `seed + L`.
pub fn probe_suite(
    train: &EmbeddingDump,
    test: &EmbeddingDump,
    task: ProbeTask,
    head: HeadKind,
    seed: u64,
    exec: Execution,
) -> Result<ProbeSuite> {
    let layers = train.per_layer.len();
    if layers == 0 || test.per_layer.len() != layers {
        return Err(Error::Config("probe_suite: dumps have different depths".into()));
    }
    let kind = task.head_kind(head)?;
    let map = |d: &EmbeddingDump| -> Vec<usize> { d.labels.iter().map(|&y| task.map_label(y)).collect() };
    let (ytr, yte) = (map(train), map(test));
    let results = map_range(exec, layers + 1, |l| {
        let (xtr, xte) = if l < layers {
            (&train.per_layer[l], &test.per_layer[l])
        } else {
            (&train.aggregated, &test.aggregated)
        };
        probe_train(xtr, &ytr, xte, &yte, kind, seed.wrapping_add(l as u64))
    });
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregated = results.pop().expect("layers + 1 results");
    Ok(ProbeSuite {
        task,
        layers: results,
        aggregated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, rng: &mut RngStream, sep: f64, classes: usize) -> (Tensor, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % classes;
            rows.push(vec![
                sep * (c as f64 - (classes - 1) as f64 / 2.0) + rng.uniform(-0.5, 0.5),
                rng.uniform(-0.5, 0.5),
                rng.uniform(-0.5, 0.5),
            ]);
            y.push(c);
        }
        (Tensor::from_rows(&rows), y)
    }

    #[test]
    fn separable_blobs() {
        let mut rng = RngStream::new(3);
        let (xtr, ytr) = blobs(200, &mut rng, 6.0, 2);
        let (xte, yte) = blobs(100, &mut rng, 6.0, 2);
        let kind = HeadKind::Multiclass { num_classes: 2 };
        let r = probe_train(&xtr, &ytr, &xte, &yte, kind, 0).unwrap();
        assert!(r.test_metric < 0.05, "{r:?}");
    }

    #[test]
    fn chance_level() {
        let mut rng = RngStream::new(4);
        let (xtr, _) = blobs(450, &mut rng, 0.0, 9);
        let (xte, _) = blobs(450, &mut rng, 0.0, 9);
        let ytr: Vec<usize> = (0..450).map(|_| rng.below(9)).collect();
        let yte: Vec<usize> = (0..450).map(|_| rng.below(9)).collect();
        let kind = HeadKind::Multiclass { num_classes: 9 };
        let r = probe_train(&xtr, &ytr, &xte, &yte, kind, 1).unwrap();
        assert!((r.test_metric - 8.0 / 9.0).abs() < 0.1, "{r:?}");
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut rng = RngStream::new(5);
        let (xtr, ytr) = blobs(120, &mut rng, 1.0, 3);
        let (xte, yte) = blobs(60, &mut rng, 1.0, 3);
        let kind = HeadKind::Multiclass { num_classes: 3 };
        let a = probe_train(&xtr, &ytr, &xte, &yte, kind, 2).unwrap();
        let mut perm: Vec<usize> = (0..120).collect();
        rng.shuffle(&mut perm);
        let xp = xtr.select_rows(&perm);
        let yp: Vec<usize> = perm.iter().map(|&i| ytr[i]).collect();
        let b = probe_train(&xp, &yp, &xte, &yte, kind, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn label_maps_partition_classes() {
        for t in [ProbeTask::Center, ProbeTask::Peripheral] {
            let mut counts = [0; 3];
            for y in 0..9 {
                counts[t.map_label(y)] += 1;
            }
            assert_eq!(counts, [3, 3, 3]);
        }
        assert_eq!(ProbeTask::Full.map_label(7), 7);
    }
}
