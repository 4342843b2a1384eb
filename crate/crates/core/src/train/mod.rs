//! Heads, losses, the learning-rate schedule, the training loop and
//! evaluation.

pub mod checkpoint;
mod metrics;

use std::sync::Arc;
use std::time::Instant;

pub use metrics::{accuracy, argmax, error_rate, midranks, predictions, roc_auc, Metric};

use crate::autodiff::{AdamState, Mode, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{batch, Dataset};
use crate::model::{Head, HeadKind, Model, ModelConfig};
use crate::par::{map_range, Execution};
use crate::rng::RngStream;

/// Graphs per forward pass during evaluation.
pub const EVAL_BATCH: usize = 256;

/// `row_softmax(h E^T + b)`.
pub fn multiclass_probs(store: &ParamStore, head: &Head, h: &Tensor) -> Result<Tensor> {
    if !matches!(head, Head::Multiclass { .. }) {
        return Err(Error::Config("multiclass_probs needs a multiclass head".into()));
    }
    let mut tape = Tape::with_execution(Execution::Sequential);
    let h = tape.constant(h.clone());
    let z = head.logits(&mut tape, store, h)?;
    let p = tape.row_softmax(z);
    Ok(tape.value(p).clone())
}

/// `sigmoid(h w + b)`, one probability per row.
pub fn binary_prob(store: &ParamStore, head: &Head, h: &Tensor) -> Result<Vec<f64>> {
    if !matches!(head, Head::Binary { .. }) {
        return Err(Error::Config("binary_prob needs a binary head".into()));
    }
    let mut tape = Tape::with_execution(Execution::Sequential);
    let h = tape.constant(h.clone());
    let z = head.logits(&mut tape, store, h)?;
    let p = tape.sigmoid(z);
    Ok(tape.value(p).data().to_vec())
}

/// Mean cross-entropy of the head's logits against integer labels.
pub fn loss(tape: &mut Tape, kind: HeadKind, logits: Var, labels: &[usize]) -> Result<Var> {
    match kind {
        HeadKind::Multiclass { .. } => tape.softmax_cross_entropy(logits, labels.into()),
        HeadKind::Binary => {
            let t: Arc<[f64]> = labels.iter().map(|&y| y as f64).collect();
            tape.bce_with_logits(logits, t)
        }
    }
}

/// `lr_base * factor^floor(epoch / every)`, epochs counted from 0.
pub fn lr_at(epoch: usize, config: &ModelConfig) -> f64 {
    let k = (epoch / config.lr_decay_every.max(1)) as i32;
    config.lr_base * config.lr_decay_factor.powi(k)
}

/// The validation metric used for a head: error rate or ROC-AUC.
pub fn default_metric(kind: HeadKind) -> Metric {
    match kind {
        HeadKind::Multiclass { .. } => Metric::ErrorRate,
        HeadKind::Binary => Metric::RocAuc,
    }
}

fn check_labels(kind: HeadKind, data: &Dataset, what: &str) -> Result<()> {
    let limit = match kind {
        HeadKind::Multiclass { num_classes } => num_classes,
        HeadKind::Binary => 2,
    };
    match data.graphs.iter().position(|g| g.label >= limit) {
        Some(i) => Err(Error::Config(format!(
            "{what} graph {i} has label {} but the head has {limit} classes",
            data.graphs[i].label
        ))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ModelConfig,
    pub seed: u64,
    pub metric: Metric,
    pub epochs: Vec<EpochLog>,
    pub final_train: f64,
    pub final_val: f64,
    pub final_test: Option<f64>,
    pub wall_time_secs: f64,
    pub checkpoint: Option<std::path::PathBuf>,
}

/// Logits for every graph in `data`, in dataset order, with the model in
/// eval mode.
pub fn predict_logits(model: &Model, data: &Dataset, exec: Execution) -> Result<Tensor> {
    if data.is_empty() {
        return Err(Error::Evaluation("empty dataset".into()));
    }
    let chunks = data.len().div_ceil(EVAL_BATCH);
    let inner = if exec.is_parallel() && chunks > 1 {
        Execution::Sequential
    } else {
        exec
    };
    let parts = map_range(exec, chunks, |c| -> Result<Tensor> {
        let lo = c * EVAL_BATCH;
        let hi = (lo + EVAL_BATCH).min(data.len());
        let b = batch(&data.graphs[lo..hi])?;
        let mut tape = Tape::with_execution(inner);
        let mut rng = RngStream::new(0);
        let out = model.forward(&mut tape, &b, Mode::Eval, &mut rng)?;
        Ok(tape.value(out.logits).clone())
    });
    let mut cols = 0;
    let mut data_out = Vec::new();
    for p in parts {
        let p = p?;
        cols = p.cols();
        data_out.extend_from_slice(p.data());
    }
    Ok(Tensor::from_vec(data.len(), cols, data_out))
}

/// Scores logits against labels with `metric`.
pub fn score(logits: &Tensor, labels: &[usize], metric: Metric) -> Result<f64> {
    match metric {
        Metric::ErrorRate => Ok(error_rate(logits, labels)),
        Metric::Accuracy => Ok(accuracy(logits, labels)),
        Metric::RocAuc => {
            if logits.cols() != 1 {
                return Err(Error::Evaluation(format!(
                    "ROC-AUC needs a binary head, the model has {} outputs",
                    logits.cols()
                )));
            }
            let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
            roc_auc(logits.data(), &pos)
        }
    }
}

pub fn evaluate(model: &Model, data: &Dataset, metric: Metric, exec: Execution) -> Result<f64> {
    let logits = predict_logits(model, data, exec)?;
    if !logits.is_finite() {
        return Err(Error::Numeric("non-finite logits during evaluation".into()));
    }
    score(&logits, &data.labels(), metric)
}

/// Fits a fresh model with `config` on `train_set`, reporting the validation
/// metric after every epoch. Returns the parameters after the last epoch.
///
/// Matrix products use `exec`; everything else is sequential, and the result
/// does not depend on `exec`.
pub fn train(
    config: &ModelConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    exec: Execution,
) -> Result<(Model, RunRecord)> {
    let start = Instant::now();
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    check_labels(config.head, train_set, "training")?;
    check_labels(config.head, val_set, "validation")?;

    let mut model = Model::new(config.clone())?;
    let mut adam = AdamState::new(&model.params);
    let metric = default_metric(config.head);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        order.sort_unstable();
        RngStream::derive_indexed(config.seed, "shuffle", epoch as u64).shuffle(&mut order);
        let mut drop_rng = RngStream::derive_indexed(config.seed, "dropout", epoch as u64);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let b = batch(idx.iter().map(|&i| &train_set.graphs[i]))?;
            let mut tape = Tape::with_execution(exec);
            let out = model.forward(&mut tape, &b, Mode::Train, &mut drop_rng)?;
            let l = loss(&mut tape, config.head, out.logits, &b.labels)?;
            let lv = tape.value(l).item();
            if !lv.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is {lv} at epoch {epoch}, batch {bi}"
                )));
            }
            loss_sum += lv * idx.len() as f64;
            tape.backward(l)?;
            tape.accumulate_param_grads(&mut model.params);
            adam.step(&mut model.params, lr);
        }
        let val_metric = evaluate(&model, val_set, metric, exec)?;
        epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_metric,
        });
    }

    let final_train = evaluate(&model, train_set, metric, exec)?;
    let final_val = match epochs.last() {
        Some(e) => e.val_metric,
        None => evaluate(&model, val_set, metric, exec)?,
    };
    let record = RunRecord {
        config: config.clone(),
        seed: config.seed,
        metric,
        epochs,
        final_train,
        final_val,
        final_test: None,
        wall_time_secs: start.elapsed().as_secs_f64(),
        checkpoint: None,
    };
    Ok((model, record))
}
