//! Model configuration, parameter layout and the full forward pass.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::autodiff::{Mode, ParamId, ParamStore, Tape, Var};
use crate::config::{parse_usize_list, parse_value, Entry};
use crate::error::{Error, Result};
use crate::graph::GraphBatch;
use crate::layers::{forward_stack, Encoder, GinBlock, GinLayerParams, GraphNormParams, Init, LayerwiseNodeReps, NodeEncoder};
use crate::readout::{
    jk_aggregate, jk_readout, mlap_aggregate, naive_readout, attention_pool, AttentionGate,
    JkMode, LayerwiseGraphReps, MlapMode,
};
use crate::rng::RngStream;

pub const MAX_LAYERS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    Naive,
    Jk,
    Mlap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Aggregator {
    Sum,
    Weighted,
    Concat,
    MaxPool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Multiclass { num_classes: usize },
    Binary,
}

macro_rules! text_enum {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),* })
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s { $($s => Ok(Self::$v),)* other => Err(format!("unknown value `{other}`")) }
            }
        }
    };
}

text_enum!(Architecture { Naive => "naive", Jk => "jk", Mlap => "mlap" });
text_enum!(Aggregator { Sum => "sum", Weighted => "weighted", Concat => "concat", MaxPool => "maxpool" });

/// Everything that determines a model's parameters and its training run.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub aggregator: Option<Aggregator>,
    pub layers: usize,
    pub dim: usize,
    pub dropout: f64,
    pub graphnorm: bool,
    pub head: HeadKind,
    pub lr_base: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Table sizes per categorical node column; empty for featureless nodes.
    pub node_vocab: Vec<usize>,
    pub edge_vocab: Vec<usize>,
}

impl ModelConfig {
    /// Nine-class synthetic profile: d=200, dropout 0.5, lr 1e-3 decayed
    /// x0.2 every 15 epochs, 65 epochs, batch 50.
    pub fn synthetic(arch: Architecture, aggregator: Option<Aggregator>, layers: usize) -> Self {
        ModelConfig {
            arch,
            aggregator,
            layers,
            dim: 200,
            dropout: 0.5,
            graphnorm: false,
            head: HeadKind::Multiclass { num_classes: 9 },
            lr_base: 1e-3,
            lr_decay_factor: 0.2,
            lr_decay_every: 15,
            epochs: 65,
            batch_size: 50,
            seed: 0,
            node_vocab: Vec::new(),
            edge_vocab: Vec::new(),
        }
    }

    /// Binary profile: lr 1e-4 decayed x0.5 every 15 epochs, 50 epochs,
    /// batch 20.
    pub fn binary(arch: Architecture, aggregator: Option<Aggregator>, layers: usize) -> Self {
        ModelConfig {
            head: HeadKind::Binary,
            lr_base: 1e-4,
            lr_decay_factor: 0.5,
            epochs: 50,
            batch_size: 20,
            ..Self::synthetic(arch, aggregator, layers)
        }
    }

    pub fn validate(&self) -> Result<()> {
        use Aggregator::*;
        use Architecture::*;
        match (self.arch, self.aggregator) {
            (Naive, None) | (Mlap, Some(Sum | Weighted)) | (Jk, Some(Sum | Concat | MaxPool)) => {}
            (Naive, Some(a)) => {
                return Err(Error::Config(format!("the naive architecture takes no aggregator (got {a})")))
            }
            (arch, agg) => {
                let allowed = if arch == Mlap { "sum|weighted" } else { "sum|concat|maxpool" };
                let got = agg.map_or("none".to_string(), |a| a.to_string());
                return Err(Error::Config(format!(
                    "{arch} needs aggregator {allowed}, got {got}"
                )));
            }
        }
        if !(1..=MAX_LAYERS).contains(&self.layers) {
            return Err(Error::Config(format!(
                "layers must be in 1..={MAX_LAYERS}, got {}",
                self.layers
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if let HeadKind::Multiclass { num_classes } = self.head {
            if num_classes < 2 {
                return Err(Error::Config("num_classes must be at least 2".into()));
            }
        }
        if !(self.lr_base > 0.0 && self.lr_base.is_finite()) {
            return Err(Error::Config(format!("lr_base {} must be positive", self.lr_base)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::Config("lr_decay_factor must be positive".into()));
        }
        if self.lr_decay_every == 0 || self.batch_size == 0 {
            return Err(Error::Config("lr_decay_every and batch_size must be positive".into()));
        }
        if self.node_vocab.contains(&0) || self.edge_vocab.contains(&0) {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        Ok(())
    }

    /// Width of the graph representation fed to the head.
    pub fn graph_dim(&self) -> usize {
        if self.aggregator == Some(Aggregator::Concat) {
            self.layers * self.dim
        } else {
            self.dim
        }
    }

    pub const KEYS: &'static [&'static str] = &[
        "arch",
        "aggregator",
        "layers",
        "dim",
        "dropout",
        "graphnorm",
        "head",
        "num_classes",
        "lr_base",
        "lr_decay_factor",
        "lr_decay_every",
        "epochs",
        "batch_size",
        "seed",
        "node_vocab",
        "edge_vocab",
    ];

    /// `key = value` lines, one per key in [`ModelConfig::KEYS`] order.
    pub fn to_kv(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let (head, classes) = match self.head {
            HeadKind::Multiclass { num_classes } => ("multiclass", num_classes),
            HeadKind::Binary => ("binary", 2),
        };
        let mut s = String::new();
        let _ = writeln!(s, "arch = {}", self.arch);
        let _ = writeln!(
            s,
            "aggregator = {}",
            self.aggregator.map_or("none".to_string(), |a| a.to_string())
        );
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "graphnorm = {}", self.graphnorm);
        let _ = writeln!(s, "head = {head}");
        let _ = writeln!(s, "num_classes = {classes}");
        let _ = writeln!(s, "lr_base = {}", self.lr_base);
        let _ = writeln!(s, "lr_decay_factor = {}", self.lr_decay_factor);
        let _ = writeln!(s, "lr_decay_every = {}", self.lr_decay_every);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "node_vocab = {}", list(&self.node_vocab));
        let _ = writeln!(s, "edge_vocab = {}", list(&self.edge_vocab));
        s
    }

    /// Applies recognised entries on top of `base` and validates the result.
    /// Entries whose key is not in [`ModelConfig::KEYS`] are returned
    /// untouched for the caller to handle.
    pub fn apply_kv<'a>(base: ModelConfig, entries: &'a [Entry], path: &Path) -> Result<(ModelConfig, Vec<&'a Entry>)> {
        let mut c = base;
        let mut head: Option<&Entry> = None;
        let mut classes: Option<usize> = None;
        let mut rest = Vec::new();
        for e in entries {
            let bad = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: e.line,
                msg,
            };
            match e.key.as_str() {
                "arch" => c.arch = e.value.parse().map_err(bad)?,
                "aggregator" => {
                    c.aggregator = match e.value.as_str() {
                        "none" | "" => None,
                        v => Some(v.parse().map_err(bad)?),
                    }
                }
                "layers" => c.layers = parse_value(e, path)?,
                "dim" => c.dim = parse_value(e, path)?,
                "dropout" => c.dropout = parse_value(e, path)?,
                "graphnorm" => c.graphnorm = parse_value(e, path)?,
                "head" => head = Some(e),
                "num_classes" => classes = Some(parse_value(e, path)?),
                "lr_base" => c.lr_base = parse_value(e, path)?,
                "lr_decay_factor" => c.lr_decay_factor = parse_value(e, path)?,
                "lr_decay_every" => c.lr_decay_every = parse_value(e, path)?,
                "epochs" => c.epochs = parse_value(e, path)?,
                "batch_size" => c.batch_size = parse_value(e, path)?,
                "seed" => c.seed = parse_value(e, path)?,
                "node_vocab" => c.node_vocab = parse_usize_list(e, path)?,
                "edge_vocab" => c.edge_vocab = parse_usize_list(e, path)?,
                _ => rest.push(e),
            }
        }
        let current_classes = match c.head {
            HeadKind::Multiclass { num_classes } => num_classes,
            HeadKind::Binary => 9,
        };
        c.head = match head.map(|e| (e, e.value.as_str())) {
            Some((_, "binary")) => HeadKind::Binary,
            Some((_, "multiclass")) | None => match c.head {
                HeadKind::Binary if head.is_none() => HeadKind::Binary,
                _ => HeadKind::Multiclass {
                    num_classes: classes.unwrap_or(current_classes),
                },
            },
            Some((e, other)) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: e.line,
                    msg: format!("unknown head `{other}` (multiclass|binary)"),
                })
            }
        };
        // validation errors point at the line that chose the architecture
        c.validate().map_err(|err| {
            let line = ["aggregator", "arch"]
                .iter()
                .find_map(|k| entries.iter().find(|e| e.key == *k))
                .map_or(0, |e| e.line);
            match err {
                Error::Config(msg) if line > 0 => Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg,
                },
                other => other,
            }
        })?;
        Ok((c, rest))
    }

    pub fn from_kv(text: &str, path: &Path) -> Result<ModelConfig> {
        let entries = crate::config::parse_kv(text, path)?;
        let base = Self::synthetic(Architecture::Naive, None, 1);
        let (c, rest) = Self::apply_kv(base, &entries, path)?;
        if let Some(e) = rest.first() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: e.line,
                msg: format!("unknown key `{}`", e.key),
            });
        }
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub enum Head {
    /// `E: [C x in]`, `b: [1 x C]`.
    Multiclass { e: ParamId, b: ParamId },
    /// `w: [in x 1]`, `b: [1 x 1]`.
    Binary { w: ParamId, b: ParamId },
}

impl Head {
    pub fn new(init: &mut Init, kind: HeadKind, input: usize, prefix: &str) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        match kind {
            HeadKind::Multiclass { num_classes } => Head::Multiclass {
                e: init.uniform(&format!("{prefix}.e"), num_classes, input, bound),
                b: init.uniform(&format!("{prefix}.b"), 1, num_classes, bound),
            },
            HeadKind::Binary => Head::Binary {
                w: init.uniform(&format!("{prefix}.w"), input, 1, bound),
                b: init.uniform(&format!("{prefix}.b"), 1, 1, bound),
            },
        }
    }

    /// Multiclass: `h E^T + b` (`G x C`); binary: `h w + b` (`G x 1`).
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        match self {
            Head::Multiclass { e, b } => {
                let e = tape.param(store, *e);
                let b = tape.param(store, *b);
                let z = tape.matmul_bt(h, e)?;
                tape.add_row(z, b)
            }
            Head::Binary { w, b } => {
                let w = tape.param(store, *w);
                let b = tape.param(store, *b);
                let z = tape.matmul(h, w)?;
                tape.add_row(z, b)
            }
        }
    }
}

/// Readout-specific parameters.
#[derive(Clone, Debug)]
pub enum Readout {
    Naive { gate: AttentionGate },
    Jk { mode: JkMode, gate: AttentionGate },
    Mlap { mode: MlapMode, gates: Vec<AttentionGate>, weights: Option<ParamId> },
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub readout: Readout,
    pub head: Head,
}

/// Everything produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub nodes: LayerwiseNodeReps,
    pub graphs: LayerwiseGraphReps,
    pub logits: Var,
}

impl Model {
    /// Fresh parameters from `config.seed`. Each tensor has its own random
    /// stream keyed by its name, so models that share a parameter name start
    /// from identical values.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init {
            store: &mut params,
            seed: config.seed,
        };
        let d = config.dim;
        let node = NodeEncoder::new(&mut init, &config.node_vocab, d);
        let blocks = (0..config.layers)
            .map(|l| GinBlock {
                gin: GinLayerParams::new(&mut init, l, &config.edge_vocab, d),
                norm: config.graphnorm.then(|| GraphNormParams::new(&mut init, l, d)),
            })
            .collect();
        let readout = match (config.arch, config.aggregator) {
            (Architecture::Naive, _) => Readout::Naive {
                gate: AttentionGate::new(&mut init, 0, d, d),
            },
            (Architecture::Jk, Some(agg)) => {
                let mode = match agg {
                    Aggregator::Sum => JkMode::Sum,
                    Aggregator::Concat => JkMode::Concat,
                    _ => JkMode::MaxPool,
                };
                Readout::Jk {
                    mode,
                    gate: AttentionGate::new(&mut init, 0, config.graph_dim(), d),
                }
            }
            (Architecture::Mlap, Some(agg)) => {
                let gates = (0..config.layers)
                    .map(|l| AttentionGate::new(&mut init, l, d, d))
                    .collect();
                let (mode, weights) = if agg == Aggregator::Weighted {
                    (
                        MlapMode::Weighted,
                        Some(init.constant("mlap.w", config.layers, 1, 1.0)),
                    )
                } else {
                    (MlapMode::Sum, None)
                };
                Readout::Mlap { mode, gates, weights }
            }
            _ => unreachable!("validated"),
        };
        let head = Head::new(&mut init, config.head, config.graph_dim(), "head");
        let encoder = Encoder {
            node,
            blocks,
            dropout: config.dropout,
        };
        Ok(Model {
            config,
            params,
            encoder,
            readout,
            head,
        })
    }

    /// Node stack, readout and head logits for a batch.
    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &GraphBatch,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<ForwardOutput> {
        self.forward_with(&self.params, tape, batch, mode, rng)
    }

    /// [`Model::forward`] reading parameter values from `store`, which must
    /// share this model's layout.
    pub fn forward_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        batch: &GraphBatch,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<ForwardOutput> {
        let nodes = forward_stack(tape, store, &self.encoder, batch, mode, rng)?;
        let graphs = self.read_out(store, tape, &nodes, &batch.segments)?;
        let logits = self.head.logits(tape, store, graphs.aggregated)?;
        Ok(ForwardOutput { nodes, graphs, logits })
    }

    pub fn read_out(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        nodes: &LayerwiseNodeReps,
        segments: &Arc<crate::autodiff::Segments>,
    ) -> Result<LayerwiseGraphReps> {
        match &self.readout {
            Readout::Naive { gate } => {
                let last = *nodes.layers.last().expect("at least one layer");
                Ok(LayerwiseGraphReps {
                    per_layer: Vec::new(),
                    aggregated: naive_readout(tape, store, last, segments, gate)?,
                })
            }
            Readout::Jk { mode, gate } => {
                let h = jk_aggregate(tape, &nodes.layers, *mode)?;
                Ok(LayerwiseGraphReps {
                    per_layer: Vec::new(),
                    aggregated: jk_readout(tape, store, h, segments, gate)?,
                })
            }
            Readout::Mlap { mode, gates, weights } => {
                let mut per_layer = Vec::with_capacity(gates.len());
                for (&h, gate) in nodes.layers.iter().zip(gates) {
                    per_layer.push(attention_pool(tape, store, h, segments, gate)?);
                }
                let w = weights.map(|id| tape.param(store, id));
                let aggregated = mlap_aggregate(tape, &per_layer, *mode, w)?;
                Ok(LayerwiseGraphReps { per_layer, aggregated })
            }
        }
    }

    /// The MLAP layer-weight parameter, if this is an MLAP-Weighted model.
    pub fn mlap_weights(&self) -> Option<ParamId> {
        match &self.readout {
            Readout::Mlap { weights, .. } => *weights,
            _ => None,
        }
    }
}
