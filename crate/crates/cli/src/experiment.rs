//! Experiment config files: the model keys plus dataset, split, output and
//! seed settings, all as flat `key = value` lines.

use std::path::{Path, PathBuf};

use mlap::config::{parse_kv, parse_value, Entry};
use mlap::graph::SplitSpec;
use mlap::model::{Architecture, ModelConfig};
use mlap::{Error, Result};

pub const EXTRA_KEYS: &[&str] = &["profile", "data", "split", "stratified", "split_seed", "out", "seeds"];

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub data: PathBuf,
    pub split: SplitSpec,
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    /// Whether the vocabularies were set explicitly (otherwise they are taken
    /// from the dataset).
    pub node_vocab_set: bool,
    pub edge_vocab_set: bool,
}

/// `a..b` (inclusive), `a,b,c`, or a single seed.
pub fn parse_seeds(s: &str) -> std::result::Result<Vec<u64>, String> {
    let bad = || format!("invalid seed list `{s}` (expected N, a..b or a,b,c)");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn parse_err(path: &Path, e: &Entry, msg: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line,
        msg,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let entries = parse_kv(text, path)?;
        let base = match entries.iter().find(|e| e.key == "profile") {
            None => ModelConfig::synthetic(Architecture::Naive, None, 1),
            Some(e) => match e.value.as_str() {
                "synthetic" => ModelConfig::synthetic(Architecture::Naive, None, 1),
                "binary" => ModelConfig::binary(Architecture::Naive, None, 1),
                other => return Err(parse_err(path, e, format!("unknown profile `{other}` (synthetic|binary)"))),
            },
        };
        let (model, rest) = ModelConfig::apply_kv(base, &entries, path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let mut data = None;
        let mut split = SplitSpec::default();
        let mut out = None;
        let mut seeds = vec![model.seed];
        for e in rest {
            match e.key.as_str() {
                "profile" => {}
                "data" => data = Some(dir.join(&e.value)),
                "out" => out = Some(dir.join(&e.value)),
                "stratified" => split.stratified = parse_value(e, path)?,
                "split_seed" => split.seed = parse_value(e, path)?,
                "split" => {
                    let parts: Vec<f64> = e
                        .value
                        .split(',')
                        .map(|p| p.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| parse_err(path, e, format!("invalid split `{}`", e.value)))?;
                    let ok = parts.len() == 3
                        && parts.iter().all(|r| r.is_finite() && *r >= 0.0)
                        && parts[0] > 0.0
                        && parts[1] > 0.0;
                    if !ok {
                        return Err(parse_err(
                            path,
                            e,
                            "split needs three non-negative ratios train,val,test with train and val positive".into(),
                        ));
                    }
                    split.ratios = [parts[0], parts[1], parts[2]];
                }
                "seeds" => seeds = parse_seeds(&e.value).map_err(|m| parse_err(path, e, m))?,
                other => {
                    let mut known: Vec<&str> = ModelConfig::KEYS.to_vec();
                    known.extend_from_slice(EXTRA_KEYS);
                    return Err(parse_err(
                        path,
                        e,
                        format!("unknown key `{other}` (known keys: {})", known.join(", ")),
                    ));
                }
            }
        }
        let data = data.ok_or_else(|| Error::Config(format!("{}: missing `data`", path.display())))?;
        Ok(ExperimentConfig {
            node_vocab_set: entries.iter().any(|e| e.key == "node_vocab"),
            edge_vocab_set: entries.iter().any(|e| e.key == "edge_vocab"),
            model,
            data,
            split,
            out,
            seeds,
        })
    }
}
