//! Model selection across run directories and rank tests between the
//! selected configurations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mlap::analysis::{bonferroni, mann_whitney_u, Comparison};
use mlap::train::Metric;
use mlap::{Error, Result};

pub const METRICS_HEADER: &str = "arch,aggregator,layers,graphnorm,seed,metric,train,val,test";

/// One row of a run's final-metrics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub arch: String,
    pub aggregator: String,
    pub layers: usize,
    pub graphnorm: bool,
    pub seed: u64,
    pub metric: Metric,
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl RunMetrics {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.arch,
            self.aggregator,
            self.layers,
            self.graphnorm,
            self.seed,
            self.metric,
            self.train,
            self.val,
            self.test
        )
    }

    fn key(&self, columns: &[GroupColumn]) -> String {
        let mut parts = Vec::new();
        for c in columns {
            match c {
                GroupColumn::Arch => parts.push(self.arch.clone()),
                GroupColumn::Aggregator if self.aggregator != "none" => parts.push(self.aggregator.clone()),
                GroupColumn::Aggregator => {}
                GroupColumn::Layers => parts.push(format!("L{}", self.layers)),
                GroupColumn::Graphnorm => parts.push(if self.graphnorm { "gn" } else { "nogn" }.into()),
            }
        }
        parts.join("-")
    }
}

pub fn parse_metrics_csv(text: &str, path: &Path) -> Result<Vec<RunMetrics>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("expected header `{METRICS_HEADER}`"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 9 {
                return Err(bad(format!("expected 9 columns, found {}", c.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("invalid number `{s}`")));
            Ok(RunMetrics {
                arch: c[0].to_string(),
                aggregator: c[1].to_string(),
                layers: c[2].parse().map_err(|_| bad(format!("invalid layers `{}`", c[2])))?,
                graphnorm: c[3].parse().map_err(|_| bad(format!("invalid graphnorm `{}`", c[3])))?,
                seed: c[4].parse().map_err(|_| bad(format!("invalid seed `{}`", c[4])))?,
                metric: c[5].parse().map_err(bad)?,
                train: num(c[6])?,
                val: num(c[7])?,
                test: num(c[8])?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupColumn {
    Arch,
    Aggregator,
    Layers,
    Graphnorm,
}

/// Comma-separated subset of `arch,aggregator,layers,graphnorm`. `arch` is
/// always included since selection happens per architecture family.
pub fn parse_groups(s: &str) -> std::result::Result<Vec<GroupColumn>, String> {
    let mut cols = vec![GroupColumn::Arch];
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let c = match part {
            "arch" => GroupColumn::Arch,
            "aggregator" => GroupColumn::Aggregator,
            "layers" => GroupColumn::Layers,
            "graphnorm" => GroupColumn::Graphnorm,
            other => return Err(format!("unknown group column `{other}` (arch|aggregator|layers|graphnorm)")),
        };
        if !cols.contains(&c) {
            cols.push(c);
        }
    }
    Ok(cols)
}

pub fn collect_runs(pattern: &str) -> Result<Vec<(PathBuf, RunMetrics)>> {
    let paths = glob::glob(pattern).map_err(|e| Error::Usage(format!("bad glob `{pattern}`: {e}")))?;
    let mut files: Vec<PathBuf> = paths
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| {
            let path = e.path().to_path_buf();
            Error::Io { path, source: e.into() }
        })?;
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|source| Error::Io {
            path: f.clone(),
            source,
        })?;
        for r in parse_metrics_csv(&text, &f)? {
            out.push((f.clone(), r));
        }
    }
    if out.is_empty() {
        return Err(Error::Statistics(format!("no run metrics match `{pattern}`")));
    }
    Ok(out)
}

struct Group {
    family: String,
    val: Vec<f64>,
    test: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Groups runs by configuration, keeps the configuration with the best mean
/// validation metric in each architecture family, then tests MLAP against
/// the naive and JK selections on test metrics.
pub fn compare(runs: &[RunMetrics], columns: &[GroupColumn]) -> Result<Vec<Comparison>> {
    let metric = runs[0].metric;
    if runs.iter().any(|r| r.metric != metric) {
        return Err(Error::Statistics("runs use different metrics".into()));
    }
    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for r in runs {
        let g = groups.entry(r.key(columns)).or_insert_with(|| Group {
            family: r.arch.clone(),
            val: Vec::new(),
            test: Vec::new(),
        });
        g.val.push(r.val);
        g.test.push(r.test);
    }
    if let Some((k, g)) = groups.iter().find(|(_, g)| g.val.len() < 2) {
        return Err(Error::Statistics(format!(
            "group {k} has {} run(s); at least 2 are needed",
            g.val.len()
        )));
    }
    let mut best: BTreeMap<&str, (&str, &Group)> = BTreeMap::new();
    for (k, g) in &groups {
        let better = |old: &Group| {
            let (a, b) = (mean(&g.val), mean(&old.val));
            if metric.lower_is_better() { a < b } else { a > b }
        };
        match best.get(g.family.as_str()) {
            Some((_, old)) if !better(old) => {}
            _ => {
                best.insert(g.family.as_str(), (k.as_str(), g));
            }
        }
    }
    let Some(&(mlap_key, mlap)) = best.get("mlap") else {
        return Err(Error::Statistics("no MLAP runs to compare".into()));
    };
    let mut results = Vec::new();
    for family in ["naive", "jk"] {
        if let Some(&(key, other)) = best.get(family) {
            results.push((format!("{mlap_key} vs {key}"), mann_whitney_u(&mlap.test, &other.test)?));
        }
    }
    if results.is_empty() {
        return Err(Error::Statistics("no naive or JK runs to compare against".into()));
    }
    let adjusted = bonferroni(&results.iter().map(|(_, r)| r.p).collect::<Vec<_>>());
    Ok(results
        .into_iter()
        .zip(adjusted)
        .map(|((name, result), p_bonferroni)| Comparison {
            name,
            result,
            p_bonferroni,
        })
        .collect())
}
