//! `mlap`: dataset generation, training, evaluation, probing, statistics and
//! exports.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 numeric
//! failure (NaN), 4 I/O error.

mod compare;
mod experiment;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mlap::analysis::{embeddings_csv, extract_embeddings, mlap_weights, probe_suite, stats_csv, weights_csv, ProbeTask};
use mlap::graph::synthetic::GENERATOR_VERSION;
use mlap::graph::{gen_synthetic_dataset, load_jsonl, save_jsonl, split, Dataset, SplitSpec, SyntheticSpec};
use mlap::model::Model;
use mlap::par::{map_slice, with_max_threads, Execution};
use mlap::train::{checkpoint, default_metric, evaluate, train, Metric, RunRecord};
use mlap::{Error, Result};

use compare::{collect_runs, parse_groups, RunMetrics, METRICS_HEADER};
use experiment::{parse_seeds, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mlap", version, about = "Multi-level attention pooling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    Embeddings,
    Weights,
}

/// Parsed `--seeds` value; a plain `Vec` would make clap expect repeated
/// values.
#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

#[derive(Subcommand)]
enum Command {
    /// Generate the nine-class synthetic dataset as JSON lines.
    GenData {
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per seed and write history, metrics and checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Single seed (overrides the config).
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Seed list: `a..b` (inclusive) or `a,b,c`.
        #[arg(long, value_parser = |s: &str| parse_seeds(s).map(SeedList))]
        seeds: Option<SeedList>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// error_rate, accuracy or roc_auc; defaults to the head's metric.
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train linear probes on every layer-wise representation.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "full")]
        task: ProbeTask,
        /// Seed of the stratified 8:1:1 split; probes train on its train
        /// part and are scored on its test part.
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Base seed for probe initialisation and shuffling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select the best configuration per architecture and run rank tests.
    Compare {
        /// Glob matching run `metrics.csv` files.
        #[arg(long)]
        runs_glob: String,
        /// Columns defining a configuration.
        #[arg(long, default_value = "arch,aggregator,layers,graphnorm")]
        groups: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export graph embeddings or MLAP layer weights as CSV.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        what: ExportWhat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 3,
        Error::Io { .. } | Error::Checkpoint(_) => 4,
        _ => 2,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn workers() -> Option<usize> {
    std::env::var("MLAP_NUM_WORKERS").ok().and_then(|v| v.parse().ok())
}

fn gen_data(per_class: usize, seed: u64, out: &Path) -> Result<()> {
    let data = gen_synthetic_dataset(&SyntheticSpec::new(per_class, seed), Execution::Parallel)?;
    save_jsonl(&data, out)?;
    let manifest = serde_json::json!({
        "generator_version": GENERATOR_VERSION,
        "seed": seed,
        "per_class": per_class,
        "num_graphs": data.len(),
        "class_counts": data.class_counts(),
    });
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(Path::new(&path), &text)?;
    eprintln!("wrote {} graphs to {}", data.len(), out.display());
    Ok(())
}

fn history_csv(rec: &RunRecord) -> String {
    let mut s = String::from("epoch,train_loss,val_metric\n");
    for e in &rec.epochs {
        let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.val_metric);
    }
    s
}

fn run_metrics(rec: &RunRecord) -> RunMetrics {
    let c = &rec.config;
    RunMetrics {
        arch: c.arch.to_string(),
        aggregator: c.aggregator.map_or("none".to_string(), |a| a.to_string()),
        layers: c.layers,
        graphnorm: c.graphnorm,
        seed: rec.seed,
        metric: rec.metric,
        train: rec.final_train,
        val: rec.final_val,
        test: rec.final_test.unwrap_or(f64::NAN),
    }
}

fn train_cmd(config: &Path, seed: Option<u64>, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> Result<()> {
    let mut exp = ExperimentConfig::load(config)?;
    let data = load_jsonl(&exp.data)?;
    if !exp.node_vocab_set {
        exp.model.node_vocab = data.node_vocab();
    }
    if !exp.edge_vocab_set {
        exp.model.edge_vocab = data.edge_vocab();
    }
    exp.model.validate()?;
    let out = out
        .or(exp.out.clone())
        .ok_or_else(|| Error::Config("no output directory (set `out` or pass --out)".into()))?;
    let seeds = seed.map(|s| vec![s]).or(seeds).unwrap_or(exp.seeds.clone());
    let parts = split(&data, &exp.split)?;
    let train_set = data.subset(&parts.train);
    let val_set = data.subset(&parts.val);
    let test_set = data.subset(&parts.test);

    let inner = if seeds.len() > 1 { Execution::Sequential } else { Execution::Parallel };
    let run_one = |&s: &u64| -> Result<(Model, RunRecord)> {
        let mut cfg = exp.model.clone();
        cfg.seed = s;
        let (model, mut rec) = train(&cfg, &train_set, &val_set, inner)?;
        if !test_set.is_empty() {
            rec.final_test = Some(evaluate(&model, &test_set, rec.metric, inner)?);
        }
        Ok((model, rec))
    };
    let results = with_max_threads(workers(), || map_slice(Execution::Parallel, &seeds, run_one));
    for (s, r) in seeds.iter().zip(results) {
        let (model, mut rec) = r?;
        let dir = out.join(format!("seed-{s}"));
        write_file(&dir.join("history.csv"), &history_csv(&rec))?;
        let ckpt = dir.join("model.ckpt");
        checkpoint::save(&model, &ckpt)?;
        rec.checkpoint = Some(ckpt);
        let m = run_metrics(&rec);
        write_file(&dir.join("metrics.csv"), &format!("{METRICS_HEADER}\n{}\n", m.to_csv_row()))?;
        eprintln!(
            "seed {s}: train {} {:.4}, val {:.4}, test {:.4} ({:.1}s)",
            rec.metric, m.train, m.val, m.test, rec.wall_time_secs
        );
    }
    Ok(())
}

fn eval_cmd(ckpt: &Path, data: &Path, metric: Option<Metric>, out: Option<&Path>) -> Result<()> {
    let model = checkpoint::load(ckpt)?;
    let data = load_jsonl(data)?;
    let metric = metric.unwrap_or(default_metric(model.config.head));
    let v = evaluate(&model, &data, metric, Execution::Parallel)?;
    emit(out, &format!("metric,value\n{metric},{v}\n"))
}

fn probe_cmd(ckpt: &Path, data: &Path, task: ProbeTask, split_seed: u64, seed: u64, out: Option<&Path>) -> Result<()> {
    let model = checkpoint::load(ckpt)?;
    let data: Dataset = load_jsonl(data)?;
    let parts = split(
        &data,
        &SplitSpec {
            seed: split_seed,
            ..SplitSpec::default()
        },
    )?;
    let exec = Execution::Parallel;
    let train = extract_embeddings(&model, &data.subset(&parts.train), "train", exec)?;
    let test = extract_embeddings(&model, &data.subset(&parts.test), "test", exec)?;
    let suite = probe_suite(&train, &test, task, model.config.head, seed, exec)?;
    let mut s = String::from("split");
    for l in 1..=suite.layers.len() {
        let _ = write!(s, ",{l}");
    }
    s.push_str(",agg\n");
    for (name, pick) in [("train", true), ("test", false)] {
        s.push_str(name);
        for r in suite.layers.iter().chain(std::iter::once(&suite.aggregated)) {
            let _ = write!(s, ",{}", if pick { r.train_metric } else { r.test_metric });
        }
        s.push('\n');
    }
    emit(out, &s)
}

fn compare_cmd(pattern: &str, groups: &str, out: Option<&Path>) -> Result<()> {
    let cols = parse_groups(groups).map_err(Error::Usage)?;
    let runs: Vec<RunMetrics> = collect_runs(pattern)?.into_iter().map(|(_, r)| r).collect();
    let rows = compare::compare(&runs, &cols)?;
    emit(out, &stats_csv(&rows))
}

fn export_cmd(ckpt: &Path, data: Option<&Path>, what: ExportWhat, out: Option<&Path>) -> Result<()> {
    let model = checkpoint::load(ckpt)?;
    match what {
        ExportWhat::Embeddings => {
            let data = data.ok_or_else(|| Error::Usage("--data is required for embeddings".into()))?;
            let data = load_jsonl(data)?;
            let dump = extract_embeddings(&model, &data, "all", Execution::Parallel)?;
            emit(out, &embeddings_csv(&dump))
        }
        ExportWhat::Weights => {
            let w = mlap_weights(&model)?;
            if !w.applicable {
                eprintln!("note: MLAP-Sum has no layer weights; writing a placeholder of ones");
            }
            emit(out, &weights_csv(&w))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { per_class, seed, out } => gen_data(per_class, seed, &out),
        Command::Train { config, seed, seeds, out } => train_cmd(&config, seed, seeds.map(|l| l.0), out),
        Command::Eval { checkpoint, data, metric, out } => eval_cmd(&checkpoint, &data, metric, out.as_deref()),
        Command::Probe {
            checkpoint,
            data,
            task,
            split_seed,
            seed,
            out,
        } => probe_cmd(&checkpoint, &data, task, split_seed, seed, out.as_deref()),
        Command::Compare { runs_glob, groups, out } => compare_cmd(&runs_glob, &groups, out.as_deref()),
        Command::Export {
            checkpoint,
            data,
            what,
            out,
        } => export_cmd(&checkpoint, data.as_deref(), what, out.as_deref()),
    }
}

/// Tape tensors are freed and reallocated on every batch; keep them in the
/// heap instead of fresh mmap regions that have to be faulted in each time.
#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn tune_allocator() {
    const LIMIT: libc::c_int = 32 << 20;
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, LIMIT);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 2 * LIMIT);
    }
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn tune_allocator() {}

fn main() -> ExitCode {
    tune_allocator();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
