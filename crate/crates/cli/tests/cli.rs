use std::path::Path;
use std::process::{Command, Output};

fn mlap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlap")).args(args).output().unwrap()
}

fn mlap_ok(args: &[&str]) -> Output {
    let out = mlap(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Small dataset plus one config per `(name, body)` pair, all in `dir`.
fn setup(dir: &Path, configs: &[(&str, &str)]) {
    mlap_ok(&["gen-data", "--per-class", "10", "--seed", "2", "--out", s(&dir.join("d.jsonl"))]);
    for (name, body) in configs {
        std::fs::write(dir.join(format!("{name}.conf")), format!("{body}\ndata = d.jsonl\n")).unwrap();
    }
}

#[test]
fn gen_data_writes_one_line_per_graph() {
    let dir = tempfile::tempdir().unwrap();
    for (per_class, lines) in [(1, 9), (1000, 9000)] {
        let out = dir.path().join(format!("d{per_class}.jsonl"));
        mlap_ok(&["gen-data", "--per-class", &per_class.to_string(), "--seed", "1", "--out", s(&out)]);
        assert_eq!(read(&out).lines().count(), lines);
        let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join(format!("d{per_class}.jsonl.manifest.json")))).unwrap();
        assert_eq!(manifest["num_graphs"], lines);
        assert_eq!(manifest["class_counts"].as_array().unwrap().len(), 9);
        assert_eq!(manifest["seed"], 1);
    }
    let again = dir.path().join("again.jsonl");
    mlap_ok(&["gen-data", "--per-class", "1000", "--seed", "1", "--out", s(&again)]);
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(dir.path().join("d1000.jsonl")).unwrap());
}

#[test]
fn invalid_combination_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), &[("bad", "arch = naive\naggregator = sum\nlayers = 2\ndim = 4")]);
    let out = mlap(&["train", "--config", s(&dir.path().join("bad.conf")), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.conf:2:"), "{err}");
}

#[test]
fn unknown_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), &[("bad", "arch = mlap\naggregator = sum\nlayer = 2")]);
    let out = mlap(&["train", "--config", s(&dir.path().join("bad.conf")), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.conf:3:"));
}

#[test]
fn divergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    setup(
        dir.path(),
        &[("hot", "arch = naive\nlayers = 1\ndim = 4\nepochs = 1\nbatch_size = 2\nlr_base = 1.7976931348623157e308")],
    );
    let out = mlap(&["train", "--config", s(&dir.path().join("hot.conf")), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_files_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlap(&["eval", "--checkpoint", s(&dir.path().join("none.ckpt")), "--data", "none.jsonl"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn depth_one_naive_and_mlap_sum_report_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    setup(
        dir.path(),
        &[
            ("naive", "arch = naive\nlayers = 1\ndim = 8\nepochs = 2"),
            ("mlap", "arch = mlap\naggregator = sum\nlayers = 1\ndim = 8\nepochs = 2"),
        ],
    );
    let mut rows = Vec::new();
    for name in ["naive", "mlap"] {
        let out = dir.path().join(name);
        mlap_ok(&["train", "--config", s(&dir.path().join(format!("{name}.conf"))), "--seed", "7", "--out", s(&out)]);
        let text = read(&out.join("seed-7/metrics.csv"));
        let row: Vec<String> = text.lines().nth(1).unwrap().split(',').map(str::to_string).collect();
        rows.push(row[2..].to_vec());
    }
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn seed_runs_repeat_and_worker_cap_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), &[("m", "arch = mlap\naggregator = weighted\nlayers = 2\ndim = 8\nepochs = 2")]);
    let conf = dir.path().join("m.conf");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    mlap_ok(&["train", "--config", s(&conf), "--seed", "7", "--out", s(&a)]);
    mlap_ok(&["train", "--config", s(&conf), "--seed", "7", "--out", s(&b)]);
    for f in ["history.csv", "metrics.csv", "model.ckpt"] {
        assert_eq!(std::fs::read(a.join("seed-7").join(f)).unwrap(), std::fs::read(b.join("seed-7").join(f)).unwrap());
    }
    assert_eq!(read(&a.join("seed-7/history.csv")).lines().count(), 3);

    let c = dir.path().join("c");
    let out = Command::new(env!("CARGO_BIN_EXE_mlap"))
        .args(["train", "--config", s(&conf), "--seeds", "6..7", "--out", s(&c)])
        .env("MLAP_NUM_WORKERS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read(&c.join("seed-7/metrics.csv")), read(&a.join("seed-7/metrics.csv")));
    assert!(c.join("seed-6/model.ckpt").exists());
}

fn write_run(dir: &Path, arch: &str, agg: &str, seed: u64, val: f64, test: f64) {
    let d = dir.join(format!("{arch}-{agg}-{seed}"));
    std::fs::create_dir_all(&d).unwrap();
    std::fs::write(
        d.join("metrics.csv"),
        format!("arch,aggregator,layers,graphnorm,seed,metric,train,val,test\n{arch},{agg},3,false,{seed},error_rate,0.1,{val},{test}\n"),
    )
    .unwrap();
}

#[test]
fn compare_separated_groups_gives_zero_u() {
    let dir = tempfile::tempdir().unwrap();
    for (i, t) in [1.0, 2.0, 3.0].into_iter().enumerate() {
        write_run(dir.path(), "mlap", "sum", i as u64, 0.1, t);
    }
    for (i, t) in [4.0, 5.0, 6.0].into_iter().enumerate() {
        write_run(dir.path(), "naive", "none", i as u64, 0.2, t);
    }
    let glob = format!("{}/*/metrics.csv", s(dir.path()));
    let out = mlap_ok(&["compare", "--runs-glob", &glob]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "comparison,U,z,p,p_bonferroni,r,n1,n2");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "mlap-sum-L3-nogn vs naive-L3-nogn");
    assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    assert_eq!((row[6], row[7]), ("3", "3"));
    assert!(lines.next().is_none());

    // a lone run makes its group unusable
    write_run(dir.path(), "jk", "sum", 0, 0.3, 7.0);
    let out = mlap(&["compare", "--runs-glob", &glob]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2"));
}

#[test]
fn probe_and_export_shapes() {
    let dir = tempfile::tempdir().unwrap();
    setup(
        dir.path(),
        &[("w", "arch = mlap\naggregator = weighted\nlayers = 3\ndim = 8\nepochs = 1")],
    );
    let run = dir.path().join("run");
    mlap_ok(&["train", "--config", s(&dir.path().join("w.conf")), "--seed", "0", "--out", s(&run)]);
    let ckpt = run.join("seed-0/model.ckpt");
    let data = dir.path().join("d.jsonl");

    let out = mlap_ok(&["probe", "--checkpoint", s(&ckpt), "--data", s(&data), "--task", "peripheral"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "split,1,2,3,agg");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 5);
        assert!(f[1..].iter().all(|x| (0.0..=1.0).contains(&x.parse::<f64>().unwrap())));
    }

    let out = mlap_ok(&["export", "--checkpoint", s(&ckpt), "--what", "weights"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "layer,weight");
    assert_eq!(text.lines().count(), 1 + 3);

    let out = mlap_ok(&["export", "--checkpoint", s(&ckpt), "--data", s(&data), "--what", "embeddings"]);
    let text = String::from_utf8(out.stdout).unwrap();
    // three layer blocks plus the aggregate, one row per graph each
    assert_eq!(text.lines().count(), 1 + 4 * 90);

    let out = mlap_ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--metric", "accuracy"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("metric,value\naccuracy,"));
}
