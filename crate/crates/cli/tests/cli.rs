use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generate_is_byte_identical_for_the_same_seed() {
    let t = tempfile::tempdir().unwrap();
    for kind in [
        vec!["generate", "match", "--size", "12", "--pairs", "40", "--seed", "7"],
        vec!["generate", "triplet", "--graphs", "8", "--max-nodes", "5", "--triplets", "30", "--seed", "7"],
        vec!["generate", "toy-classify", "--graphs", "20", "--nodes", "10", "--seed", "7"],
    ] {
        let a = t.path().join(format!("{}-a", kind[1]));
        let b = t.path().join(format!("{}-b", kind[1]));
        ok(&[kind.clone(), vec!["--out", s(&a)]].concat());
        ok(&[kind.clone(), vec!["--out", s(&b)]].concat());
        let (x, y) = (dir_bytes(&a), dir_bytes(&b));
        assert!(x.len() >= 4, "{kind:?}: {:?}", x.iter().map(|f| &f.0).collect::<Vec<_>>());
        assert_eq!(x, y, "{kind:?}");
    }
}

#[test]
fn match_generation_emits_balanced_pairs() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("m");
    ok(&["generate", "match", "--size", "10", "--pairs", "50", "--seed", "1", "--out", s(&out)]);
    let pairs = fs::read_to_string(out.join("match_pairs.txt")).unwrap();
    let labels: Vec<&str> = pairs.lines().map(|l| l.split_whitespace().last().unwrap()).collect();
    assert_eq!(labels.len(), 50);
    assert_eq!(labels.iter().filter(|l| **l == "1").count(), 25);
}

#[test]
fn usage_errors_exit_1() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("m");
    assert_eq!(hap(&["generate", "match", "--pairs", "3", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(hap(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(hap(&["generate", "triplet", "--max-nodes", "11", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(hap(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_or_malformed_data_exits_2() {
    let t = tempfile::tempdir().unwrap();
    let run = t.path().join("run");
    let missing = t.path().join("missing");
    let code = hap(&["train", "--task", "classify", "--data", s(&missing), "--out", s(&run)]).status.code();
    assert_eq!(code, Some(2));

    let bad = t.path().join("bad");
    ok(&["generate", "toy-classify", "--graphs", "10", "--nodes", "5", "--out", s(&bad)]);
    fs::write(bad.join("toy_A.txt"), "1, x\n").unwrap();
    let out = hap(&["train", "--data", s(&bad), "--out", s(&run)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("toy_A.txt:1"));
}

#[test]
fn train_eval_embed_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("toy");
    let run = t.path().join("run");
    ok(&["generate", "toy-classify", "--graphs", "60", "--nodes", "12", "--seed", "2", "--out", s(&data)]);
    let conf = t.path().join("run.conf");
    fs::write(&conf, "task = classify\nepochs = 50\nhidden_dim = 8\nhead_hidden = 8\n").unwrap();
    ok(&[
        "train", "--data", s(&data), "--out", s(&run), "--config", s(&conf), "--epochs", "4", "--clusters", "4,1",
    ]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["epochs"], 4);
    assert_eq!(manifest["config"]["hidden_dim"], 8);
    assert_eq!(manifest["dataset"]["fingerprint"].as_str().unwrap().len(), 64);

    let log = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(log.starts_with("epoch,split,metric,value\n"));
    let logged: f64 = log
        .lines()
        .find(|l| l.contains(",test,accuracy,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();

    let eval_csv = t.path().join("eval.csv");
    ok(&["eval", "--checkpoint", s(&run.join("best.ckpt")), "--data", s(&data), "--out", s(&eval_csv)]);
    let evaluated: f64 = fs::read_to_string(&eval_csv)
        .unwrap()
        .lines()
        .nth(1)
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(logged, evaluated);

    let e1 = t.path().join("e1.csv");
    let e2 = t.path().join("e2.csv");
    ok(&["embed", "--checkpoint", s(&run.join("best.ckpt")), "--data", s(&data), "--out", s(&e1)]);
    ok(&["embed", "--checkpoint", s(&run.join("best.ckpt")), "--data", s(&data), "--out", s(&e2)]);
    let text = fs::read_to_string(&e1).unwrap();
    assert_eq!(text, fs::read_to_string(&e2).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 61);
    assert_eq!(lines[0], "graph_id,label,v1,v2,v3,v4,v5,v6,v7,v8");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 10));

    // Pair training needs the pair records next to the graphs.
    let other = t.path().join("run2");
    let out = hap(&["train", "--task", "match", "--data", s(&data), "--out", s(&other)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("toy_pairs.txt"));
}

#[test]
fn embedding_of_a_relabelled_copy_matches() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("toy");
    let run = t.path().join("run");
    ok(&["generate", "toy-classify", "--graphs", "10", "--nodes", "9", "--seed", "4", "--out", s(&data)]);
    ok(&[
        "train", "--data", s(&data), "--out", s(&run), "--epochs", "2", "--hidden", "6", "--head-hidden", "6",
        "--clusters", "3,1", "--split", "0.8,0.2,0",
    ]);
    // Append graph 11 as graph 1 with its nodes in reverse order.
    let a = fs::read_to_string(data.join("toy_A.txt")).unwrap();
    let ind = fs::read_to_string(data.join("toy_graph_indicator.txt")).unwrap();
    let total = ind.lines().count();
    let mut extra = String::new();
    for line in a.lines() {
        let (u, v) = line.split_once(',').unwrap();
        let (u, v): (usize, usize) = (u.trim().parse().unwrap(), v.trim().parse().unwrap());
        if u <= 9 && v <= 9 {
            extra.push_str(&format!("{}, {}\n", total + 10 - u, total + 10 - v));
        }
    }
    fs::write(data.join("toy_A.txt"), a + &extra).unwrap();
    fs::write(data.join("toy_graph_indicator.txt"), ind + &"11\n".repeat(9)).unwrap();
    let gl = fs::read_to_string(data.join("toy_graph_labels.txt")).unwrap();
    let first = gl.lines().next().unwrap().to_string();
    fs::write(data.join("toy_graph_labels.txt"), gl + &first + "\n").unwrap();

    let out = t.path().join("e.csv");
    ok(&["embed", "--checkpoint", s(&run.join("best.ckpt")), "--data", s(&data), "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    for (x, y) in rows[0].iter().zip(&rows[10]) {
        assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
    }
}

#[test]
fn ged_fixtures() {
    let t = tempfile::tempdir().unwrap();
    let tri = t.path().join("tri.txt");
    let path = t.path().join("path.txt");
    let big = t.path().join("big.txt");
    fs::write(&tri, "# triangle\n3\n0 1\n1 2\n2 0\n").unwrap();
    fs::write(&path, "3\n0 1\n1 2\n").unwrap();
    let edges: String = (0..10).map(|i| format!("{i} {}\n", i + 1)).collect();
    fs::write(&big, format!("11\n{edges}")).unwrap();

    assert!(ok(&["ged", s(&tri), s(&tri)]).starts_with("ged 0\n"));
    let forward = ok(&["ged", s(&tri), s(&path)]);
    let backward = ok(&["ged", s(&path), s(&tri)]);
    assert!(forward.starts_with("ged 1\n"), "{forward}");
    assert!(backward.starts_with("ged 1\n"), "{backward}");
    assert_eq!(forward.lines().count(), 2);

    let refused = hap(&["ged", s(&tri), s(&big)]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("10"));
}

#[test]
fn bench_reports_each_size() {
    let one = ok(&["bench", "--sizes", "32", "--reps", "3"]);
    let lines: Vec<&str> = one.lines().collect();
    assert_eq!(lines[0], "n,median_seconds");
    assert!(lines[1].starts_with("32,"));
    assert_eq!(lines.len(), 2);

    let two = ok(&["bench", "--sizes", "16,32", "--reps", "3"]);
    assert!(two.contains("# ratio t(32)/t(16)"));
    assert!(two.contains("# log-log slope"));
}

#[test]
fn metric_log_does_not_depend_on_thread_count() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("toy");
    ok(&["generate", "toy-classify", "--graphs", "40", "--nodes", "10", "--seed", "5", "--out", s(&data)]);
    let mut logs = Vec::new();
    for threads in ["1", "3"] {
        let run = t.path().join(format!("run{threads}"));
        ok(&[
            "--threads", threads, "train", "--data", s(&data), "--out", s(&run), "--epochs", "3", "--batch-size", "8",
            "--hidden", "6", "--head-hidden", "6", "--clusters", "4,1",
        ]);
        logs.push(fs::read_to_string(run.join("metrics.csv")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}
