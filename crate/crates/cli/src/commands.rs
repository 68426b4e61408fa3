use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hap::bench::{loglog_slope, median_coarsen_seconds, BenchConfig};
use hap::datagen::{
    self, ged_exact_with_path, gen_matching_dataset, gen_random_graphs, gen_toy_classification, make_pair_ground_truth,
    make_triplets, EditCostModel, MAX_GED_NODES,
};
use hap::graph::{detect_dataset_name, load_tu_dataset, write_tu_dataset, Graph, GraphDataset};
use hap::rng::seeded;
use hap::train::{self, prepare_for, split_for, Checkpoint, MetricLog, Task, TaskData};
use serde_json::{json, Value};

use crate::config::{parse_value, resolve};
use crate::manifest::{self, dataset_fingerprint, tool};
use crate::{BenchArgs, EmbedArgs, EvalArgs, GedArgs, GenerateKind, TrainArgs, UsageError};

pub const CHECKPOINT: &str = "best.ckpt";
pub const METRICS: &str = "metrics.csv";

fn check_p_range(p_min: f64, p_max: f64) -> Result<()> {
    if !(0.0 <= p_min && p_min <= p_max && p_max <= 1.0) {
        bail!(UsageError(format!("edge probabilities need 0 <= p-min <= p-max <= 1, got {p_min} and {p_max}")));
    }
    Ok(())
}

fn tu_files(name: &str, with_node_labels: bool) -> Vec<String> {
    let mut v: Vec<String> = ["A", "graph_indicator", "graph_labels"]
        .iter()
        .map(|s| format!("{name}_{s}.txt"))
        .collect();
    if with_node_labels {
        v.push(format!("{name}_node_labels.txt"));
    }
    v
}

pub fn generate(kind: GenerateKind) -> Result<()> {
    let (out, manifest_body) = match kind {
        GenerateKind::Match(a) => {
            if a.pairs == 0 || a.pairs % 2 != 0 {
                bail!(UsageError(format!("--pairs must be a positive even number, got {}", a.pairs)));
            }
            if a.size < 4 {
                bail!(UsageError(format!("--size must be at least 4, got {}", a.size)));
            }
            check_p_range(a.p_min, a.p_max)?;
            let data = gen_matching_dataset(a.pairs / 2, a.size, [a.p_min, a.p_max], &mut seeded(a.seed))?;
            let ds = GraphDataset::new(&a.name, data.graphs);
            write_tu_dataset(&a.out, &a.name, &ds)?;
            datagen::write_pairs(&datagen::pairs_path(&a.out, &a.name), &data.pairs)?;
            let mut files = tu_files(&a.name, false);
            files.push(format!("{}_pairs.txt", a.name));
            println!("wrote {} graphs and {} pairs to {}", ds.len(), data.pairs.len(), a.out.display());
            let body = json!({
                "kind": "match",
                "name": a.name,
                "seed": a.seed,
                "params": { "size": a.size, "pairs": a.pairs, "p_min": a.p_min, "p_max": a.p_max },
                "files": files,
            });
            (a.out, body)
        }
        GenerateKind::Triplet(a) => {
            if a.max_nodes > MAX_GED_NODES {
                bail!(UsageError(format!(
                    "--max-nodes {} exceeds the exact GED limit of {MAX_GED_NODES}",
                    a.max_nodes
                )));
            }
            if a.min_nodes == 0 || a.min_nodes > a.max_nodes {
                bail!(UsageError(format!("need 1 <= --min-nodes <= --max-nodes, got {} and {}", a.min_nodes, a.max_nodes)));
            }
            if a.graphs < 3 {
                bail!(UsageError(format!("--graphs must be at least 3, got {}", a.graphs)));
            }
            check_p_range(a.p_min, a.p_max)?;
            let mut rng = seeded(a.seed);
            let graphs = gen_random_graphs(a.graphs, a.min_nodes, a.max_nodes, [a.p_min, a.p_max], &mut rng)?;
            let table = make_pair_ground_truth(&graphs, &EditCostModel::default())?;
            let triplets = make_triplets(&table, a.triplets, &mut rng)?;
            let ds = GraphDataset::new(&a.name, graphs);
            write_tu_dataset(&a.out, &a.name, &ds)?;
            datagen::write_triplets(&datagen::triplets_path(&a.out, &a.name), &triplets)?;
            datagen::write_ged_table(&datagen::ged_path(&a.out, &a.name), &table)?;
            let mut files = tu_files(&a.name, false);
            files.push(format!("{}_triplets.txt", a.name));
            files.push(format!("{}_ged.txt", a.name));
            println!("wrote {} graphs and {} triplets to {}", ds.len(), triplets.len(), a.out.display());
            let body = json!({
                "kind": "triplet",
                "name": a.name,
                "seed": a.seed,
                "params": {
                    "graphs": a.graphs, "min_nodes": a.min_nodes, "max_nodes": a.max_nodes,
                    "triplets": a.triplets, "p_min": a.p_min, "p_max": a.p_max,
                },
                "files": files,
            });
            (a.out, body)
        }
        GenerateKind::ToyClassify(a) => {
            if a.graphs < 2 || a.nodes == 0 {
                bail!(UsageError("need at least 2 graphs of at least 1 node".into()));
            }
            check_p_range(a.p0.min(a.p1), a.p0.max(a.p1))?;
            let graphs = gen_toy_classification(a.graphs, a.nodes, [a.p0, a.p1], &mut seeded(a.seed))?;
            let ds = GraphDataset::new(&a.name, graphs);
            write_tu_dataset(&a.out, &a.name, &ds)?;
            println!("wrote {} graphs to {}", ds.len(), a.out.display());
            let body = json!({
                "kind": "toy-classify",
                "name": a.name,
                "seed": a.seed,
                "params": { "graphs": a.graphs, "nodes": a.nodes, "p0": a.p0, "p1": a.p1 },
                "files": tu_files(&a.name, false),
            });
            (a.out, body)
        }
    };
    let mut m = json!({ "tool": tool(), "command": "generate" });
    m.as_object_mut().unwrap().extend(manifest_body.as_object().unwrap().clone());
    manifest::write(&out, &m)
}

fn train_flags(a: &TrainArgs) -> Vec<(String, Value)> {
    let mut f: Vec<(String, Value)> = Vec::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            f.push((k.to_string(), v));
        }
    };
    put("task", a.task.clone().map(Value::String));
    put("learning_rate", a.lr.map(|v| json!(v)));
    put("epochs", a.epochs.map(|v| json!(v)));
    put("batch_size", a.batch_size.map(|v| json!(v)));
    put("seed", a.seed.map(|v| json!(v)));
    put("layer_kind", a.layer.clone().map(Value::String));
    put("layers_per_block", a.layers_per_block.map(|v| json!(v)));
    put("coarsen", a.coarsen.map(|v| json!(v)));
    put("clusters", a.clusters.as_deref().map(|s| list(s)));
    put("tau", a.tau.map(|v| json!(v)));
    put("scale", a.scale.map(|v| json!(v)));
    put("split", a.split.as_deref().map(|s| list(s)));
    put("column_mode", a.column_mode.clone().map(Value::String));
    put("hidden_dim", a.hidden.map(|v| json!(v)));
    put("head_hidden", a.head_hidden.map(|v| json!(v)));
    put("pooling", a.pool.clone().map(|s| Value::String(pool_name(&s))));
    put("patience", a.patience.map(|v| json!(v)));
    put("literal_losses", a.literal_losses.then_some(json!(true)));
    put("features", a.features.clone().map(Value::String));
    put("restarts", a.restarts.map(|v| json!(v)));
    put("train_noise", a.no_noise.then_some(json!(false)));
    f
}

/// Comma list as a JSON array, so a single value still becomes a list.
fn list(s: &str) -> Value {
    match parse_value(s) {
        Value::Array(v) => Value::Array(v),
        other => Value::Array(vec![other]),
    }
}

/// The serialized pooling name for a flag spelling.
fn pool_name(s: &str) -> String {
    match s.parse::<hap::model::Pooling>() {
        Ok(p) => serde_json::to_value(p)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_else(|| s.to_string()),
        Err(_) => s.to_string(),
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = resolve(a.config.as_deref(), train_flags(&a))?;
    let data = TaskData::load(&a.data, config.task).with_context(|| format!("loading {}", a.data.display()))?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let m = json!({
        "tool": tool(),
        "command": "train",
        "seed": config.seed,
        "config": config,
        "config_hash": config.hash(),
        "dataset": {
            "path": a.data,
            "name": data.graphs().name,
            "fingerprint": dataset_fingerprint(&a.data)?,
        },
        "outputs": { "checkpoint": CHECKPOINT, "metrics": METRICS },
    });
    manifest::write(&a.out, &m)?;

    let outcome = train::train(&config, &data)?;
    let ckpt_path = a.out.join(CHECKPOINT);
    outcome.checkpoint.save(&ckpt_path)?;
    let metrics_path = a.out.join(METRICS);
    fs::write(&metrics_path, outcome.log.to_csv()).with_context(|| format!("writing {}", metrics_path.display()))?;
    println!(
        "trained {} epochs; best epoch {}; test accuracy {}",
        outcome.epochs_run, outcome.checkpoint.epoch, outcome.test.accuracy
    );
    if let Some(auc) = outcome.test.auc {
        println!("test auc {auc}");
    }
    println!("wrote {} and {}", ckpt_path.display(), metrics_path.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let data = TaskData::load(&a.data, ckpt.config.task).with_context(|| format!("loading {}", a.data.display()))?;
    let data = prepare_for(&ckpt, &data)?;
    let split = split_for(&ckpt.config, data.num_examples())?;
    let indices: Vec<usize> = match a.split.as_str() {
        "train" => split.train,
        "val" => split.val,
        "test" => split.test,
        "all" => (0..data.num_examples()).collect(),
        other => bail!(UsageError(format!("unknown split {other:?} (expected train, val, test or all)"))),
    };
    let model = ckpt.model()?;
    let m = train::evaluate(&model, &data, &indices, &ckpt.config)?;
    let mut log = MetricLog::default();
    log.push(ckpt.epoch, &a.split, "accuracy", m.accuracy);
    println!("{} accuracy {} over {} examples", a.split, m.accuracy, m.count);
    if let Some(auc) = m.auc {
        log.push(ckpt.epoch, &a.split, "auc", auc);
        println!("{} auc {auc}", a.split);
    }
    if let Some(out) = a.out {
        fs::write(&out, log.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let name = detect_dataset_name(&a.data)?;
    let graphs = load_tu_dataset(&a.data, &name)?;
    // Only the graphs matter here; records are left empty.
    let data = match ckpt.config.task {
        Task::Classify => TaskData::Classify(graphs),
        Task::Match => TaskData::Match { graphs, pairs: Vec::new() },
        Task::Similarity => TaskData::Similarity { graphs, triplets: Vec::new() },
    };
    let data = data.with_features(ckpt.config.features, Some(ckpt.model_config.input_dim))?;
    let model = ckpt.model()?;
    let ds = data.graphs();
    let rows: Vec<Vec<f64>> = ds
        .graphs
        .iter()
        .map(|g| -> Result<Vec<f64>> {
            let levels = model.embed(g)?;
            Ok(levels.last().expect("at least one level").as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, Vec::len);
    let mut out = String::from("graph_id,label");
    for i in 1..=width {
        write!(out, ",v{i}").unwrap();
    }
    out.push('\n');
    for (g, row) in ds.graphs.iter().zip(&rows) {
        write!(out, "{},{}", g.id, g.label.map(|l| l.to_string()).unwrap_or_default()).unwrap();
        for v in row {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} embeddings of width {width} to {}", rows.len(), a.out.display());
    Ok(())
}

/// Reads an edge-list graph: the node count on the first line, then one
/// `u v` pair per line with 0-based node indices. `#` starts a comment.
pub fn read_edge_list(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = path.display();
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| anyhow::anyhow!("{file}:{}: {e}", i + 1))?;
        match (n, nums.as_slice()) {
            (None, [count]) => n = Some(*count),
            (None, _) => bail!("{file}:{}: expected the node count", i + 1),
            (Some(count), [u, v]) => {
                if *u >= count || *v >= count {
                    bail!("{file}:{}: node index out of range for {count} nodes", i + 1);
                }
                edges.push((*u, *v));
            }
            (Some(_), _) => bail!("{file}:{}: expected `u v`", i + 1),
        }
    }
    let Some(n) = n else { bail!("{file}: empty graph file") };
    Graph::from_edges(n, &edges).with_context(|| format!("{file}"))
}

pub fn ged(a: GedArgs) -> Result<()> {
    let g1 = read_edge_list(&a.first)?;
    let g2 = read_edge_list(&a.second)?;
    let r = ged_exact_with_path(&g1, &g2, &EditCostModel::default())?;
    println!("ged {}", r.distance);
    for op in &r.edits {
        println!("{op}");
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        bail!(UsageError("--sizes needs positive node counts".into()));
    }
    if a.reps == 0 || a.clusters == 0 || a.features == 0 || !(0.0..=1.0).contains(&a.edge_prob) {
        bail!(UsageError("reps, clusters and features must be positive and edge-prob in [0, 1]".into()));
    }
    let cfg = BenchConfig {
        clusters: a.clusters,
        features: a.features,
        reps: a.reps,
        edge_prob: a.edge_prob,
        seed: a.seed,
    };
    let mut csv = String::from("n,median_seconds\n");
    let mut secs = Vec::new();
    for &n in &a.sizes {
        let t = median_coarsen_seconds(n, &cfg)?;
        writeln!(csv, "{n},{t:?}").unwrap();
        secs.push(t);
    }
    print!("{csv}");
    for i in 1..a.sizes.len() {
        println!("# ratio t({})/t({}) = {:.3}", a.sizes[i], a.sizes[i - 1], secs[i] / secs[i - 1]);
    }
    if let Some(slope) = loglog_slope(&a.sizes, &secs) {
        println!("# log-log slope {slope:.3}");
    }
    if let Some(out) = &a.out {
        write_file(out, &csv)?;
    }
    Ok(())
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
