//! Training and evaluation for the three tasks.

mod adam;
mod checkpoint;
mod metrics;

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{params_hash, Checkpoint};
pub use metrics::{accuracy, roc_auc, MetricLog, MetricRow};

use crate::coarsen::ColumnMode;
use crate::datagen::{self, DatagenError, PairRecord, TripletRecord};
use crate::embed::LayerKind;
use crate::graph::{detect_dataset_name, load_tu_dataset, GraphDataset, GraphError, Split};
use crate::heads::{euclidean_distance, loss_pair, loss_single, loss_triple, similarity_value, HeadError, DIST_EPS};
use crate::model::{default_clusters, HapModel, ModelConfig, ModelError, Pooling};
use crate::rng::{derived, HapRng};
use crate::tensor::{Bindings, Matrix, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Invalid(String),
    #[error("task mismatch: expected {expected} data, got {got}")]
    TaskMismatch { expected: Task, got: Task },
    #[error("non-finite loss at epoch {epoch}, example {example}")]
    NumericFailure { epoch: usize, example: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Match,
    Similarity,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classify => "classify",
            Task::Match => "match",
            Task::Similarity => "similarity",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "classify" => Ok(Task::Classify),
            "match" => Ok(Task::Match),
            "similarity" => Ok(Task::Similarity),
            other => Err(format!("unknown task {other:?} (expected classify, match or similarity)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: Task,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub layer_kind: LayerKind,
    pub layers_per_block: usize,
    /// Number of coarsening modules.
    pub coarsen: usize,
    /// Cluster count per module; defaults to 16, ..., 1.
    pub clusters: Option<Vec<usize>>,
    pub tau: f64,
    pub scale: f64,
    pub split: [f64; 3],
    pub column_mode: ColumnMode,
    pub hidden_dim: usize,
    pub head_hidden: usize,
    pub pooling: Pooling,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Use the reduced pair and triplet losses (no negative-pair
    /// term, unsquared residual).
    pub literal_losses: bool,
    /// Gumbel noise in soft sampling during training.
    pub train_noise: bool,
    pub features: FeatureMode,
    /// Independent initialisations; the one with the best validation
    /// accuracy is kept.
    pub restarts: usize,
}

/// How node input features are built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Node-label one-hot when every graph has node labels, else degree one-hot.
    Auto,
    Degree,
    /// A single constant 1 per node.
    Constant,
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(FeatureMode::Auto),
            "degree" => Ok(FeatureMode::Degree),
            "constant" => Ok(FeatureMode::Constant),
            other => Err(format!("unknown feature mode {other:?} (expected auto, degree or constant)")),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Classify,
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            layer_kind: LayerKind::Gcn,
            layers_per_block: 2,
            coarsen: 2,
            clusters: None,
            tau: 0.1,
            scale: crate::heads::DEFAULT_SCALE,
            split: [0.8, 0.1, 0.1],
            column_mode: ColumnMode::AffinitySummary,
            hidden_dim: 32,
            head_hidden: 32,
            pooling: Pooling::Hap,
            patience: 20,
            literal_losses: false,
            train_noise: true,
            features: FeatureMode::Auto,
            restarts: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Invalid(m));
        if self.epochs == 0 || self.batch_size == 0 || self.layers_per_block == 0 || self.coarsen == 0 {
            return bad("epochs, batch size, layers per block and coarsen count must be at least 1".into());
        }
        if self.hidden_dim == 0 || self.head_hidden == 0 || self.patience == 0 || self.restarts == 0 {
            return bad("hidden sizes, patience and restarts must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and nonnegative", self.learning_rate));
        }
        if !(self.tau > 0.0 && self.scale > 0.0) {
            return bad("tau and scale must be positive".into());
        }
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|&r| !(r >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("split ratios {:?} must be nonnegative and sum to 1", self.split));
        }
        if let Some(c) = &self.clusters {
            if c.len() != self.coarsen {
                return bad(format!("{} cluster counts given for {} coarsening modules", c.len(), self.coarsen));
            }
            if c.contains(&0) {
                return bad("cluster counts must be at least 1".into());
            }
        }
        Ok(())
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        self.clusters.clone().unwrap_or_else(|| default_clusters(self.coarsen))
    }

    pub fn model_config(&self, input_dim: usize, num_classes: Option<usize>) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            layer_kind: self.layer_kind,
            layers_per_block: self.layers_per_block,
            clusters: self.cluster_counts(),
            tau: self.tau,
            column_mode: self.column_mode,
            pooling: self.pooling,
            num_classes,
            head_hidden: self.head_hidden,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Graphs plus the task-specific records over them.
#[derive(Clone, Debug)]
pub enum TaskData {
    Classify(GraphDataset),
    Match {
        graphs: GraphDataset,
        pairs: Vec<PairRecord>,
    },
    Similarity {
        graphs: GraphDataset,
        triplets: Vec<TripletRecord>,
    },
}

impl TaskData {
    pub fn task(&self) -> Task {
        match self {
            TaskData::Classify(_) => Task::Classify,
            TaskData::Match { .. } => Task::Match,
            TaskData::Similarity { .. } => Task::Similarity,
        }
    }

    pub fn graphs(&self) -> &GraphDataset {
        match self {
            TaskData::Classify(g) | TaskData::Match { graphs: g, .. } | TaskData::Similarity { graphs: g, .. } => g,
        }
    }

    fn graphs_mut(&mut self) -> &mut GraphDataset {
        match self {
            TaskData::Classify(g) | TaskData::Match { graphs: g, .. } | TaskData::Similarity { graphs: g, .. } => g,
        }
    }

    /// Number of training examples: graphs, pairs or triplets.
    pub fn num_examples(&self) -> usize {
        match self {
            TaskData::Classify(g) => g.len(),
            TaskData::Match { pairs, .. } => pairs.len(),
            TaskData::Similarity { triplets, .. } => triplets.len(),
        }
    }

    /// Loads a dataset directory for `task`; pair and triplet tasks also
    /// read the sidecar record file.
    pub fn load(dir: &Path, task: Task) -> Result<Self, TrainError> {
        let name = detect_dataset_name(dir)?;
        let graphs = load_tu_dataset(dir, &name)?;
        let data = match task {
            Task::Classify => TaskData::Classify(graphs),
            Task::Match => TaskData::Match {
                pairs: datagen::read_pairs(&datagen::pairs_path(dir, &name), true)?,
                graphs,
            },
            Task::Similarity => TaskData::Similarity {
                triplets: datagen::read_triplets(&datagen::triplets_path(dir, &name))?,
                graphs,
            },
        };
        data.check()?;
        Ok(data)
    }

    /// Every record references an existing graph.
    pub fn check(&self) -> Result<(), TrainError> {
        let n = self.graphs().len();
        let ok = |id: usize| id >= 1 && id <= n;
        let bad = match self {
            TaskData::Classify(g) => {
                if g.graphs.iter().any(|x| x.label.is_none()) {
                    return Err(TrainError::Invalid("classification needs a label on every graph".into()));
                }
                None
            }
            TaskData::Match { pairs, .. } => pairs
                .iter()
                .find(|p| !ok(p.g1) || !ok(p.g2) || p.label().is_none())
                .map(|p| format!("pair ({}, {})", p.g1, p.g2)),
            TaskData::Similarity { triplets, .. } => triplets
                .iter()
                .find(|t| !ok(t.g1) || !ok(t.g2) || !ok(t.g3))
                .map(|t| format!("triplet ({}, {}, {})", t.g1, t.g2, t.g3)),
        };
        match bad {
            Some(what) => Err(TrainError::Invalid(format!(
                "{what} references a missing graph or lacks a label ({n} graphs)"
            ))),
            None => Ok(()),
        }
    }

    /// Copy with node features rebuilt per `mode`. `width` pins the
    /// feature width (for data scored by an already trained model).
    pub fn with_features(&self, mode: FeatureMode, width: Option<usize>) -> Result<Self, TrainError> {
        let mut out = self.clone();
        let ds = out.graphs_mut();
        let labelled = !ds.graphs.is_empty() && ds.graphs.iter().all(|g| g.node_labels.is_some());
        match mode {
            FeatureMode::Constant => {
                for g in &mut ds.graphs {
                    g.features = Matrix::ones(g.n(), 1);
                }
                ds.feature_dim = 1;
            }
            FeatureMode::Auto if labelled => ds.featurize_default(),
            FeatureMode::Auto | FeatureMode::Degree => {
                let max_degree = match width {
                    Some(w) => w.saturating_sub(1),
                    None => ds.max_degree(),
                };
                ds.apply_degree_onehot(max_degree);
            }
        }
        if let Some(w) = width {
            if ds.feature_dim != w {
                return Err(TrainError::Invalid(format!(
                    "dataset yields {} input features, model expects {w}",
                    ds.feature_dim
                )));
            }
        }
        Ok(out)
    }
}

/// Features for scoring `data` with `ckpt`'s model; also checks the task.
pub fn prepare_for(ckpt: &Checkpoint, data: &TaskData) -> Result<TaskData, TrainError> {
    if data.task() != ckpt.config.task {
        return Err(TrainError::TaskMismatch {
            expected: ckpt.config.task,
            got: data.task(),
        });
    }
    data.check()?;
    data.with_features(ckpt.config.features, Some(ckpt.model_config.input_dim))
}

/// Deterministic split of `n` examples for `config`'s seed and ratios.
pub fn split_for(config: &TrainConfig, n: usize) -> Result<Split, TrainError> {
    Ok(Split::random(n, config.split, &mut derived(config.seed, 0, u64::MAX))?)
}

/// Loss of one example on `tape`.
pub fn example_loss(
    model: &HapModel,
    tape: &mut Tape,
    p: &Bindings,
    data: &TaskData,
    index: usize,
    config: &TrainConfig,
    mut noise: Option<&mut HapRng>,
) -> Result<Var, TrainError> {
    let ds = data.graphs();
    let graph = |id: usize| &ds.graphs[id - 1];
    match data {
        TaskData::Classify(ds) => {
            let g = &ds.graphs[index];
            let out = model.forward(tape, p, g, noise)?;
            let probs = model.classify(tape, p, &out)?;
            Ok(loss_single(tape, &[probs], &[g.label.expect("checked")])?)
        }
        TaskData::Match { pairs, .. } => {
            let rec = pairs[index];
            let a = model.forward(tape, p, graph(rec.g1), noise.as_deref_mut())?;
            let b = model.forward(tape, p, graph(rec.g2), noise.as_deref_mut())?;
            let d = level_distances(tape, &a.levels, &b.levels)?;
            let y = rec.label().expect("checked");
            Ok(loss_pair(tape, &d, y, config.scale, config.literal_losses)?)
        }
        TaskData::Similarity { triplets, .. } => {
            let rec = triplets[index];
            let a = model.forward(tape, p, graph(rec.g1), noise.as_deref_mut())?;
            let b = model.forward(tape, p, graph(rec.g2), noise.as_deref_mut())?;
            let c = model.forward(tape, p, graph(rec.g3), noise.as_deref_mut())?;
            let d12 = level_distances(tape, &a.levels, &b.levels)?;
            let d13 = level_distances(tape, &a.levels, &c.levels)?;
            Ok(loss_triple(tape, &d12, &d13, rec.r, config.literal_losses)?)
        }
    }
}

fn level_distances(tape: &mut Tape, a: &[Var], b: &[Var]) -> Result<Vec<Var>, TensorError> {
    a.iter().zip(b).map(|(&x, &y)| euclidean_distance(tape, x, y)).collect()
}

/// Loss value and parameter gradients (store order) of one example.
pub fn example_gradient(
    model: &HapModel,
    data: &TaskData,
    index: usize,
    config: &TrainConfig,
    noise: Option<&mut HapRng>,
) -> Result<(f64, Vec<Matrix>), TrainError> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape, true);
    let loss = example_loss(model, &mut tape, &p, data, index, config, noise)?;
    let value = tape.value(loss)[(0, 0)];
    let grads = tape.backward(loss)?;
    let g = p
        .vars()
        .iter()
        .zip(model.params.values())
        .map(|(&v, m)| grads.get_or_zeros(v, m.shape()))
        .collect();
    Ok((value, g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// ROC-AUC of final-level match scores (match task only).
    pub auc: Option<f64>,
    /// Examples scored (triplets with `r = 0` are skipped).
    pub count: usize,
}

impl Metrics {
    fn log(&self, log: &mut MetricLog, epoch: usize, split: &str) {
        log.push(epoch, split, "accuracy", self.accuracy);
        if let Some(auc) = self.auc {
            log.push(epoch, split, "auc", auc);
        }
    }
}

fn plain_distance(x: &Matrix, y: &Matrix) -> f64 {
    let s: f64 = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    (s + DIST_EPS).sqrt()
}

/// Deterministic (noise-free) per-level readouts for the given 1-based ids.
fn embed_ids(model: &HapModel, ds: &GraphDataset, ids: &[usize]) -> Result<Vec<Option<Vec<Matrix>>>, TrainError> {
    let mut wanted = vec![false; ds.len() + 1];
    for &id in ids {
        wanted[id] = true;
    }
    let todo: Vec<usize> = (1..=ds.len()).filter(|&i| wanted[i]).collect();
    let done: Vec<Result<Vec<Matrix>, ModelError>> =
        todo.par_iter().map(|&id| model.embed(&ds.graphs[id - 1])).collect();
    let mut out = vec![None; ds.len() + 1];
    for (id, r) in todo.into_iter().zip(done) {
        out[id] = Some(r?);
    }
    Ok(out)
}

/// Scores `model` on the examples at `indices`; see [`Metrics`].
pub fn evaluate(model: &HapModel, data: &TaskData, indices: &[usize], config: &TrainConfig) -> Result<Metrics, TrainError> {
    match data {
        TaskData::Classify(ds) => {
            let preds: Vec<Result<Vec<f64>, ModelError>> =
                indices.par_iter().map(|&i| model.predict_proba(&ds.graphs[i])).collect();
            let mut hits = 0;
            for (&i, p) in indices.iter().zip(preds) {
                let p = p?;
                let arg = (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best });
                hits += (Some(arg) == ds.graphs[i].label) as usize;
            }
            Ok(Metrics {
                accuracy: ratio(hits, indices.len()),
                auc: None,
                count: indices.len(),
            })
        }
        TaskData::Match { graphs, pairs } => {
            let ids: Vec<usize> = indices.iter().flat_map(|&i| [pairs[i].g1, pairs[i].g2]).collect();
            let emb = embed_ids(model, graphs, &ids)?;
            let mut scores = Vec::with_capacity(indices.len());
            let mut labels = Vec::with_capacity(indices.len());
            for &i in indices {
                let rec = pairs[i];
                let (a, b) = (emb[rec.g1].as_ref().unwrap(), emb[rec.g2].as_ref().unwrap());
                let d = plain_distance(a.last().unwrap(), b.last().unwrap());
                scores.push(similarity_value(d, config.scale));
                labels.push(rec.label().expect("checked"));
            }
            let hits = scores.iter().zip(&labels).filter(|(&s, &y)| (s >= 0.5) == y).count();
            Ok(Metrics {
                accuracy: ratio(hits, indices.len()),
                auc: roc_auc(&scores, &labels),
                count: indices.len(),
            })
        }
        TaskData::Similarity { graphs, triplets } => {
            let ids: Vec<usize> = indices
                .iter()
                .flat_map(|&i| [triplets[i].g1, triplets[i].g2, triplets[i].g3])
                .collect();
            let emb = embed_ids(model, graphs, &ids)?;
            let (mut hits, mut count) = (0, 0);
            for &i in indices {
                let t = triplets[i];
                if t.r == 0.0 {
                    continue;
                }
                let (a, b, c) = (
                    emb[t.g1].as_ref().unwrap(),
                    emb[t.g2].as_ref().unwrap(),
                    emb[t.g3].as_ref().unwrap(),
                );
                let k = a.len() as f64;
                let pred: f64 = (0..a.len())
                    .map(|l| plain_distance(&a[l], &b[l]) - plain_distance(&a[l], &c[l]))
                    .sum::<f64>()
                    / k;
                count += 1;
                hits += (pred != 0.0 && (pred > 0.0) == (t.r > 0.0)) as usize;
            }
            Ok(Metrics {
                accuracy: ratio(hits, count),
                auc: None,
                count,
            })
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best-validation checkpoint.
    pub checkpoint: Checkpoint,
    pub log: MetricLog,
    pub split: Split,
    /// Test-split metrics of the best checkpoint.
    pub test: Metrics,
    /// Epochs actually run.
    pub epochs_run: usize,
}

/// Builds a fresh model for `config` and `data`.
pub fn init_model(config: &TrainConfig, data: &TaskData) -> Result<HapModel, TrainError> {
    let ds = data.graphs();
    let classes = match data {
        TaskData::Classify(ds) => Some(ds.num_classes.max(1)),
        _ => None,
    };
    Ok(HapModel::new(config.model_config(ds.feature_dim, classes), config.seed)?)
}

/// One pass over `order` in batches; returns the mean example loss.
pub fn run_epoch(
    model: &mut HapModel,
    adam: &mut AdamState,
    data: &TaskData,
    order: &[usize],
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for batch in order.chunks(config.batch_size) {
        let results: Vec<Result<(f64, Vec<Matrix>), TrainError>> = batch
            .par_iter()
            .map(|&ex| {
                let mut rng = derived(config.seed, epoch as u64, ex as u64);
                let noise = config.train_noise.then_some(&mut rng);
                example_gradient(model, data, ex, config, noise)
            })
            .collect();
        let mut sum: Option<Vec<Matrix>> = None;
        for (&ex, r) in batch.iter().zip(results) {
            let (loss, grads) = r?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NumericFailure { epoch, example: ex });
            }
            total += loss;
            match &mut sum {
                None => sum = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.add_assign(g);
                    }
                }
            }
        }
        let mut grads = sum.expect("non-empty batch");
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grads {
            *g = g.scale(inv);
        }
        adam_step(&mut model.params, &grads, adam, config.learning_rate)?;
    }
    Ok(total / order.len().max(1) as f64)
}

/// Seed for model initialisation, shuffling and noise of restart `r`.
fn run_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        use rand::RngCore;
        derived(seed, u64::MAX, r as u64).next_u64()
    }
}

/// Trains on `data`, keeping the checkpoint with the best validation
/// accuracy (the last one when there is no validation split). With several
/// restarts the best run by validation accuracy wins.
pub fn train(config: &TrainConfig, data: &TaskData) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if data.task() != config.task {
        return Err(TrainError::TaskMismatch {
            expected: config.task,
            got: data.task(),
        });
    }
    data.check()?;
    let data = data.with_features(config.features, None)?;
    let split = split_for(config, data.num_examples())?;
    if split.train.is_empty() {
        return Err(TrainError::Invalid("training split is empty".into()));
    }
    let mut log = MetricLog::default();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut epoch_offset = 0;
    for r in 0..config.restarts {
        if config.restarts > 1 {
            log.push(epoch_offset + 1, "run", "restart", r as f64);
        }
        let (score, ckpt, ran) = train_run(config, &data, &split, run_seed(config.seed, r), epoch_offset, &mut log)?;
        epoch_offset += ran;
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, ckpt));
        }
    }
    let (_, checkpoint) = best.expect("at least one run");
    let best_model = checkpoint.model()?;
    let test = evaluate(&best_model, &data, &split.test, config)?;
    test.log(&mut log, checkpoint.epoch, "test");
    Ok(TrainOutcome {
        checkpoint,
        log,
        split,
        test,
        epochs_run: epoch_offset,
    })
}

/// One initialisation trained to completion or early stop. Epochs are
/// logged after `epoch_offset` so restarts share one log.
fn train_run(
    config: &TrainConfig,
    data: &TaskData,
    split: &Split,
    seed: u64,
    epoch_offset: usize,
    log: &mut MetricLog,
) -> Result<(f64, Checkpoint, usize), TrainError> {
    let run_config = TrainConfig {
        seed,
        ..config.clone()
    };
    let mut model = init_model(&run_config, data)?;
    let mut adam = AdamState::new(&model.params);
    let config_hash = config.hash();
    let snapshot = |model: &HapModel, adam: &AdamState, epoch: usize| Checkpoint {
        config: config.clone(),
        model_config: model.config.clone(),
        params: model.params.clone(),
        adam: adam.clone(),
        epoch,
        config_hash: config_hash.clone(),
    };
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut since_best = 0;
    let mut ran = 0;
    for epoch in 1..=config.epochs {
        let mut order = split.train.clone();
        order.shuffle(&mut derived(seed, epoch as u64, u64::MAX));
        let loss = run_epoch(&mut model, &mut adam, data, &order, &run_config, epoch)?;
        ran = epoch;
        let global = epoch_offset + epoch;
        log.push(global, "train", "loss", loss);
        let score = if split.val.is_empty() {
            f64::NEG_INFINITY
        } else {
            let m = evaluate(&model, data, &split.val, config)?;
            m.log(log, global, "val");
            m.accuracy
        };
        let improved = match &best {
            None => true,
            Some((b, _)) => score > *b || split.val.is_empty(),
        };
        if improved {
            best = Some((score, snapshot(&model, &adam, global)));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (score, ckpt) = best.expect("at least one epoch");
    Ok((score, ckpt, ran))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_toy_classification;
    use crate::rng::seeded;

    fn toy(n: usize) -> TaskData {
        let gs = gen_toy_classification(n, 12, [0.2, 0.6], &mut seeded(1)).unwrap();
        let mut ds = GraphDataset::new("toy", gs);
        ds.featurize_default();
        TaskData::Classify(ds)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            hidden_dim: 8,
            head_hidden: 8,
            clusters: Some(vec![4, 1]),
            ..Default::default()
        }
    }

    #[test]
    fn task_parse_and_display() {
        for t in [Task::Classify, Task::Match, Task::Similarity] {
            assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
        }
        assert!("regress".parse::<Task>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { split: [0.5, 0.1, 0.1], ..Default::default() },
            TrainConfig { clusters: Some(vec![4]), ..Default::default() },
            TrainConfig { tau: 0.0, ..Default::default() },
            TrainConfig { learning_rate: f64::NAN, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert_eq!(TrainConfig::default().cluster_counts(), vec![16, 1]);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_task_mismatch() {
        let cfg = TrainConfig {
            task: Task::Match,
            ..small_config()
        };
        assert!(matches!(train(&cfg, &toy(10)), Err(TrainError::TaskMismatch { .. })));
    }

    #[test]
    fn restarts_share_one_log() {
        let cfg = TrainConfig {
            restarts: 2,
            ..small_config()
        };
        let out = train(&cfg, &toy(20)).unwrap();
        assert_eq!(out.epochs_run, 6);
        assert_eq!(out.log.series("train", "loss").len(), 6);
        assert_eq!(out.log.series("run", "restart"), vec![0.0, 1.0]);
        let epochs: Vec<usize> = out.log.rows.iter().filter(|r| r.split == "train").map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn feature_modes() {
        let data = toy(6);
        let c = data.with_features(FeatureMode::Constant, None).unwrap();
        assert_eq!(c.graphs().feature_dim, 1);
        let d = data.with_features(FeatureMode::Degree, Some(30)).unwrap();
        assert_eq!(d.graphs().feature_dim, 30);
        assert!(d.graphs().graphs.iter().all(|g| g.features.cols() == 30));
        assert!(data.with_features(FeatureMode::Constant, Some(3)).is_err());
        assert_eq!("constant".parse::<FeatureMode>().unwrap(), FeatureMode::Constant);
    }

    #[test]
    fn short_run_logs_every_epoch() {
        let out = train(&small_config(), &toy(20)).unwrap();
        assert_eq!(out.epochs_run, 3);
        assert_eq!(out.log.series("train", "loss").len(), 3);
        assert_eq!(out.log.series("val", "accuracy").len(), 3);
        assert_eq!(out.log.series("test", "accuracy").len(), 1);
        assert!(out.split.is_disjoint());
    }

    #[test]
    fn checkpoint_text_round_trip() {
        let out = train(&small_config(), &toy(20)).unwrap();
        let text = out.checkpoint.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, out.checkpoint);
        assert_eq!(back.param_hash(), out.checkpoint.param_hash());
        let corrupted = text.replacen("\"seed\":0", "\"seed\":5", 1);
        assert!(Checkpoint::from_text(&corrupted).is_err());
        assert!(Checkpoint::from_text("nope").is_err());
    }
}
