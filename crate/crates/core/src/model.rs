//! The full network: embedding blocks alternating with coarsening modules,
//! producing one readout per level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarsen::{baseline_pool, coarsen_forward, BaselinePool, CoarseningLayer, ColumnMode};
use crate::embed::{EmbedLayer, LayerKind};
use crate::graph::Graph;
use crate::heads::{hierarchical_readout, ClassifierHead, HeadError};
use crate::rng::{seeded, HapRng};
use crate::tensor::{Bindings, Matrix, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("graph {id} has {got} feature columns, model expects {expected}")]
    FeatureWidth { id: usize, got: usize, expected: usize },
    #[error("model has no classifier head")]
    NoHead,
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Head(#[from] HeadError),
}

/// What sits between consecutive embedding blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// The learned coarsening module.
    Hap,
    /// A global pooler; later blocks then see a single-node graph.
    Baseline(BaselinePool),
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hap" => Ok(Pooling::Hap),
            other => other.parse().map(Pooling::Baseline),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layer_kind: LayerKind,
    pub layers_per_block: usize,
    /// Target cluster count of each coarsening module; its length is the
    /// number of modules `K`.
    pub clusters: Vec<usize>,
    pub tau: f64,
    pub column_mode: ColumnMode,
    pub pooling: Pooling,
    pub num_classes: Option<usize>,
    pub head_hidden: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.head_hidden == 0 {
            return bad("dimensions must be at least 1");
        }
        if self.layers_per_block == 0 {
            return bad("layers_per_block must be at least 1");
        }
        if self.clusters.is_empty() || self.clusters.contains(&0) {
            return bad("need at least one module and every cluster count >= 1");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if self.num_classes == Some(0) {
            return bad("num_classes must be at least 1");
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.clusters.len()
    }
}

#[derive(Clone, Debug)]
pub struct HapModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    blocks: Vec<Vec<EmbedLayer>>,
    coarsen: Vec<CoarseningLayer>,
    head: Option<ClassifierHead>,
}

/// Per-level readouts of one graph.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `1 × F` summary per level, first to last.
    pub levels: Vec<Var>,
    /// Raw per-level cluster features (`N'_k × F`).
    pub cluster_features: Vec<Var>,
}

impl ForwardOutput {
    /// Final-level graph embedding.
    pub fn embedding(&self) -> Var {
        *self.levels.last().expect("at least one level")
    }
}

impl HapModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut params = ParamStore::new();
        let mut blocks = Vec::new();
        let mut coarsen = Vec::new();
        let mut width = config.input_dim;
        for (k, &n_clusters) in config.clusters.iter().enumerate() {
            let mut block = Vec::new();
            for l in 0..config.layers_per_block {
                let name = format!("block{k}.layer{l}");
                block.push(EmbedLayer::new(
                    config.layer_kind,
                    &name,
                    width,
                    config.hidden_dim,
                    &mut params,
                    &mut rng,
                ));
                width = config.hidden_dim;
            }
            blocks.push(block);
            if config.pooling == Pooling::Hap {
                coarsen.push(CoarseningLayer::new(
                    &format!("coarsen{k}"),
                    width,
                    n_clusters,
                    config.tau,
                    config.column_mode,
                    &mut params,
                    &mut rng,
                ));
            }
        }
        let head = config
            .num_classes
            .map(|c| ClassifierHead::new(width, config.head_hidden, c, &mut params, &mut rng));
        Ok(Self {
            config,
            params,
            blocks,
            coarsen,
            head,
        })
    }

    /// Rebuilds the layer structure for `config` and installs `params`,
    /// which must match by name and shape.
    pub fn with_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let src = params
                .find(&name)
                .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))?;
            let value = params.get(src);
            if value.shape() != model.params.get(id).shape() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = value.clone();
        }
        Ok(model)
    }

    pub fn head(&self) -> Option<&ClassifierHead> {
        self.head.as_ref()
    }

    /// Runs every block and pooling stage on `graph`. Gumbel noise is drawn
    /// only when `noise` is given.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bindings,
        graph: &Graph,
        mut noise: Option<&mut HapRng>,
    ) -> Result<ForwardOutput, ModelError> {
        if graph.features.cols() != self.config.input_dim {
            return Err(ModelError::FeatureWidth {
                id: graph.id,
                got: graph.features.cols(),
                expected: self.config.input_dim,
            });
        }
        let mut h = tape.constant(graph.features.clone());
        let mut a = tape.constant(graph.adjacency.clone());
        let mut cluster_features = Vec::with_capacity(self.blocks.len());
        for (k, block) in self.blocks.iter().enumerate() {
            for layer in block {
                h = layer.forward(tape, p, a, h)?;
            }
            match self.config.pooling {
                Pooling::Hap => {
                    let out = coarsen_forward(tape, &self.coarsen[k], p, h, a, noise.as_deref_mut())?;
                    h = out.features;
                    a = out.sampled;
                }
                Pooling::Baseline(kind) => {
                    h = baseline_pool(tape, kind, h)?;
                    a = tape.constant(Matrix::zeros(1, 1));
                }
            }
            cluster_features.push(h);
        }
        let levels = hierarchical_readout(tape, &cluster_features)?;
        Ok(ForwardOutput {
            levels,
            cluster_features,
        })
    }

    /// Class probabilities for a forward output.
    pub fn classify(&self, tape: &mut Tape, p: &Bindings, out: &ForwardOutput) -> Result<Var, ModelError> {
        let head = self.head.as_ref().ok_or(ModelError::NoHead)?;
        Ok(head.classify(tape, p, out.embedding())?)
    }

    /// Deterministic per-level readouts as plain matrices.
    pub fn embed(&self, graph: &Graph) -> Result<Vec<Matrix>, ModelError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let out = self.forward(&mut tape, &p, graph, None)?;
        Ok(out.levels.iter().map(|&v| tape.value(v).clone()).collect())
    }

    /// Deterministic class probabilities.
    pub fn predict_proba(&self, graph: &Graph) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let out = self.forward(&mut tape, &p, graph, None)?;
        let probs = self.classify(&mut tape, &p, &out)?;
        Ok(tape.value(probs).row(0).to_vec())
    }
}

/// Default cluster counts for `k` modules: 16 for the first, halving for
/// any middle modules, 1 for the last.
pub fn default_clusters(k: usize) -> Vec<usize> {
    (0..k)
        .map(|i| if i + 1 == k { 1 } else { (16usize >> i).max(1) })
        .collect()
}

/// Ratio-based cluster counts: `max(1, ceil(ratio^(i+1) · mean_nodes))`
/// for all but the last module, which gets 1.
pub fn ratio_clusters(k: usize, ratio: f64, mean_nodes: f64) -> Vec<usize> {
    (0..k)
        .map(|i| {
            if i + 1 == k {
                1
            } else {
                ((ratio.powi(i as i32 + 1) * mean_nodes).ceil() as usize).max(1)
            }
        })
        .collect()
}
