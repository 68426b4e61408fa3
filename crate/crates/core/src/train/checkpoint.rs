//! Text checkpoints: configs as JSON lines, then named shaped arrays.
//!
//! ```text
//! hap-checkpoint 1
//! config {...}
//! model {...}
//! config-hash <hex>
//! epoch <n>
//! adam-step <t>
//! param <name> <rows> <cols>
//! <values, space separated>
//! adam-m <name> <rows> <cols>
//! ...
//! adam-v <name> <rows> <cols>
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a reload is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::{TrainConfig, TrainError};
use crate::model::{HapModel, ModelConfig};
use crate::tensor::{Matrix, ParamStore};

const MAGIC: &str = "hap-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model_config: ModelConfig,
    pub params: ParamStore,
    pub adam: AdamState,
    pub epoch: usize,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn model(&self) -> Result<HapModel, TrainError> {
        Ok(HapModel::with_params(self.model_config.clone(), self.params.clone())?)
    }

    /// SHA-256 over every parameter name, shape and bit pattern.
    pub fn param_hash(&self) -> String {
        params_hash(&self.params)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "config {}", serde_json::to_string(&self.config).expect("serializable")).unwrap();
        writeln!(out, "model {}", serde_json::to_string(&self.model_config).expect("serializable")).unwrap();
        writeln!(out, "config-hash {}", self.config_hash).unwrap();
        writeln!(out, "epoch {}", self.epoch).unwrap();
        writeln!(out, "adam-step {}", self.adam.t).unwrap();
        for (tag, mats) in [
            ("param", self.params.values()),
            ("adam-m", &self.adam.m[..]),
            ("adam-v", &self.adam.v[..]),
        ] {
            for (i, m) in mats.iter().enumerate() {
                let name = self.params.name(self.params.ids().nth(i).expect("id"));
                writeln!(out, "{tag} {name} {} {}", m.rows(), m.cols()).unwrap();
                let vals: Vec<String> = m.as_slice().iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", vals.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TrainError> {
        let mut lines = text.lines().enumerate().peekable();
        let mut next = |what: &str| -> Result<(usize, &str), TrainError> {
            lines
                .next()
                .ok_or_else(|| TrainError::Checkpoint(format!("truncated before {what}")))
        };
        let (_, magic) = next("header")?;
        if magic != MAGIC {
            return Err(TrainError::Checkpoint(format!("not a checkpoint (header {magic:?})")));
        }
        let field = |(ln, line): (usize, &str), key: &str| -> Result<String, TrainError> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| TrainError::Checkpoint(format!("line {}: expected `{key}`", ln + 1)))
        };
        let config: TrainConfig = serde_json::from_str(&field(next("config")?, "config")?)
            .map_err(|e| TrainError::Checkpoint(format!("config: {e}")))?;
        let model_config: ModelConfig = serde_json::from_str(&field(next("model")?, "model")?)
            .map_err(|e| TrainError::Checkpoint(format!("model config: {e}")))?;
        let config_hash = field(next("config-hash")?, "config-hash")?;
        let epoch = parse_num(&field(next("epoch")?, "epoch")?)?;
        let t = parse_num(&field(next("adam-step")?, "adam-step")?)? as u64;

        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        while let Ok((ln, header)) = next("array") {
            if header.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = header.split(' ').collect();
            if parts.len() != 4 {
                return Err(TrainError::Checkpoint(format!("line {}: bad array header", ln + 1)));
            }
            let (rows, cols) = (parse_num(parts[2])?, parse_num(parts[3])?);
            let (vln, body) = next("array values")?;
            let data = body
                .split(' ')
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| TrainError::Checkpoint(format!("line {}: {e}", vln + 1)))?;
            let mat = Matrix::from_vec(rows, cols, data)
                .map_err(|e| TrainError::Checkpoint(format!("line {}: {e}", vln + 1)))?;
            match parts[0] {
                "param" => {
                    params.add(parts[1], mat);
                }
                "adam-m" => m.push(mat),
                "adam-v" => v.push(mat),
                other => return Err(TrainError::Checkpoint(format!("line {}: unknown array kind {other}", ln + 1))),
            }
        }
        if m.len() != params.len() || v.len() != params.len() {
            return Err(TrainError::Checkpoint("optimizer state does not match parameters".into()));
        }
        if config.hash() != config_hash {
            return Err(TrainError::Checkpoint("config hash does not match stored config".into()));
        }
        Ok(Self {
            config,
            model_config,
            params,
            adam: AdamState { m, v, t },
            epoch,
            config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.to_text()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

pub fn params_hash(params: &ParamStore) -> String {
    let mut h = Sha256::new();
    for (name, m) in params.iter() {
        h.update(name.as_bytes());
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn parse_num(s: &str) -> Result<usize, TrainError> {
    s.trim()
        .parse()
        .map_err(|_| TrainError::Checkpoint(format!("expected a count, got {s:?}")))
}
