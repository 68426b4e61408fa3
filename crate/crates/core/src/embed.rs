//! Node and cluster embedding layers.
//!
//! Both layers add self-loops, so isolated nodes keep their own features.
//! They take the adjacency as a tape variable because after the first
//! coarsening module the adjacency is itself a function of the parameters.

use serde::{Deserialize, Serialize};

use crate::tensor::{Bindings, Matrix, ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gcn,
    Gat,
}

impl std::str::FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(LayerKind::Gcn),
            "gat" => Ok(LayerKind::Gat),
            other => Err(format!("unknown layer kind {other:?} (expected gcn or gat)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub weight: ParamId,
}

/// Single-head graph attention. The attention vector over `[z_i ‖ z_j]` is
/// stored as its two halves.
#[derive(Clone, Debug)]
pub struct GatLayer {
    pub weight: ParamId,
    pub attn_src: ParamId,
    pub attn_dst: ParamId,
}

#[derive(Clone, Debug)]
pub enum EmbedLayer {
    Gcn(GcnLayer),
    Gat(GatLayer),
}

/// Uniform Glorot initialisation in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

impl EmbedLayer {
    pub fn new<R: rand::Rng + ?Sized>(
        kind: LayerKind,
        name: &str,
        f_in: usize,
        f_out: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(f_in, f_out, rng));
        match kind {
            LayerKind::Gcn => EmbedLayer::Gcn(GcnLayer { weight }),
            LayerKind::Gat => {
                let attn_src = store.add(format!("{name}.attn_src"), glorot(f_out, 1, rng));
                let attn_dst = store.add(format!("{name}.attn_dst"), glorot(f_out, 1, rng));
                EmbedLayer::Gat(GatLayer {
                    weight,
                    attn_src,
                    attn_dst,
                })
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bindings, adj: Var, h: Var) -> Result<Var, TensorError> {
        match self {
            EmbedLayer::Gcn(l) => gcn_forward(tape, p[l.weight], adj, h),
            EmbedLayer::Gat(l) => gat_forward(tape, p[l.weight], p[l.attn_src], p[l.attn_dst], adj, h),
        }
    }
}

/// `ReLU(D̃^{-1/2} (A + I) D̃^{-1/2} H W)` with `D̃` the row sums of `A + I`.
pub fn gcn_forward(tape: &mut Tape, weight: Var, adj: Var, h: Var) -> Result<Var, TensorError> {
    let norm = normalized_adjacency(tape, adj)?;
    let hw = tape.matmul(h, weight)?;
    let agg = tape.matmul(norm, hw)?;
    Ok(tape.relu(agg))
}

/// Symmetric normalisation of `A + I`, differentiable in `A`.
pub fn normalized_adjacency(tape: &mut Tape, adj: Var) -> Result<Var, TensorError> {
    let (n, m) = tape.shape(adj);
    if n != m {
        return Err(TensorError::ShapeMismatch {
            op: "normalized_adjacency",
            left: (n, m),
            right: (n, n),
        });
    }
    let eye = tape.constant(Matrix::identity(n));
    let a_hat = tape.add(adj, eye)?;
    let deg = tape.row_sum(a_hat);
    let log_deg = tape.log(deg)?;
    let half = tape.scale(log_deg, -0.5);
    let inv_sqrt = tape.exp(half);
    let inv_sqrt_t = tape.transpose(inv_sqrt);
    let outer = tape.matmul(inv_sqrt, inv_sqrt_t)?;
    tape.mul(outer, a_hat)
}

/// Masked pairwise attention over the support of `A + I`:
/// `e_ij = LeakyReLU(a_src·z_i + a_dst·z_j)`, `α = softmax_j(e_ij)`,
/// output `ReLU(α Z)` with `Z = H W`.
pub fn gat_forward(
    tape: &mut Tape,
    weight: Var,
    attn_src: Var,
    attn_dst: Var,
    adj: Var,
    h: Var,
) -> Result<Var, TensorError> {
    let alpha = gat_attention(tape, weight, attn_src, attn_dst, adj, h)?;
    let z = tape.matmul(h, weight)?;
    let agg = tape.matmul(alpha, z)?;
    Ok(tape.relu(agg))
}

/// The normalised attention matrix of [`gat_forward`], exposed for tests.
pub fn gat_attention(
    tape: &mut Tape,
    weight: Var,
    attn_src: Var,
    attn_dst: Var,
    adj: Var,
    h: Var,
) -> Result<Var, TensorError> {
    let n = tape.shape(h).0;
    let z = tape.matmul(h, weight)?;
    let s_src = tape.matmul(z, attn_src)?;
    let s_dst = tape.matmul(z, attn_dst)?;
    let ones_row = tape.constant(Matrix::ones(1, n));
    let ones_col = tape.constant(Matrix::ones(n, 1));
    let left = tape.matmul(s_src, ones_row)?;
    let s_dst_t = tape.transpose(s_dst);
    let right = tape.matmul(ones_col, s_dst_t)?;
    let logits = tape.add(left, right)?;
    let logits = tape.leaky_relu(logits);
    let a = tape.value(adj);
    let mask = Matrix::from_fn(n, n, |i, j| if i == j || a[(i, j)] != 0.0 { 1.0 } else { 0.0 });
    tape.masked_row_softmax(logits, &mask)
}
