//! Task heads and losses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::glorot;
use crate::tensor::{Bindings, Matrix, ParamId, ParamStore, Tape, TensorError, Var};

/// Lower clamp for probabilities entering a log.
pub const PROB_CLAMP: f64 = 1e-12;
/// Added under the square root of Euclidean distances.
pub const DIST_EPS: f64 = 1e-12;
/// Default similarity scale.
pub const DEFAULT_SCALE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("hierarchical readout needs at least one level")]
    NoLevels,
    #[error("{0} predictions but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Two dense layers with ReLU between and softmax on top.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub classes: usize,
}

impl ClassifierHead {
    pub fn new<R: rand::Rng + ?Sized>(
        input: usize,
        hidden: usize,
        classes: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: store.add("head.w1", glorot(input, hidden, rng)),
            b1: store.add("head.b1", Matrix::zeros(1, hidden)),
            w2: store.add("head.w2", glorot(hidden, classes, rng)),
            b2: store.add("head.b2", Matrix::zeros(1, classes)),
            classes,
        }
    }

    /// `softmax(W2 ReLU(W1 x + b1) + b2)` for a `1 × F` embedding.
    pub fn classify(&self, tape: &mut Tape, p: &Bindings, x: Var) -> Result<Var, TensorError> {
        let logits = self.logits(tape, p, x)?;
        Ok(tape.row_softmax(logits))
    }

    pub fn logits(&self, tape: &mut Tape, p: &Bindings, x: Var) -> Result<Var, TensorError> {
        let h = tape.matmul(x, p[self.w1])?;
        let h = tape.add(h, p[self.b1])?;
        let h = tape.relu(h);
        let o = tape.matmul(h, p[self.w2])?;
        tape.add(o, p[self.b2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub scale: f64,
    pub levels: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            scale: DEFAULT_SCALE,
            levels: 2,
        }
    }
}

/// A graph triple with its relative edit-distance label `r = g12 − g13`.
/// Ids are 1-based dataset graph ids.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub g1: usize,
    pub g2: usize,
    pub g3: usize,
    pub r: f64,
}

/// Per-level graph summaries: the mean over cluster rows of each level.
pub fn hierarchical_readout(tape: &mut Tape, levels: &[Var]) -> Result<Vec<Var>, HeadError> {
    if levels.is_empty() {
        return Err(HeadError::NoLevels);
    }
    Ok(levels.iter().map(|&h| tape.col_mean(h)).collect())
}

/// `−Σ_g log p_g(y_g)`, probabilities clamped at [`PROB_CLAMP`].
pub fn loss_single(tape: &mut Tape, predictions: &[Var], labels: &[usize]) -> Result<Var, HeadError> {
    if predictions.len() != labels.len() {
        return Err(HeadError::LengthMismatch(predictions.len(), labels.len()));
    }
    let mut total: Option<Var> = None;
    for (&p, &y) in predictions.iter().zip(labels) {
        let classes = tape.shape(p).1;
        if y >= classes {
            return Err(HeadError::LabelOutOfRange { label: y, classes });
        }
        let mut onehot = Matrix::zeros(1, classes);
        onehot[(0, y)] = 1.0;
        let pick = tape.constant(onehot);
        let masked = tape.mul(p, pick)?;
        let py = tape.sum(masked);
        let py = tape.clamp(py, PROB_CLAMP, f64::INFINITY);
        let lp = tape.log(py)?;
        let term = tape.scale(lp, -1.0);
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => Ok(tape.constant(Matrix::scalar(0.0))),
    }
}

/// `sqrt(Σ (x − y)² + ε)` between two `1 × F` rows.
pub fn euclidean_distance(tape: &mut Tape, x: Var, y: Var) -> Result<Var, TensorError> {
    let diff = tape.sub(x, y)?;
    let sq = tape.mul(diff, diff)?;
    let s = tape.sum(sq);
    let s = tape.add_scalar(s, DIST_EPS);
    tape.sqrt(s)
}

/// `exp(−scale · d)`.
pub fn similarity_score(tape: &mut Tape, d: Var, scale: f64) -> Var {
    let z = tape.scale(d, -scale);
    tape.exp(z)
}

pub fn similarity_value(d: f64, scale: f64) -> f64 {
    (-scale * d).exp()
}

/// Hierarchical binary cross-entropy over per-level distances:
/// `−(1/K) Σ_k [y log s_k + (1−y) log(1−s_k)]`. With `literal` the
/// negative-pair term is dropped.
pub fn loss_pair(
    tape: &mut Tape,
    distances: &[Var],
    label: bool,
    scale: f64,
    literal: bool,
) -> Result<Var, HeadError> {
    if distances.is_empty() {
        return Err(HeadError::NoLevels);
    }
    let k = distances.len() as f64;
    let mut total: Option<Var> = None;
    for &d in distances {
        let s = similarity_score(tape, d, scale);
        let s = tape.clamp(s, PROB_CLAMP, 1.0 - PROB_CLAMP);
        let term = if label {
            tape.log(s)?
        } else if literal {
            continue;
        } else {
            let neg = tape.scale(s, -1.0);
            let one_minus = tape.add_scalar(neg, 1.0);
            tape.log(one_minus)?
        };
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    match total {
        Some(t) => Ok(tape.scale(t, -1.0 / k)),
        None => Ok(tape.constant(Matrix::scalar(0.0))),
    }
}

/// Hierarchical squared error `(1/K) Σ_k ((d12_k − d13_k) − r)²`. With
/// `literal` the square is dropped.
pub fn loss_triple(
    tape: &mut Tape,
    d12: &[Var],
    d13: &[Var],
    r: f64,
    literal: bool,
) -> Result<Var, HeadError> {
    if d12.is_empty() {
        return Err(HeadError::NoLevels);
    }
    if d12.len() != d13.len() {
        return Err(HeadError::LengthMismatch(d12.len(), d13.len()));
    }
    let k = d12.len() as f64;
    let mut total: Option<Var> = None;
    for (&a, &b) in d12.iter().zip(d13) {
        let diff = tape.sub(a, b)?;
        let resid = tape.add_scalar(diff, -r);
        let term = if literal { resid } else { tape.mul(resid, resid)? };
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(tape.scale(total.expect("non-empty"), 1.0 / k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn scalar(t: &Tape, v: Var) -> f64 {
        t.value(v)[(0, 0)]
    }

    #[test]
    fn readout_examples() {
        let mut t = Tape::new();
        let one = t.constant(Matrix::from_rows(&[[1.5, -2.0]]));
        let two = t.constant(Matrix::from_rows(&[[1.0, 3.0], [3.0, 1.0]]));
        let swapped = t.constant(Matrix::from_rows(&[[3.0, 1.0], [1.0, 3.0]]));
        let r = hierarchical_readout(&mut t, &[one, two, swapped]).unwrap();
        assert_eq!(t.value(r[0]), t.value(one));
        assert_eq!(t.value(r[1]), &Matrix::from_rows(&[[2.0, 2.0]]));
        assert_eq!(t.value(r[1]), t.value(r[2]));
        assert!(matches!(hierarchical_readout(&mut t, &[]), Err(HeadError::NoLevels)));
    }

    #[test]
    fn classify_examples() {
        let mut store = ParamStore::new();
        let head = ClassifierHead::new(4, 3, 2, &mut store, &mut seeded(1));
        for id in store.ids().collect::<Vec<_>>() {
            let (r, c) = store.get(id).shape();
            *store.get_mut(id) = Matrix::zeros(r, c);
        }
        let mut t = Tape::new();
        let p = store.bind(&mut t, false);
        let x = t.constant(Matrix::from_rows(&[[1.0, -1.0, 2.0, 0.5]]));
        let probs = head.classify(&mut t, &p, x).unwrap();
        assert_eq!(t.value(probs), &Matrix::from_rows(&[[0.5, 0.5]]));

        // Output-layer logits (ln 3, 0) through the bias alone.
        *store.get_mut(head.b2) = Matrix::from_rows(&[[3f64.ln(), 0.0]]);
        let mut t = Tape::new();
        let p = store.bind(&mut t, false);
        let x = t.constant(Matrix::ones(1, 4));
        let probs = head.classify(&mut t, &p, x).unwrap();
        let v = t.value(probs);
        assert!((v[(0, 0)] - 0.75).abs() < 1e-15 && (v[(0, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_single_examples() {
        let mut t = Tape::new();
        let certain = t.constant(Matrix::from_rows(&[[0.0, 1.0]]));
        let l = loss_single(&mut t, &[certain], &[1]).unwrap();
        assert_eq!(scalar(&t, l), 0.0);
        let uniform = t.constant(Matrix::from_rows(&[[0.5, 0.5]]));
        let l1 = loss_single(&mut t, &[uniform], &[0]).unwrap();
        assert!((scalar(&t, l1) - 2f64.ln()).abs() < 1e-15);
        let l2 = loss_single(&mut t, &[uniform, uniform], &[0, 0]).unwrap();
        assert_eq!(scalar(&t, l2), 2.0 * scalar(&t, l1));
        // Zero mass on the true class is clamped, not fatal.
        let l = loss_single(&mut t, &[certain], &[0]).unwrap();
        assert!((scalar(&t, l) - (-PROB_CLAMP.ln())).abs() < 1e-9);
        assert!(loss_single(&mut t, &[certain], &[2]).is_err());
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity_value(0.0, 0.5), 1.0);
        assert!((similarity_value(2.0, DEFAULT_SCALE) - (-1f64).exp()).abs() < 1e-15);
        let mut last = 1.0;
        for d in [0.1, 1.0, 10.0, 100.0, 700.0] {
            let s = similarity_value(d, 0.5);
            assert!(s < last && s > 0.0);
            last = s;
        }
    }

    #[test]
    fn loss_pair_examples() {
        let mut t = Tape::new();
        let zero = t.constant(Matrix::scalar(0.0));
        let l = loss_pair(&mut t, &[zero, zero], true, 0.5, false).unwrap();
        assert!(scalar(&t, l).abs() < 1e-11);
        // s = 0.5 at d = 2 ln 2 / scale.
        let d = t.constant(Matrix::scalar(2.0 * 2f64.ln()));
        let l = loss_pair(&mut t, &[d], true, 0.5, false).unwrap();
        assert!((scalar(&t, l) - 2f64.ln()).abs() < 1e-12);
        let l = loss_pair(&mut t, &[zero], false, 0.5, false).unwrap();
        assert!((scalar(&t, l) - (-PROB_CLAMP.ln())).abs() < 1e-3);
        let l = loss_pair(&mut t, &[zero], false, 0.5, true).unwrap();
        assert_eq!(scalar(&t, l), 0.0);
    }

    #[test]
    fn loss_triple_examples() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::scalar(2.5));
        let l = loss_triple(&mut t, &[a, a], &[a, a], 0.0, false).unwrap();
        assert_eq!(scalar(&t, l), 0.0);
        let d12 = t.constant(Matrix::scalar(4.0));
        let d13 = t.constant(Matrix::scalar(1.0));
        let l = loss_triple(&mut t, &[d12], &[d13], 1.0, false).unwrap();
        assert_eq!(scalar(&t, l), 4.0);
        let swapped = loss_triple(&mut t, &[d13], &[d12], -1.0, false).unwrap();
        assert_eq!(scalar(&t, swapped), 4.0);
        let lit = loss_triple(&mut t, &[d12], &[d13], 1.0, true).unwrap();
        assert_eq!(scalar(&t, lit), 2.0);
    }
}
