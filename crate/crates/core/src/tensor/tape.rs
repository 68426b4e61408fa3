//! Dynamic recording tape for reverse-mode differentiation.
//!
//! Every primitive appends one node holding its forward value. Nodes whose
//! inputs all lack `requires_grad` are recorded as constants and skipped by
//! the reverse sweep.

use super::{Matrix, TensorError};

/// Negative slope shared by every LeakyReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Handle to a matrix recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    RowSoftmax(Var),
    MaskedRowSoftmax(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Var, Var),
    RowSum(Var),
    RowMean(Var),
    ColSum(Var),
    ColMean(Var),
    Sum(Var),
    BroadcastRows(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications. One tape per example.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a reverse sweep: one optional gradient per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, materialising zeros of `shape` when absent.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, value: Matrix, op: Op, input: Var) -> Var {
        let rg = self.nodes[input.0].requires_grad;
        self.push(value, if rg { op } else { Op::Leaf }, rg)
    }

    fn binary(&mut self, value: Matrix, op: Op, a: Var, b: Var) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, if rg { op } else { Op::Leaf }, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(value, Op::MatMul(a, b), a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.unary(value, Op::Transpose(a), a)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| x + y)
            .map_err(|_| TensorError::shape("add", self.shape(a), self.shape(b)))?;
        Ok(self.binary(value, Op::Add(a, b), a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| x - y)
            .map_err(|_| TensorError::shape("sub", self.shape(a), self.shape(b)))?;
        Ok(self.binary(value, Op::Sub(a, b), a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| x * y)
            .map_err(|_| TensorError::shape("mul", self.shape(a), self.shape(b)))?;
        Ok(self.binary(value, Op::Mul(a, b), a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.unary(value, Op::Scale(a, s), a)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.unary(value, Op::AddScalar(a), a)
    }

    /// Row-wise softmax with max subtraction.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for i in 0..x.rows() {
            softmax_in_place(out.row_mut(i), None);
        }
        self.unary(out, Op::RowSoftmax(a), a)
    }

    /// Row-wise softmax restricted to entries where `mask` is nonzero.
    /// Masked entries come out as exact zeros; every row needs at least one
    /// unmasked entry.
    pub fn masked_row_softmax(&mut self, a: Var, mask: &Matrix) -> Result<Var, TensorError> {
        let x = self.value(a);
        if x.shape() != mask.shape() {
            return Err(TensorError::shape("masked_row_softmax", x.shape(), mask.shape()));
        }
        let mut out = x.clone();
        for i in 0..x.rows() {
            let keep: Vec<bool> = mask.row(i).iter().map(|&m| m != 0.0).collect();
            if !keep.iter().any(|&k| k) {
                return Err(TensorError::Domain {
                    op: "masked_row_softmax",
                    detail: format!("row {i} is fully masked"),
                });
            }
            softmax_in_place(out.row_mut(i), Some(&keep));
        }
        Ok(self.unary(out, Op::MaskedRowSoftmax(a), a))
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        self.leaky_relu_with_slope(a, LEAKY_SLOPE)
    }

    pub fn leaky_relu_with_slope(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(value, Op::LeakyRelu(a, slope), a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(value, Op::Relu(a), a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.unary(value, Op::Sigmoid(a), a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.unary(value, Op::Exp(a), a)
    }

    /// Natural log; every input entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        if let Some(bad) = x.as_slice().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let value = x.map(f64::ln);
        Ok(self.unary(value, Op::Log(a), a))
    }

    /// Square root; inputs must be strictly positive so the derivative exists.
    pub fn sqrt(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        if let Some(bad) = x.as_slice().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Domain {
                op: "sqrt",
                detail: format!("non-positive input {bad}"),
            });
        }
        let value = x.map(f64::sqrt);
        Ok(self.unary(value, Op::Sqrt(a), a))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(value, Op::Clamp(a, lo, hi), a)
    }

    /// Side-by-side concatenation `[a ‖ b]`; row counts must match.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(TensorError::shape("concat_cols", x.shape(), y.shape()));
        }
        let cols = x.cols() + y.cols();
        let mut data = Vec::with_capacity(x.rows() * cols);
        for i in 0..x.rows() {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(i));
        }
        let value = Matrix::from_vec(x.rows(), cols, data)?;
        Ok(self.binary(value, Op::ConcatCols(a, b), a, b))
    }

    /// Sum of each row, `rows × 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|i| x.row(i).iter().sum()).collect();
        let value = Matrix::from_vec(x.rows(), 1, data).expect("non-empty");
        self.unary(value, Op::RowSum(a), a)
    }

    /// Mean of each row, `rows × 1`.
    pub fn row_mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let c = x.cols() as f64;
        let data = (0..x.rows()).map(|i| x.row(i).iter().sum::<f64>() / c).collect();
        let value = Matrix::from_vec(x.rows(), 1, data).expect("non-empty");
        self.unary(value, Op::RowMean(a), a)
    }

    /// Sum over rows, `1 × cols`.
    pub fn col_sum(&mut self, a: Var) -> Var {
        let value = col_sums(self.value(a));
        self.unary(value, Op::ColSum(a), a)
    }

    /// Mean over rows, `1 × cols`.
    pub fn col_mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let r = x.rows() as f64;
        let value = col_sums(x).map(|v| v / r);
        self.unary(value, Op::ColMean(a), a)
    }

    /// Sum of all entries, `1 × 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.unary(value, Op::Sum(a), a)
    }

    /// Repeats a `1 × c` row `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if x.rows() != 1 || rows == 0 {
            return Err(TensorError::shape("broadcast_rows", x.shape(), (rows, x.cols())));
        }
        let mut data = Vec::with_capacity(rows * x.cols());
        for _ in 0..rows {
            data.extend_from_slice(x.row(0));
        }
        let value = Matrix::from_vec(rows, x.cols(), data)?;
        Ok(self.unary(value, Op::BroadcastRows(a), a))
    }

    /// Reverse sweep from a `1 × 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss {
                rows: shape.0,
                cols: shape.1,
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let out = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(a) {
                    let bt = self.value(b).transpose();
                    accumulate(grads, a, g.matmul(&bt).expect("shapes recorded"));
                }
                if self.requires_grad(b) {
                    let at = self.value(a).transpose();
                    accumulate(grads, b, at.matmul(g).expect("shapes recorded"));
                }
            }
            Op::Transpose(a) => accumulate(grads, a, g.transpose()),
            Op::Add(a, b) => {
                self.accumulate_if(grads, a, || g.clone());
                self.accumulate_if(grads, b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate_if(grads, a, || g.clone());
                self.accumulate_if(grads, b, || g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                self.accumulate_if(grads, a, || {
                    g.zip_map(self.value(b), |x, y| x * y).expect("shapes recorded")
                });
                self.accumulate_if(grads, b, || {
                    g.zip_map(self.value(a), |x, y| x * y).expect("shapes recorded")
                });
            }
            Op::Scale(a, s) => accumulate(grads, a, g.scale(s)),
            Op::AddScalar(a) => accumulate(grads, a, g.clone()),
            Op::RowSoftmax(a) | Op::MaskedRowSoftmax(a) => {
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let y = out.row(i);
                    let gy = g.row(i);
                    let dot: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                    for (j, v) in d.row_mut(i).iter_mut().enumerate() {
                        *v = y[j] * (gy[j] - dot);
                    }
                }
                accumulate(grads, a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let d = g
                    .zip_map(self.value(a), |gv, x| if x > 0.0 { gv } else { slope * gv })
                    .expect("shapes recorded");
                accumulate(grads, a, d);
            }
            Op::Relu(a) => {
                let d = g
                    .zip_map(self.value(a), |gv, x| if x > 0.0 { gv } else { 0.0 })
                    .expect("shapes recorded");
                accumulate(grads, a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(out, |gv, y| gv * y * (1.0 - y)).expect("shapes recorded");
                accumulate(grads, a, d);
            }
            Op::Exp(a) => {
                let d = g.zip_map(out, |gv, y| gv * y).expect("shapes recorded");
                accumulate(grads, a, d);
            }
            Op::Log(a) => {
                let d = g.zip_map(self.value(a), |gv, x| gv / x).expect("shapes recorded");
                accumulate(grads, a, d);
            }
            Op::Sqrt(a) => {
                let d = g.zip_map(out, |gv, y| 0.5 * gv / y).expect("shapes recorded");
                accumulate(grads, a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let d = g
                    .zip_map(self.value(a), |gv, x| if x < lo || x > hi { 0.0 } else { gv })
                    .expect("shapes recorded");
                accumulate(grads, a, d);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(a).cols();
                let cb = self.value(b).cols();
                self.accumulate_if(grads, a, || {
                    Matrix::from_fn(g.rows(), ca, |i, j| g[(i, j)])
                });
                self.accumulate_if(grads, b, || {
                    Matrix::from_fn(g.rows(), cb, |i, j| g[(i, ca + j)])
                });
            }
            Op::RowSum(a) => {
                let (r, c) = self.shape(a);
                accumulate(grads, a, Matrix::from_fn(r, c, |i, _| g[(i, 0)]));
            }
            Op::RowMean(a) => {
                let (r, c) = self.shape(a);
                let inv = 1.0 / c as f64;
                accumulate(grads, a, Matrix::from_fn(r, c, |i, _| g[(i, 0)] * inv));
            }
            Op::ColSum(a) => {
                let (r, c) = self.shape(a);
                accumulate(grads, a, Matrix::from_fn(r, c, |_, j| g[(0, j)]));
            }
            Op::ColMean(a) => {
                let (r, c) = self.shape(a);
                let inv = 1.0 / r as f64;
                accumulate(grads, a, Matrix::from_fn(r, c, |_, j| g[(0, j)] * inv));
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(a);
                accumulate(grads, a, Matrix::filled(r, c, g[(0, 0)]));
            }
            Op::BroadcastRows(a) => accumulate(grads, a, col_sums(g)),
        }
    }

    fn accumulate_if(&self, grads: &mut [Option<Matrix>], v: Var, f: impl FnOnce() -> Matrix) {
        if self.requires_grad(v) {
            accumulate(grads, v, f());
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn col_sums(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, x.cols());
    for i in 0..x.rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable softmax of one row; entries with `keep[j] == false` become 0.
pub(crate) fn softmax_in_place(row: &mut [f64], keep: Option<&[bool]>) {
    let kept = |j: usize| keep.map_or(true, |k| k[j]);
    let max = row
        .iter()
        .enumerate()
        .filter(|(j, _)| kept(*j))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, v) in row.iter_mut().enumerate() {
        if kept(j) {
            *v = (*v - max).exp();
            total += *v;
        } else {
            *v = 0.0;
        }
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
