//! The graph coarsening module and the baseline global poolers.
//!
//! One coarsening pass maps `N` nodes with features `H` and adjacency `A`
//! onto a fixed number `N'` of soft clusters:
//!
//! 1. content matrix `C = H T` (`N × N'`)
//! 2. cross-level scores `M_ij = LeakyReLU(a_row·C_i + a_col·D_j)`, where
//!    `D_j` describes cluster `j` (see [`ColumnMode`])
//! 3. row softmax of the scores gives the assignment `M`
//! 4. cluster features `H' = Mᵀ H` and adjacency `A' = Mᵀ A M`
//! 5. row-wise Gumbel-Softmax over `log(A' + ε)` gives the sampled `Ã'`

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::glorot;
use crate::rng::HapRng;
use crate::tensor::{sigmoid, Bindings, Matrix, ParamId, ParamStore, Tape, TensorError, Var};

/// Added inside the log of the soft-sampling logits.
pub const LOG_EPS: f64 = 1e-12;

/// How the per-cluster descriptor `D_j` is built from column `j` of `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnMode {
    /// `D_j = (1/N) Σ_i C_ij C_i`: affinity-weighted mean of node rows.
    /// Size-agnostic and invariant to node order.
    AffinitySummary,
    /// Column `j` zero-padded or truncated to length `N'`. Depends on node
    /// order once `N > N'`.
    PadTruncate,
}

impl std::str::FromStr for ColumnMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "affinity-summary" | "affinity" => Ok(ColumnMode::AffinitySummary),
            "pad-truncate" | "pad" => Ok(ColumnMode::PadTruncate),
            other => Err(format!("unknown column mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoarseningLayer {
    /// `T`, `F × N'`.
    pub content_map: ParamId,
    /// `N' × 1`.
    pub attn_row: ParamId,
    /// `N' × 1`.
    pub attn_col: ParamId,
    pub n_clusters: usize,
    pub tau: f64,
    pub column_mode: ColumnMode,
}

impl CoarseningLayer {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        features: usize,
        n_clusters: usize,
        tau: f64,
        column_mode: ColumnMode,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        assert!(n_clusters >= 1, "n_clusters must be at least 1");
        assert!(tau > 0.0, "tau must be positive");
        Self {
            content_map: store.add(format!("{name}.content_map"), glorot(features, n_clusters, rng)),
            attn_row: store.add(format!("{name}.attn_row"), glorot(n_clusters, 1, rng)),
            attn_col: store.add(format!("{name}.attn_col"), glorot(n_clusters, 1, rng)),
            n_clusters,
            tau,
            column_mode,
        }
    }
}

/// Tape handles produced by one coarsening pass.
#[derive(Clone, Copy, Debug)]
pub struct CoarsenOutput {
    /// `H'`, `N' × F`.
    pub features: Var,
    /// Dense `A' = Mᵀ A M`.
    pub adjacency: Var,
    /// Soft-sampled `Ã'`; feeds the next embedding stage.
    pub sampled: Var,
    /// Row-stochastic `M`, `N × N'`.
    pub assignment: Var,
    /// Content matrix `C`, `N × N'`.
    pub content: Var,
}

/// Plain-value snapshot of an assignment for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix {
    pub m: Matrix,
    pub content: Matrix,
}

impl CoarsenOutput {
    pub fn assignment_matrix(&self, tape: &Tape) -> AssignmentMatrix {
        AssignmentMatrix {
            m: tape.value(self.assignment).clone(),
            content: tape.value(self.content).clone(),
        }
    }
}

/// `C = H T`.
pub fn build_gcont(tape: &mut Tape, h: Var, content_map: Var) -> Result<Var, TensorError> {
    tape.matmul(h, content_map)
}

/// Descriptor `D_j` of cluster `j`, computed directly from values.
pub fn cluster_descriptor(c: &Matrix, j: usize, mode: ColumnMode) -> Vec<f64> {
    let (n, k) = c.shape();
    assert!(j < k, "cluster index {j} out of range for {k} clusters");
    match mode {
        ColumnMode::AffinitySummary => {
            let mut d = vec![0.0; k];
            for i in 0..n {
                let w = c[(i, j)];
                for (dv, &cv) in d.iter_mut().zip(c.row(i)) {
                    *dv += w * cv;
                }
            }
            d.iter_mut().for_each(|v| *v /= n as f64);
            d
        }
        ColumnMode::PadTruncate => (0..k).map(|t| if t < n { c[(t, j)] } else { 0.0 }).collect(),
    }
}

/// All descriptors as an `N' × N'` matrix, row `j` = `D_j`.
pub fn cluster_descriptors(tape: &mut Tape, c: Var, mode: ColumnMode) -> Result<Var, TensorError> {
    let (n, k) = tape.shape(c);
    match mode {
        ColumnMode::AffinitySummary => {
            let ct = tape.transpose(c);
            let gram = tape.matmul(ct, c)?;
            Ok(tape.scale(gram, 1.0 / n as f64))
        }
        ColumnMode::PadTruncate => {
            // Selection S (N' × N) keeps the first min(N, N') node rows.
            let sel = tape.constant(Matrix::from_fn(k, n, |t, i| if t == i { 1.0 } else { 0.0 }));
            let kept = tape.matmul(sel, c)?;
            Ok(tape.transpose(kept))
        }
    }
}

/// Raw cross-level scores `LeakyReLU(a_row·C_i + a_col·D_j)`, `N × N'`.
pub fn moa_scores(
    tape: &mut Tape,
    c: Var,
    attn_row: Var,
    attn_col: Var,
    mode: ColumnMode,
) -> Result<Var, TensorError> {
    let (n, k) = tape.shape(c);
    let d = cluster_descriptors(tape, c, mode)?;
    let row_part = tape.matmul(c, attn_row)?; // N × 1
    let col_part = tape.matmul(d, attn_col)?; // N' × 1
    let ones_k = tape.constant(Matrix::ones(1, k));
    let ones_n = tape.constant(Matrix::ones(n, 1));
    let rows = tape.matmul(row_part, ones_k)?;
    let col_t = tape.transpose(col_part);
    let cols = tape.matmul(ones_n, col_t)?;
    let pre = tape.add(rows, cols)?;
    Ok(tape.leaky_relu(pre))
}

/// Row softmax of raw scores.
pub fn normalize_assignment(tape: &mut Tape, raw: Var) -> Var {
    tape.row_softmax(raw)
}

/// `(H', A') = (Mᵀ H, Mᵀ A M)`.
pub fn form_clusters(tape: &mut Tape, m: Var, h: Var, a: Var) -> Result<(Var, Var), TensorError> {
    let mt = tape.transpose(m);
    let h_next = tape.matmul(mt, h)?;
    // Dense Mᵀ on the left keeps the N'·N² product independent of sparsity.
    let mta = tape.matmul(mt, a)?;
    let a_next = tape.matmul(mta, m)?;
    Ok((h_next, a_next))
}

/// Standard Gumbel noise matrix.
pub fn gumbel_noise(rows: usize, cols: usize, rng: &mut HapRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let mut u: f64 = rng.gen();
        while u <= 0.0 {
            u = rng.gen();
        }
        -(-u.ln()).ln()
    })
}

/// Row-wise Gumbel-Softmax of `log(A' + ε)` at temperature `tau`. Noise is
/// drawn only when `noise` is provided (training); otherwise this is the
/// deterministic tempered softmax.
pub fn soft_sample(
    tape: &mut Tape,
    a: Var,
    tau: f64,
    noise: Option<&mut HapRng>,
) -> Result<Var, TensorError> {
    if tau <= 0.0 {
        return Err(TensorError::Domain {
            op: "soft_sample",
            detail: format!("temperature must be positive, got {tau}"),
        });
    }
    let shifted = tape.add_scalar(a, LOG_EPS);
    let mut logits = tape.log(shifted)?;
    if let Some(rng) = noise {
        let (r, c) = tape.shape(a);
        let g = tape.constant(gumbel_noise(r, c, rng));
        logits = tape.add(logits, g)?;
    }
    let tempered = tape.scale(logits, 1.0 / tau);
    Ok(tape.row_softmax(tempered))
}

/// One full coarsening pass.
pub fn coarsen_forward(
    tape: &mut Tape,
    layer: &CoarseningLayer,
    p: &Bindings,
    h: Var,
    a: Var,
    noise: Option<&mut HapRng>,
) -> Result<CoarsenOutput, TensorError> {
    let content = build_gcont(tape, h, p[layer.content_map])?;
    let raw = moa_scores(tape, content, p[layer.attn_row], p[layer.attn_col], layer.column_mode)?;
    let assignment = normalize_assignment(tape, raw);
    let (features, adjacency) = form_clusters(tape, assignment, h, a)?;
    let sampled = soft_sample(tape, adjacency, layer.tau, noise)?;
    Ok(CoarsenOutput {
        features,
        adjacency,
        sampled,
        assignment,
        content,
    })
}

/// Global poolers used by the ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePool {
    Sum,
    Mean,
    MeanAttention,
}

impl std::str::FromStr for BaselinePool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sum" => Ok(BaselinePool::Sum),
            "mean" => Ok(BaselinePool::Mean),
            "mean-att" | "mean-attention" => Ok(BaselinePool::MeanAttention),
            other => Err(format!("unknown pool {other:?}")),
        }
    }
}

/// Pools `N × F` node features to `1 × F`. Mean-attention weights each row
/// by `sigmoid(h_i · c)` against the mean row `c`.
pub fn baseline_pool(tape: &mut Tape, kind: BaselinePool, h: Var) -> Result<Var, TensorError> {
    match kind {
        BaselinePool::Sum => Ok(tape.col_sum(h)),
        BaselinePool::Mean => Ok(tape.col_mean(h)),
        BaselinePool::MeanAttention => {
            let c = tape.col_mean(h);
            let ct = tape.transpose(c);
            let scores = tape.matmul(h, ct)?; // N × 1
            let w = tape.sigmoid(scores);
            let wt = tape.transpose(w);
            tape.matmul(wt, h)
        }
    }
}

/// Plain-value mean-attention pooling, used as a cross-check.
pub fn mean_attention_reference(h: &Matrix) -> Vec<f64> {
    let (n, f) = h.shape();
    let c: Vec<f64> = (0..f).map(|j| (0..n).map(|i| h[(i, j)]).sum::<f64>() / n as f64).collect();
    let mut out = vec![0.0; f];
    for i in 0..n {
        let w = sigmoid(h.row(i).iter().zip(&c).map(|(a, b)| a * b).sum());
        for (o, v) in out.iter_mut().zip(h.row(i)) {
            *o += w * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{er_random_graph, random_permutation};
    use crate::rng::seeded;
    use crate::tensor::{grad_check_many, LEAKY_SLOPE};

    fn eval<F: FnOnce(&mut Tape) -> Var>(f: F) -> Matrix {
        let mut t = Tape::new();
        let v = f(&mut t);
        t.value(v).clone()
    }

    #[test]
    fn gcont_examples() {
        let t = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let c = eval(|tp| {
            let h = tp.constant(Matrix::identity(2));
            let tv = tp.constant(t.clone());
            build_gcont(tp, h, tv).unwrap()
        });
        assert_eq!(c, t);
        let c = eval(|tp| {
            let h = tp.constant(Matrix::zeros(3, 2));
            let tv = tp.constant(t.clone());
            build_gcont(tp, h, tv).unwrap()
        });
        assert_eq!(c, Matrix::zeros(3, 2));
        let c = eval(|tp| {
            let h = tp.constant(Matrix::from_rows(&[[1.0, 1.0]]));
            let tv = tp.constant(Matrix::from_rows(&[[1.0], [1.0]]));
            build_gcont(tp, h, tv).unwrap()
        });
        assert_eq!(c, Matrix::scalar(2.0));
        let mut tp = Tape::new();
        let h = tp.constant(Matrix::zeros(3, 3));
        let tv = tp.constant(t);
        assert!(build_gcont(&mut tp, h, tv).is_err());
    }

    #[test]
    fn descriptor_examples() {
        let c = Matrix::identity(2);
        assert_eq!(cluster_descriptor(&c, 0, ColumnMode::AffinitySummary), vec![0.5, 0.0]);
        let z = Matrix::zeros(3, 2);
        for mode in [ColumnMode::AffinitySummary, ColumnMode::PadTruncate] {
            assert_eq!(cluster_descriptor(&z, 1, mode), vec![0.0, 0.0]);
        }
        let c = Matrix::from_rows(&[[5.0, 0.0], [7.0, 0.0], [9.0, 0.0]]);
        assert_eq!(cluster_descriptor(&c, 0, ColumnMode::PadTruncate), vec![5.0, 7.0]);
        let c = Matrix::from_rows(&[[5.0, 1.0, 2.0]]);
        assert_eq!(cluster_descriptor(&c, 2, ColumnMode::PadTruncate), vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn descriptor_matrix_matches_direct() {
        let mut rng = seeded(2);
        for (n, k) in [(5, 3), (2, 4), (4, 4)] {
            let c = glorot(n, k, &mut rng);
            for mode in [ColumnMode::AffinitySummary, ColumnMode::PadTruncate] {
                let d = eval(|tp| {
                    let cv = tp.constant(c.clone());
                    cluster_descriptors(tp, cv, mode).unwrap()
                });
                for j in 0..k {
                    let direct = cluster_descriptor(&c, j, mode);
                    for (a, b) in d.row(j).iter().zip(&direct) {
                        assert!((a - b).abs() < 1e-14);
                    }
                }
            }
        }
    }

    fn scores(c: &Matrix, ar: &[f64], ac: &[f64], mode: ColumnMode) -> Matrix {
        eval(|tp| {
            let cv = tp.constant(c.clone());
            let r = tp.constant(Matrix::column_vector(ar));
            let a = tp.constant(Matrix::column_vector(ac));
            moa_scores(tp, cv, r, a, mode).unwrap()
        })
    }

    #[test]
    fn moa_score_examples() {
        let c = Matrix::from_rows(&[[1.0, -2.0], [0.3, 4.0], [2.0, 2.0]]);
        let s = scores(&c, &[0.0, 0.0], &[0.0, 0.0], ColumnMode::AffinitySummary);
        assert_eq!(s, Matrix::zeros(3, 2));

        let s = scores(&Matrix::identity(2), &[1.0, 1.0], &[1.0, 1.0], ColumnMode::AffinitySummary);
        assert!((s[(0, 0)] - 1.5).abs() < 1e-15);

        // a_row·C_0 = -2, column part 0 → LeakyReLU(-2) = -0.02.
        let c = Matrix::from_rows(&[[-2.0]]);
        let s = scores(&c, &[1.0], &[0.0], ColumnMode::AffinitySummary);
        assert!((s[(0, 0)] - (-2.0 * LEAKY_SLOPE)).abs() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        let m = eval(|tp| {
            let raw = tp.constant(Matrix::from_rows(&[[0.0, 0.0], [3f64.ln(), 0.0]]));
            normalize_assignment(tp, raw)
        });
        assert_eq!(m.row(0), &[0.5, 0.5]);
        assert!((m[(1, 0)] - 0.75).abs() < 1e-15 && (m[(1, 1)] - 0.25).abs() < 1e-15);
        let m = eval(|tp| {
            let raw = tp.constant(Matrix::column_vector(&[3.0, -7.0]));
            normalize_assignment(tp, raw)
        });
        assert_eq!(m, Matrix::ones(2, 1));
    }

    #[test]
    fn form_cluster_examples() {
        let mut rng = seeded(6);
        let h = glorot(3, 2, &mut rng);
        let a = er_random_graph(3, 0.7, &mut rng).adjacency;
        let run = |m: Matrix, h: &Matrix, a: &Matrix| {
            let mut tp = Tape::new();
            let (mv, hv, av) = (tp.constant(m), tp.constant(h.clone()), tp.constant(a.clone()));
            let (hn, an) = form_clusters(&mut tp, mv, hv, av).unwrap();
            (tp.value(hn).clone(), tp.value(an).clone())
        };
        let (hn, an) = run(Matrix::identity(3), &h, &a);
        assert_eq!((hn, an), (h.clone(), a.clone()));

        let h2 = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let a2 = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let (hn, an) = run(Matrix::ones(2, 1), &h2, &a2);
        assert_eq!(hn, Matrix::from_rows(&[[4.0, 6.0]]));
        assert_eq!(an, Matrix::scalar(2.0));
    }

    #[test]
    fn coarsened_adjacency_mass_matches_reference() {
        let mut rng = seeded(12);
        let g = er_random_graph(6, 0.5, &mut rng);
        let raw = glorot(6, 3, &mut rng).scale(3.0);
        let mut tp = Tape::new();
        let rv = tp.constant(raw);
        let m = normalize_assignment(&mut tp, rv);
        let hv = tp.constant(Matrix::ones(6, 1));
        let av = tp.constant(g.adjacency.clone());
        let (_, an) = form_clusters(&mut tp, m, hv, av).unwrap();
        let an = tp.value(an).clone();
        let mv = tp.value(m).clone();
        assert!(an.is_symmetric(1e-12));
        // Σ_{pq} (MᵀAM)_{pq} = Σ_{ij} A_ij (Σ_p M_ip)(Σ_q M_jq), evaluated by loops.
        let mut reference = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                let ri: f64 = mv.row(i).iter().sum();
                let rj: f64 = mv.row(j).iter().sum();
                reference += g.adjacency[(i, j)] * ri * rj;
            }
        }
        assert!((an.sum() - reference).abs() < 1e-12);
        assert!((an.sum() - g.adjacency.sum()).abs() < 1e-12);
    }

    #[test]
    fn hard_assignment_mass_bound() {
        // Two clusters {0,1,2} and {3,4}; A' keeps total mass exactly.
        let g = crate::graph::Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let m = Matrix::from_fn(5, 2, |i, j| if (i < 3) == (j == 0) { 1.0 } else { 0.0 });
        let a_next = m.transpose().matmul(&g.adjacency).unwrap().matmul(&m).unwrap();
        assert_eq!(a_next, Matrix::from_rows(&[[4.0, 1.0], [1.0, 2.0]]));
        assert!(a_next.sum() <= g.adjacency.sum());
    }

    fn sample(row: &[f64], tau: f64) -> Vec<f64> {
        let m = eval(|tp| {
            let a = tp.constant(Matrix::row_vector(row));
            soft_sample(tp, a, tau, None).unwrap()
        });
        m.row(0).to_vec()
    }

    #[test]
    fn soft_sample_examples() {
        assert_eq!(sample(&[1.0, 1.0], 0.3), vec![0.5, 0.5]);
        let e = std::f64::consts::E;
        let s = sample(&[e, 1.0], 1.0);
        assert!((s[0] - e / (1.0 + e)).abs() < 1e-9);
        assert!((s[1] - 1.0 / (1.0 + e)).abs() < 1e-9);
        let s = sample(&[2.0, 1.0], 0.01);
        assert!(s[0] >= 0.99);
        // Exact zeros are handled by the log clamp.
        let s = sample(&[0.0, 1.0], 0.1);
        assert!(s.iter().all(|v| v.is_finite()));
        let mut tp = Tape::new();
        let a = tp.constant(Matrix::ones(1, 2));
        assert!(soft_sample(&mut tp, a, 0.0, None).is_err());
    }

    #[test]
    fn soft_sample_noise_is_seeded() {
        let run = |seed| {
            let mut rng = seeded(seed);
            eval(|tp| {
                let a = tp.constant(Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.1, 0.2, 0.3]]));
                soft_sample(tp, a, 0.1, Some(&mut rng)).unwrap()
            })
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
        for i in 0..2 {
            assert!((run(7).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn layer(store: &mut ParamStore, f: usize, k: usize, mode: ColumnMode, seed: u64) -> CoarseningLayer {
        CoarseningLayer::new("c", f, k, 0.1, mode, store, &mut seeded(seed))
    }

    fn forward_values(
        store: &ParamStore,
        layer: &CoarseningLayer,
        h: &Matrix,
        a: &Matrix,
        noise: Option<&mut HapRng>,
    ) -> (Matrix, Matrix, Matrix, Matrix) {
        let mut tp = Tape::new();
        let p = store.bind(&mut tp, false);
        let (hv, av) = (tp.constant(h.clone()), tp.constant(a.clone()));
        let out = coarsen_forward(&mut tp, layer, &p, hv, av, noise).unwrap();
        (
            tp.value(out.features).clone(),
            tp.value(out.adjacency).clone(),
            tp.value(out.sampled).clone(),
            tp.value(out.assignment).clone(),
        )
    }

    #[test]
    fn singleton_coarsening() {
        let mut store = ParamStore::new();
        let l = layer(&mut store, 2, 1, ColumnMode::AffinitySummary, 1);
        let h = Matrix::from_rows(&[[0.3, -1.2]]);
        let (hn, _, sampled, m) = forward_values(&store, &l, &h, &Matrix::zeros(1, 1), None);
        assert_eq!(m, Matrix::scalar(1.0));
        assert_eq!(hn, h);
        assert_eq!(sampled, Matrix::scalar(1.0));
    }

    #[test]
    fn fixed_cluster_count_and_determinism() {
        let mut store = ParamStore::new();
        let l = layer(&mut store, 4, 5, ColumnMode::AffinitySummary, 2);
        let mut rng = seeded(10);
        for n in [1, 3, 5, 9, 20] {
            let g = er_random_graph(n, 0.4, &mut rng);
            let h = glorot(n, 4, &mut rng);
            let a = forward_values(&store, &l, &h, &g.adjacency, Some(&mut seeded(77)));
            let b = forward_values(&store, &l, &h, &g.adjacency, Some(&mut seeded(77)));
            assert_eq!(a.0.shape(), (5, 4));
            assert_eq!(a.2.shape(), (5, 5));
            assert_eq!(a.3.shape(), (n, 5));
            assert!(a.0.as_slice().iter().zip(b.0.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.2.as_slice().iter().zip(b.2.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn coarsening_is_permutation_invariant() {
        let mut store = ParamStore::new();
        let l = layer(&mut store, 4, 3, ColumnMode::AffinitySummary, 5);
        let mut rng = seeded(31);
        for _ in 0..20 {
            let n = rng.gen_range(2..15);
            let g = er_random_graph(n, 0.4, &mut rng)
                .with_features(glorot(n, 4, &mut rng))
                .unwrap();
            let perm = random_permutation(n, &mut rng);
            let pg = g.permute(&perm).unwrap();
            let base = forward_values(&store, &l, &g.features, &g.adjacency, None);
            let moved = forward_values(&store, &l, &pg.features, &pg.adjacency, None);
            assert!(base.0.max_abs_diff(&moved.0) <= 1e-9);
            assert!(base.1.max_abs_diff(&moved.1) <= 1e-9);
            assert!(base.2.max_abs_diff(&moved.2) <= 1e-9);
        }
    }

    #[test]
    fn coarsening_gradients_match_finite_differences() {
        let mut rng = seeded(44);
        let n = 6;
        let g = er_random_graph(n, 0.5, &mut rng);
        let h = glorot(n, 3, &mut rng);
        let probe_h = glorot(2, 3, &mut rng);
        let probe_a = glorot(2, 2, &mut rng);
        for mode in [ColumnMode::AffinitySummary, ColumnMode::PadTruncate] {
            let thetas = vec![glorot(3, 2, &mut rng), glorot(2, 1, &mut rng), glorot(2, 1, &mut rng)];
            let err = grad_check_many(
                |tp, v| {
                    let layer = CoarseningLayer {
                        content_map: ParamId(0),
                        attn_row: ParamId(1),
                        attn_col: ParamId(2),
                        n_clusters: 2,
                        tau: 0.5,
                        column_mode: mode,
                    };
                    let p = ParamStore::bindings_from(v.to_vec());
                    let hv = tp.constant(h.clone());
                    let av = tp.constant(g.adjacency.clone());
                    let out = coarsen_forward(tp, &layer, &p, hv, av, None)?;
                    let ph = tp.constant(probe_h.clone());
                    let pa = tp.constant(probe_a.clone());
                    let x = tp.mul(out.features, ph)?;
                    let y = tp.mul(out.sampled, pa)?;
                    let z = tp.add(out.adjacency, y)?;
                    let (sx, sz) = (tp.sum(x), tp.sum(z));
                    tp.add(sx, sz)
                },
                &thetas,
                1e-6,
            )
            .unwrap();
            assert!(err <= 1e-4, "{mode:?}: {err}");
        }
    }

    #[test]
    fn baseline_pool_examples() {
        let h = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let run = |kind, h: &Matrix| {
            eval(|tp| {
                let hv = tp.constant(h.clone());
                baseline_pool(tp, kind, hv).unwrap()
            })
        };
        assert_eq!(run(BaselinePool::Sum, &h), Matrix::from_rows(&[[4.0, 6.0]]));
        let one = Matrix::from_rows(&[[0.5, -2.0]]);
        assert_eq!(run(BaselinePool::Mean, &one), one);

        // Identical rows: every weight is sigmoid(‖h‖²), output N·w·h.
        let row = [0.6, -0.8];
        let same = Matrix::from_rows(&[row, row, row]);
        let w = 1.0 / (1.0 + (-1.0f64).exp());
        let got = run(BaselinePool::MeanAttention, &same);
        for (k, v) in row.iter().enumerate() {
            assert!((got[(0, k)] - 3.0 * w * v).abs() < 1e-14);
        }
        let mut rng = seeded(1);
        let h = glorot(5, 3, &mut rng);
        let got = run(BaselinePool::MeanAttention, &h);
        for (a, b) in got.row(0).iter().zip(mean_attention_reference(&h)) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
