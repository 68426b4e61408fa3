//! Wall-clock scaling of the coarsening module.

use std::time::Instant;

use crate::coarsen::{coarsen_forward, CoarseningLayer, ColumnMode};
use crate::graph::er_random_graph;
use crate::rng::seeded;
use crate::tensor::{Matrix, ParamStore, Tape, TensorError};
use rand::Rng;

const MIN_SAMPLE_SECS: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    pub clusters: usize,
    pub features: usize,
    pub reps: usize,
    pub edge_prob: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            clusters: 16,
            features: 16,
            reps: 20,
            edge_prob: 0.1,
            seed: 0,
        }
    }
}

/// One noise-free coarsening forward pass on a fixed random graph, timed in
/// batches long enough to rise above clock resolution.
struct Workload {
    h: Matrix,
    a: Matrix,
    store: ParamStore,
    layer: CoarseningLayer,
    inner: usize,
}

impl Workload {
    fn new(n: usize, cfg: &BenchConfig) -> Result<Self, TensorError> {
        let mut rng = seeded(cfg.seed ^ n as u64);
        let g = er_random_graph(n, cfg.edge_prob, &mut rng);
        let h = Matrix::from_fn(n, cfg.features, |_, _| rng.gen_range(-1.0..1.0));
        let mut store = ParamStore::new();
        let layer = CoarseningLayer::new(
            "bench",
            cfg.features,
            cfg.clusters,
            0.1,
            ColumnMode::AffinitySummary,
            &mut store,
            &mut rng,
        );
        let mut w = Self {
            h,
            a: g.adjacency,
            store,
            layer,
            inner: 1,
        };
        // Small graphs finish in microseconds, so each sample repeats the
        // pass until it covers at least MIN_SAMPLE_SECS of wall time.
        let start = Instant::now();
        w.pass()?;
        let once = start.elapsed().as_secs_f64().max(1e-9);
        w.inner = ((MIN_SAMPLE_SECS / once).ceil() as usize).max(1);
        w.sample()?;
        Ok(w)
    }

    fn pass(&self) -> Result<(), TensorError> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape, false);
        let hv = tape.constant(self.h.clone());
        let av = tape.constant(self.a.clone());
        let out = coarsen_forward(&mut tape, &self.layer, &p, hv, av, None)?;
        std::hint::black_box(tape.value(out.sampled));
        Ok(())
    }

    /// Mean seconds per pass over one batch.
    fn sample(&self) -> Result<f64, TensorError> {
        let start = Instant::now();
        for _ in 0..self.inner {
            self.pass()?;
        }
        Ok(start.elapsed().as_secs_f64() / self.inner as f64)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Median seconds of one noise-free coarsening forward pass on a random
/// `n`-node graph, over `cfg.reps` timed samples after one warm-up sample.
/// Tape setup is included in the timing.
pub fn median_coarsen_seconds(n: usize, cfg: &BenchConfig) -> Result<f64, TensorError> {
    let w = Workload::new(n, cfg)?;
    let times = (0..cfg.reps.max(1)).map(|_| w.sample()).collect::<Result<Vec<_>, _>>()?;
    Ok(median(times))
}

/// Median of `t(large)/t(small)` over `cfg.reps` back-to-back sample pairs.
/// Alternating the two sizes keeps slow drift in machine load out of the
/// ratio.
pub fn paired_time_ratio(small: usize, large: usize, cfg: &BenchConfig) -> Result<f64, TensorError> {
    let (a, b) = (Workload::new(small, cfg)?, Workload::new(large, cfg)?);
    let ratios = (0..cfg.reps.max(1))
        .map(|_| Ok(b.sample()? / a.sample()?))
        .collect::<Result<Vec<_>, TensorError>>()?;
    Ok(median(ratios))
}

/// Least-squares slope of `ln t` against `ln n`; `None` for fewer than two
/// distinct sizes.
pub fn loglog_slope(sizes: &[usize], seconds: &[f64]) -> Option<f64> {
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = seconds.iter().map(|t| t.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if xs.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}
