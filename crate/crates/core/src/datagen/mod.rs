//! Synthetic datasets and exact edit-distance ground truth.

pub mod ged;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{er_random_graph, Graph, GraphError};
pub use crate::heads::TripletRecord;
pub use ged::{ged_exact, ged_exact_with_path, EditCostModel, EditOp, GedResult, MAX_GED_NODES};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("exact edit distance is limited to {cap} nodes, got a graph with {nodes}")]
    GedTooLarge { nodes: usize, cap: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// What a pair record is labeled with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PairTarget {
    Label(bool),
    Ged(f64),
}

/// Two graph ids (1-based) and their label or distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub g1: usize,
    pub g2: usize,
    pub target: PairTarget,
}

impl PairRecord {
    pub fn label(&self) -> Option<bool> {
        match self.target {
            PairTarget::Label(y) => Some(y),
            PairTarget::Ged(_) => None,
        }
    }
}

/// Graphs plus pair records referencing them by 1-based position.
#[derive(Clone, Debug)]
pub struct MatchingData {
    pub graphs: Vec<Graph>,
    pub pairs: Vec<PairRecord>,
}

/// Base graphs with one similar and one dissimilar partner each.
///
/// The positive partner drops 1–3 random nodes and keeps the largest
/// connected component; the negative partner gains 3–7 nodes, each wired to
/// every node already present with the base graph's edge probability.
pub fn gen_matching_dataset<R: Rng + ?Sized>(
    n_base: usize,
    base_size: usize,
    p_range: [f64; 2],
    rng: &mut R,
) -> Result<MatchingData, DatagenError> {
    if base_size < 5 {
        return Err(DatagenError::Invalid(format!("base size must be at least 5, got {base_size}")));
    }
    check_p_range(p_range)?;
    let mut graphs = Vec::with_capacity(3 * n_base);
    let mut pairs = Vec::with_capacity(2 * n_base);
    for _ in 0..n_base {
        let p = sample_p(p_range, rng);
        let base = er_random_graph(base_size, p, rng);
        let positive = delete_nodes(&base, rng).largest_component();
        let negative = add_nodes(&base, p, rng);
        let id = graphs.len() + 1;
        graphs.push(base);
        graphs.push(positive);
        graphs.push(negative);
        pairs.push(PairRecord {
            g1: id,
            g2: id + 1,
            target: PairTarget::Label(true),
        });
        pairs.push(PairRecord {
            g1: id,
            g2: id + 2,
            target: PairTarget::Label(false),
        });
    }
    Ok(MatchingData { graphs, pairs })
}

fn check_p_range(p: [f64; 2]) -> Result<(), DatagenError> {
    if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) || p[0] > p[1] {
        return Err(DatagenError::Invalid(format!(
            "edge probability range [{}, {}] must lie in [0, 1] and be ordered",
            p[0], p[1]
        )));
    }
    Ok(())
}

fn sample_p<R: Rng + ?Sized>(p: [f64; 2], rng: &mut R) -> f64 {
    if p[0] == p[1] {
        p[0]
    } else {
        rng.gen_range(p[0]..p[1])
    }
}

/// Removes 1–3 distinct random nodes.
pub fn delete_nodes<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Graph {
    let k = rng.gen_range(1..=3).min(g.n() - 1);
    let drop = sample(rng, g.n(), k).into_vec();
    let keep: Vec<usize> = (0..g.n()).filter(|u| !drop.contains(u)).collect();
    g.induced_subgraph(&keep)
}

/// Appends 3–7 nodes; each connects to every earlier node with probability `p`.
pub fn add_nodes<R: Rng + ?Sized>(g: &Graph, p: f64, rng: &mut R) -> Graph {
    let extra = rng.gen_range(3..=7);
    let n = g.n() + extra;
    let mut edges = g.edges();
    for v in g.n()..n {
        for u in 0..v {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).expect("valid edges")
}

/// Balanced two-class ER graphs: label 0 uses `ps[0]`, label 1 uses `ps[1]`.
pub fn gen_toy_classification<R: Rng + ?Sized>(
    n_graphs: usize,
    n_nodes: usize,
    ps: [f64; 2],
    rng: &mut R,
) -> Result<Vec<Graph>, DatagenError> {
    if n_nodes == 0 {
        return Err(DatagenError::Invalid("graphs need at least one node".into()));
    }
    Ok((0..n_graphs)
        .map(|i| er_random_graph(n_nodes, ps[i % 2], rng).with_label(i % 2))
        .collect())
}

/// ER graphs with sizes uniform in `[min_nodes, max_nodes]` and edge
/// probability uniform in `p_range`.
pub fn gen_random_graphs<R: Rng + ?Sized>(
    n_graphs: usize,
    min_nodes: usize,
    max_nodes: usize,
    p_range: [f64; 2],
    rng: &mut R,
) -> Result<Vec<Graph>, DatagenError> {
    if min_nodes == 0 || min_nodes > max_nodes {
        return Err(DatagenError::Invalid(format!(
            "node range [{min_nodes}, {max_nodes}] is empty"
        )));
    }
    check_p_range(p_range)?;
    Ok((0..n_graphs)
        .map(|_| {
            let n = rng.gen_range(min_nodes..=max_nodes);
            let p = sample_p(p_range, rng);
            er_random_graph(n, p, rng)
        })
        .collect())
}

/// Symmetric all-pairs distance table.
#[derive(Clone, Debug, PartialEq)]
pub struct GedTable {
    n: usize,
    values: Vec<f64>,
}

impl GedTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distance between graphs at 0-based positions `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Exact distances between every pair of graphs; pairs are solved in
/// parallel and written back in a fixed order.
pub fn make_pair_ground_truth(graphs: &[Graph], costs: &EditCostModel) -> Result<GedTable, DatagenError> {
    let n = graphs.len();
    let tasks: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let results: Vec<Result<f64, DatagenError>> = tasks
        .par_iter()
        .map(|&(i, j)| ged_exact(&graphs[i], &graphs[j], costs))
        .collect();
    let mut values = vec![0.0; n * n];
    for (&(i, j), r) in tasks.iter().zip(results) {
        let d = r?;
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    // A single graph still has to respect the cap.
    if n == 1 && graphs[0].n() > MAX_GED_NODES {
        return Err(DatagenError::GedTooLarge {
            nodes: graphs[0].n(),
            cap: MAX_GED_NODES,
        });
    }
    Ok(GedTable { n, values })
}

/// Triplets `⟨i, j, k⟩` with `i` uniform and `j ≠ k` drawn uniformly from
/// the other graphs; `r = g_ij − g_ik`. Ids are 1-based.
pub fn make_triplets<R: Rng + ?Sized>(
    table: &GedTable,
    count: usize,
    rng: &mut R,
) -> Result<Vec<TripletRecord>, DatagenError> {
    let n = table.len();
    if n < 3 {
        return Err(DatagenError::Invalid(format!("need at least 3 graphs for triplets, got {n}")));
    }
    Ok((0..count)
        .map(|_| {
            let i = rng.gen_range(0..n);
            let picks = sample(rng, n - 1, 2);
            let skip = |x: usize| if x >= i { x + 1 } else { x };
            let (j, k) = (skip(picks.index(0)), skip(picks.index(1)));
            TripletRecord {
                g1: i + 1,
                g2: j + 1,
                g3: k + 1,
                r: table.get(i, j) - table.get(i, k),
            }
        })
        .collect())
}

pub fn pairs_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(format!("{name}_pairs.txt"))
}

pub fn triplets_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(format!("{name}_triplets.txt"))
}

pub fn ged_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(format!("{name}_ged.txt"))
}

fn write_text(path: &Path, text: &str) -> Result<(), GraphError> {
    fs::write(path, text).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, GraphError> {
    if !path.exists() {
        return Err(GraphError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One `g1\tg2\tvalue` line per record; labels as 0/1.
pub fn write_pairs(path: &Path, pairs: &[PairRecord]) -> Result<(), GraphError> {
    let mut out = String::new();
    for p in pairs {
        match p.target {
            PairTarget::Label(y) => writeln!(out, "{}\t{}\t{}", p.g1, p.g2, y as u8),
            PairTarget::Ged(d) => writeln!(out, "{}\t{}\t{}", p.g1, p.g2, d),
        }
        .expect("string write");
    }
    write_text(path, &out)
}

/// Reads pair records; `as_label` selects 0/1 labels over distances.
pub fn read_pairs(path: &Path, as_label: bool) -> Result<Vec<PairRecord>, GraphError> {
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(path, lineno, line, 3)?;
        let g1 = parse_id(path, lineno, fields[0])?;
        let g2 = parse_id(path, lineno, fields[1])?;
        let target = if as_label {
            match fields[2] {
                "0" => PairTarget::Label(false),
                "1" => PairTarget::Label(true),
                other => return Err(format_err(path, lineno, format!("label must be 0 or 1, got {other:?}"))),
            }
        } else {
            PairTarget::Ged(parse_real(path, lineno, fields[2])?)
        };
        pairs.push(PairRecord { g1, g2, target });
    }
    Ok(pairs)
}

/// One `g1\tg2\tg3\tr` line per record.
pub fn write_triplets(path: &Path, triplets: &[TripletRecord]) -> Result<(), GraphError> {
    let mut out = String::new();
    for t in triplets {
        writeln!(out, "{}\t{}\t{}\t{}", t.g1, t.g2, t.g3, t.r).expect("string write");
    }
    write_text(path, &out)
}

pub fn read_triplets(path: &Path) -> Result<Vec<TripletRecord>, GraphError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(path, lineno, line, 4)?;
        let rec = TripletRecord {
            g1: parse_id(path, lineno, f[0])?,
            g2: parse_id(path, lineno, f[1])?,
            g3: parse_id(path, lineno, f[2])?,
            r: parse_real(path, lineno, f[3])?,
        };
        if rec.g2 == rec.g3 {
            return Err(format_err(path, lineno, "second and third graph must differ".into()));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Upper triangle of a distance table as `g1\tg2\tged` lines (1-based ids).
pub fn write_ged_table(path: &Path, table: &GedTable) -> Result<(), GraphError> {
    let mut out = String::new();
    for i in 0..table.len() {
        for j in (i + 1)..table.len() {
            writeln!(out, "{}\t{}\t{}", i + 1, j + 1, table.get(i, j)).expect("string write");
        }
    }
    write_text(path, &out)
}

fn split_fields<'a>(path: &Path, lineno: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>, GraphError> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() != n {
        return Err(format_err(path, lineno, format!("expected {n} tab-separated fields, got {}", fields.len())));
    }
    Ok(fields)
}

fn parse_id(path: &Path, lineno: usize, s: &str) -> Result<usize, GraphError> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format_err(path, lineno, format!("invalid graph id {s:?}"))),
    }
}

fn parse_real(path: &Path, lineno: usize, s: &str) -> Result<f64, GraphError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format_err(path, lineno, format!("invalid number {s:?}"))),
    }
}

fn format_err(path: &Path, lineno: usize, message: String) -> GraphError {
    GraphError::Format {
        file: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        line: lineno + 1,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn matching_partner_sizes_and_balance() {
        let mut rng = seeded(7);
        let data = gen_matching_dataset(40, 20, [0.2, 0.5], &mut rng).unwrap();
        assert_eq!(data.graphs.len(), 120);
        assert_eq!(data.pairs.len(), 80);
        let positives = data.pairs.iter().filter(|p| p.label() == Some(true)).count();
        assert_eq!(positives, 40);
        for chunk in data.graphs.chunks(3) {
            assert_eq!(chunk[0].n(), 20);
            assert!(chunk[1].n() <= 19 && chunk[1].is_connected());
            assert!((23..=27).contains(&chunk[2].n()));
            // The base graph survives inside the negative partner.
            let keep: Vec<usize> = (0..20).collect();
            assert_eq!(chunk[2].induced_subgraph(&keep).adjacency, chunk[0].adjacency);
        }
    }

    #[test]
    fn deletion_count_before_component_step() {
        let mut rng = seeded(2);
        let g = er_random_graph(20, 0.3, &mut rng);
        for _ in 0..50 {
            let d = delete_nodes(&g, &mut rng);
            assert!((17..=19).contains(&d.n()));
        }
    }

    #[test]
    fn matching_rejects_tiny_base() {
        assert!(gen_matching_dataset(1, 4, [0.2, 0.5], &mut seeded(1)).is_err());
        assert!(gen_matching_dataset(1, 10, [0.6, 0.5], &mut seeded(1)).is_err());
    }

    #[test]
    fn generators_are_reproducible() {
        let a = gen_matching_dataset(5, 10, [0.2, 0.5], &mut seeded(3)).unwrap();
        let b = gen_matching_dataset(5, 10, [0.2, 0.5], &mut seeded(3)).unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert!(a.graphs.iter().zip(&b.graphs).all(|(x, y)| x.adjacency == y.adjacency));
    }

    #[test]
    fn toy_classification_is_balanced() {
        let gs = gen_toy_classification(10, 40, [0.2, 0.5], &mut seeded(1)).unwrap();
        assert_eq!(gs.iter().filter(|g| g.label == Some(1)).count(), 5);
        assert!(gs.iter().all(|g| g.n() == 40));
    }

    #[test]
    fn ground_truth_table_examples() {
        let c = EditCostModel::default();
        let one = make_pair_ground_truth(&[er_random_graph(4, 0.5, &mut seeded(1))], &c).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.get(0, 0), 0.0);

        let mut gs = gen_random_graphs(5, 3, 6, [0.2, 0.5], &mut seeded(9)).unwrap();
        gs.push(gs[2].clone());
        let t = make_pair_ground_truth(&gs, &c).unwrap();
        for i in 0..t.len() {
            assert_eq!(t.get(i, i), 0.0);
            for j in 0..t.len() {
                assert_eq!(t.get(i, j), t.get(j, i));
            }
        }
        assert_eq!(t.get(5, 2), 0.0);
        for j in 0..5 {
            assert_eq!(t.get(5, j), t.get(2, j));
        }
    }

    #[test]
    fn triplet_examples() {
        let gs = gen_random_graphs(8, 3, 6, [0.2, 0.5], &mut seeded(4)).unwrap();
        let t = make_pair_ground_truth(&gs, &EditCostModel::default()).unwrap();
        let a = make_triplets(&t, 1000, &mut seeded(5)).unwrap();
        let b = make_triplets(&t, 1000, &mut seeded(5)).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a, b);
        for r in &a {
            assert!(r.g2 != r.g3 && r.g1 != r.g2 && r.g1 != r.g3);
            let gij = t.get(r.g1 - 1, r.g2 - 1);
            let gik = t.get(r.g1 - 1, r.g3 - 1);
            assert_eq!(r.r, gij - gik);
            assert_eq!(-r.r, gik - gij);
        }
        let small = make_pair_ground_truth(&gs[..2], &EditCostModel::default()).unwrap();
        assert!(make_triplets(&small, 1, &mut seeded(1)).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![
            PairRecord {
                g1: 1,
                g2: 2,
                target: PairTarget::Label(true),
            },
            PairRecord {
                g1: 1,
                g2: 3,
                target: PairTarget::Label(false),
            },
        ];
        let p = pairs_path(dir.path(), "m");
        write_pairs(&p, &pairs).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "1\t2\t1\n1\t3\t0\n");
        assert_eq!(read_pairs(&p, true).unwrap(), pairs);

        let trips = vec![TripletRecord {
            g1: 3,
            g2: 1,
            g3: 2,
            r: -2.5,
        }];
        let q = triplets_path(dir.path(), "m");
        write_triplets(&q, &trips).unwrap();
        assert_eq!(read_triplets(&q).unwrap(), trips);

        fs::write(&q, "1\t2\t2\t0\n").unwrap();
        let err = read_triplets(&q).unwrap_err().to_string();
        assert!(err.contains("m_triplets.txt:1:"), "{err}");
        fs::write(&p, "1\t2\n").unwrap();
        assert!(read_pairs(&p, true).is_err());
    }
}
