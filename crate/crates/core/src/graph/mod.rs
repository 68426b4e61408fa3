//! Graph data model and utilities.

mod dataset;

pub use dataset::{detect_dataset_name, load_tu_dataset, write_tu_dataset, GraphDataset, Split};

use rand::Rng;
use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing dataset file {0}")]
    MissingFile(std::path::PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },
    #[error("not a permutation of 0..{n}: {detail}")]
    InvalidPermutation { n: usize, detail: String },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("invalid split ratios {0:?}: need three non-negative values summing to 1")]
    InvalidRatios([f64; 3]),
}

/// Undirected graph with dense (possibly weighted) adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    /// Dataset-local identifier (1-based in TU files).
    pub id: usize,
    pub adjacency: Matrix,
    pub features: Matrix,
    pub label: Option<usize>,
    /// Discrete node labels, when the source data has them.
    pub node_labels: Option<Vec<usize>>,
}

impl Graph {
    /// 0/1 graph from an undirected edge list, with a single constant
    /// feature column until features are assigned.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Invalid("graph needs at least one node".into()));
        }
        let mut adjacency = Matrix::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::Invalid(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                return Err(GraphError::Invalid(format!("self-loop at node {u}")));
            }
            adjacency[(u, v)] = 1.0;
            adjacency[(v, u)] = 1.0;
        }
        Ok(Self {
            id: 0,
            adjacency,
            features: Matrix::ones(n, 1),
            label: None,
            node_labels: None,
        })
    }

    pub fn with_adjacency(adjacency: Matrix) -> Result<Self, GraphError> {
        let n = adjacency.rows();
        if adjacency.cols() != n {
            return Err(GraphError::Invalid(format!("adjacency is {n}x{}", adjacency.cols())));
        }
        if !adjacency.is_symmetric(1e-12) || adjacency.as_slice().iter().any(|&w| w < 0.0) {
            return Err(GraphError::Invalid("adjacency must be symmetric and non-negative".into()));
        }
        Ok(Self {
            id: 0,
            adjacency,
            features: Matrix::ones(n, 1),
            label: None,
            node_labels: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self, GraphError> {
        if features.rows() != self.n() {
            return Err(GraphError::Invalid(format!(
                "feature rows {} != node count {}",
                features.rows(),
                self.n()
            )));
        }
        self.features = features;
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.adjacency[(u, v)] > 0.0
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&v| self.has_edge(u, v))
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|u| self.degree(u)).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n).map(|u| ((u + 1)..n).filter(|&v| self.has_edge(u, v)).count()).sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if self.has_edge(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Degree one-hot features `n × (max_degree + 1)`; larger degrees land
    /// in the last bucket.
    pub fn degree_onehot(&self, max_degree: usize) -> Graph {
        let mut features = Matrix::zeros(self.n(), max_degree + 1);
        for (i, d) in self.degrees().into_iter().enumerate() {
            features[(i, d.min(max_degree))] = 1.0;
        }
        Graph {
            features,
            ..self.clone()
        }
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`:
    /// adjacency `P A Pᵀ`, features `P X`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph, GraphError> {
        let n = self.n();
        check_permutation(perm, n)?;
        let mut adjacency = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                adjacency[(perm[i], perm[j])] = self.adjacency[(i, j)];
            }
        }
        let f = self.features.cols();
        let mut features = Matrix::zeros(n, f);
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
        }
        let node_labels = self.node_labels.as_ref().map(|labels| {
            let mut out = vec![0; n];
            for i in 0..n {
                out[perm[i]] = labels[i];
            }
            out
        });
        Ok(Graph {
            id: self.id,
            adjacency,
            features,
            label: self.label,
            node_labels,
        })
    }

    /// Subgraph induced by `nodes`, in the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let k = nodes.len();
        let adjacency = Matrix::from_fn(k, k, |i, j| self.adjacency[(nodes[i], nodes[j])]);
        let features = Matrix::from_fn(k, self.features.cols(), |i, j| self.features[(nodes[i], j)]);
        Graph {
            id: self.id,
            adjacency,
            features,
            label: self.label,
            node_labels: self
                .node_labels
                .as_ref()
                .map(|l| nodes.iter().map(|&u| l[u]).collect()),
        }
    }

    /// Connected components as sorted node lists, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Largest connected component; ties go to the component holding the
    /// smallest node index.
    pub fn largest_component(&self) -> Graph {
        let comps = self.components();
        let best = comps
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(_, c)| c.clone())
            .expect("at least one node");
        self.induced_subgraph(&best)
    }
}

pub fn check_permutation(perm: &[usize], n: usize) -> Result<(), GraphError> {
    if perm.len() != n {
        return Err(GraphError::InvalidPermutation {
            n,
            detail: format!("length {}", perm.len()),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(GraphError::InvalidPermutation {
                n,
                detail: format!("entry {p} out of range or repeated"),
            });
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Erdős–Rényi graph: each unordered pair is an edge with probability `p`.
pub fn er_random_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Graph {
    assert!(n >= 1, "er_random_graph needs n >= 1");
    let mut adjacency = Matrix::zeros(n, n);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                adjacency[(u, v)] = 1.0;
                adjacency[(v, u)] = 1.0;
            }
        }
    }
    Graph {
        id: 0,
        adjacency,
        features: Matrix::ones(n, 1),
        label: None,
        node_labels: None,
    }
}
