//! TU-style multi-file text datasets.
//!
//! A dataset `NAME` in a directory consists of
//!
//! - `NAME_A.txt`: one edge per line, `i, j`, 1-based global node ids
//! - `NAME_graph_indicator.txt`: graph id (1-based) of each node, one per line
//! - `NAME_graph_labels.txt`: one integer label per graph
//! - `NAME_node_labels.txt` (optional): one integer label per node

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;

use super::{random_permutation, Graph, GraphError};
use crate::tensor::Matrix;

/// Train/validation/test index lists.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Shuffles `0..n` and cuts it by `ratios` (train, val, test).
    pub fn random<R: Rng + ?Sized>(n: usize, ratios: [f64; 3], rng: &mut R) -> Result<Self, GraphError> {
        let total: f64 = ratios.iter().sum();
        if ratios.iter().any(|&r| r < 0.0 || !r.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(GraphError::InvalidRatios(ratios));
        }
        let order = random_permutation(n, rng);
        let n_train = ((n as f64) * ratios[0]).round() as usize;
        let n_val = (((n as f64) * ratios[1]).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        Ok(Self {
            train: order[..n_train].to_vec(),
            val: order[n_train..n_train + n_val].to_vec(),
            test: order[n_train + n_val..].to_vec(),
        })
    }

    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .all(|i| seen.insert(*i))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub split: Split,
}

impl GraphDataset {
    /// Wraps graphs, assigning 1-based ids in order and counting classes.
    pub fn new(name: impl Into<String>, mut graphs: Vec<Graph>) -> Self {
        for (i, g) in graphs.iter_mut().enumerate() {
            g.id = i + 1;
        }
        let num_classes = graphs
            .iter()
            .filter_map(|g| g.label)
            .max()
            .map_or(0, |m| m + 1);
        let feature_dim = graphs.first().map_or(0, |g| g.features.cols());
        Self {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
            split: Split::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.graphs.iter().map(Graph::max_degree).max().unwrap_or(0)
    }

    /// Replaces every graph's features by degree one-hot of the given
    /// width (`max_degree + 1`).
    pub fn apply_degree_onehot(&mut self, max_degree: usize) {
        for g in &mut self.graphs {
            *g = g.degree_onehot(max_degree);
        }
        self.feature_dim = max_degree + 1;
    }

    /// Default featurisation: one-hot node labels when every graph has them,
    /// otherwise degree one-hot over the dataset's maximum degree.
    pub fn featurize_default(&mut self) {
        let labelled = !self.graphs.is_empty() && self.graphs.iter().all(|g| g.node_labels.is_some());
        if labelled {
            let width = self
                .graphs
                .iter()
                .flat_map(|g| g.node_labels.as_ref().unwrap().iter().copied())
                .max()
                .map_or(1, |m| m + 1);
            for g in &mut self.graphs {
                let labels = g.node_labels.as_ref().unwrap();
                let mut f = Matrix::zeros(g.n(), width);
                for (i, &l) in labels.iter().enumerate() {
                    f[(i, l)] = 1.0;
                }
                g.features = f;
            }
            self.feature_dim = width;
        } else {
            let d = self.max_degree();
            self.apply_degree_onehot(d);
        }
    }

    pub fn resplit<R: Rng + ?Sized>(&mut self, ratios: [f64; 3], rng: &mut R) -> Result<(), GraphError> {
        self.split = Split::random(self.graphs.len(), ratios, rng)?;
        Ok(())
    }

    /// Graph by 1-based id.
    pub fn by_id(&self, id: usize) -> Option<&Graph> {
        id.checked_sub(1).and_then(|i| self.graphs.get(i))
    }
}

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String, GraphError> {
    if !path.exists() {
        return Err(GraphError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_ints(text: &str, file: &str) -> Result<Vec<i64>, GraphError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            l.trim().parse::<i64>().map_err(|e| GraphError::Format {
                file: file.to_string(),
                line: ln + 1,
                message: format!("expected integer, got {:?}: {e}", l.trim()),
            })
        })
        .collect()
}

/// Dense index map for sorted distinct values.
fn remap(values: &[i64]) -> Vec<usize> {
    let distinct: Vec<i64> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    values
        .iter()
        .map(|v| distinct.binary_search(v).expect("value present"))
        .collect()
}

/// Loads a TU-format dataset. Graph labels are remapped to `0..C`; node
/// labels (when present) are remapped likewise and one-hot encoded, else
/// degree one-hot features are used.
pub fn load_tu_dataset(dir: &Path, name: &str) -> Result<GraphDataset, GraphError> {
    let ind_path = file_path(dir, name, "graph_indicator");
    let a_path = file_path(dir, name, "A");
    let gl_path = file_path(dir, name, "graph_labels");
    let nl_path = file_path(dir, name, "node_labels");

    let ind_file = format!("{name}_graph_indicator.txt");
    let indicator = parse_ints(&read_required(&ind_path)?, &ind_file)?;
    let edges_text = read_required(&a_path)?;
    let graph_labels = parse_ints(&read_required(&gl_path)?, &format!("{name}_graph_labels.txt"))?;

    let num_graphs = graph_labels.len();
    if num_graphs == 0 {
        return Err(GraphError::Format {
            file: format!("{name}_graph_labels.txt"),
            line: 1,
            message: "no graphs".into(),
        });
    }

    // Node -> (graph index, local index); graph ids must be 1..=num_graphs.
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(indicator.len());
    for (ln, &gid) in indicator.iter().enumerate() {
        if gid < 1 || gid as usize > num_graphs {
            return Err(GraphError::Format {
                file: ind_file.clone(),
                line: ln + 1,
                message: format!("graph id {gid} outside 1..={num_graphs}"),
            });
        }
        let g = gid as usize - 1;
        local.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(GraphError::Format {
            file: ind_file,
            line: 0,
            message: format!("graph {} has no nodes", empty + 1),
        });
    }

    let mut adjs: Vec<Matrix> = sizes.iter().map(|&s| Matrix::zeros(s, s)).collect();
    let a_file = format!("{name}_A.txt");
    for (ln, line) in edges_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fmt_err = |message: String| GraphError::Format {
            file: a_file.clone(),
            line: ln + 1,
            message,
        };
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(fmt_err(format!("expected `i, j`, got {line:?}")));
        };
        let parse = |s: &str| -> Result<usize, GraphError> {
            let v: usize = s.parse().map_err(|_| fmt_err(format!("bad node id {s:?}")))?;
            if v < 1 || v > local.len() {
                return Err(fmt_err(format!("node id {v} outside 1..={}", local.len())));
            }
            Ok(v - 1)
        };
        let (u, v) = (parse(a)?, parse(b)?);
        let ((gu, lu), (gv, lv)) = (local[u], local[v]);
        if gu != gv {
            return Err(fmt_err(format!(
                "edge ({}, {}) joins graph {} and graph {}",
                u + 1,
                v + 1,
                gu + 1,
                gv + 1
            )));
        }
        if lu != lv {
            adjs[gu][(lu, lv)] = 1.0;
            adjs[gu][(lv, lu)] = 1.0;
        }
    }

    let node_labels = if nl_path.exists() {
        let raw = parse_ints(&read_required(&nl_path)?, &format!("{name}_node_labels.txt"))?;
        if raw.len() != local.len() {
            return Err(GraphError::Format {
                file: format!("{name}_node_labels.txt"),
                line: raw.len() + 1,
                message: format!("{} node labels for {} nodes", raw.len(), local.len()),
            });
        }
        Some(remap(&raw))
    } else {
        None
    };

    let labels = remap(&graph_labels);
    let mut per_graph_nl: Vec<Vec<usize>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    if let Some(nl) = &node_labels {
        for (node, &(g, _)) in local.iter().enumerate() {
            per_graph_nl[g].push(nl[node]);
        }
    }

    let graphs: Vec<Graph> = adjs
        .into_iter()
        .enumerate()
        .map(|(g, adjacency)| {
            let n = adjacency.rows();
            Graph {
                id: g + 1,
                adjacency,
                features: Matrix::ones(n, 1),
                label: Some(labels[g]),
                node_labels: node_labels.as_ref().map(|_| std::mem::take(&mut per_graph_nl[g])),
            }
        })
        .collect();

    let mut ds = GraphDataset::new(name, graphs);
    ds.featurize_default();
    Ok(ds)
}

/// Finds the single dataset name in `dir` from its `*_graph_indicator.txt`.
pub fn detect_dataset_name(dir: &Path) -> Result<String, GraphError> {
    let entries = fs::read_dir(dir).map_err(|source| GraphError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for entry in entries.flatten() {
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(name) = file.strip_suffix("_graph_indicator.txt") {
            names.push(name.to_string());
        }
    }
    names.sort();
    match names.len() {
        0 => Err(GraphError::MissingFile(dir.join("*_graph_indicator.txt"))),
        1 => Ok(names.pop().expect("one name")),
        _ => Err(GraphError::Invalid(format!(
            "{} holds several datasets ({}); pass the name explicitly",
            dir.display(),
            names.join(", ")
        ))),
    }
}

/// Writes a dataset in the same format `load_tu_dataset` reads. Each
/// undirected edge is written in both directions; unlabeled graphs get
/// label 0.
pub fn write_tu_dataset(dir: &Path, name: &str, ds: &GraphDataset) -> Result<(), GraphError> {
    fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| GraphError::Io { path, source }
    };

    let a_path = file_path(dir, name, "A");
    let ind_path = file_path(dir, name, "graph_indicator");
    let gl_path = file_path(dir, name, "graph_labels");
    let mut a = BufWriter::new(fs::File::create(&a_path).map_err(io(&a_path))?);
    let mut ind = BufWriter::new(fs::File::create(&ind_path).map_err(io(&ind_path))?);
    let mut gl = BufWriter::new(fs::File::create(&gl_path).map_err(io(&gl_path))?);

    let with_nl = !ds.graphs.is_empty() && ds.graphs.iter().all(|g| g.node_labels.is_some());
    let nl_path = file_path(dir, name, "node_labels");
    let mut nl = if with_nl {
        Some(BufWriter::new(fs::File::create(&nl_path).map_err(io(&nl_path))?))
    } else {
        None
    };

    let mut offset = 0usize;
    for (gi, g) in ds.graphs.iter().enumerate() {
        for u in 0..g.n() {
            for v in 0..g.n() {
                if g.has_edge(u, v) {
                    writeln!(a, "{}, {}", offset + u + 1, offset + v + 1).map_err(io(&a_path))?;
                }
            }
            writeln!(ind, "{}", gi + 1).map_err(io(&ind_path))?;
            if let (Some(w), Some(labels)) = (nl.as_mut(), g.node_labels.as_ref()) {
                writeln!(w, "{}", labels[u]).map_err(io(&nl_path))?;
            }
        }
        writeln!(gl, "{}", g.label.unwrap_or(0)).map_err(io(&gl_path))?;
        offset += g.n();
    }
    a.flush().map_err(io(&a_path))?;
    ind.flush().map_err(io(&ind_path))?;
    gl.flush().map_err(io(&gl_path))?;
    if let Some(mut w) = nl {
        w.flush().map_err(io(&nl_path))?;
    }
    Ok(())
}
