//! Exact graph edit distance by branch-and-bound over node mappings.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::graph::Graph;

/// Largest graph the exact search accepts.
pub const MAX_GED_NODES: usize = 10;

/// Cost of each elementary edit. Relabeling only applies when both graphs
/// carry node labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditCostModel {
    pub node_insert: f64,
    pub node_delete: f64,
    pub node_relabel: f64,
    pub edge_insert: f64,
    pub edge_delete: f64,
}

impl Default for EditCostModel {
    fn default() -> Self {
        Self {
            node_insert: 1.0,
            node_delete: 1.0,
            node_relabel: 1.0,
            edge_insert: 1.0,
            edge_delete: 1.0,
        }
    }
}

impl EditCostModel {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let all = [
            self.node_insert,
            self.node_delete,
            self.node_relabel,
            self.edge_insert,
            self.edge_delete,
        ];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(DatagenError::Invalid("edit costs must be finite and nonnegative".into()))
        }
    }
}

/// One elementary edit. Node indices refer to the first graph for
/// deletions/relabels and to the second graph for insertions.
#[derive(Clone, Debug, PartialEq)]
pub enum EditOp {
    DeleteEdge(usize, usize),
    DeleteNode(usize),
    RelabelNode { node: usize, from: usize, to: usize },
    InsertNode(usize),
    InsertEdge(usize, usize),
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditOp::DeleteEdge(u, v) => write!(f, "delete edge ({u}, {v})"),
            EditOp::DeleteNode(u) => write!(f, "delete node {u}"),
            EditOp::RelabelNode { node, from, to } => write!(f, "relabel node {node}: {from} -> {to}"),
            EditOp::InsertNode(v) => write!(f, "insert node {v}"),
            EditOp::InsertEdge(u, v) => write!(f, "insert edge ({u}, {v})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GedResult {
    pub distance: f64,
    /// `mapping[u]` is the second-graph node matched to first-graph node
    /// `u`, or `None` when `u` is deleted.
    pub mapping: Vec<Option<usize>>,
    pub edits: Vec<EditOp>,
}

/// Exact edit distance between `g1` and `g2`.
pub fn ged_exact(g1: &Graph, g2: &Graph, costs: &EditCostModel) -> Result<f64, DatagenError> {
    Ok(ged_exact_with_path(g1, g2, costs)?.distance)
}

/// Exact edit distance plus an optimal mapping and the edits it implies.
pub fn ged_exact_with_path(g1: &Graph, g2: &Graph, costs: &EditCostModel) -> Result<GedResult, DatagenError> {
    costs.validate()?;
    for g in [g1, g2] {
        if g.n() > MAX_GED_NODES {
            return Err(DatagenError::GedTooLarge {
                nodes: g.n(),
                cap: MAX_GED_NODES,
            });
        }
    }
    let search = Search::new(g1, g2, costs);
    let mapping = search.run();
    let distance = search.mapping_cost(&mapping);
    let edits = edits_for(g1, g2, &mapping, search.labels);
    Ok(GedResult {
        distance,
        mapping,
        edits,
    })
}

/// Total cost of a complete mapping from `g1` nodes to `g2` nodes.
pub fn mapping_cost(g1: &Graph, g2: &Graph, costs: &EditCostModel, mapping: &[Option<usize>]) -> f64 {
    Search::new(g1, g2, costs).mapping_cost(mapping)
}

struct Search<'a> {
    n1: usize,
    n2: usize,
    e1: Vec<Vec<bool>>,
    e2: Vec<Vec<bool>>,
    labels: Option<(&'a [usize], &'a [usize])>,
    costs: &'a EditCostModel,
    order: Vec<usize>,
}

const BIG: f64 = 1e12;

impl<'a> Search<'a> {
    fn new(g1: &'a Graph, g2: &'a Graph, costs: &'a EditCostModel) -> Self {
        let edges = |g: &Graph| -> Vec<Vec<bool>> {
            (0..g.n()).map(|u| (0..g.n()).map(|v| g.has_edge(u, v)).collect()).collect()
        };
        let labels = match (&g1.node_labels, &g2.node_labels) {
            (Some(a), Some(b)) => Some((a.as_slice(), b.as_slice())),
            _ => None,
        };
        let mut order: Vec<usize> = (0..g1.n()).collect();
        order.sort_by_key(|&u| std::cmp::Reverse(g1.degree(u)));
        Self {
            n1: g1.n(),
            n2: g2.n(),
            e1: edges(g1),
            e2: edges(g2),
            labels,
            costs,
            order,
        }
    }

    fn relabel(&self, u: usize, v: usize) -> f64 {
        match self.labels {
            Some((a, b)) if a[u] != b[v] => self.costs.node_relabel,
            _ => 0.0,
        }
    }

    /// Cost of matching `u -> target` given the already fixed nodes: node
    /// cost plus every edge between `u` and a fixed node.
    fn step_cost(&self, u: usize, target: Option<usize>, fixed: &[(usize, Option<usize>)]) -> f64 {
        let mut c = match target {
            Some(v) => self.relabel(u, v),
            None => self.costs.node_delete,
        };
        for &(w, tw) in fixed {
            let a = self.e1[u][w];
            let b = match (target, tw) {
                (Some(v), Some(x)) => self.e2[v][x],
                _ => false,
            };
            if a && !b {
                c += self.costs.edge_delete;
            } else if b && !a {
                c += self.costs.edge_insert;
            }
        }
        c
    }

    /// Cost of inserting second-graph node `v` given the fixed mapping.
    fn insert_cost(&self, v: usize, fixed: &[(usize, Option<usize>)]) -> f64 {
        let mut c = self.costs.node_insert;
        for &(_, tw) in fixed {
            if let Some(x) = tw {
                if self.e2[v][x] {
                    c += self.costs.edge_insert;
                }
            }
        }
        c
    }

    fn mapping_cost(&self, mapping: &[Option<usize>]) -> f64 {
        let mut fixed = Vec::with_capacity(self.n1);
        let mut cost = 0.0;
        let mut used = vec![false; self.n2];
        for (u, &t) in mapping.iter().enumerate() {
            cost += self.step_cost(u, t, &fixed);
            fixed.push((u, t));
            if let Some(v) = t {
                used[v] = true;
            }
        }
        cost + self.completion_cost(&used, &fixed)
    }

    /// Inserting every unused second-graph node along with its edges.
    fn completion_cost(&self, used: &[bool], fixed: &[(usize, Option<usize>)]) -> f64 {
        let free: Vec<usize> = (0..self.n2).filter(|&v| !used[v]).collect();
        let mut cost = 0.0;
        for (i, &v) in free.iter().enumerate() {
            cost += self.insert_cost(v, fixed);
            for &x in &free[i + 1..] {
                if self.e2[v][x] {
                    cost += self.costs.edge_insert;
                }
            }
        }
        cost
    }

    /// Admissible bound on the cost still to pay: an assignment over the
    /// remaining nodes with exact costs toward fixed nodes, plus the
    /// unavoidable imbalance of edges among the remaining nodes.
    fn lower_bound(&self, depth: usize, used: &[bool], fixed: &[(usize, Option<usize>)]) -> (f64, Vec<Option<usize>>) {
        let rest1 = &self.order[depth..];
        let rest2: Vec<usize> = (0..self.n2).filter(|&v| !used[v]).collect();
        let (r1, r2) = (rest1.len(), rest2.len());
        let n = r1 + r2;
        if n == 0 {
            return (0.0, Vec::new());
        }
        let mut cost = vec![vec![0.0; n]; n];
        for (i, &u) in rest1.iter().enumerate() {
            for (j, &v) in rest2.iter().enumerate() {
                cost[i][j] = self.step_cost(u, Some(v), fixed);
            }
            let del = self.step_cost(u, None, fixed);
            for j in 0..r1 {
                cost[i][r2 + j] = if i == j { del } else { BIG };
            }
        }
        for (j, &v) in rest2.iter().enumerate() {
            let ins = self.insert_cost(v, fixed);
            for i in 0..r2 {
                cost[r1 + i][j] = if i == j { ins } else { BIG };
            }
        }
        let assignment = hungarian(&cost);
        let lsap: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();

        let internal = |nodes: &[usize], e: &Vec<Vec<bool>>| -> usize {
            let mut m = 0;
            for (i, &a) in nodes.iter().enumerate() {
                for &b in &nodes[i + 1..] {
                    m += e[a][b] as usize;
                }
            }
            m
        };
        let m1 = internal(rest1, &self.e1) as f64;
        let m2 = internal(&rest2, &self.e2) as f64;
        let edges = if m1 > m2 {
            (m1 - m2) * self.costs.edge_delete
        } else {
            (m2 - m1) * self.costs.edge_insert
        };
        let guide = (0..r1)
            .map(|i| {
                let j = assignment[i];
                (j < r2).then(|| rest2[j])
            })
            .collect();
        (lsap + edges, guide)
    }

    fn run(&self) -> Vec<Option<usize>> {
        // Seed the incumbent with the assignment-guided mapping at the root.
        let used = vec![false; self.n2];
        let (_, guide) = self.lower_bound(0, &used, &[]);
        let mut best = vec![None; self.n1];
        for (depth, &u) in self.order.iter().enumerate() {
            best[u] = guide[depth];
        }
        let mut best_cost = self.mapping_cost(&best);

        let mut state = Dfs {
            fixed: Vec::with_capacity(self.n1),
            used: vec![false; self.n2],
        };
        self.dfs(0, 0.0, &mut state, &mut best, &mut best_cost);
        best
    }

    fn dfs(&self, depth: usize, g: f64, st: &mut Dfs, best: &mut Vec<Option<usize>>, best_cost: &mut f64) {
        if depth == self.n1 {
            let total = g + self.completion_cost(&st.used, &st.fixed);
            if total < *best_cost {
                *best_cost = total;
                for &(u, t) in &st.fixed {
                    best[u] = t;
                }
            }
            return;
        }
        let u = self.order[depth];
        let mut options: Vec<(f64, Option<usize>)> = (0..self.n2)
            .filter(|&v| !st.used[v])
            .map(|v| (self.step_cost(u, Some(v), &st.fixed), Some(v)))
            .collect();
        options.push((self.step_cost(u, None, &st.fixed), None));
        options.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (step, target) in options {
            let g2 = g + step;
            if g2 >= *best_cost {
                continue;
            }
            st.fixed.push((u, target));
            if let Some(v) = target {
                st.used[v] = true;
            }
            let (lb, _) = self.lower_bound(depth + 1, &st.used, &st.fixed);
            if g2 + lb < *best_cost {
                self.dfs(depth + 1, g2, st, best, best_cost);
            }
            if let Some(v) = target {
                st.used[v] = false;
            }
            st.fixed.pop();
        }
    }
}

struct Dfs {
    fixed: Vec<(usize, Option<usize>)>,
    used: Vec<bool>,
}

fn edits_for(
    g1: &Graph,
    g2: &Graph,
    mapping: &[Option<usize>],
    labels: Option<(&[usize], &[usize])>,
) -> Vec<EditOp> {
    let mut inverse = vec![None; g2.n()];
    for (u, t) in mapping.iter().enumerate() {
        if let Some(v) = t {
            inverse[*v] = Some(u);
        }
    }
    let mut edits = Vec::new();
    for (u, w) in g1.edges() {
        let kept = match (mapping[u], mapping[w]) {
            (Some(a), Some(b)) => g2.has_edge(a, b),
            _ => false,
        };
        if !kept {
            edits.push(EditOp::DeleteEdge(u, w));
        }
    }
    for (u, t) in mapping.iter().enumerate() {
        if t.is_none() {
            edits.push(EditOp::DeleteNode(u));
        }
    }
    if let Some((a, b)) = labels {
        for (u, t) in mapping.iter().enumerate() {
            if let Some(v) = *t {
                if a[u] != b[v] {
                    edits.push(EditOp::RelabelNode {
                        node: u,
                        from: a[u],
                        to: b[v],
                    });
                }
            }
        }
    }
    for (v, src) in inverse.iter().enumerate() {
        if src.is_none() {
            edits.push(EditOp::InsertNode(v));
        }
    }
    for (v, x) in g2.edges() {
        let present = match (inverse[v], inverse[x]) {
            (Some(a), Some(b)) => g1.has_edge(a, b),
            _ => false,
        };
        if !present {
            edits.push(EditOp::InsertEdge(v, x));
        }
    }
    edits
}

/// Minimum-cost perfect assignment on a square matrix; `result[i]` is the
/// column given to row `i`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // Potentials-based O(n³) method with 1-based sentinel row/column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=n {
        result[p[j] - 1] = j - 1;
    }
    result
}
