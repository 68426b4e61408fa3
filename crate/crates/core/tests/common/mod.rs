#![allow(dead_code)]

use hap::graph::Graph;
use hap::tensor::Matrix;
use rand::Rng;

pub fn edges_of(g: &Graph) -> Vec<Vec<bool>> {
    (0..g.n()).map(|u| (0..g.n()).map(|v| g.has_edge(u, v)).collect()).collect()
}

/// Exact unit-cost edit distance by enumerating every partial injection of
/// `g1`'s nodes into `g2`'s. Exponential; meant for at most 6 nodes.
pub fn brute_force_ged(g1: &Graph, g2: &Graph) -> f64 {
    let (e1, e2) = (edges_of(g1), edges_of(g2));
    let (n1, n2) = (g1.n(), g2.n());
    let mut map: Vec<Option<usize>> = vec![None; n1];
    let mut used = vec![false; n2];
    let mut best = f64::INFINITY;
    enumerate(0, &mut map, &mut used, &mut |map: &[Option<usize>]| {
        best = best.min(cost(map, &e1, &e2));
    });
    best
}

fn enumerate(i: usize, map: &mut Vec<Option<usize>>, used: &mut Vec<bool>, visit: &mut dyn FnMut(&[Option<usize>])) {
    if i == map.len() {
        visit(map);
        return;
    }
    map[i] = None;
    enumerate(i + 1, map, used, visit);
    for j in 0..used.len() {
        if !used[j] {
            used[j] = true;
            map[i] = Some(j);
            enumerate(i + 1, map, used, visit);
            used[j] = false;
        }
    }
    map[i] = None;
}

fn cost(map: &[Option<usize>], e1: &[Vec<bool>], e2: &[Vec<bool>]) -> f64 {
    let n1 = e1.len();
    let n2 = e2.len();
    let mapped = map.iter().filter(|m| m.is_some()).count();
    let mut c = (n1 - mapped) + (n2 - mapped);
    // Edges of g1: kept, substituted away, or deleted with a node.
    for u in 0..n1 {
        for v in u + 1..n1 {
            match (map[u], map[v]) {
                (Some(a), Some(b)) => c += (e1[u][v] != e2[a][b]) as usize,
                _ => c += e1[u][v] as usize,
            }
        }
    }
    // Edges of g2 not covered by a mapped pair are inserted.
    let mut image = vec![false; n2];
    for &j in map.iter().flatten() {
        image[j] = true;
    }
    for a in 0..n2 {
        for b in a + 1..n2 {
            if e2[a][b] && !(image[a] && image[b]) {
                c += 1;
            }
        }
    }
    c as f64
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exhaustive isomorphism test.
pub fn isomorphic(g1: &Graph, g2: &Graph) -> bool {
    if g1.n() != g2.n() || g1.edge_count() != g2.edge_count() {
        return false;
    }
    let (e1, e2) = (edges_of(g1), edges_of(g2));
    permutations(g1.n())
        .iter()
        .any(|p| (0..g1.n()).all(|u| (0..g1.n()).all(|v| e1[u][v] == e2[p[u]][p[v]])))
}

/// Random simple graph on `n` nodes with edge probability `p`.
pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Random graph carrying random `f`-wide features.
pub fn featured_graph<R: Rng>(n: usize, f: usize, p: f64, rng: &mut R) -> Graph {
    let g = random_graph(n, p, rng);
    let x = Matrix::from_fn(n, f, |_, _| rng.gen_range(-1.0..1.0));
    g.with_features(x).unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
