//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use hodgerank::model::{index_labels, ComparisonGraph, GradeRecord};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum-norm weighted least squares `argmin Σ w (s_j − s_i − Ȳ_ij)²`.
///
/// The weighted incidence matrix is stacked with one indicator row per
/// connected component (target 0) and solved by Householder QR. The extra
/// rows are orthogonal to the range of the incidence part, so the solution
/// is the least-squares potential with zero mean on every component.
pub fn least_squares_oracle(graph: &ComparisonGraph) -> Vec<f64> {
    let n = graph.n();
    let edges = graph.edges();
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for root in 0..n {
        if comp[root] != usize::MAX {
            continue;
        }
        let mut stack = vec![root];
        comp[root] = count;
        while let Some(v) = stack.pop() {
            for e in edges {
                for (a, b) in [(e.i, e.j), (e.j, e.i)] {
                    if a == v && comp[b] == usize::MAX {
                        comp[b] = count;
                        stack.push(b);
                    }
                }
            }
        }
        count += 1;
    }
    let rows = edges.len() + count;
    let mut a = DMatrix::zeros(rows, n);
    let mut rhs = DVector::zeros(rows);
    for (row, e) in edges.iter().enumerate() {
        let r = e.weight.sqrt();
        a[(row, e.i)] = -r;
        a[(row, e.j)] = r;
        rhs[row] = r * e.flow;
    }
    for (v, &c) in comp.iter().enumerate() {
        a[(edges.len() + c, v)] = 1.0;
    }
    let (q, r) = a.qr().unpack();
    let x = r.solve_upper_triangular(&(q.transpose() * rhs)).expect("full column rank");
    x.iter().copied().collect()
}

/// Weighted `⟨x, z⟩` over edge-value vectors of `graph`.
pub fn wdot(graph: &ComparisonGraph, x: &[f64], z: &[f64]) -> f64 {
    graph.edges().iter().zip(x.iter().zip(z)).map(|(e, (a, b))| e.weight * a * b).sum()
}

pub fn grad_values(graph: &ComparisonGraph, s: &[f64]) -> Vec<f64> {
    graph.edges().iter().map(|e| s[e.j] - s[e.i]).collect()
}

/// The counterexample flow on three vertices with unit weights.
pub fn cyclic_graph() -> ComparisonGraph {
    ComparisonGraph::from_edges(index_labels(3), [(0, 1, 1.0, 1.0), (0, 2, -1.0, 1.0), (1, 2, -1.0, 1.0)]).unwrap()
}

/// Grade records whose pairwise flow is the counterexample flow.
pub fn cyclic_records() -> Vec<GradeRecord> {
    [
        ("s1", "s2", 50.0),
        ("s1", "s3", 49.0),
        ("s2", "s1", 50.0),
        ("s2", "s3", 49.0),
        ("s3", "s1", 50.0),
        ("s3", "s2", 51.0),
    ]
    .iter()
    .map(|&(g, e, v)| GradeRecord::new("hw1", g, e, v))
    .collect()
}

/// Cycle `0 → 1 → 2 → 3 → 0` carrying one unit.
pub fn four_cycle() -> ComparisonGraph {
    ComparisonGraph::from_edges(
        index_labels(4),
        [(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (2, 3, 1.0, 1.0), (0, 3, -1.0, 1.0)],
    )
    .unwrap()
}

/// Connected graph: a random spanning tree plus each other pair with
/// probability `density`. Returns `(i, j, w)` triples with `i < j`.
pub fn random_connected_edges(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(usize, usize, f64)> {
    let mut present = vec![vec![false; n]; n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        present[u][v] = true;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !present[i][j] && rng.random::<f64>() < density {
                present[i][j] = true;
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if present[i][j] {
                out.push((i, j, rng.random_range(0.1..10.0)));
            }
        }
    }
    out
}

pub fn graph_with_flow(n: usize, edges: &[(usize, usize, f64)], flow: impl Fn(usize, usize) -> f64) -> ComparisonGraph {
    ComparisonGraph::from_edges(index_labels(n), edges.iter().map(|&(i, j, w)| (i, j, flow(i, j), w))).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn unwrap_scores(scores: &[Option<f64>]) -> Vec<f64> {
    scores.iter().map(|v| v.expect("scored")).collect()
}
