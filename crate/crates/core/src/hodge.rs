//! HodgeRank and the combinatorial Hodge decomposition.
//!
//! Conventions used throughout:
//!
//! * `(grad s)(i, j) = s_j − s_i`, so a larger potential means a better
//!   student.
//! * `div(Y)(i) = Σ_j w_ij Y_ij`. With these signs the least-squares
//!   potential solves the normal equation `Δ0 s = −div Ȳ`, where `Δ0` is
//!   the weighted graph Laplacian.
//! * `⟨X, Z⟩_w = Σ_{i<j} w_ij X_ij Z_ij`, each unordered edge counted once.
//! * Triangles are oriented by ascending vertex index: the curl of `X` on
//!   `{i < j < k}` is `X_ij + X_jk + X_ki`.
//!
//! The potential is found per connected component by conjugate gradient
//! on the zero-mean subspace, which yields the minimum-norm solution
//! `s* = −Δ0† div Ȳ`. The residual `Ȳ − grad s*` is then split into a
//! curl part (the `w`-orthogonal projection onto the image of the adjoint
//! curl `W⁻¹ curlᵀ`) and a harmonic remainder, which is divergence-free and
//! curl-free on every triangle.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::graph::connected_components;
use crate::model::{ComparisonGraph, EdgeFlow, Flag, Method, RankingResult, TriangleCurl, WeightMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("conjugate gradient did not converge: residual {achieved:e} after {iterations} iterations")]
    NotConverged { achieved: f64, iterations: usize },
    #[error("no comparison signal: flow norm is zero")]
    NoSignal,
    #[error("ranking does not match the graph: {0}")]
    InvalidRanking(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target for the potential solve.
    pub rel_tol: f64,
    /// Relative residual target for the triangle solve of the decomposition.
    pub curl_rel_tol: f64,
    /// Iteration cap is this factor times the system size.
    pub max_iter_factor: usize,
    /// Components up to this size fall back to a dense eigendecomposition
    /// when conjugate gradient stalls.
    pub dense_fallback_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-13,
            curl_rel_tol: 1e-10,
            max_iter_factor: 10,
            dense_fallback_limit: 200,
        }
    }
}

/// `⟨X, Z⟩_w`, summed over the stored pairs of `w` in ascending order.
pub fn weighted_inner_product(x: &EdgeFlow, z: &EdgeFlow, w: &WeightMatrix) -> f64 {
    w.iter().map(|(i, j, wij)| wij * x.get(i, j) * z.get(i, j)).sum()
}

fn weighted_dot(graph: &ComparisonGraph, a: &[f64], b: &[f64]) -> f64 {
    graph
        .edges()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(e, (x, y))| e.weight * x * y)
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Sparse weighted graph Laplacian: weighted degree on the diagonal and
/// `−w_ij` off the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    degree: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Laplacian {
    pub fn dim(&self) -> usize {
        self.degree.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.degree[i];
        }
        self.adjacency[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| -w)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.degree[i] * x[i];
            for &(j, w) in &self.adjacency[i] {
                acc -= w * x[j];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.degree[i];
            for &(j, w) in &self.adjacency[i] {
                m[(i, j)] -= w;
            }
        }
        m
    }

    /// The Laplacian of the subgraph on `members`, reindexed `0..len`.
    /// `members` must be a union of connected components.
    fn restrict(&self, members: &[usize], local: &[usize]) -> Laplacian {
        Laplacian {
            degree: members.iter().map(|&v| self.degree[v]).collect(),
            adjacency: members
                .iter()
                .map(|&v| self.adjacency[v].iter().map(|&(u, w)| (local[u], w)).collect())
                .collect(),
        }
    }
}

pub fn laplacian(graph: &ComparisonGraph) -> Laplacian {
    let n = graph.n();
    let mut degree = vec![0.0; n];
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, e) in graph.neighbors(i) {
            let w = graph.edges()[e].weight;
            degree[i] += w;
            adjacency[i].push((j, w));
        }
    }
    Laplacian { degree, adjacency }
}

fn divergence_of_values(graph: &ComparisonGraph, values: &[f64]) -> Vec<f64> {
    let mut div = vec![0.0; graph.n()];
    for (e, &y) in graph.edges().iter().zip(values) {
        div[e.i] += e.weight * y;
        div[e.j] -= e.weight * y;
    }
    div
}

/// `div(Ȳ)(i) = Σ_j w_ij Ȳ_ij` for the graph's own flow.
pub fn divergence(graph: &ComparisonGraph) -> Vec<f64> {
    let values: Vec<f64> = graph.edges().iter().map(|e| e.flow).collect();
    divergence_of_values(graph, &values)
}

/// Divergence of an arbitrary flow using the graph's weights.
pub fn divergence_of(graph: &ComparisonGraph, flow: &EdgeFlow) -> Vec<f64> {
    divergence_of_values(graph, &graph.edge_values(flow))
}

fn gradient_values(graph: &ComparisonGraph, s: &[f64]) -> Vec<f64> {
    graph.edges().iter().map(|e| s[e.j] - s[e.i]).collect()
}

/// `grad s` restricted to the graph's edges.
pub fn gradient(graph: &ComparisonGraph, s: &[f64]) -> EdgeFlow {
    graph.flow_from_edge_values(&gradient_values(graph, s))
}

/// `‖Δ0 s + div Ȳ‖_∞`.
pub fn normal_equation_residual(graph: &ComparisonGraph, s: &[f64]) -> f64 {
    let ls = laplacian(graph).apply(s);
    let div = divergence(graph);
    let r: Vec<f64> = ls.iter().zip(&div).map(|(a, b)| a + b).collect();
    norm_inf(&r)
}

struct CgOutcome {
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// Conjugate gradient from `x = 0` on a symmetric positive semidefinite
/// operator. `project` is applied to every residual and search direction,
/// which keeps the iterates inside an invariant subspace. Convergence is
/// judged on the recomputed residual `b − A x`; if the recursive residual
/// drifted, the iteration restarts from the current `x`.
fn conjugate_gradient<A, P>(apply: A, b: &[f64], project: P, rel_tol: f64, max_iter: usize) -> CgOutcome
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    let n = b.len();
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let b_norm = dot(&rhs, &rhs).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let target = rel_tol * b_norm;
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = b_norm;
    for restart in 0..=4 {
        // r = b − A x
        apply(&x, &mut ap);
        let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
        project(&mut r);
        let mut rr = dot(&r, &r);
        residual = rr.sqrt();
        if residual <= target || iterations >= max_iter || restart == 4 {
            break;
        }
        let mut p = r.clone();
        while iterations < max_iter {
            apply(&p, &mut ap);
            project(&mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                break;
            }
            let alpha = rr / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            project(&mut r);
            iterations += 1;
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= target {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            project(&mut p);
        }
    }
    CgOutcome {
        x,
        iterations,
        residual,
        converged: residual <= target,
    }
}

fn subtract_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Minimum-norm solution of `L x = b` for a connected component's
/// Laplacian through the eigendecomposition `L† = V Λ† Vᵀ`.
fn dense_pinv_solve(lap: &Laplacian, b: &[f64]) -> Vec<f64> {
    let eig = SymmetricEigen::new(lap.to_dense());
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let cutoff = 1e-9 * lambda_max.max(f64::MIN_POSITIVE);
    let rhs = DVector::from_column_slice(b);
    let coeffs = eig.eigenvectors.transpose() * rhs;
    let mut scaled = coeffs.clone();
    for (k, c) in scaled.iter_mut().enumerate() {
        let l = eig.eigenvalues[k];
        *c = if l > cutoff { *c / l } else { 0.0 };
    }
    (eig.eigenvectors * scaled).iter().copied().collect()
}

#[derive(Clone, Copy)]
enum Backend {
    Iterative,
    Dense,
}

/// Minimum-norm HodgeRank potential with default [`SolverOptions`].
pub fn solve_hodgerank(graph: &ComparisonGraph) -> Result<RankingResult, SolverError> {
    solve_hodgerank_with(graph, &SolverOptions::default())
}

/// Same solution computed by dense eigendecomposition on every component.
/// Intended for small graphs and cross-checking.
pub fn solve_hodgerank_dense(graph: &ComparisonGraph) -> Result<RankingResult, SolverError> {
    solve(graph, &SolverOptions::default(), Backend::Dense)
}

pub fn solve_hodgerank_with(graph: &ComparisonGraph, options: &SolverOptions) -> Result<RankingResult, SolverError> {
    solve(graph, options, Backend::Iterative)
}

fn solve(graph: &ComparisonGraph, options: &SolverOptions, backend: Backend) -> Result<RankingResult, SolverError> {
    let n = graph.n();
    let components = connected_components(graph);
    let lap = laplacian(graph);
    let div = divergence(graph);
    let mut s = vec![0.0; n];
    let mut flags = Vec::new();
    let mut local = vec![usize::MAX; n];

    for (c, members) in components.members().iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        for (k, &v) in members.iter().enumerate() {
            local[v] = k;
        }
        let sub = lap.restrict(members, &local);
        let b: Vec<f64> = members.iter().map(|&v| -div[v]).collect();
        let mut x = match backend {
            Backend::Dense => dense_pinv_solve(&sub, &b),
            Backend::Iterative => {
                let max_iter = options.max_iter_factor.max(1) * members.len();
                let out = conjugate_gradient(
                    |p, out| sub.apply_into(p, out),
                    &b,
                    subtract_mean,
                    options.rel_tol,
                    max_iter,
                );
                debug!(
                    "component {c}: {} vertices, {} CG iterations, residual {:e}",
                    members.len(),
                    out.iterations,
                    out.residual
                );
                if out.converged {
                    out.x
                } else if members.len() <= options.dense_fallback_limit {
                    warn!("component {c}: conjugate gradient stalled, using dense fallback");
                    flags.push(Flag::DenseFallback { component: c });
                    dense_pinv_solve(&sub, &b)
                } else {
                    return Err(SolverError::NotConverged {
                        achieved: out.residual,
                        iterations: out.iterations,
                    });
                }
            }
        };
        subtract_mean(&mut x);
        for (k, &v) in members.iter().enumerate() {
            s[v] = x[k];
        }
    }

    let bound = 1e-8 * norm_inf(&div).max(1.0);
    let achieved = normal_equation_residual(graph, &s);
    if !(achieved <= bound) {
        return Err(SolverError::NotConverged {
            achieved,
            iterations: 0,
        });
    }

    if components.count > 1 {
        warn!(
            "comparison graph has {} connected components; scores are only comparable within a component",
            components.count
        );
        flags.insert(
            0,
            Flag::Disconnected {
                components: components.count,
            },
        );
    }

    let y: Vec<f64> = graph.edges().iter().map(|e| e.flow).collect();
    let g = gradient_values(graph, &s);
    let r: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b).collect();
    Ok(RankingResult {
        method: Method::Hodgerank,
        students: graph.vertices().to_vec(),
        scores: s.into_iter().map(Some).collect(),
        component_id: components.labels,
        component_count: components.count,
        residual_norm_sq: weighted_dot(graph, &r, &r),
        flow_norm_sq: weighted_dot(graph, &y, &y),
        flags,
    })
}

/// A 3-clique `i < j < k` with the indices of its edges `(i,j)`, `(j,k)`
/// and `(i,k)` in [`ComparisonGraph::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub edges: [usize; 3],
}

impl Triangle {
    fn curl(&self, values: &[f64]) -> f64 {
        values[self.edges[0]] + values[self.edges[1]] - values[self.edges[2]]
    }
}

/// Every 3-clique of the edge set, in lexicographic order.
pub fn triangles(graph: &ComparisonGraph) -> Vec<Triangle> {
    let mut out = Vec::new();
    for (e_ij, e) in graph.edges().iter().enumerate() {
        let (i, j) = (e.i, e.j);
        let ni = graph.neighbors(i);
        let nj = graph.neighbors(j);
        let mut a = ni.partition_point(|&(k, _)| k <= j);
        let mut b = nj.partition_point(|&(k, _)| k <= j);
        while a < ni.len() && b < nj.len() {
            let (ka, e_ik) = ni[a];
            let (kb, e_jk) = nj[b];
            match ka.cmp(&kb) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    out.push(Triangle {
                        vertices: [i, j, ka],
                        edges: [e_ij, e_jk, e_ik],
                    });
                    a += 1;
                    b += 1;
                }
            }
        }
    }
    out
}

/// Curl of `flow` on every triangle of `graph`.
pub fn triangle_curl(flow: &EdgeFlow, graph: &ComparisonGraph) -> Vec<TriangleCurl> {
    triangles(graph)
        .into_iter()
        .map(|t| {
            let [i, j, k] = t.vertices;
            TriangleCurl {
                triangle: t.vertices,
                curl_value: flow.get(i, j) + flow.get(j, k) + flow.get(k, i),
            }
        })
        .collect()
}

/// The `k` triangles with largest `|curl|`, ties by vertex order.
pub fn top_triangles(mut curls: Vec<TriangleCurl>, k: usize) -> Vec<TriangleCurl> {
    curls.sort_by(|a, b| {
        b.curl_value
            .abs()
            .total_cmp(&a.curl_value.abs())
            .then_with(|| a.triangle.cmp(&b.triangle))
    });
    curls.truncate(k);
    curls
}

/// Weighted squared norms of the flow and its three parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionNorms {
    pub flow: f64,
    pub gradient: f64,
    pub curl: f64,
    pub harmonic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HodgeDecomposition {
    pub gradient_flow: EdgeFlow,
    pub curl_flow: EdgeFlow,
    pub harmonic_flow: EdgeFlow,
    pub norms: DecompositionNorms,
    pub triangle_count: usize,
    pub curl_iterations: usize,
}

/// Splits `Ȳ = grad s* + curl part + harmonic part`.
///
/// `ranking` must come from [`solve_hodgerank`] on the same graph.
pub fn decompose_residual(graph: &ComparisonGraph, ranking: &RankingResult) -> Result<HodgeDecomposition, SolverError> {
    decompose_residual_with(graph, ranking, &SolverOptions::default())
}

pub fn decompose_residual_with(
    graph: &ComparisonGraph,
    ranking: &RankingResult,
    options: &SolverOptions,
) -> Result<HodgeDecomposition, SolverError> {
    if ranking.method != Method::Hodgerank {
        return Err(SolverError::InvalidRanking(format!("expected a hodgerank result, got {}", ranking.method)));
    }
    if ranking.students.as_slice() != graph.vertices() {
        return Err(SolverError::InvalidRanking("student list differs from graph vertices".into()));
    }
    let s: Vec<f64> = ranking
        .scores
        .iter()
        .map(|v| v.ok_or_else(|| SolverError::InvalidRanking("missing score".into())))
        .collect::<Result<_, _>>()?;

    let y: Vec<f64> = graph.edges().iter().map(|e| e.flow).collect();
    let g = gradient_values(graph, &s);
    let r: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b).collect();
    let weights: Vec<f64> = graph.edges().iter().map(|e| e.weight).collect();

    let tris = triangles(graph);
    let m = graph.edges().len();
    let rhs: Vec<f64> = tris.iter().map(|t| t.curl(&r)).collect();

    // curlᵀ φ scattered onto edges, then divided by the weights
    let adjoint = |phi: &[f64], edge_buf: &mut [f64]| {
        edge_buf.iter_mut().for_each(|v| *v = 0.0);
        for (t, &p) in tris.iter().zip(phi) {
            edge_buf[t.edges[0]] += p;
            edge_buf[t.edges[1]] += p;
            edge_buf[t.edges[2]] -= p;
        }
        for (v, w) in edge_buf.iter_mut().zip(&weights) {
            *v /= w;
        }
    };
    let scratch = std::cell::RefCell::new(vec![0.0; m]);
    let apply = |phi: &[f64], out: &mut [f64]| {
        let mut buf = scratch.borrow_mut();
        adjoint(phi, &mut buf);
        for (o, t) in out.iter_mut().zip(&tris) {
            *o = t.curl(&buf);
        }
    };
    let outcome = conjugate_gradient(
        apply,
        &rhs,
        |_| {},
        options.curl_rel_tol,
        options.max_iter_factor.max(1) * tris.len().max(1),
    );
    if !outcome.converged {
        return Err(SolverError::NotConverged {
            achieved: outcome.residual,
            iterations: outcome.iterations,
        });
    }
    let mut curl = vec![0.0; m];
    adjoint(&outcome.x, &mut curl);
    let harmonic: Vec<f64> = r.iter().zip(&curl).map(|(a, b)| a - b).collect();

    let norms = DecompositionNorms {
        flow: weighted_dot(graph, &y, &y),
        gradient: weighted_dot(graph, &g, &g),
        curl: weighted_dot(graph, &curl, &curl),
        harmonic: weighted_dot(graph, &harmonic, &harmonic),
    };
    Ok(HodgeDecomposition {
        gradient_flow: graph.flow_from_edge_values(&g),
        curl_flow: graph.flow_from_edge_values(&curl),
        harmonic_flow: graph.flow_from_edge_values(&harmonic),
        norms,
        triangle_count: tris.len(),
        curl_iterations: outcome.iterations,
    })
}

/// Shares of `‖Ȳ‖²_w` carried by each part, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InconsistencyMetrics {
    pub gradient_ratio: f64,
    pub global_ratio: f64,
    pub curl_ratio: f64,
    pub harmonic_ratio: f64,
}

pub fn inconsistency_metrics(decomposition: &HodgeDecomposition) -> Result<InconsistencyMetrics, SolverError> {
    let n = &decomposition.norms;
    if !(n.flow > 0.0) {
        return Err(SolverError::NoSignal);
    }
    let ratio = |x: f64| (x / n.flow).clamp(0.0, 1.0);
    Ok(InconsistencyMetrics {
        gradient_ratio: ratio(n.gradient),
        global_ratio: ratio(n.curl + n.harmonic),
        curl_ratio: ratio(n.curl),
        harmonic_ratio: ratio(n.harmonic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::index_labels;
    use proptest::prelude::*;

    fn cyclic_graph() -> ComparisonGraph {
        let y = EdgeFlow::from_dense(&[
            vec![0.0, 1.0, -1.0],
            vec![-1.0, 0.0, -1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let w = WeightMatrix::from_entries(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        ComparisonGraph::new(index_labels(3), y, w).unwrap()
    }

    fn four_cycle() -> ComparisonGraph {
        // +1 around 0 → 1 → 2 → 3 → 0
        ComparisonGraph::from_edges(
            index_labels(4),
            [(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (2, 3, 1.0, 1.0), (3, 0, 1.0, 1.0)],
        )
        .unwrap()
    }

    fn consistent_triangle(w: [f64; 3]) -> ComparisonGraph {
        let s = [1.0, 2.0, 3.0];
        ComparisonGraph::from_edges(
            index_labels(3),
            [
                (0, 1, s[1] - s[0], w[0]),
                (0, 2, s[2] - s[0], w[1]),
                (1, 2, s[2] - s[1], w[2]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let x = EdgeFlow::from_entries(2, [(0, 1, 2.0)]).unwrap();
        let w = WeightMatrix::from_entries(2, [(0, 1, 3.0)]).unwrap();
        assert_eq!(weighted_inner_product(&x, &x, &w), 12.0);

        let a = EdgeFlow::from_entries(3, [(0, 1, 2.0)]).unwrap();
        let b = EdgeFlow::from_entries(3, [(1, 2, 5.0)]).unwrap();
        let w = WeightMatrix::from_entries(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(weighted_inner_product(&a, &b, &w), 0.0);

        let g = cyclic_graph();
        assert_eq!(weighted_inner_product(g.flow(), g.flow(), g.weights()), 3.0);
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian(&cyclic_graph());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.entry(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }
        let single = ComparisonGraph::from_edges(index_labels(2), [(0, 1, 0.0, 5.0)]).unwrap();
        let d = laplacian(&single).to_dense();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[5.0, -5.0, -5.0, 5.0]));

        let two = ComparisonGraph::from_edges(index_labels(4), [(0, 1, 0.0, 1.0), (2, 3, 0.0, 2.0)]).unwrap();
        let d = laplacian(&two).to_dense();
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(d[(1, 3)], 0.0);
        let eig = SymmetricEigen::new(d);
        let kernel = eig.eigenvalues.iter().filter(|l| l.abs() < 1e-12).count();
        assert_eq!(kernel, 2);
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(divergence(&cyclic_graph()), vec![0.0, -2.0, 2.0]);
        let single = ComparisonGraph::from_edges(index_labels(2), [(0, 1, 1.0, 1.0)]).unwrap();
        assert_eq!(divergence(&single), vec![1.0, -1.0]);
        let zero = ComparisonGraph::from_edges(index_labels(3), [(0, 1, 0.0, 1.0)]).unwrap();
        assert_eq!(divergence(&zero), vec![0.0; 3]);
    }

    #[test]
    fn cyclic_example_solution() {
        let g = cyclic_graph();
        let r = solve_hodgerank(&g).unwrap();
        let s: Vec<f64> = r.scores.iter().map(|v| v.unwrap()).collect();
        let expected = [0.0, 2.0 / 3.0, -2.0 / 3.0];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{s:?}");
        }
        assert!((r.residual_norm_sq / r.flow_norm_sq - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(r.component_count, 1);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn consistent_data_recovers_centered_potential() {
        let g = consistent_triangle([0.5, 3.0, 7.0]);
        let r = solve_hodgerank(&g).unwrap();
        for (v, e) in r.scores.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((v.unwrap() - e).abs() < 1e-12);
        }
        assert!(r.residual_norm_sq < 1e-24);
    }

    #[test]
    fn empty_edge_set() {
        let g = ComparisonGraph::from_edges(index_labels(3), []).unwrap();
        let r = solve_hodgerank(&g).unwrap();
        assert_eq!(r.scores, vec![Some(0.0); 3]);
        assert_eq!(r.component_count, 3);
        assert_eq!(r.component_id, vec![0, 1, 2]);
        assert_eq!(r.flags, vec![Flag::Disconnected { components: 3 }]);
    }

    #[test]
    fn disconnected_components_are_centered_separately() {
        let g = ComparisonGraph::from_edges(
            index_labels(5),
            [(0, 1, 4.0, 1.0), (2, 3, 2.0, 1.0), (3, 4, 2.0, 1.0)],
        )
        .unwrap();
        let r = solve_hodgerank(&g).unwrap();
        let s: Vec<f64> = r.scores.iter().map(|v| v.unwrap()).collect();
        let expected = [-2.0, 2.0, -2.0, 0.0, 2.0];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(r.component_id, vec![0, 0, 1, 1, 1]);
    }

    #[test]
    fn dense_and_iterative_agree() {
        let g = ComparisonGraph::from_edges(
            index_labels(5),
            [
                (0, 1, 3.0, 2.0),
                (1, 2, -1.0, 0.5),
                (0, 2, 4.0, 1.0),
                (2, 3, 2.5, 3.0),
                (3, 4, -2.0, 1.0),
                (1, 4, 1.0, 4.0),
            ],
        )
        .unwrap();
        let a = solve_hodgerank(&g).unwrap();
        let b = solve_hodgerank_dense(&g).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn curl_examples() {
        let g = cyclic_graph();
        let c = triangle_curl(g.flow(), &g);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].triangle, [0, 1, 2]);
        assert_eq!(c[0].curl_value, 1.0);

        let s = [0.3, -1.7, 2.2];
        let grad = gradient(&g, &s);
        assert!(triangle_curl(&grad, &g).iter().all(|t| t.curl_value.abs() < 1e-15));

        assert!(triangle_curl(four_cycle().flow(), &four_cycle()).is_empty());
    }

    #[test]
    fn triangles_of_k4() {
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = ComparisonGraph::from_edges(index_labels(4), edges.iter().map(|&(i, j)| (i, j, 0.0, 1.0))).unwrap();
        let t: Vec<_> = triangles(&g).iter().map(|t| t.vertices).collect();
        assert_eq!(t, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]);
        for tri in triangles(&g) {
            let [i, j, k] = tri.vertices;
            assert_eq!(g.edges()[tri.edges[0]], g.edges()[g.edge_index(i, j).unwrap()]);
            assert_eq!(tri.edges[1], g.edge_index(j, k).unwrap());
            assert_eq!(tri.edges[2], g.edge_index(i, k).unwrap());
        }
    }

    #[test]
    fn cyclic_example_decomposition() {
        let g = cyclic_graph();
        let r = solve_hodgerank(&g).unwrap();
        let d = decompose_residual(&g, &r).unwrap();
        let third = 1.0 / 3.0;
        for (i, j, v) in [(0, 1, third), (0, 2, -third), (1, 2, third)] {
            assert!((d.curl_flow.get(i, j) - v).abs() < 1e-12);
            assert!(d.harmonic_flow.get(i, j).abs() < 1e-12);
        }
        let m = inconsistency_metrics(&d).unwrap();
        assert!((m.global_ratio - 1.0 / 9.0).abs() < 1e-12);
        assert!(m.harmonic_ratio < 1e-12);
        assert!((m.gradient_ratio + m.global_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_decomposition_is_pure_gradient() {
        let g = consistent_triangle([1.0, 2.0, 3.0]);
        let r = solve_hodgerank(&g).unwrap();
        let d = decompose_residual(&g, &r).unwrap();
        for (i, j, y) in g.flow().iter() {
            assert!((d.gradient_flow.get(i, j) - y).abs() < 1e-12);
        }
        let m = inconsistency_metrics(&d).unwrap();
        assert!(m.global_ratio < 1e-20 && m.curl_ratio < 1e-20 && m.harmonic_ratio < 1e-20);
    }

    #[test]
    fn four_cycle_is_harmonic() {
        let g = four_cycle();
        let r = solve_hodgerank(&g).unwrap();
        let d = decompose_residual(&g, &r).unwrap();
        assert_eq!(d.triangle_count, 0);
        for (i, j, y) in g.flow().iter() {
            assert!(d.gradient_flow.get(i, j).abs() < 1e-12);
            assert_eq!(d.curl_flow.get(i, j), 0.0);
            assert!((d.harmonic_flow.get(i, j) - y).abs() < 1e-12);
        }
        let m = inconsistency_metrics(&d).unwrap();
        assert!((m.global_ratio - 1.0).abs() < 1e-12);
        assert!((m.harmonic_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_flow_has_no_signal() {
        let g = ComparisonGraph::from_edges(index_labels(2), [(0, 1, 0.0, 1.0)]).unwrap();
        let r = solve_hodgerank(&g).unwrap();
        let d = decompose_residual(&g, &r).unwrap();
        assert_eq!(inconsistency_metrics(&d), Err(SolverError::NoSignal));
    }

    #[test]
    fn decomposition_requires_hodgerank_ranking() {
        let g = cyclic_graph();
        let mut r = solve_hodgerank(&g).unwrap();
        r.method = Method::CumulativeAvg;
        assert!(matches!(decompose_residual(&g, &r), Err(SolverError::InvalidRanking(_))));
    }

    #[test]
    fn top_triangles_orders_by_magnitude() {
        let c = vec![
            TriangleCurl { triangle: [0, 1, 2], curl_value: 1.0 },
            TriangleCurl { triangle: [0, 1, 3], curl_value: -3.0 },
            TriangleCurl { triangle: [0, 2, 3], curl_value: 1.0 },
        ];
        let top = top_triangles(c, 2);
        assert_eq!(top[0].triangle, [0, 1, 3]);
        assert_eq!(top[1].triangle, [0, 1, 2]);
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64, f64)>, Vec<f64>)> {
        (3usize..9).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
            let m = pairs.len();
            (
                Just(n),
                proptest::collection::vec((any::<bool>(), -5.0f64..5.0, 0.1f64..5.0), m),
                proptest::collection::vec(-10.0f64..10.0, n),
                Just(pairs),
            )
                .prop_map(|(n, picks, s, pairs)| {
                    let edges = pairs
                        .iter()
                        .zip(picks)
                        // the path 0-1-…-(n-1) is always kept so the graph is connected
                        .filter(|(&(i, j), (keep, _, _))| *keep || j == i + 1)
                        .map(|(&(i, j), (_, y, w))| (i, j, y, w))
                        .collect();
                    (n, edges, s)
                })
        })
    }

    proptest! {
        #[test]
        fn solver_invariants((n, edges, _) in random_graph(), scale in 0.1f64..10.0) {
            let g = ComparisonGraph::from_edges(index_labels(n), edges.iter().copied()).unwrap();
            let r = solve_hodgerank(&g).unwrap();
            let s: Vec<f64> = r.scores.iter().map(|v| v.unwrap()).collect();
            let div = divergence(&g);
            prop_assert!(normal_equation_residual(&g, &s) <= 1e-8 * norm_inf(&div).max(1.0));
            prop_assert!((s.iter().sum::<f64>() / n as f64).abs() <= 1e-10);
            let grad = gradient(&g, &s);
            let resid = EdgeFlow::from_entries(n, g.flow().iter().map(|(i, j, y)| (i, j, y - grad.get(i, j)))).unwrap();
            let flow_norm = weighted_inner_product(g.flow(), g.flow(), g.weights());
            prop_assert!(weighted_inner_product(&grad, &resid, g.weights()).abs() <= 1e-8 * flow_norm.max(1e-300));
            prop_assert!(r.residual_norm_sq <= r.flow_norm_sq + 1e-9);

            // scaling every weight leaves the potential unchanged
            let scaled = ComparisonGraph::from_edges(index_labels(n), edges.iter().map(|&(i, j, y, w)| (i, j, y, w * scale))).unwrap();
            let r2 = solve_hodgerank(&scaled).unwrap();
            for (a, b) in r.scores.iter().zip(&r2.scores) {
                prop_assert!((a.unwrap() - b.unwrap()).abs() <= 1e-8);
            }
        }

        #[test]
        fn exact_recovery((n, edges, s) in random_graph()) {
            let g = ComparisonGraph::from_edges(index_labels(n), edges.iter().map(|&(i, j, _, w)| (i, j, s[j] - s[i], w))).unwrap();
            let r = solve_hodgerank(&g).unwrap();
            let mean = s.iter().sum::<f64>() / n as f64;
            for (v, t) in r.scores.iter().zip(&s) {
                prop_assert!((v.unwrap() - (t - mean)).abs() <= 1e-8);
            }
        }

        #[test]
        fn decomposition_parts_are_orthogonal((n, edges, _) in random_graph()) {
            let g = ComparisonGraph::from_edges(index_labels(n), edges.iter().copied()).unwrap();
            let r = solve_hodgerank(&g).unwrap();
            let d = decompose_residual(&g, &r).unwrap();
            let w = g.weights();
            let total = d.norms.flow.max(1e-300);
            prop_assert!(weighted_inner_product(&d.gradient_flow, &d.curl_flow, w).abs() <= 1e-8 * total);
            prop_assert!(weighted_inner_product(&d.gradient_flow, &d.harmonic_flow, w).abs() <= 1e-8 * total);
            prop_assert!(weighted_inner_product(&d.curl_flow, &d.harmonic_flow, w).abs() <= 1e-8 * total);
            // harmonic part is divergence-free and curl-free
            let div = divergence_of(&g, &d.harmonic_flow);
            prop_assert!(norm_inf(&div) <= 1e-8 * total.sqrt().max(1.0));
            for t in triangle_curl(&d.harmonic_flow, &g) {
                prop_assert!(t.curl_value.abs() <= 1e-8 * total.sqrt().max(1.0));
            }
        }
    }
}
