//! Shared domain types.
//!
//! Students and assignments are opaque strings. Every structure that does
//! linear algebra works on dense vertex indices `0..n` assigned in order of
//! first appearance (see [`StudentIndex`]).
//!
//! An [`EdgeFlow`] stores one orientation per unordered pair and negates on
//! read, so skew-symmetry holds by construction.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("vertex index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("diagonal entry ({0}, {0}) must be zero")]
    NonZeroDiagonal(usize),
    #[error("matrix is not skew-symmetric at ({i}, {j})")]
    NotSkewSymmetric { i: usize, j: usize },
    #[error("matrix is not square")]
    NotSquare,
    #[error("value at ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("weight at ({i}, {j}) must be nonnegative, got {value}")]
    NegativeWeight { i: usize, j: usize, value: f64 },
    #[error("flow is nonzero on ({i}, {j}) but the pair carries no weight")]
    FlowOutsideSupport { i: usize, j: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid score scale [{min}, {max}]")]
    InvalidScale { min: f64, max: f64 },
}

/// Closed interval that valid scores must lie in. Defaults to the
/// hundred-mark scale `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Scale { min: 0.0, max: 100.0 }
    }
}

impl Scale {
    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(ModelError::InvalidScale { min, max });
        }
        Ok(Scale { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.min, self.max)
    }
}

/// One grading event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub assignment: String,
    pub grader: String,
    pub gradee: String,
    pub score: f64,
}

impl GradeRecord {
    pub fn new(
        assignment: impl Into<String>,
        grader: impl Into<String>,
        gradee: impl Into<String>,
        score: f64,
    ) -> Self {
        GradeRecord {
            assignment: assignment.into(),
            grader: grader.into(),
            gradee: gradee.into(),
            score,
        }
    }

    /// Checks the record invariants against `scale`.
    pub fn validate(&self, scale: &Scale) -> Result<(), RecordIssue> {
        for (name, value) in [
            ("assignment_id", &self.assignment),
            ("grader_id", &self.grader),
            ("gradee_id", &self.gradee),
        ] {
            if value.is_empty() {
                return Err(RecordIssue::MissingField(name));
            }
        }
        if self.grader == self.gradee {
            return Err(RecordIssue::SelfGrade);
        }
        if !self.score.is_finite() {
            return Err(RecordIssue::NonNumericScore);
        }
        if !scale.contains(self.score) {
            return Err(RecordIssue::OutOfRange(*scale));
        }
        Ok(())
    }
}

/// Why a single record was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordIssue {
    #[error("self-grade")]
    SelfGrade,
    #[error("score out of range {0}")]
    OutOfRange(Scale),
    #[error("non-numeric score")]
    NonNumericScore,
    #[error("missing field: {0}")]
    MissingField(&'static str),
}

/// Dense index over student identifiers, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudentIndex {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl StudentIndex {
    /// Graders and gradees in row order; within a row the grader comes first.
    pub fn from_records(records: &[GradeRecord]) -> Self {
        let mut index = StudentIndex::default();
        for r in records {
            index.insert(&r.grader);
            index.insert(&r.gradee);
        }
        index
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut index = StudentIndex::default();
        for n in names {
            index.insert(n.as_ref());
        }
        index
    }

    pub fn insert(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Vertex labels `"0"`, `"1"`, … for graphs built directly from indices.
pub fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn ordered(i: usize, j: usize) -> ((usize, usize), f64) {
    if i < j {
        ((i, j), 1.0)
    } else {
        ((j, i), -1.0)
    }
}

/// Skew-symmetric function on ordered vertex pairs.
///
/// Only the `(lo, hi)` orientation is stored; `get(hi, lo)` returns the
/// negation. Pairs that were never set read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeFlow {
    dim: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl EdgeFlow {
    pub fn new(dim: usize) -> Self {
        EdgeFlow {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Builds a flow from `(i, j, X_ij)` triples. Later triples for the same
    /// unordered pair overwrite earlier ones.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut flow = EdgeFlow::new(dim);
        for (i, j, v) in entries {
            flow.set(i, j, v)?;
        }
        Ok(flow)
    }

    /// Reads the strict upper triangle of a skew-symmetric matrix, storing
    /// every nonzero entry.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(ModelError::NotSquare);
        }
        let mut flow = EdgeFlow::new(n);
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return Err(ModelError::NonZeroDiagonal(i));
            }
            for j in (i + 1)..n {
                if rows[i][j] != -rows[j][i] {
                    return Err(ModelError::NotSkewSymmetric { i, j });
                }
                if rows[i][j] != 0.0 {
                    flow.set(i, j, rows[i][j])?;
                }
            }
        }
        Ok(flow)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (key, sign) = ordered(i, j);
        self.entries.get(&key).map_or(0.0, |v| sign * v)
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<(), ModelError> {
        self.check_index(i)?;
        self.check_index(j)?;
        if !value.is_finite() {
            return Err(ModelError::NonFinite { i, j });
        }
        if i == j {
            if value != 0.0 {
                return Err(ModelError::NonZeroDiagonal(i));
            }
            return Ok(());
        }
        let (key, sign) = ordered(i, j);
        self.entries.insert(key, sign * value);
        Ok(())
    }

    /// Stored pairs as `(i, j, X_ij)` with `i < j`, in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_index(&self, index: usize) -> Result<(), ModelError> {
        if index >= self.dim {
            Err(ModelError::IndexOutOfRange {
                index,
                dim: self.dim,
            })
        } else {
            Ok(())
        }
    }
}

/// Symmetric nonnegative weights on unordered pairs, zero diagonal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightMatrix {
    dim: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl WeightMatrix {
    pub fn new(dim: usize) -> Self {
        WeightMatrix {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut w = WeightMatrix::new(dim);
        for (i, j, v) in entries {
            w.set(i, j, v)?;
        }
        Ok(w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (key, _) = ordered(i, j);
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<(), ModelError> {
        for index in [i, j] {
            if index >= self.dim {
                return Err(ModelError::IndexOutOfRange {
                    index,
                    dim: self.dim,
                });
            }
        }
        if !value.is_finite() {
            return Err(ModelError::NonFinite { i, j });
        }
        if value < 0.0 {
            return Err(ModelError::NegativeWeight { i, j, value });
        }
        if i == j {
            if value != 0.0 {
                return Err(ModelError::NonZeroDiagonal(i));
            }
            return Ok(());
        }
        let (key, _) = ordered(i, j);
        self.entries.insert(key, value);
        Ok(())
    }

    /// Stored pairs as `(i, j, w_ij)` with `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// An edge of the comparison graph: `i < j`, positive weight, and the
/// aggregated flow value `Ȳ(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub flow: f64,
}

/// Students, the aggregated pairwise flow and its weights.
///
/// The edge set is every pair with positive weight. Connectivity is not
/// assumed; see [`crate::graph::connected_components`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonGraph {
    vertices: Vec<String>,
    flow: EdgeFlow,
    weights: WeightMatrix,
    edges: Vec<Edge>,
    // (neighbor, edge index), sorted by neighbor
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl ComparisonGraph {
    /// Zero-weight pairs are dropped from both maps; a nonzero flow value on
    /// a pair without weight is an error.
    pub fn new(
        vertices: Vec<String>,
        flow: EdgeFlow,
        weights: WeightMatrix,
    ) -> Result<Self, ModelError> {
        let n = vertices.len();
        for found in [flow.dim(), weights.dim()] {
            if found != n {
                return Err(ModelError::DimensionMismatch { expected: n, found });
            }
        }
        for (i, j, v) in flow.iter() {
            if v != 0.0 && weights.get(i, j) <= 0.0 {
                return Err(ModelError::FlowOutsideSupport { i, j });
            }
        }
        let mut kept_flow = EdgeFlow::new(n);
        let mut kept_weights = WeightMatrix::new(n);
        let mut edges = Vec::new();
        let mut adjacency = vec![Vec::new(); n];
        for (i, j, w) in weights.iter() {
            if w <= 0.0 {
                continue;
            }
            let y = flow.get(i, j);
            kept_weights.entries.insert((i, j), w);
            kept_flow.entries.insert((i, j), y);
            let e = edges.len();
            edges.push(Edge {
                i,
                j,
                weight: w,
                flow: y,
            });
            adjacency[i].push((j, e));
            adjacency[j].push((i, e));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(ComparisonGraph {
            vertices,
            flow: kept_flow,
            weights: kept_weights,
            edges,
            adjacency,
        })
    }

    /// Builds a graph from `(i, j, Ȳ_ij, w_ij)` tuples.
    pub fn from_edges<I>(vertices: Vec<String>, edges: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (usize, usize, f64, f64)>,
    {
        let n = vertices.len();
        let mut flow = EdgeFlow::new(n);
        let mut weights = WeightMatrix::new(n);
        for (i, j, y, w) in edges {
            flow.set(i, j, y)?;
            weights.set(i, j, w)?;
        }
        ComparisonGraph::new(vertices, flow, weights)
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn flow(&self) -> &EdgeFlow {
        &self.flow
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs, sorted by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let list = self.adjacency.get(i)?;
        list.binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|p| list[p].1)
    }

    /// Builds an [`EdgeFlow`] from values aligned with [`Self::edges`].
    pub fn flow_from_edge_values(&self, values: &[f64]) -> EdgeFlow {
        debug_assert_eq!(values.len(), self.edges.len());
        let mut flow = EdgeFlow::new(self.n());
        for (e, &v) in self.edges.iter().zip(values) {
            flow.entries.insert((e.i, e.j), v);
        }
        flow
    }

    /// Values of `flow` aligned with [`Self::edges`].
    pub fn edge_values(&self, flow: &EdgeFlow) -> Vec<f64> {
        self.edges.iter().map(|e| flow.get(e.i, e.j)).collect()
    }
}

/// Ranking method that produced a [`RankingResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hodgerank,
    CumulativeAvg,
    TruncatedAvg,
    Peerrank,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Hodgerank,
        Method::CumulativeAvg,
        Method::TruncatedAvg,
        Method::Peerrank,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Hodgerank => "hodgerank",
            Method::CumulativeAvg => "cumulative_avg",
            Method::TruncatedAvg => "truncated_avg",
            Method::Peerrank => "peerrank",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Notable conditions attached to a ranking.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    /// Scores in different components are not comparable.
    Disconnected { components: usize },
    MissingScore { student: String },
    TruncationFallback { student: String, received: usize },
    NotConverged { iterations: usize, last_change: f64 },
    NoBetaTerm { student: String },
    DenseFallback { component: usize },
    DegenerateScale,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingResult {
    pub method: Method,
    pub students: Vec<String>,
    /// `None` marks a student the method could not score.
    pub scores: Vec<Option<f64>>,
    pub component_id: Vec<usize>,
    pub component_count: usize,
    /// `‖Ȳ − grad s‖²_w`; zero for methods other than HodgeRank.
    pub residual_norm_sq: f64,
    /// `‖Ȳ‖²_w`; zero for methods other than HodgeRank.
    pub flow_norm_sq: f64,
    pub flags: Vec<Flag>,
}

/// One row of a ranked listing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub rank: Option<usize>,
    pub student: String,
    pub score: Option<f64>,
    pub component: usize,
}

impl RankingResult {
    /// A result with every student in component 0 and no HodgeRank norms.
    pub fn single_component(method: Method, students: Vec<String>, scores: Vec<Option<f64>>) -> Self {
        let n = students.len();
        RankingResult {
            method,
            students,
            scores,
            component_id: vec![0; n],
            component_count: usize::from(n > 0),
            residual_norm_sq: 0.0,
            flow_norm_sq: 0.0,
            flags: Vec::new(),
        }
    }

    pub fn score(&self, student: &str) -> Option<f64> {
        let i = self.students.iter().position(|s| s == student)?;
        self.scores[i]
    }

    /// Scored students only.
    pub fn score_map(&self) -> BTreeMap<String, f64> {
        self.students
            .iter()
            .zip(&self.scores)
            .filter_map(|(s, v)| v.map(|v| (s.clone(), v)))
            .collect()
    }

    pub fn missing(&self) -> Vec<String> {
        self.students
            .iter()
            .zip(&self.scores)
            .filter(|(_, v)| v.is_none())
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Descending by score; equal scores share a rank and are listed by
    /// student identifier. Unscored students come last without a rank.
    pub fn ranked(&self) -> Vec<RankedEntry> {
        let mut order: Vec<usize> = (0..self.students.len()).collect();
        order.sort_by(|&a, &b| match (self.scores[a], self.scores[b]) {
            (Some(x), Some(y)) => y
                .total_cmp(&x)
                .then_with(|| self.students[a].cmp(&self.students[b])),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => self.students[a].cmp(&self.students[b]),
        });
        let mut out = Vec::with_capacity(order.len());
        let mut prev: Option<(f64, usize)> = None;
        for (pos, &i) in order.iter().enumerate() {
            let rank = self.scores[i].map(|v| match prev {
                Some((p, r)) if p == v => r,
                _ => {
                    prev = Some((v, pos + 1));
                    pos + 1
                }
            });
            out.push(RankedEntry {
                rank,
                student: self.students[i].clone(),
                score: self.scores[i],
                component: self.component_id[i],
            });
        }
        out
    }
}

/// Sum of a flow around a 3-clique `i < j < k`, oriented `i → j → k → i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleCurl {
    pub triangle: [usize; 3],
    pub curl_value: f64,
}
