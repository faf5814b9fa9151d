//! Turning grade records into pairwise comparisons.
//!
//! A comparison is only ever formed inside one grader's grades for one
//! assignment: if grader `g` gave `i` and `j` the scores `a` and `b`, the
//! pair `(i, j)` receives the difference `b − a`. Any constant offset in
//! `g`'s grading cancels in that difference.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ComparisonGraph, EdgeFlow, GradeRecord, ModelError, StudentIndex, WeightMatrix};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown student '{0}'")]
    UnknownStudent(String),
    #[error("unknown assignment '{0}'")]
    UnknownAssignment(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a grader giving two students the same score is counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// A tie is a comparison with difference 0 and weight 1.
    #[default]
    Include,
    /// Tied comparisons carry no weight.
    PaperStrict,
}

impl FromStr for TiePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "include" => Ok(TiePolicy::Include),
            "paper-strict" => Ok(TiePolicy::PaperStrict),
            other => Err(format!("unknown tie policy '{other}' (expected include|paper-strict)")),
        }
    }
}

/// How per-assignment flows are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateMode {
    /// `Ȳ = Σ W^α Y^α / W`.
    #[default]
    Mean,
    /// `Ȳ = Σ Y^α`.
    Sum,
}

impl FromStr for AggregateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(AggregateMode::Mean),
            "sum" => Ok(AggregateMode::Sum),
            other => Err(format!("unknown aggregate mode '{other}' (expected mean|sum)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    #[serde(default)]
    pub tie_policy: TiePolicy,
    #[serde(default)]
    pub aggregate: AggregateMode,
}

/// Distinct assignment identifiers in first-appearance order.
pub fn assignments(records: &[GradeRecord]) -> Vec<String> {
    let mut seen = HashSet::new();
    records
        .iter()
        .filter(|r| seen.insert(r.assignment.as_str()))
        .map(|r| r.assignment.clone())
        .collect()
}

/// Pairwise flow `Y^α` and weights `W^α` for one assignment.
///
/// `Y^α(i, j)` is the mean of all within-grader differences
/// `score_g(j) − score_g(i)` and `W^α(i, j)` the number of graders that
/// contributed one. Records of other assignments are ignored; if a grader
/// scored the same student twice, the later record is used.
pub fn pairwise_flows(
    records: &[GradeRecord],
    assignment: &str,
    index: &StudentIndex,
    tie_policy: TiePolicy,
) -> Result<(EdgeFlow, WeightMatrix), GraphError> {
    let n = index.len();
    let lookup = |name: &str| {
        index
            .get(name)
            .ok_or_else(|| GraphError::UnknownStudent(name.to_string()))
    };
    let mut by_grader: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.assignment == assignment) {
        let g = lookup(&r.grader)?;
        let e = lookup(&r.gradee)?;
        by_grader.entry(g).or_default().insert(e, r.score);
    }

    let mut sums: BTreeMap<(usize, usize), (f64, u32)> = BTreeMap::new();
    for grades in by_grader.values() {
        let graded: Vec<(usize, f64)> = grades.iter().map(|(&e, &s)| (e, s)).collect();
        for (a, &(i, si)) in graded.iter().enumerate() {
            for &(j, sj) in &graded[a + 1..] {
                let diff = sj - si;
                if diff == 0.0 && tie_policy == TiePolicy::PaperStrict {
                    continue;
                }
                let slot = sums.entry((i, j)).or_insert((0.0, 0));
                slot.0 += diff;
                slot.1 += 1;
            }
        }
    }

    let mut flow = EdgeFlow::new(n);
    let mut weights = WeightMatrix::new(n);
    for ((i, j), (sum, count)) in sums {
        flow.set(i, j, sum / f64::from(count))?;
        weights.set(i, j, f64::from(count))?;
    }
    Ok((flow, weights))
}

/// Combines per-assignment flows into one graph over `vertices`.
pub fn aggregate(
    vertices: Vec<String>,
    flows: &[(EdgeFlow, WeightMatrix)],
    mode: AggregateMode,
) -> Result<ComparisonGraph, GraphError> {
    let n = vertices.len();
    // (Σ w, Σ w·y or Σ y, contributors, last y)
    let mut acc: BTreeMap<(usize, usize), (f64, f64, usize, f64)> = BTreeMap::new();
    for (flow, weights) in flows {
        for found in [flow.dim(), weights.dim()] {
            if found != n {
                return Err(ModelError::DimensionMismatch { expected: n, found }.into());
            }
        }
        for (i, j, w) in weights.iter() {
            if w <= 0.0 {
                continue;
            }
            let y = flow.get(i, j);
            let slot = acc.entry((i, j)).or_insert((0.0, 0.0, 0, 0.0));
            slot.0 += w;
            slot.1 += match mode {
                AggregateMode::Mean => w * y,
                AggregateMode::Sum => y,
            };
            slot.2 += 1;
            slot.3 = y;
        }
    }
    let mut flow = EdgeFlow::new(n);
    let mut weights = WeightMatrix::new(n);
    for ((i, j), (w, num, contributors, last)) in acc {
        let y = match mode {
            // a single contributor is copied so that one assignment reproduces Y^α exactly
            AggregateMode::Mean if contributors == 1 => last,
            AggregateMode::Mean => num / w,
            AggregateMode::Sum => num,
        };
        flow.set(i, j, y)?;
        weights.set(i, j, w)?;
    }
    Ok(ComparisonGraph::new(vertices, flow, weights)?)
}

/// Full pipeline from records to the aggregated comparison graph. Vertices
/// are every grader and gradee in first-appearance order.
pub fn build_graph(records: &[GradeRecord], options: &BuildOptions) -> Result<ComparisonGraph, GraphError> {
    let index = StudentIndex::from_records(records);
    let flows = assignments(records)
        .iter()
        .map(|a| pairwise_flows(records, a, &index, options.tie_policy))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(index.names().to_vec(), &flows, options.aggregate)
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `true` if two distinct sets were merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }

    /// Labels `0..k` numbered by each set's smallest member.
    pub fn labels(&mut self) -> Vec<usize> {
        let n = self.parent.len();
        let mut by_root = HashMap::new();
        let mut labels = Vec::with_capacity(n);
        for v in 0..n {
            let root = self.find(v);
            let next = by_root.len();
            labels.push(*by_root.entry(root).or_insert(next));
        }
        labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentLabeling {
    pub labels: Vec<usize>,
    pub count: usize,
}

impl ComponentLabeling {
    /// Vertex lists per component, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (v, &c) in self.labels.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

/// Components of the positive-weight edge set. Isolated vertices are
/// singleton components.
pub fn connected_components(graph: &ComparisonGraph) -> ComponentLabeling {
    let mut dsu = DisjointSet::new(graph.n());
    for e in graph.edges() {
        dsu.union(e.i, e.j);
    }
    ComponentLabeling {
        count: dsu.set_count(),
        labels: dsu.labels(),
    }
}

/// Component count of the graph accumulated over the first `t` assignments
/// of `ordering`, for `t = 1..=ordering.len()`. The vertex set is every
/// student in `records`.
pub fn component_trajectory(
    records: &[GradeRecord],
    ordering: &[String],
    tie_policy: TiePolicy,
) -> Result<Vec<usize>, GraphError> {
    let known: HashSet<&str> = records.iter().map(|r| r.assignment.as_str()).collect();
    if let Some(missing) = ordering.iter().find(|a| !known.contains(a.as_str())) {
        return Err(GraphError::UnknownAssignment(missing.clone()));
    }
    let index = StudentIndex::from_records(records);
    let mut dsu = DisjointSet::new(index.len());
    let mut counts = Vec::with_capacity(ordering.len());
    for assignment in ordering {
        let (_, weights) = pairwise_flows(records, assignment, &index, tie_policy)?;
        for (i, j, w) in weights.iter() {
            if w > 0.0 {
                dsu.union(i, j);
            }
        }
        counts.push(dsu.set_count());
    }
    Ok(counts)
}
