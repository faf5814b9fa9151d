//! HodgeRank for peer assessment.
//!
//! Peer grades become a weighted pairwise comparison graph; the global
//! ranking is the least-squares potential whose gradient best matches the
//! observed score differences. The residual splits into local (triangular)
//! and global (harmonic) inconsistency. Simple averages and PeerRank are
//! included as baselines, together with a seeded cohort simulator and
//! comparison reports.

pub mod baselines;
pub mod graph;
pub mod hodge;
pub mod ingest;
pub mod model;
pub mod report;
pub mod synth;

pub use baselines::{cumulative_average, peerrank, truncated_average, BaselineError, PeerRank, PeerRankConfig};
pub use graph::{
    build_graph, component_trajectory, connected_components, AggregateMode, BuildOptions, ComponentLabeling,
    GraphError, TiePolicy,
};
pub use hodge::{
    decompose_residual, inconsistency_metrics, solve_hodgerank, triangle_curl, HodgeDecomposition,
    InconsistencyMetrics, SolverError, SolverOptions,
};
pub use ingest::{parse_records, Format, IngestError, IngestReport};
pub use model::{ComparisonGraph, EdgeFlow, GradeRecord, Method, RankingResult, Scale, WeightMatrix};
pub use report::{compare_methods, normalize_unit_interval, ranking_curve, CompareConfig, ComparisonReport};
pub use synth::{generate, kendall_tau, kendall_tau_b, CohortConfig, SyntheticCohort};
