mod common;

use common::*;
use hodgerank::hodge::{solve_hodgerank, solve_hodgerank_dense};
use hodgerank::ingest::{parse_records, Format};
use hodgerank::model::{index_labels, ComparisonGraph, Scale};
use hodgerank::{build_graph, BuildOptions};
use proptest::prelude::*;

fn arbitrary_graph() -> impl Strategy<Value = ComparisonGraph> {
    (2usize..12)
        .prop_flat_map(|n| {
            let pairs = n * (n - 1) / 2;
            (
                Just(n),
                proptest::collection::vec((any::<bool>(), -20i32..=20, 1u32..=5), pairs),
            )
        })
        .prop_map(|(n, cells)| {
            let pairs = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
            let edges: Vec<_> = pairs
                .zip(cells)
                .filter(|(_, (keep, _, _))| *keep)
                .map(|((i, j), (_, y, w))| (i, j, f64::from(y), f64::from(w)))
                .collect();
            ComparisonGraph::from_edges(index_labels(n), edges).unwrap()
        })
}

proptest! {
    #[test]
    fn both_backends_match_least_squares_oracle(g in arbitrary_graph()) {
        let oracle = least_squares_oracle(&g);
        let iterative = unwrap_scores(&solve_hodgerank(&g).unwrap().scores);
        let dense = unwrap_scores(&solve_hodgerank_dense(&g).unwrap().scores);
        prop_assert!(max_abs_diff(&iterative, &oracle) <= 1e-8, "{iterative:?} vs {oracle:?}");
        prop_assert!(max_abs_diff(&dense, &oracle) <= 1e-8, "{dense:?} vs {oracle:?}");
    }
}

#[test]
fn records_file_to_scores() {
    let csv = "assignment_id,grader_id,gradee_id,score\n\
               hw1,s1,s2,50\nhw1,s1,s3,49\nhw1,s2,s1,50\nhw1,s2,s3,49\nhw1,s3,s1,50\nhw1,s3,s2,51\n";
    let (records, report) = parse_records(csv.as_bytes(), Format::Csv, &Scale::default()).unwrap();
    assert_eq!(report.accepted, 6);
    let graph = build_graph(&records, &BuildOptions::default()).unwrap();
    let from_records = unwrap_scores(&solve_hodgerank(&graph).unwrap().scores);
    let direct = least_squares_oracle(&cyclic_graph());
    assert!(max_abs_diff(&from_records, &direct) < 1e-12);
    assert_eq!(graph.vertices(), ["s1", "s2", "s3"]);
}
