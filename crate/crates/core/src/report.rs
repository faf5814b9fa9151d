//! Normalization, ranking curves and side-by-side method comparison.
//!
//! Each method's scores are mapped linearly onto `[0, 1]` and sorted
//! ascending; plotting them against `k / (n − 1)` gives the ranking curve.
//! The steady line is the diagonal `value = quantile`, the curve of a
//! ranking whose scores are spread evenly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::baselines::{cumulative_average, peerrank, truncated_average, PeerRankConfig};
use crate::graph::{build_graph, BuildOptions};
use crate::hodge::{decompose_residual, inconsistency_metrics, solve_hodgerank, InconsistencyMetrics};
use crate::model::{Flag, GradeRecord, Method, RankingResult};
use crate::synth::kendall_tau;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("cannot normalize an empty ranking")]
    Empty,
    #[error("missing scores for: {}", .0.join(", "))]
    MissingScores(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalized {
    pub values: BTreeMap<String, f64>,
    /// All scores were equal and were mapped to 0.5.
    pub degenerate: bool,
}

pub fn normalize_unit_interval(ranking: &RankingResult) -> Result<Normalized, ReportError> {
    if ranking.students.is_empty() {
        return Err(ReportError::Empty);
    }
    let missing = ranking.missing();
    if !missing.is_empty() {
        return Err(ReportError::MissingScores(missing));
    }
    let scores = ranking.score_map();
    let min = scores.values().copied().fold(f64::INFINITY, f64::min);
    let max = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = max == min;
    let values = scores
        .into_iter()
        .map(|(s, v)| (s, if degenerate { 0.5 } else { (v - min) / (max - min) }))
        .collect();
    Ok(Normalized { values, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub quantile: f64,
    pub value: f64,
}

pub fn ranking_curve(normalized: &BTreeMap<String, f64>) -> Vec<CurvePoint> {
    let mut values: Vec<f64> = normalized.values().copied().collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    values
        .into_iter()
        .enumerate()
        .map(|(k, value)| CurvePoint {
            quantile: if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 },
            value,
        })
        .collect()
}

/// Sample skewness and excess kurtosis (population moments).
pub fn shape_statistics(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len() as f64;
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n;
    let moment = |p: i32| values.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let m2 = moment(2);
    if m2 == 0.0 {
        return None;
    }
    Some((moment(3) / m2.powf(1.5), moment(4) / (m2 * m2) - 3.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub build: BuildOptions,
    /// Scores dropped at each end by the truncated average.
    pub trim: usize,
    pub peerrank: PeerRankConfig,
    /// Ground-truth quality, in synthetic mode.
    pub truth: Option<BTreeMap<String, f64>>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            build: BuildOptions::default(),
            trim: 1,
            peerrank: PeerRankConfig::default(),
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    /// Set when the method failed; the remaining fields are then empty.
    pub error: Option<String>,
    pub ranking: Option<RankingResult>,
    pub degenerate: bool,
    pub curve: Vec<CurvePoint>,
    pub tau_vs_truth: Option<f64>,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTau {
    pub a: Method,
    pub b: Method,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub record_count: usize,
    pub student_count: usize,
    pub methods: Vec<MethodReport>,
    pub inconsistency: Option<InconsistencyMetrics>,
    pub inconsistency_error: Option<String>,
    pub triangle_count: Option<usize>,
    pub connectivity_warning: Option<String>,
    pub pairwise_tau: Vec<PairTau>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }
}

const STEADY_LINE_NOTE: &str =
    "steady line: the diagonal value = quantile, i.e. the curve of evenly spread scores";
const PEERRANK_NOTE: &str =
    "peerrank: A[j][i] is the mean of all grades j gave i across assignments, mapped linearly onto [0,1] by the score scale";

struct HodgeOutcome {
    ranking: RankingResult,
    metrics: Result<(InconsistencyMetrics, usize), String>,
}

fn run_hodgerank(records: &[GradeRecord], options: &BuildOptions) -> Result<HodgeOutcome, String> {
    let graph = build_graph(records, options).map_err(|e| e.to_string())?;
    let ranking = solve_hodgerank(&graph).map_err(|e| e.to_string())?;
    let metrics = decompose_residual(&graph, &ranking)
        .map_err(|e| e.to_string())
        .and_then(|d| {
            inconsistency_metrics(&d)
                .map(|m| (m, d.triangle_count))
                .map_err(|e| e.to_string())
        });
    Ok(HodgeOutcome { ranking, metrics })
}

fn method_report(method: Method, outcome: Result<RankingResult, String>, truth: Option<&BTreeMap<String, f64>>) -> MethodReport {
    let mut report = MethodReport {
        method,
        error: None,
        ranking: None,
        degenerate: false,
        curve: Vec::new(),
        tau_vs_truth: None,
        skewness: None,
        excess_kurtosis: None,
    };
    let ranking = match outcome {
        Ok(r) => r,
        Err(e) => {
            log::warn!("{method} failed: {e}");
            report.error = Some(e);
            return report;
        }
    };
    match normalize_unit_interval(&ranking) {
        Ok(normalized) => {
            report.degenerate = normalized.degenerate;
            report.curve = ranking_curve(&normalized.values);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    let raw: Vec<f64> = ranking.scores.iter().flatten().copied().collect();
    if let Some((skew, kurt)) = shape_statistics(&raw) {
        report.skewness = Some(skew);
        report.excess_kurtosis = Some(kurt);
    }
    report.tau_vs_truth = truth.and_then(|t| kendall_tau(&ranking, t).ok());
    report.ranking = Some(ranking);
    report
}

/// Runs every method in a fixed order. A failing method is recorded in
/// its [`MethodReport`] and does not stop the others.
pub fn compare_methods(records: &[GradeRecord], config: &CompareConfig) -> ComparisonReport {
    let truth = config.truth.as_ref();
    let mut methods = Vec::with_capacity(4);
    let mut inconsistency = None;
    let mut inconsistency_error = None;
    let mut triangle_count = None;
    let mut connectivity_warning = None;

    let hodge = run_hodgerank(records, &config.build);
    let hodge_ranking = match hodge {
        Ok(outcome) => {
            match outcome.metrics {
                Ok((m, t)) => {
                    inconsistency = Some(m);
                    triangle_count = Some(t);
                }
                Err(e) => inconsistency_error = Some(e),
            }
            for flag in &outcome.ranking.flags {
                if let Flag::Disconnected { components } = flag {
                    connectivity_warning = Some(format!(
                        "comparison graph has {components} connected components; scores are only comparable within a component"
                    ));
                }
            }
            Ok(outcome.ranking)
        }
        Err(e) => Err(e),
    };
    methods.push(method_report(Method::Hodgerank, hodge_ranking, truth));
    methods.push(method_report(Method::CumulativeAvg, Ok(cumulative_average(records)), truth));
    methods.push(method_report(Method::TruncatedAvg, Ok(truncated_average(records, config.trim)), truth));
    methods.push(method_report(
        Method::Peerrank,
        peerrank(records, &config.peerrank).map_err(|e| e.to_string()),
        truth,
    ));

    let mut pairwise_tau = Vec::new();
    for (i, a) in methods.iter().enumerate() {
        for b in &methods[i + 1..] {
            if let (Some(ra), Some(rb)) = (&a.ranking, &b.ranking) {
                pairwise_tau.push(PairTau {
                    a: a.method,
                    b: b.method,
                    tau: kendall_tau(ra, &rb.score_map()).ok(),
                });
            }
        }
    }

    let mut students: Vec<&str> = records.iter().flat_map(|r| [r.grader.as_str(), r.gradee.as_str()]).collect();
    students.sort_unstable();
    students.dedup();

    ComparisonReport {
        record_count: records.len(),
        student_count: students.len(),
        methods,
        inconsistency,
        inconsistency_error,
        triangle_count,
        connectivity_warning,
        pairwise_tau,
        notes: vec![STEADY_LINE_NOTE.to_string(), PEERRANK_NOTE.to_string()],
    }
}

/// Tidy `method,quantile,value` rows for every successful method.
pub fn curves_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("method,quantile,value\n");
    for m in &report.methods {
        for p in &m.curve {
            let _ = writeln!(out, "{},{},{}", m.method, p.quantile, p.value);
        }
    }
    out
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Static plot of all ranking curves with the steady line overlaid.
pub fn render_svg(report: &ComparisonReport) -> String {
    let (w, h, pad) = (640.0, 480.0, 50.0);
    let x = |u: f64| pad + u * (w - 2.0 * pad);
    let y = |v: f64| h - pad - v * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, x(t), h - pad + 18.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t}</text>"#, pad - 6.0, y(t) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">quantile</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">normalized score</text>"#, w / 2.0, pad - 20.0);
    let _ = writeln!(
        svg,
        r#"<line class="steady" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="6 4"/>"#,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let mut legend_row = 0;
    for (m, color) in report.methods.iter().zip(PALETTE) {
        if m.curve.is_empty() {
            continue;
        }
        let points: Vec<String> = m.curve.iter().map(|p| format!("{:.2},{:.2}", x(p.quantile), y(p.value))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            m.method,
            points.join(" ")
        );
        let ly = pad + 16.0 + 16.0 * legend_row as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            pad + 10.0,
            pad + 30.0,
            pad + 36.0,
            ly + 4.0,
            m.method
        );
        legend_row += 1;
    }
    svg.push_str("</svg>\n");
    svg
}
