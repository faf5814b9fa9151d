//! `hodgerank` command-line tool.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 solver or
//! method failure, 4 no comparison signal.

mod settings;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use hodgerank::baselines::{cumulative_average, peerrank, truncated_average, PeerRankConfig};
use hodgerank::graph::{build_graph, component_trajectory, AggregateMode, BuildOptions, TiePolicy};
use hodgerank::hodge::{
    decompose_residual, inconsistency_metrics, solve_hodgerank, top_triangles, triangle_curl, SolverError,
};
use hodgerank::ingest::{parse_records, write_records_csv, Format};
use hodgerank::model::{Flag, GradeRecord, RankingResult, Scale};
use hodgerank::report::{compare_methods, curves_csv, render_svg, CompareConfig};
use hodgerank::synth::{generate, BiasModel, QualityModel, SyntheticCohort};
use serde::Serialize;

use settings::{OutputFormat, RankFile, RankMethod};

#[derive(Debug, Parser)]
#[command(name = "hodgerank", version, about = "Global rankings and inconsistency analysis for peer-assessment grades")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct InputArgs {
    /// Grade records (CSV with header assignment_id,grader_id,gradee_id,score, or a JSON array).
    input: PathBuf,
    /// Record format; inferred from the file extension when omitted.
    #[arg(long, value_parser = clap::value_parser!(FormatArg))]
    input_format: Option<FormatArg>,
    #[arg(long)]
    scale_min: Option<f64>,
    #[arg(long)]
    scale_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank students and print scores in descending order.
    Rank {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum)]
        method: Option<RankMethod>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// include | paper-strict
        #[arg(long)]
        tie_policy: Option<TiePolicy>,
        /// mean | sum
        #[arg(long)]
        aggregate: Option<AggregateMode>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Scores dropped at each end by the trimmed average.
        #[arg(long)]
        trim: Option<usize>,
        #[arg(long)]
        peerrank_epsilon: Option<f64>,
        /// TOML or JSON file with any of the options above.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write to this file instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Component count after each prefix of assignments.
    Components {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated assignment order; lexicographic by default.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<String>>,
        #[arg(long, default_value = "include")]
        tie_policy: TiePolicy,
    },
    /// Generate a synthetic cohort, optionally comparing all methods on it.
    Simulate {
        /// Cohort file (TOML or JSON).
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        students: Option<usize>,
        #[arg(long)]
        assignments: Option<usize>,
        #[arg(long)]
        reviews: Option<usize>,
        /// Quality model, e.g. normal:70:12, uniform:30:70, beta:5:2:30:70.
        #[arg(long)]
        quality: Option<QualityModel>,
        /// Bias model, e.g. none, normal:10, uniform:20, uniform:-5:5, constant:3.
        #[arg(long, conflicts_with = "bias_sd")]
        bias: Option<BiasModel>,
        /// Shorthand for --bias normal:SD.
        #[arg(long)]
        bias_sd: Option<f64>,
        #[arg(long)]
        noise_sd: Option<f64>,
        /// Records file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run every method against the ground truth.
        #[arg(long)]
        compare: bool,
        /// Where --compare writes report.json, curves.csv and curves.svg.
        #[arg(long, default_value = "report")]
        report_dir: PathBuf,
    },
    /// Inconsistency ratios and the most cyclic triangles.
    Inconsistency {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value = "include")]
        tie_policy: TiePolicy,
        #[arg(long, default_value = "mean")]
        aggregate: AggregateMode,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }

    fn method(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 3, error: error.into() }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RANK_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Rank { .. } => cmd_rank(cli.command),
        Command::Components { input, order, tie_policy } => cmd_components(&input, order, tie_policy),
        Command::Simulate { .. } => cmd_simulate(cli.command),
        Command::Inconsistency { input, top, tie_policy, aggregate } => {
            cmd_inconsistency(&input, top, BuildOptions { tie_policy, aggregate })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn scale_of(input: &InputArgs, file: &RankFile) -> Result<Scale, Failure> {
    let d = Scale::default();
    let min = input.scale_min.or(file.scale_min).unwrap_or(d.min);
    let max = input.scale_max.or(file.scale_max).unwrap_or(d.max);
    Scale::new(min, max).map_err(Failure::invalid)
}

/// Parses the input, reporting every rejected row on standard error.
fn read_records(input: &InputArgs, scale: &Scale) -> Result<Vec<GradeRecord>, Failure> {
    let file = std::fs::File::open(&input.input)
        .with_context(|| format!("cannot open {}", input.input.display()))
        .map_err(Failure::invalid)?;
    let format = match input.input_format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => Format::from_path(&input.input),
    };
    let (records, report) = parse_records(std::io::BufReader::new(file), format, scale).map_err(Failure::invalid)?;
    for r in &report.rejection_reasons {
        eprintln!("warning: {}: row {}: {}", input.input.display(), r.line, r.reason);
    }
    log::info!("{} records accepted, {} rejected", report.accepted, report.rejected);
    if records.is_empty() {
        return Err(Failure::invalid(anyhow!("no valid records in {}", input.input.display())));
    }
    Ok(records)
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("cannot write {}", p.display()))
            .map_err(Failure::invalid),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(Failure::invalid)
        }
    }
}

fn describe(flag: &Flag) -> String {
    match flag {
        Flag::Disconnected { components } => {
            format!("comparison graph has {components} components; scores are only comparable within a component")
        }
        Flag::MissingScore { student } => format!("{student} received no grades and is unranked"),
        Flag::TruncationFallback { student, received } => {
            format!("{student} received only {received} grades; plain mean used")
        }
        Flag::NotConverged { iterations, last_change } => {
            format!("iteration stopped after {iterations} steps, last change {last_change:e}")
        }
        Flag::NoBetaTerm { student } => format!("{student} graded nobody; accuracy term skipped"),
        Flag::DenseFallback { component } => format!("component {component} solved by dense fallback"),
        Flag::DegenerateScale => "all scores are equal".to_string(),
    }
}

#[derive(Serialize)]
struct RankOutput<'a> {
    method: &'a str,
    component_count: usize,
    residual_norm_sq: f64,
    flow_norm_sq: f64,
    warnings: Vec<String>,
    students: Vec<hodgerank::model::RankedEntry>,
}

fn render_ranking(result: &RankingResult, format: OutputFormat) -> Result<String, Failure> {
    let rows = result.ranked();
    match format {
        OutputFormat::Csv => {
            let mut out = String::from("rank,student,score,component\n");
            for r in &rows {
                let rank = r.rank.map(|v| v.to_string()).unwrap_or_default();
                let score = r.score.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{rank},{},{score},{}", r.student, r.component);
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let out = RankOutput {
                method: result.method.tag(),
                component_count: result.component_count,
                residual_norm_sq: result.residual_norm_sq,
                flow_norm_sq: result.flow_norm_sq,
                warnings: result.flags.iter().map(describe).collect(),
                students: rows,
            };
            let mut text = serde_json::to_string_pretty(&out).map_err(Failure::method)?;
            text.push('\n');
            Ok(text)
        }
    }
}

fn cmd_rank(command: Command) -> Outcome {
    let Command::Rank {
        input,
        method,
        format,
        tie_policy,
        aggregate,
        alpha,
        beta,
        trim,
        peerrank_epsilon,
        config,
        output,
    } = command
    else {
        unreachable!()
    };
    let file: RankFile = match &config {
        Some(p) => settings::load(p).map_err(Failure::invalid)?,
        None => RankFile::default(),
    };
    let scale = scale_of(&input, &file)?;
    let method = method.or(file.method).unwrap_or(RankMethod::Hodgerank);
    let format = format.or(file.format).unwrap_or(OutputFormat::Csv);
    let build = BuildOptions {
        tie_policy: tie_policy.or(file.tie_policy).unwrap_or_default(),
        aggregate: aggregate.or(file.aggregate).unwrap_or_default(),
    };
    let defaults = PeerRankConfig::default();
    let pr_config = PeerRankConfig {
        alpha: alpha.or(file.alpha).unwrap_or(defaults.alpha),
        beta: beta.or(file.beta).unwrap_or(defaults.beta),
        epsilon: peerrank_epsilon.or(file.peerrank_epsilon),
        scale,
        ..defaults
    };
    let trim = trim.or(file.trim).unwrap_or(1);

    let records = read_records(&input, &scale)?;
    let result = match method {
        RankMethod::Hodgerank => {
            let graph = build_graph(&records, &build).map_err(Failure::invalid)?;
            solve_hodgerank(&graph).map_err(Failure::method)?
        }
        RankMethod::Avg => cumulative_average(&records),
        RankMethod::Trimmed => truncated_average(&records, trim),
        RankMethod::Peerrank => peerrank(&records, &pr_config).map_err(Failure::method)?,
    };
    for flag in &result.flags {
        eprintln!("warning: {}", describe(flag));
    }
    let text = render_ranking(&result, format)?;
    write_output(output.as_deref(), &text)
}

fn cmd_components(input: &InputArgs, order: Option<Vec<String>>, tie_policy: TiePolicy) -> Outcome {
    let scale = scale_of(input, &RankFile::default())?;
    let records = read_records(input, &scale)?;
    let order = order.unwrap_or_else(|| {
        let mut all: Vec<String> = records.iter().map(|r| r.assignment.clone()).collect();
        all.sort();
        all.dedup();
        all
    });
    let counts = component_trajectory(&records, &order, tie_policy).map_err(Failure::invalid)?;
    let mut text = String::new();
    for (t, c) in counts.iter().enumerate() {
        let _ = writeln!(text, "{}: {c}", t + 1);
    }
    write_output(None, &text)
}

fn cmd_simulate(command: Command) -> Outcome {
    let Command::Simulate {
        config,
        seed,
        students,
        assignments,
        reviews,
        quality,
        bias,
        bias_sd,
        noise_sd,
        out,
        compare,
        report_dir,
    } = command
    else {
        unreachable!()
    };
    let mut cohort_config = settings::load_cohort(config.as_deref()).map_err(Failure::invalid)?;
    if let Some(v) = seed {
        cohort_config.seed = v;
    }
    if let Some(v) = students {
        cohort_config.n_students = v;
    }
    if let Some(v) = assignments {
        settings::check_positive("--assignments", v).map_err(Failure::invalid)?;
        cohort_config.n_assignments = v;
    }
    if let Some(v) = reviews {
        settings::check_positive("--reviews", v).map_err(Failure::invalid)?;
        cohort_config.reviews_per_student = v;
    }
    if let Some(v) = quality {
        cohort_config.quality = v;
    }
    if let Some(v) = bias {
        cohort_config.bias = v;
    }
    if let Some(sd) = bias_sd {
        if !(sd >= 0.0) {
            return Err(Failure::invalid(anyhow!("--bias-sd must be nonnegative")));
        }
        cohort_config.bias = if sd == 0.0 { BiasModel::None } else { BiasModel::Normal { sd } };
    }
    if let Some(v) = noise_sd {
        cohort_config.noise_sd = v;
    }
    let cohort = SyntheticCohort::from_config(&cohort_config).map_err(Failure::invalid)?;
    let records = generate(&cohort).map_err(Failure::invalid)?;
    let mut csv = Vec::new();
    write_records_csv(&records, &mut csv).map_err(Failure::invalid)?;
    let csv = String::from_utf8(csv).map_err(Failure::invalid)?;
    write_output(out.as_deref(), &csv)?;
    log::info!("generated {} records", records.len());

    if compare {
        let report = compare_methods(
            &records,
            &CompareConfig {
                truth: Some(cohort.truth()),
                peerrank: PeerRankConfig { scale: cohort.scale, ..PeerRankConfig::default() },
                ..CompareConfig::default()
            },
        );
        std::fs::create_dir_all(&report_dir)
            .with_context(|| format!("cannot create {}", report_dir.display()))
            .map_err(Failure::invalid)?;
        let json = serde_json::to_string_pretty(&report).map_err(Failure::method)?;
        for (name, body) in [
            ("report.json", json + "\n"),
            ("curves.csv", curves_csv(&report)),
            ("curves.svg", render_svg(&report)),
        ] {
            write_output(Some(&report_dir.join(name)), &body)?;
        }
        for m in &report.methods {
            match (&m.error, m.tau_vs_truth) {
                (Some(e), _) => eprintln!("{}: failed: {e}", m.method),
                (None, Some(tau)) => eprintln!("{}: tau vs truth {tau:.4}", m.method),
                (None, None) => eprintln!("{}: tau vs truth undefined", m.method),
            }
        }
    }
    Ok(())
}

fn cmd_inconsistency(input: &InputArgs, top: usize, build: BuildOptions) -> Outcome {
    let scale = scale_of(input, &RankFile::default())?;
    let records = read_records(input, &scale)?;
    let graph = build_graph(&records, &build).map_err(Failure::invalid)?;
    if graph.edges().is_empty() {
        return Err(Failure::invalid(anyhow!("comparison graph has no edges")));
    }
    let ranking = solve_hodgerank(&graph).map_err(Failure::method)?;
    let decomposition = decompose_residual(&graph, &ranking).map_err(Failure::method)?;
    let metrics = match inconsistency_metrics(&decomposition) {
        Ok(m) => m,
        Err(e @ SolverError::NoSignal) => return Err(Failure { code: 4, error: e.into() }),
        Err(e) => return Err(Failure::method(e)),
    };
    for flag in &ranking.flags {
        eprintln!("warning: {}", describe(flag));
    }
    let names = graph.vertices();
    let mut text = String::new();
    let _ = writeln!(text, "flow norm squared: {}", decomposition.norms.flow);
    let _ = writeln!(text, "gradient ratio: {}", metrics.gradient_ratio);
    let _ = writeln!(text, "global ratio: {}", metrics.global_ratio);
    let _ = writeln!(text, "curl ratio: {}", metrics.curl_ratio);
    let _ = writeln!(text, "harmonic ratio: {}", metrics.harmonic_ratio);
    let _ = writeln!(text, "triangles: {}", decomposition.triangle_count);
    let worst = top_triangles(triangle_curl(graph.flow(), &graph), top);
    if !worst.is_empty() {
        let _ = writeln!(text, "top triangles by |curl|:");
        for t in worst {
            let [i, j, k] = t.triangle;
            let _ = writeln!(text, "  {} {} {}: {}", names[i], names[j], names[k], t.curl_value);
        }
    }
    write_output(None, &text)
}
