//! Settings files. Values given on the command line win over the file,
//! and the file wins over built-in defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hodgerank::graph::{AggregateMode, TiePolicy};
use hodgerank::synth::CohortConfig;
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Hodgerank,
    Avg,
    Trimmed,
    Peerrank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Everything `rank` reads from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankFile {
    pub method: Option<RankMethod>,
    pub format: Option<OutputFormat>,
    pub tie_policy: Option<TiePolicy>,
    pub aggregate: Option<AggregateMode>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub trim: Option<usize>,
    pub peerrank_epsilon: Option<f64>,
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
}

/// Reads TOML, or JSON when the extension is `.json`.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("invalid TOML in {}", path.display()))?
    };
    Ok(parsed)
}

pub fn load_cohort(path: Option<&Path>) -> Result<CohortConfig> {
    match path {
        Some(p) => load(p),
        None => Ok(CohortConfig::default()),
    }
}

pub fn check_positive(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        bail!("{name} must be positive");
    }
    Ok(())
}
