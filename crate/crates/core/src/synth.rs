//! Seeded synthetic peer-assessment cohorts.
//!
//! The behavioral model is an assumption, not an empirical fit: a grade is
//! the gradee's true quality plus the grader's additive bias plus Gaussian
//! noise with the grader's standard deviation, clamped to the scale.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64`. Stream 1 draws the cohort (all qualities, then all
//! biases, in student order). Stream 0 draws the grades: assignment-major,
//! grader-minor, and for each grader first the set of peers, then one
//! standard normal per peer in sampled order. The noise draw happens even
//! when the standard deviation is zero, so changing bias or noise
//! parameters never shifts the peer selection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GradeRecord, RankingResult, Scale};

/// Identifies the generator and draw order; bump when either changes.
pub const RNG_VERSION: &str = "chacha20/rand_chacha-0.9/draw-order-v1";

const GRADE_STREAM: u64 = 0;
const COHORT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid cohort: {0}")]
    InvalidCohort(String),
    #[error("cannot parse model '{0}'")]
    BadModel(String),
    #[error("rank correlation needs at least 2 shared students, got {0}")]
    TooFewStudents(usize),
    #[error("rank correlation is undefined when one ranking is constant")]
    Undefined,
}

fn parse_numbers(parts: &[&str], spec: &str) -> Result<Vec<f64>, SynthError> {
    parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| SynthError::BadModel(spec.to_string())))
        .collect()
}

/// Distribution of true quality, written `normal:MEAN:SD`, `uniform:LO:HI`
/// or `beta:A:B:LO:HI`. Draws are clamped to the scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum QualityModel {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { a: f64, b: f64, lo: f64, hi: f64 },
}

impl Default for QualityModel {
    fn default() -> Self {
        QualityModel::Normal { mean: 70.0, sd: 12.0 }
    }
}

impl FromStr for QualityModel {
    type Err = SynthError;
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || SynthError::BadModel(spec.to_string());
        let nums = parse_numbers(&parts[1..], spec)?;
        let model = match (parts[0], nums.as_slice()) {
            ("normal", &[mean, sd]) if sd >= 0.0 => QualityModel::Normal { mean, sd },
            ("uniform", &[lo, hi]) if lo <= hi => QualityModel::Uniform { lo, hi },
            ("beta", &[a, b, lo, hi]) if a > 0.0 && b > 0.0 && lo <= hi => QualityModel::Beta { a, b, lo, hi },
            _ => return Err(bad()),
        };
        Ok(model)
    }
}

impl fmt::Display for QualityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            QualityModel::Normal { mean, sd } => write!(f, "normal:{mean}:{sd}"),
            QualityModel::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            QualityModel::Beta { a, b, lo, hi } => write!(f, "beta:{a}:{b}:{lo}:{hi}"),
        }
    }
}

impl TryFrom<String> for QualityModel {
    type Error = SynthError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<QualityModel> for String {
    fn from(m: QualityModel) -> String {
        m.to_string()
    }
}

impl QualityModel {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            QualityModel::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            QualityModel::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            QualityModel::Beta { a, b, lo, hi } => {
                let x = Beta::new(a, b).expect("validated parameters").sample(rng);
                lo + (hi - lo) * x
            }
        }
    }
}

/// Per-grader additive bias, written `none`, `constant:C`, `normal:SD`,
/// `uniform:A` (uniform on `[0, A]`) or `uniform:LO:HI`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BiasModel {
    None,
    Constant { value: f64 },
    Normal { sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Default for BiasModel {
    fn default() -> Self {
        BiasModel::Normal { sd: 10.0 }
    }
}

impl FromStr for BiasModel {
    type Err = SynthError;
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || SynthError::BadModel(spec.to_string());
        let nums = parse_numbers(&parts[1..], spec)?;
        let model = match (parts[0], nums.as_slice()) {
            ("none", &[]) => BiasModel::None,
            ("constant", &[value]) => BiasModel::Constant { value },
            ("normal", &[sd]) if sd >= 0.0 => BiasModel::Normal { sd },
            ("uniform", &[hi]) if hi >= 0.0 => BiasModel::Uniform { lo: 0.0, hi },
            ("uniform", &[lo, hi]) if lo <= hi => BiasModel::Uniform { lo, hi },
            _ => return Err(bad()),
        };
        Ok(model)
    }
}

impl fmt::Display for BiasModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BiasModel::None => write!(f, "none"),
            BiasModel::Constant { value } => write!(f, "constant:{value}"),
            BiasModel::Normal { sd } => write!(f, "normal:{sd}"),
            BiasModel::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

impl TryFrom<String> for BiasModel {
    type Error = SynthError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BiasModel> for String {
    fn from(m: BiasModel) -> String {
        m.to_string()
    }
}

impl BiasModel {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            BiasModel::None => 0.0,
            BiasModel::Constant { value } => value,
            BiasModel::Normal { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                sd * z
            }
            BiasModel::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// Cohort description as read from a JSON or TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_students: usize,
    pub n_assignments: usize,
    pub reviews_per_student: usize,
    pub quality: QualityModel,
    pub bias: BiasModel,
    /// Noise standard deviation shared by all graders, in points.
    pub noise_sd: f64,
    pub seed: u64,
    pub scale: Scale,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_students: 133,
            n_assignments: 13,
            reviews_per_student: 5,
            quality: QualityModel::default(),
            bias: BiasModel::default(),
            noise_sd: 5.0,
            seed: 42,
            scale: Scale::default(),
        }
    }
}

/// Ground truth and grader behavior for one synthetic course.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticCohort {
    pub n_students: usize,
    pub n_assignments: usize,
    pub reviews_per_student: usize,
    pub true_quality: Vec<f64>,
    pub grader_bias: Vec<f64>,
    pub grader_noise_sd: Vec<f64>,
    pub seed: u64,
    pub scale: Scale,
}

impl SyntheticCohort {
    pub fn from_config(config: &CohortConfig) -> Result<Self, SynthError> {
        let n = config.n_students;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        rng.set_stream(COHORT_STREAM);
        let true_quality = (0..n).map(|_| config.scale.clamp(config.quality.sample(&mut rng))).collect();
        let grader_bias = (0..n).map(|_| config.bias.sample(&mut rng)).collect();
        let cohort = SyntheticCohort {
            n_students: n,
            n_assignments: config.n_assignments,
            reviews_per_student: config.reviews_per_student,
            true_quality,
            grader_bias,
            grader_noise_sd: vec![config.noise_sd; n],
            seed: config.seed,
            scale: config.scale,
        };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidCohort(m));
        if self.n_students < 2 {
            return fail(format!("need at least 2 students, got {}", self.n_students));
        }
        if self.reviews_per_student >= self.n_students {
            return fail(format!(
                "reviews_per_student ({}) must be below n_students ({})",
                self.reviews_per_student, self.n_students
            ));
        }
        for (name, len) in [
            ("true_quality", self.true_quality.len()),
            ("grader_bias", self.grader_bias.len()),
            ("grader_noise_sd", self.grader_noise_sd.len()),
        ] {
            if len != self.n_students {
                return fail(format!("{name} has {len} entries, expected {}", self.n_students));
            }
        }
        if self.grader_noise_sd.iter().any(|&sd| !(sd >= 0.0 && sd.is_finite())) {
            return fail("noise sd must be finite and nonnegative".into());
        }
        if self.grader_bias.iter().any(|b| !b.is_finite()) {
            return fail("bias must be finite".into());
        }
        if self.true_quality.iter().any(|&q| !self.scale.contains(q)) {
            return fail(format!("true quality must lie in {}", self.scale));
        }
        Ok(())
    }

    /// `s001`, `s002`, … padded so that lexicographic order is numeric.
    pub fn student_ids(&self) -> Vec<String> {
        let width = self.n_students.to_string().len();
        (1..=self.n_students).map(|k| format!("s{k:0width$}")).collect()
    }

    pub fn assignment_ids(&self) -> Vec<String> {
        let width = self.n_assignments.to_string().len().max(2);
        (1..=self.n_assignments).map(|k| format!("a{k:0width$}")).collect()
    }

    pub fn truth(&self) -> BTreeMap<String, f64> {
        self.student_ids().into_iter().zip(self.true_quality.iter().copied()).collect()
    }

    /// A copy with `offsets[g]` added to each grader's bias.
    pub fn with_bias_offsets(&self, offsets: &[f64]) -> SyntheticCohort {
        let mut out = self.clone();
        for (b, o) in out.grader_bias.iter_mut().zip(offsets) {
            *b += o;
        }
        out
    }
}

/// All grade records of the cohort. Pure function of the cohort and its seed.
pub fn generate(cohort: &SyntheticCohort) -> Result<Vec<GradeRecord>, SynthError> {
    cohort.validate()?;
    let n = cohort.n_students;
    let ids = cohort.student_ids();
    let mut rng = ChaCha20Rng::seed_from_u64(cohort.seed);
    rng.set_stream(GRADE_STREAM);
    let mut records = Vec::with_capacity(n * cohort.n_assignments * cohort.reviews_per_student);
    for assignment in cohort.assignment_ids() {
        for g in 0..n {
            let peers = index::sample(&mut rng, n - 1, cohort.reviews_per_student);
            for p in peers.iter() {
                let e = if p >= g { p + 1 } else { p };
                let z: f64 = rng.sample(StandardNormal);
                let raw = cohort.true_quality[e] + cohort.grader_bias[g] + cohort.grader_noise_sd[g] * z;
                records.push(GradeRecord::new(
                    assignment.clone(),
                    ids[g].clone(),
                    ids[e].clone(),
                    cohort.scale.clamp(raw),
                ));
            }
        }
    }
    Ok(records)
}

/// Kendall's tau-b: `(C − D) / sqrt((P − T_x)(P − T_y))` with `P` the
/// number of pairs and `T_x`, `T_y` the pairs tied in each ranking.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, SynthError> {
    let n = x.len().min(y.len());
    if n < 2 {
        return Err(SynthError::TooFewStudents(n));
    }
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i].total_cmp(&x[j]);
            let dy = y[i].total_cmp(&y[j]);
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (Equal, _) => tied_x += 1,
                (_, Equal) => tied_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as u64;
    let denom = ((pairs - tied_x) as f64 * (pairs - tied_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(SynthError::Undefined);
    }
    Ok((concordant as f64 - discordant as f64) / denom)
}

/// Tau-b between a ranking and reference scores over the students both
/// score.
pub fn kendall_tau(ranking: &RankingResult, reference: &BTreeMap<String, f64>) -> Result<f64, SynthError> {
    let (a, b): (Vec<f64>, Vec<f64>) = ranking
        .students
        .iter()
        .zip(&ranking.scores)
        .filter_map(|(s, v)| Some((v.as_ref().copied()?, *reference.get(s)?)))
        .unzip();
    kendall_tau_b(&a, &b)
}
