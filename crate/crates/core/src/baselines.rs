//! Score-averaging baselines and PeerRank.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Flag, GradeRecord, Method, RankingResult, Scale, StudentIndex};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("no records")]
    Empty,
    #[error("student '{0}' received no grades")]
    NoGradesReceived(String),
    #[error("degenerate grader mass for student '{student}' at iteration {iteration}")]
    DegenerateGraderMass { student: String, iteration: usize },
}

/// Scores each student received, sorted ascending so that every statistic
/// is independent of record order.
fn received_scores(records: &[GradeRecord]) -> (StudentIndex, Vec<Vec<f64>>) {
    let index = StudentIndex::from_records(records);
    let mut received = vec![Vec::new(); index.len()];
    for r in records {
        let e = index.get(&r.gradee).expect("indexed above");
        received[e].push(r.score);
    }
    for list in &mut received {
        list.sort_by(f64::total_cmp);
    }
    (index, received)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean of all scores each student received. Students who never received
/// a grade are left unscored and flagged.
pub fn cumulative_average(records: &[GradeRecord]) -> RankingResult {
    let (index, received) = received_scores(records);
    let mut flags = Vec::new();
    let scores = received
        .iter()
        .enumerate()
        .map(|(i, list)| {
            if list.is_empty() {
                flags.push(Flag::MissingScore {
                    student: index.name(i).to_string(),
                });
                None
            } else {
                Some(mean(list))
            }
        })
        .collect();
    let mut result = RankingResult::single_component(Method::CumulativeAvg, index.names().to_vec(), scores);
    result.flags = flags;
    result
}

/// Mean after dropping the `trim` lowest and `trim` highest scores. A
/// student with fewer than `2·trim + 1` scores gets the plain mean and a
/// [`Flag::TruncationFallback`].
pub fn truncated_average(records: &[GradeRecord], trim: usize) -> RankingResult {
    let (index, received) = received_scores(records);
    let mut flags = Vec::new();
    let scores = received
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let name = index.name(i).to_string();
            if list.is_empty() {
                flags.push(Flag::MissingScore { student: name });
                None
            } else if list.len() < 2 * trim + 1 {
                flags.push(Flag::TruncationFallback {
                    student: name,
                    received: list.len(),
                });
                Some(mean(list))
            } else {
                Some(mean(&list[trim..list.len() - trim]))
            }
        })
        .collect();
    let mut result = RankingResult::single_component(Method::TruncatedAvg, index.names().to_vec(), scores);
    result.flags = flags;
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerRankConfig {
    /// Weight of the grader-weighted peer grade.
    pub alpha: f64,
    /// Weight of the grading-accuracy term.
    pub beta: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Added to the grader-mass denominator when set.
    pub epsilon: Option<f64>,
    /// Grades are mapped to `[0, 1]` by `(g − min) / (max − min)`.
    pub scale: Scale,
}

impl Default for PeerRankConfig {
    fn default() -> Self {
        PeerRankConfig {
            alpha: 0.5,
            beta: 0.0,
            tol: 1e-9,
            max_iters: 1000,
            epsilon: None,
            scale: Scale::default(),
        }
    }
}

/// The PeerRank fixed-point iteration
///
/// ```text
/// X_i ← (1 − α − β)·X_i
///       + α·Σ_{j∈G(i)} X_j·A_ji / Σ_{j∈G(i)} X_j
///       + β·(1 − mean_{j∈ĝ(i)} |A_ij − X_j|)
/// ```
///
/// where `G(i)` are the graders of `i`, `ĝ(i)` the students `i` graded and
/// `A_ji` the mean normalized grade `j` gave `i` over all assignments.
/// The iteration starts from each student's mean received grade.
#[derive(Debug, Clone)]
pub struct PeerRank {
    students: Vec<String>,
    // (grader j, A_ji) per gradee i
    graders_of: Vec<Vec<(usize, f64)>>,
    // (gradee j, A_ij) per grader i
    graded_by: Vec<Vec<(usize, f64)>>,
    config: PeerRankConfig,
}

impl PeerRank {
    pub fn new(records: &[GradeRecord], config: PeerRankConfig) -> Result<Self, BaselineError> {
        let PeerRankConfig { alpha, beta, tol, .. } = config;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(BaselineError::InvalidParameters(format!("alpha {alpha} not in [0,1]")));
        }
        if !(beta >= 0.0 && beta <= 1.0 - alpha + 1e-12) {
            return Err(BaselineError::InvalidParameters(format!("beta {beta} not in [0,{}]", 1.0 - alpha)));
        }
        if !(tol > 0.0) {
            return Err(BaselineError::InvalidParameters(format!("tol {tol} must be positive")));
        }
        if config.epsilon.is_some_and(|e| !(e >= 0.0)) {
            return Err(BaselineError::InvalidParameters("epsilon must be nonnegative".into()));
        }
        if records.is_empty() {
            return Err(BaselineError::Empty);
        }
        let index = StudentIndex::from_records(records);
        let n = index.len();
        let mut pair: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for r in records {
            let g = index.get(&r.grader).expect("indexed above");
            let e = index.get(&r.gradee).expect("indexed above");
            let a = (r.score - config.scale.min) / config.scale.width();
            let slot = pair.entry((g, e)).or_insert((0.0, 0));
            slot.0 += a;
            slot.1 += 1;
        }
        let mut graders_of = vec![Vec::new(); n];
        let mut graded_by = vec![Vec::new(); n];
        for ((g, e), (sum, count)) in pair {
            let a = sum / count as f64;
            graders_of[e].push((g, a));
            graded_by[g].push((e, a));
        }
        if let Some(i) = graders_of.iter().position(Vec::is_empty) {
            return Err(BaselineError::NoGradesReceived(index.name(i).to_string()));
        }
        Ok(PeerRank {
            students: index.names().to_vec(),
            graders_of,
            graded_by,
            config,
        })
    }

    pub fn students(&self) -> &[String] {
        &self.students
    }

    /// `X⁰_i`: mean of `A_ji` over the graders of `i`.
    pub fn initial(&self) -> Vec<f64> {
        self.graders_of
            .iter()
            .map(|g| g.iter().map(|&(_, a)| a).sum::<f64>() / g.len() as f64)
            .collect()
    }

    /// One update `X^m → X^{m+1}`; `iteration` is only used in errors.
    pub fn step(&self, x: &[f64], iteration: usize) -> Result<Vec<f64>, BaselineError> {
        let PeerRankConfig { alpha, beta, .. } = self.config;
        let keep = 1.0 - alpha - beta;
        let mut next = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let mut value = keep * x[i];
            if alpha != 0.0 {
                let (num, den) = self.graders_of[i]
                    .iter()
                    .fold((0.0, 0.0), |(n, d), &(j, a)| (n + x[j] * a, d + x[j]));
                let den = den + self.config.epsilon.unwrap_or(0.0);
                if den == 0.0 {
                    return Err(BaselineError::DegenerateGraderMass {
                        student: self.students[i].clone(),
                        iteration,
                    });
                }
                value += alpha * num / den;
            }
            if beta != 0.0 && !self.graded_by[i].is_empty() {
                let graded = &self.graded_by[i];
                let err = graded.iter().map(|&(j, a)| (a - x[j]).abs()).sum::<f64>() / graded.len() as f64;
                value += beta * (1.0 - err);
            }
            next.push(value);
        }
        Ok(next)
    }

    pub fn run(&self) -> Result<RankingResult, BaselineError> {
        let mut x = self.initial();
        let mut flags = Vec::new();
        if self.config.beta != 0.0 {
            for (i, g) in self.graded_by.iter().enumerate() {
                if g.is_empty() {
                    flags.push(Flag::NoBetaTerm {
                        student: self.students[i].clone(),
                    });
                }
            }
        }
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.config.max_iters {
            let next = self.step(&x, iterations + 1)?;
            last_change = x.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            x = next;
            iterations += 1;
            if last_change < self.config.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("peerrank stopped after {iterations} iterations, last change {last_change:e}");
            flags.push(Flag::NotConverged {
                iterations,
                last_change,
            });
        }
        let mut result =
            RankingResult::single_component(Method::Peerrank, self.students.clone(), x.into_iter().map(Some).collect());
        result.flags = flags;
        Ok(result)
    }
}

pub fn peerrank(records: &[GradeRecord], config: &PeerRankConfig) -> Result<RankingResult, BaselineError> {
    PeerRank::new(records, *config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(a: &str, g: &str, e: &str, s: f64) -> GradeRecord {
        GradeRecord::new(a, g, e, s)
    }

    #[test]
    fn cumulative_examples() {
        let records = vec![
            rec("a1", "x", "i", 80.0),
            rec("a2", "y", "i", 90.0),
            rec("a1", "i", "j", 70.0),
        ];
        let r = cumulative_average(&records);
        assert_eq!(r.score("i"), Some(85.0));
        assert_eq!(r.score("j"), Some(70.0));
        assert_eq!(r.score("x"), None);
        assert!(r.flags.contains(&Flag::MissingScore { student: "x".into() }));
    }

    #[test]
    fn truncated_examples() {
        let mut records: Vec<GradeRecord> = [60.0, 70.0, 80.0, 90.0, 100.0]
            .iter()
            .enumerate()
            .map(|(k, &s)| rec("a1", &format!("g{k}"), "i", s))
            .collect();
        records.push(rec("a1", "g0", "j", 50.0));
        records.push(rec("a1", "g1", "j", 100.0));
        let r = truncated_average(&records, 1);
        assert_eq!(r.score("i"), Some(80.0));
        assert_eq!(r.score("j"), Some(75.0));
        assert!(r.flags.contains(&Flag::TruncationFallback {
            student: "j".into(),
            received: 2
        }));
        let zero = truncated_average(&records, 0);
        assert_eq!(zero.scores, cumulative_average(&records).scores);
    }

    fn hand_example() -> Vec<GradeRecord> {
        // A_ji as grades on the hundred-mark scale
        vec![
            rec("a1", "s2", "s1", 100.0),
            rec("a1", "s3", "s1", 50.0),
            rec("a1", "s1", "s2", 80.0),
            rec("a1", "s3", "s2", 80.0),
            rec("a1", "s1", "s3", 20.0),
            rec("a1", "s2", "s3", 40.0),
        ]
    }

    #[test]
    fn peerrank_first_iterate() {
        let config = PeerRankConfig::default();
        let pr = PeerRank::new(&hand_example(), config).unwrap();
        assert_eq!(pr.students(), ["s2", "s1", "s3"]);
        // order: s2, s1, s3
        let x0 = pr.initial();
        let expected0 = [0.8, 0.75, 0.3];
        for (a, b) in x0.iter().zip(expected0) {
            assert!((a - b).abs() < 1e-15);
        }
        let x1 = pr.step(&x0, 1).unwrap();
        // s1: 0.5·0.75 + 0.5·(0.8·1.0 + 0.3·0.5)/(0.8 + 0.3)
        let expected1 = [0.8, 0.8068181818181819, 0.3016129032258065];
        for (a, b) in x1.iter().zip(expected1) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn peerrank_identity_when_weights_are_zero() {
        let config = PeerRankConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        let pr = PeerRank::new(&hand_example(), config).unwrap();
        let r = pr.run().unwrap();
        let x0 = pr.initial();
        assert_eq!(r.scores, x0.into_iter().map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn peerrank_parameter_validation() {
        let bad = PeerRankConfig {
            alpha: 0.7,
            beta: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            peerrank(&hand_example(), &bad),
            Err(BaselineError::InvalidParameters(_))
        ));
        assert_eq!(peerrank(&[], &PeerRankConfig::default()), Err(BaselineError::Empty));
    }

    #[test]
    fn peerrank_requires_received_grades() {
        let records = vec![rec("a1", "x", "y", 50.0), rec("a1", "y", "z", 50.0)];
        assert_eq!(
            peerrank(&records, &PeerRankConfig::default()),
            Err(BaselineError::NoGradesReceived("x".into()))
        );
    }

    #[test]
    fn degenerate_grader_mass() {
        // everyone graded zero: all graders have zero mass
        let records = vec![rec("a1", "x", "y", 0.0), rec("a1", "y", "x", 0.0)];
        assert!(matches!(
            peerrank(&records, &PeerRankConfig::default()),
            Err(BaselineError::DegenerateGraderMass { iteration: 1, .. })
        ));
        let regularized = PeerRankConfig {
            epsilon: Some(1e-9),
            ..Default::default()
        };
        let r = peerrank(&records, &regularized).unwrap();
        assert_eq!(r.scores, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn beta_term_flags_students_who_graded_nobody() {
        let records = vec![
            rec("a1", "x", "y", 60.0),
            rec("a1", "y", "x", 70.0),
            rec("a1", "x", "z", 50.0),
        ];
        let config = PeerRankConfig {
            alpha: 0.4,
            beta: 0.2,
            ..Default::default()
        };
        let r = peerrank(&records, &config).unwrap();
        assert!(r.flags.contains(&Flag::NoBetaTerm { student: "z".into() }));
    }

    #[test]
    fn non_convergence_is_flagged() {
        let config = PeerRankConfig {
            max_iters: 2,
            ..Default::default()
        };
        let r = peerrank(&hand_example(), &config).unwrap();
        assert!(matches!(r.flags[0], Flag::NotConverged { iterations: 2, .. }));
    }

    fn cohort() -> impl Strategy<Value = Vec<(u8, u8, i32)>> {
        proptest::collection::vec((0u8..5, 0u8..5, 0i32..=100), 1..40)
    }

    fn complete(raw: &[(u8, u8, i32)]) -> Vec<GradeRecord> {
        // a ring of grades guarantees that everyone receives one
        let mut records: Vec<GradeRecord> = (0..5)
            .map(|k| rec("a0", &format!("s{k}"), &format!("s{}", (k + 1) % 5), 50.0))
            .collect();
        records.extend(
            raw.iter()
                .filter(|(g, e, _)| g != e)
                .map(|&(g, e, s)| rec("a1", &format!("s{g}"), &format!("s{e}"), f64::from(s))),
        );
        records
    }

    proptest! {
        #[test]
        fn peerrank_stays_in_unit_interval(raw in cohort(), alpha in 0.0f64..=1.0, frac in 0.0f64..=1.0) {
            let records = complete(&raw);
            let config = PeerRankConfig { alpha, beta: frac * (1.0 - alpha), epsilon: Some(1e-9), ..Default::default() };
            let r = peerrank(&records, &config).unwrap();
            for v in r.scores.iter().flatten() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(v));
            }
        }

        #[test]
        fn peerrank_is_label_equivariant(raw in cohort(), perm in Just([3usize, 0, 4, 1, 2])) {
            let records = complete(&raw);
            let relabeled: Vec<GradeRecord> = records
                .iter()
                .map(|r| {
                    let map = |s: &str| format!("t{}", perm[s[1..].parse::<usize>().unwrap()]);
                    rec(&r.assignment, &map(&r.grader), &map(&r.gradee), r.score)
                })
                .collect();
            let config = PeerRankConfig { epsilon: Some(1e-9), ..Default::default() };
            let a = peerrank(&records, &config).unwrap();
            let b = peerrank(&relabeled, &config).unwrap();
            for k in 0..5 {
                let x = a.score(&format!("s{k}")).unwrap();
                let y = b.score(&format!("t{}", perm[k])).unwrap();
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn cumulative_is_order_invariant(raw in cohort(), seed in any::<u64>()) {
            let records = complete(&raw);
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(cumulative_average(&records).score_map(), cumulative_average(&shuffled).score_map());
        }
    }
}
