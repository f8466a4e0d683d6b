//! Selective QA: abstention thresholds and the metrics that judge them.
//!
//! All ranking metrics order decisions by score descending, breaking
//! ties by question id ascending, and walk the n prefixes of that order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDecision {
    pub question_id: String,
    pub score: f64,
    pub correct: bool,
}

impl ScoredDecision {
    pub fn new(question_id: impl Into<String>, score: f64, correct: bool) -> Self {
        ScoredDecision {
            question_id: question_id.into(),
            score,
            correct,
        }
    }
}

/// Answer iff `score >= gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstentionPolicy {
    #[serde(with = "extended_float")]
    pub gamma: f64,
}

impl AbstentionPolicy {
    pub fn answers(&self, score: f64) -> bool {
        score >= self.gamma
    }
}

/// JSON has no infinities; encode them as the strings "inf" / "-inf".
pub(crate) mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad threshold `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveOutcome {
    pub question_id: String,
    pub answered: bool,
    /// +1 answered and correct, 0 abstained, -1 answered and wrong.
    pub phi: i8,
}

impl SelectiveOutcome {
    pub fn new(question_id: impl Into<String>, answered: bool, correct: bool) -> Self {
        let phi = match (answered, correct) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => -1,
        };
        SelectiveOutcome {
            question_id: question_id.into(),
            answered,
            phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub coverage: f64,
    pub risk: f64,
}

fn rank_order(a: &ScoredDecision, b: &ScoredDecision) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.question_id.cmp(&b.question_id))
}

fn ranked(ds: &[ScoredDecision]) -> Result<Vec<&ScoredDecision>> {
    if ds.is_empty() {
        return Err(Error::Empty("no scored decisions".into()));
    }
    if let Some(d) = ds.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::contract(format!(
            "non-finite score {} for `{}`",
            d.score, d.question_id
        )));
    }
    let mut v: Vec<&ScoredDecision> = ds.iter().collect();
    v.sort_by(|a, b| rank_order(a, b));
    Ok(v)
}

/// Number of correct decisions in each prefix of the ranking.
fn prefix_correct(ds: &[ScoredDecision]) -> Result<Vec<usize>> {
    let mut acc = 0;
    Ok(ranked(ds)?
        .into_iter()
        .map(|d| {
            acc += usize::from(d.correct);
            acc
        })
        .collect())
}

pub fn risk_coverage_curve(ds: &[ScoredDecision]) -> Result<Vec<RiskCoveragePoint>> {
    let n = ds.len() as f64;
    Ok(prefix_correct(ds)?
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let k = (i + 1) as f64;
            RiskCoveragePoint {
                coverage: k / n,
                risk: (k - c as f64) / k,
            }
        })
        .collect())
}

/// Mean prefix risk over the n coverage levels. Lower is better.
pub fn risk_coverage_auc(ds: &[ScoredDecision]) -> Result<f64> {
    let curve = risk_coverage_curve(ds)?;
    Ok(curve.iter().map(|p| p.risk).sum::<f64>() / curve.len() as f64)
}

/// Largest prefix fraction whose accuracy reaches `target`; 0 if none does.
pub fn coverage_at_accuracy(ds: &[ScoredDecision], target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::contract(format!("accuracy target {target} outside (0, 1]")));
    }
    let n = ds.len() as f64;
    let best = prefix_correct(ds)?
        .into_iter()
        .enumerate()
        .filter(|&(i, c)| c as f64 / (i + 1) as f64 >= target)
        .map(|(i, _)| i + 1)
        .max()
        .unwrap_or(0);
    Ok(best as f64 / n)
}

pub fn effective_reliability(outcomes: &[SelectiveOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Empty("no selective outcomes".into()));
    }
    let total: i64 = outcomes.iter().map(|o| i64::from(o.phi)).sum();
    Ok(total as f64 / outcomes.len() as f64)
}

pub fn apply_policy(policy: AbstentionPolicy, ds: &[ScoredDecision]) -> Vec<SelectiveOutcome> {
    ds.iter()
        .map(|d| SelectiveOutcome::new(d.question_id.clone(), policy.answers(d.score), d.correct))
        .collect()
}

/// Picks gamma from the distinct dev scores plus +inf to maximize dev
/// effective reliability; ties go to the largest gamma.
pub fn tune_threshold(dev: &[ScoredDecision]) -> Result<AbstentionPolicy> {
    let order = ranked(dev)?;
    // Walk thresholds from +inf downwards; sum of phi for answering the
    // first k ranked items. Only boundaries between distinct scores count.
    let mut best_gamma = f64::INFINITY;
    let mut best_sum: i64 = 0;
    let mut sum: i64 = 0;
    for (i, d) in order.iter().enumerate() {
        sum += if d.correct { 1 } else { -1 };
        let boundary = order.get(i + 1).is_none_or(|next| next.score < d.score);
        if boundary && sum > best_sum {
            best_sum = sum;
            best_gamma = d.score;
        }
    }
    Ok(AbstentionPolicy { gamma: best_gamma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decisions(rows: &[(f64, bool)]) -> Vec<ScoredDecision> {
        rows.iter()
            .enumerate()
            .map(|(i, &(s, c))| ScoredDecision::new(format!("q{i:02}"), s, c))
            .collect()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(risk_coverage_auc(&decisions(&[(0.3, true), (0.2, true)])).unwrap(), 0.0);
        assert_eq!(risk_coverage_auc(&decisions(&[(0.3, false), (0.2, false)])).unwrap(), 1.0);
        let auc = risk_coverage_auc(&decisions(&[(0.9, true), (0.6, false), (0.3, true)])).unwrap();
        assert!((auc - (0.0 + 0.5 + 1.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!(risk_coverage_auc(&[]).is_err());
    }

    #[test]
    fn coverage_examples() {
        let ds = decisions(&[(0.9, true), (0.8, true), (0.7, false), (0.6, true)]);
        assert_eq!(coverage_at_accuracy(&ds, 0.8).unwrap(), 0.5);
        assert_eq!(coverage_at_accuracy(&decisions(&[(0.1, true); 3]), 0.9).unwrap(), 1.0);
        assert_eq!(coverage_at_accuracy(&decisions(&[(0.1, false); 3]), 0.5).unwrap(), 0.0);
        assert!(coverage_at_accuracy(&ds, 0.0).is_err());
        assert!(coverage_at_accuracy(&ds, 1.5).is_err());
    }

    #[test]
    fn reliability_examples() {
        let o = vec![
            SelectiveOutcome::new("a", true, true),
            SelectiveOutcome::new("b", true, false),
            SelectiveOutcome::new("c", false, true),
            SelectiveOutcome::new("d", true, true),
        ];
        assert_eq!(effective_reliability(&o).unwrap(), 0.25);
        let abstain: Vec<_> = (0..3).map(|i| SelectiveOutcome::new(i.to_string(), false, false)).collect();
        assert_eq!(effective_reliability(&abstain).unwrap(), 0.0);
        let right: Vec<_> = (0..3).map(|i| SelectiveOutcome::new(i.to_string(), true, true)).collect();
        assert_eq!(effective_reliability(&right).unwrap(), 1.0);
        assert!(effective_reliability(&[]).is_err());
    }

    #[test]
    fn threshold_examples() {
        let dev = decisions(&[(0.9, true), (0.5, false), (0.2, true)]);
        assert_eq!(tune_threshold(&dev).unwrap().gamma, 0.9);
        let wrong = decisions(&[(0.9, false), (0.5, false)]);
        assert_eq!(tune_threshold(&wrong).unwrap().gamma, f64::INFINITY);
        let right = decisions(&[(0.9, true), (0.5, true), (0.7, true)]);
        assert_eq!(tune_threshold(&right).unwrap().gamma, 0.5);
        assert!(tune_threshold(&[]).is_err());
        // Tied scores cannot be split by a threshold.
        let tied = decisions(&[(0.5, true), (0.5, false), (0.5, false), (0.1, true)]);
        assert_eq!(tune_threshold(&tied).unwrap().gamma, f64::INFINITY);
    }

    #[test]
    fn policy_boundaries() {
        let ds = decisions(&[(0.4, true), (0.5, true), (0.6, false)]);
        let answered = |g: f64| -> Vec<bool> {
            apply_policy(AbstentionPolicy { gamma: g }, &ds).iter().map(|o| o.answered).collect()
        };
        assert_eq!(answered(f64::INFINITY), vec![false; 3]);
        assert_eq!(answered(f64::NEG_INFINITY), vec![true; 3]);
        assert_eq!(answered(0.5), vec![false, true, true]);
        let phis: Vec<i8> = apply_policy(AbstentionPolicy { gamma: 0.5 }, &ds).iter().map(|o| o.phi).collect();
        assert_eq!(phis, vec![0, 1, -1]);
    }

    #[test]
    fn infinite_threshold_serializes() {
        let p = AbstentionPolicy { gamma: f64::INFINITY };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"gamma":"inf"}"#);
        assert_eq!(serde_json::from_str::<AbstentionPolicy>(&s).unwrap(), p);
    }
}
