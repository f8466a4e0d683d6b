//! Human abstention study: sessions of routed answers shown to annotators
//! under a baseline or an expert-panel condition, their accept/reject
//! judgments, and the per-session summary metrics.
//!
//! A judgment is scored like a selective-QA decision: accepting a correct
//! answer is +1, accepting a wrong one is -1, rejecting is an abstention (0).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::error::{Error, Result};
use crate::forest::RandomForest;
use crate::qa::{Benchmark, ExpertId, Split};
use crate::rng;
use crate::router::{route_split, Models, RoutedAnswer, Strategy};

pub const DEFAULT_TRIALS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Question and final answer only.
    Baseline,
    /// Also every expert's answer with its router score.
    Mope,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Baseline => "baseline",
            Condition::Mope => "mope",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Condition::Baseline),
            "mope" => Ok(Condition::Mope),
            _ => Err(Error::Config(format!("unknown condition `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub expert: ExpertId,
    pub description: String,
    pub answer: String,
    pub score: f64,
}

/// A routed test question, ready to become a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyItem {
    pub question: String,
    pub routed: RoutedAnswer,
    pub correct: bool,
}

/// Routes the test split with the forest to build the pool trials are
/// sampled from.
pub fn study_pool(bench: &Benchmark, forest: &RandomForest) -> Result<Vec<StudyItem>> {
    let text: HashMap<&str, &str> = bench
        .split(Split::Test)
        .map(|ps| (ps.id(), ps.question.text.as_str()))
        .collect();
    Ok(route_split(bench, Split::Test, Strategy::Mope, Models::Pooled(forest))?
        .into_iter()
        .map(|(routed, correct)| StudyItem {
            question: text[routed.question_id.as_str()].to_string(),
            routed,
            correct,
        })
        .collect())
}

/// Server-side trial record; `correct` never leaves the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: String,
    pub question_id: String,
    pub question: String,
    pub answer: String,
    pub correct: bool,
    pub expert_panel: Option<Vec<PanelEntry>>,
}

/// What an annotator sees for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPayload {
    pub trial_id: String,
    pub index: usize,
    pub total: usize,
    pub question: String,
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expert_panel: Option<Vec<PanelEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub condition: Condition,
    pub seed: u64,
    /// Unix milliseconds.
    pub created_at: u64,
    pub trials: Vec<Trial>,
}

impl Session {
    pub fn trial(&self, id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.id == id)
    }

    pub fn payload(&self, index: usize) -> Option<TrialPayload> {
        let t = self.trials.get(index)?;
        Some(TrialPayload {
            trial_id: t.id.clone(),
            index,
            total: self.trials.len(),
            question: t.question.clone(),
            answer: t.answer.clone(),
            expert_panel: t.expert_panel.clone(),
        })
    }

    /// First trial without a judgment, in presentation order.
    pub fn next_payload(&self, judged: &HashSet<String>) -> Option<TrialPayload> {
        let i = self.trials.iter().position(|t| !judged.contains(&t.id))?;
        self.payload(i)
    }
}

pub fn create_session(
    id: impl Into<String>,
    condition: Condition,
    pool: &[StudyItem],
    seed: u64,
    n_trials: usize,
    created_at: u64,
) -> Result<Session> {
    if n_trials == 0 || pool.len() < n_trials {
        return Err(Error::Empty(format!(
            "need {n_trials} routed questions for a session, have {}",
            pool.len()
        )));
    }
    use rand::Rng as _;
    let mut r = rng::rng(seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    for i in 0..n_trials {
        let j = r.random_range(i..order.len());
        order.swap(i, j);
    }
    let trials = order[..n_trials]
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let item = &pool[i];
            let expert_panel = (condition == Condition::Mope).then(|| {
                item.routed
                    .all_scores
                    .iter()
                    .map(|c| PanelEntry {
                        expert: c.prediction.expert,
                        description: c.prediction.expert.description().to_string(),
                        answer: c.prediction.answer_text.clone(),
                        score: c.score,
                    })
                    .collect()
            });
            Trial {
                id: format!("t{:02}", k + 1),
                question_id: item.routed.question_id.clone(),
                question: item.question.clone(),
                answer: item.routed.answer.clone(),
                correct: item.correct,
                expert_panel,
            }
        })
        .collect();
    Ok(Session {
        id: id.into(),
        condition,
        seed,
        created_at,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub session_id: String,
    pub trial_id: String,
    pub decision: Decision,
    /// 1 (not confident) to 5 (very confident).
    pub confidence: u8,
    pub elapsed_ms: u64,
}

#[derive(Debug, ThisError, PartialEq)]
pub enum JudgmentError {
    #[error("trial `{0}` is not part of this session")]
    UnknownTrial(String),
    #[error("trial `{0}` already has a judgment")]
    Duplicate(String),
    #[error("{0}")]
    Invalid(String),
}

/// Checks a new judgment against the session and the already-accepted ones.
pub fn check_judgment(session: &Session, judged: &HashSet<String>, j: &Judgment) -> Result<(), JudgmentError> {
    if j.session_id != session.id {
        return Err(JudgmentError::Invalid(format!(
            "judgment for session `{}` sent to `{}`",
            j.session_id, session.id
        )));
    }
    if !(1..=5).contains(&j.confidence) {
        return Err(JudgmentError::Invalid(format!(
            "confidence must be an integer in 1..=5, got {}",
            j.confidence
        )));
    }
    if session.trial(&j.trial_id).is_none() {
        return Err(JudgmentError::UnknownTrial(j.trial_id.clone()));
    }
    if judged.contains(&j.trial_id) {
        return Err(JudgmentError::Duplicate(j.trial_id.clone()));
    }
    Ok(())
}

/// Maps a 1..=5 rating onto [0, 1].
pub fn confidence_unit(c: u8) -> f64 {
    (f64::from(c) - 1.0) / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub condition: Condition,
    pub n_trials: usize,
    /// Trials whose shown answer was correct.
    pub n_correct_answers: usize,
    pub decision_acc: f64,
    pub er: f64,
    /// Accepted fraction of correct answers (0 when there are none).
    pub accept_correct_rate: f64,
    /// Rejected fraction of wrong answers (0 when there are none).
    pub reject_wrong_rate: f64,
    pub mean_conf_correct_judgment: Option<f64>,
    pub mean_conf_wrong_judgment: Option<f64>,
    pub mins_per_20q: f64,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// Recomputes the summary from the session and its judgment log alone.
pub fn session_summary(session: &Session, judgments: &[Judgment]) -> Result<SessionSummary> {
    let mut by_trial: HashMap<&str, &Judgment> = HashMap::new();
    for j in judgments {
        if session.trial(&j.trial_id).is_none() {
            return Err(Error::contract(format!("judgment for unknown trial `{}`", j.trial_id)));
        }
        if by_trial.insert(j.trial_id.as_str(), j).is_some() {
            return Err(Error::contract(format!("trial `{}` judged twice", j.trial_id)));
        }
    }
    let unjudged: Vec<&str> = session
        .trials
        .iter()
        .filter(|t| !by_trial.contains_key(t.id.as_str()))
        .map(|t| t.id.as_str())
        .collect();
    if !unjudged.is_empty() {
        return Err(Error::IncompleteSession(unjudged.iter().map(|s| s.to_string()).collect()));
    }

    let n = session.trials.len();
    let (mut acc_ok, mut acc_bad, mut rej_ok, mut rej_bad) = (0, 0, 0, 0);
    let mut conf_right = Vec::new();
    let mut conf_wrong = Vec::new();
    let mut elapsed: u64 = 0;
    for t in &session.trials {
        let j = by_trial[t.id.as_str()];
        elapsed += j.elapsed_ms;
        let accepted = j.decision == Decision::Accept;
        match (accepted, t.correct) {
            (true, true) => acc_ok += 1,
            (true, false) => acc_bad += 1,
            (false, true) => rej_ok += 1,
            (false, false) => rej_bad += 1,
        }
        let right_call = accepted == t.correct;
        let c = confidence_unit(j.confidence);
        if right_call { conf_right.push(c) } else { conf_wrong.push(c) }
    }
    let n_correct = acc_ok + rej_ok;
    Ok(SessionSummary {
        session_id: session.id.clone(),
        condition: session.condition,
        n_trials: n,
        n_correct_answers: n_correct,
        decision_acc: ratio(acc_ok + rej_bad, n),
        er: (acc_ok as f64 - acc_bad as f64) / n as f64,
        accept_correct_rate: ratio(acc_ok, n_correct),
        reject_wrong_rate: ratio(rej_bad, n - n_correct),
        mean_conf_correct_judgment: mean(&conf_right),
        mean_conf_wrong_judgment: mean(&conf_wrong),
        mins_per_20q: elapsed as f64 / 60_000.0 * (DEFAULT_TRIALS as f64 / n as f64),
    })
}
