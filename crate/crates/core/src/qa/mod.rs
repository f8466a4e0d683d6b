//! Domain model for questions, expert predictions and benchmarks.
//!
//! Everything downstream (featurizer, router, metrics) works on
//! [`PredictionSet`]s: one question plus exactly one prediction from each
//! of the four experts, stored in canonical expert order.

mod io;
mod text;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_benchmark, save_benchmark, LogRecord};
pub use text::{
    count_numbers, exact_match, normalize_answer, normalized_answer_prob, token_overlap, tokens,
};

/// Reasoning category of a question. Variant order is the canonical order
/// used by every one-hot encoding and tie-break in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningType {
    Factual,
    Multihop,
    Math,
    Commonsense,
}

impl ReasoningType {
    pub const ALL: [ReasoningType; 4] = [
        ReasoningType::Factual,
        ReasoningType::Multihop,
        ReasoningType::Math,
        ReasoningType::Commonsense,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningType::Factual => "factual",
            ReasoningType::Multihop => "multihop",
            ReasoningType::Math => "math",
            ReasoningType::Commonsense => "commonsense",
        }
    }

    /// The expert specialized for this reasoning type.
    pub fn home_expert(self) -> ExpertId {
        ExpertId::ALL[self.index()]
    }
}

impl fmt::Display for ReasoningType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReasoningType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReasoningType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::MalformedLog(format!("unknown reasoning type `{s}`")))
    }
}

/// One of the four specialized experts, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpertId {
    Factual,
    Multihop,
    Math,
    Commonsense,
}

impl ExpertId {
    pub const ALL: [ExpertId; 4] = [
        ExpertId::Factual,
        ExpertId::Multihop,
        ExpertId::Math,
        ExpertId::Commonsense,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        self.home_type().as_str()
    }

    pub fn home_type(self) -> ReasoningType {
        ReasoningType::ALL[self.index()]
    }

    /// One-line specialization blurb shown to annotators.
    pub fn description(self) -> &'static str {
        match self {
            ExpertId::Factual => "Retrieves Wikipedia passages; strong on knowledge-intensive factoid questions.",
            ExpertId::Multihop => "Writes step-by-step rationales; strong on questions that chain several facts.",
            ExpertId::Math => "Writes worked solutions; strong on arithmetic and math word problems.",
            ExpertId::Commonsense => "Generates background knowledge first; strong on everyday commonsense questions.",
        }
    }
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpertId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExpertId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::MalformedLog(format!("unknown expert `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub dataset_id: String,
    pub text: String,
    pub gold_answers: Vec<String>,
    pub reasoning_type: Option<ReasoningType>,
}

impl Question {
    /// Exact match of `answer` against this question's gold aliases.
    pub fn is_correct(&self, answer: &str) -> bool {
        exact_match(answer, &self.gold_answers).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPrediction {
    pub question_id: String,
    pub expert: ExpertId,
    pub answer_text: String,
    pub rationale_text: Option<String>,
    pub context_passages: Option<Vec<String>>,
    pub answer_token_logprobs: Vec<f64>,
    pub rationale_token_logprobs: Option<Vec<f64>>,
}

impl ExpertPrediction {
    pub fn validate(&self) -> Result<()> {
        let all_lp = self
            .answer_token_logprobs
            .iter()
            .chain(self.rationale_token_logprobs.iter().flatten());
        for &lp in all_lp {
            if lp.is_nan() || lp > 0.0 {
                return Err(Error::MalformedLog(format!(
                    "log-probability {lp} is not <= 0"
                )));
            }
        }
        if !self.answer_text.is_empty() && self.answer_token_logprobs.is_empty() {
            return Err(Error::MalformedLog(
                "non-empty answer without answer token log-probabilities".into(),
            ));
        }
        Ok(())
    }
}

/// A question with exactly one prediction per expert, indexed by
/// [`ExpertId::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub question: Question,
    predictions: [ExpertPrediction; 4],
}

impl PredictionSet {
    /// Builds a set from predictions in any order. Fails unless every expert
    /// appears exactly once and all question ids match.
    pub fn new(question: Question, predictions: Vec<ExpertPrediction>) -> Result<Self> {
        let mut slots: [Option<ExpertPrediction>; 4] = Default::default();
        for p in predictions {
            if p.question_id != question.id {
                return Err(Error::contract(format!(
                    "prediction for `{}` attached to question `{}`",
                    p.question_id, question.id
                )));
            }
            let slot = &mut slots[p.expert.index()];
            if slot.is_some() {
                return Err(Error::contract(format!(
                    "duplicate {} prediction for question `{}`",
                    p.expert, question.id
                )));
            }
            *slot = Some(p);
        }
        let missing: Vec<&str> = ExpertId::ALL
            .iter()
            .filter(|e| slots[e.index()].is_none())
            .map(|e| e.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::contract(format!(
                "incomplete PredictionSet for question `{}`: missing {}",
                question.id,
                missing.join(", ")
            )));
        }
        let predictions = slots.map(|s| s.expect("checked above"));
        Ok(PredictionSet {
            question,
            predictions,
        })
    }

    pub fn predictions(&self) -> &[ExpertPrediction; 4] {
        &self.predictions
    }

    pub fn get(&self, expert: ExpertId) -> &ExpertPrediction {
        &self.predictions[expert.index()]
    }

    pub fn id(&self) -> &str {
        &self.question.id
    }

    /// Copy with gold answers replaced by an unmatchable placeholder, for
    /// running label-free strategies.
    pub fn blinded(&self) -> PredictionSet {
        let mut out = self.clone();
        out.question.gold_answers = vec![BLIND_GOLD.to_string()];
        out
    }
}

pub(crate) const BLIND_GOLD: &str = "\u{1}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::MalformedLog(format!("unknown split `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    pub reasoning_type: Option<ReasoningType>,
    pub train: Vec<PredictionSet>,
    pub dev: Vec<PredictionSet>,
    pub test: Vec<PredictionSet>,
}

impl Dataset {
    pub fn new(id: impl Into<String>, reasoning_type: Option<ReasoningType>) -> Self {
        Dataset {
            id: id.into(),
            reasoning_type,
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn split(&self, split: Split) -> &[PredictionSet] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<PredictionSet> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub datasets: Vec<Dataset>,
}

impl Benchmark {
    pub fn dataset(&self, id: &str) -> Option<&Dataset> {
        self.datasets.iter().find(|d| d.id == id)
    }

    /// All prediction sets of one split, in dataset order.
    pub fn split(&self, split: Split) -> impl Iterator<Item = &PredictionSet> {
        self.datasets.iter().flat_map(move |d| d.split(split).iter())
    }

    pub fn len(&self, split: Split) -> usize {
        self.datasets.iter().map(|d| d.split(split).len()).sum()
    }

    /// Checks partition disjointness and question-id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashMap::new();
        for d in &self.datasets {
            for split in Split::ALL {
                for ps in d.split(split) {
                    if ps.question.gold_answers.is_empty() {
                        return Err(Error::contract(format!(
                            "question `{}` has no gold answers",
                            ps.id()
                        )));
                    }
                    if let Some(prev) = seen.insert(ps.id().to_string(), split) {
                        let what = if prev == split {
                            "duplicate question id"
                        } else {
                            "partition overlap"
                        };
                        return Err(Error::contract(format!("{what}: `{}`", ps.id())));
                    }
                    for p in ps.predictions() {
                        p.validate()?;
                    }
                }
            }
        }
        Ok(())
    }
}
