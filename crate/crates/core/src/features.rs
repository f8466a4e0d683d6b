//! Fixed-order feature vectors for scoring one expert's answer.
//!
//! Groups, in order: expert one-hot, question word, question statistics,
//! answer statistics, context statistics, inter-expert agreement. Which
//! groups are present depends on the [`FeatureMode`].

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qa::{
    count_numbers, exact_match, normalize_answer, normalized_answer_prob, token_overlap, tokens,
    Benchmark, ExpertId, ExpertPrediction, PredictionSet, Question, Split,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Full,
    NoAgreement,
    QuestionOnly,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [
        FeatureMode::Full,
        FeatureMode::NoAgreement,
        FeatureMode::QuestionOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Full => "full",
            FeatureMode::NoAgreement => "no_agreement",
            FeatureMode::QuestionOnly => "question_only",
        }
    }

    pub fn schema_id(self) -> String {
        format!("{}/v{SCHEMA_VERSION}/{}", self.as_str(), feature_schema(self).len())
    }

    fn has_outputs(self) -> bool {
        self != FeatureMode::QuestionOnly
    }

    fn has_agreement(self) -> bool {
        self == FeatureMode::Full
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature mode `{s}`")))
    }
}

const SCHEMA_VERSION: u32 = 1;

pub const QUESTION_WORDS: [&str; 7] = ["what", "who", "when", "where", "why", "which", "how"];

const EXPERT_GROUP: [&str; 4] = [
    "expert_factual",
    "expert_multihop",
    "expert_math",
    "expert_commonsense",
];
const QWORD_GROUP: [&str; 8] = [
    "qword_what",
    "qword_who",
    "qword_when",
    "qword_where",
    "qword_why",
    "qword_which",
    "qword_how",
    "qword_other",
];
const QUESTION_GROUP: [&str; 2] = ["question_length", "question_numbers"];
const ANSWER_GROUP: [&str; 10] = [
    "answer_prob",
    "answer_length",
    "question_answer_overlap",
    "answer_numbers",
    "answer_passage_overlap",
    "rationale_length",
    "question_rationale_overlap",
    "answer_rationale_overlap",
    "answer_in_rationale_count",
    "rationale_numbers",
];
const CONTEXT_GROUP: [&str; 4] = [
    "passage_numbers",
    "question_passage_shared_tokens",
    "passage_length",
    "has_context",
];
const AGREEMENT_GROUP: [&str; 2] = ["answer_frequency", "mean_answer_overlap"];

pub fn feature_schema(mode: FeatureMode) -> Vec<&'static str> {
    let mut names: Vec<&'static str> = Vec::with_capacity(30);
    names.extend(EXPERT_GROUP);
    names.extend(QWORD_GROUP);
    names.extend(QUESTION_GROUP);
    if mode.has_outputs() {
        names.extend(ANSWER_GROUP);
        names.extend(CONTEXT_GROUP);
    }
    if mode.has_agreement() {
        names.extend(AGREEMENT_GROUP);
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mode: FeatureMode,
    pub schema_id: String,
}

impl FeatureVector {
    /// Wraps raw values, checking length and finiteness against the schema.
    pub fn new(values: Vec<f64>, mode: FeatureMode) -> Result<Self> {
        let expected = feature_schema(mode).len();
        if values.len() != expected {
            return Err(Error::contract(format!(
                "{mode} feature vector needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite feature value {v}")));
        }
        Ok(FeatureVector {
            values,
            mode,
            schema_id: mode.schema_id(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Index into [`QUESTION_WORDS`], or 7 for "other".
pub fn question_word_index(text: &str) -> usize {
    tokens(text)
        .first()
        .and_then(|t| QUESTION_WORDS.iter().position(|w| w == t))
        .unwrap_or(QUESTION_WORDS.len())
}

fn jaccard_opt(a: &str, b: Option<&str>) -> f64 {
    b.map_or(0.0, |b| token_overlap(a, b))
}

/// Occurrences of the answer's token sequence inside the rationale tokens.
fn occurrences(answer: &[String], rationale: &[String]) -> usize {
    if answer.is_empty() || answer.len() > rationale.len() {
        return 0;
    }
    rationale
        .windows(answer.len())
        .filter(|w| *w == answer)
        .count()
}

pub fn featurize(
    q: &Question,
    p: &ExpertPrediction,
    all: &PredictionSet,
    mode: FeatureMode,
) -> Result<FeatureVector> {
    if all.get(p.expert) != p || all.question.id != q.id {
        return Err(Error::contract(format!(
            "{} prediction for `{}` is not part of the given PredictionSet",
            p.expert, p.question_id
        )));
    }
    let mut v = Vec::with_capacity(30);

    let mut onehot = [0.0; 4];
    onehot[p.expert.index()] = 1.0;
    v.extend(onehot);

    let mut qword = [0.0; 8];
    qword[question_word_index(&q.text)] = 1.0;
    v.extend(qword);

    let q_tokens = tokens(&q.text);
    v.push(q_tokens.len() as f64);
    v.push(count_numbers(&q.text) as f64);

    if mode.has_outputs() {
        let answer = &p.answer_text;
        let ans_tokens = tokens(answer);
        let passages = p.context_passages.as_ref().map(|ps| ps.join(" "));
        let rationale = p.rationale_text.as_deref();
        let rat_tokens = rationale.map(tokens).unwrap_or_default();

        let prob = if p.answer_token_logprobs.is_empty() {
            0.0
        } else {
            normalized_answer_prob(p)?
        };
        v.push(prob);
        v.push(ans_tokens.len() as f64);
        v.push(token_overlap(&q.text, answer));
        v.push(count_numbers(answer) as f64);
        v.push(jaccard_opt(answer, passages.as_deref()));
        v.push(rat_tokens.len() as f64);
        v.push(jaccard_opt(&q.text, rationale));
        v.push(jaccard_opt(answer, rationale));
        v.push(occurrences(&ans_tokens, &rat_tokens) as f64);
        v.push(rationale.map_or(0, count_numbers) as f64);

        match &passages {
            Some(text) => {
                let q_set: HashSet<&String> = q_tokens.iter().collect();
                let p_tokens = tokens(text);
                let p_set: HashSet<&String> = p_tokens.iter().collect();
                v.push(count_numbers(text) as f64);
                v.push(q_set.intersection(&p_set).count() as f64);
                v.push(p_tokens.len() as f64);
                v.push(1.0);
            }
            None => v.extend([0.0; 4]),
        }
    }

    if mode.has_agreement() {
        let mine = normalize_answer(&p.answer_text);
        let same = all
            .predictions()
            .iter()
            .filter(|o| normalize_answer(&o.answer_text) == mine)
            .count();
        v.push(same as f64 / 4.0);
        let others: f64 = all
            .predictions()
            .iter()
            .filter(|o| o.expert != p.expert)
            .map(|o| token_overlap(&p.answer_text, &o.answer_text))
            .sum();
        v.push(others / 3.0);
    }

    FeatureVector::new(v, mode)
}

/// Features for one expert of a prediction set.
pub fn featurize_expert(ps: &PredictionSet, expert: ExpertId, mode: FeatureMode) -> Result<FeatureVector> {
    featurize(&ps.question, ps.get(expert), ps, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: bool,
}

/// One labeled example per (question, expert) in a list of sets.
pub fn label_sets<'a>(
    sets: impl IntoIterator<Item = &'a PredictionSet>,
    mode: FeatureMode,
) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for ps in sets {
        for p in ps.predictions() {
            out.push(LabeledExample {
                features: featurize(&ps.question, p, ps, mode)?,
                label: exact_match(&p.answer_text, &ps.question.gold_answers)?,
            });
        }
    }
    Ok(out)
}

pub fn build_training_set(
    bench: &Benchmark,
    split: Split,
    mode: FeatureMode,
) -> Result<Vec<LabeledExample>> {
    if bench.len(split) == 0 {
        return Err(Error::Empty(format!("{split} split has no questions")));
    }
    label_sets(bench.split(split), mode)
}

/// CSV with the schema names plus a trailing `label` column.
pub fn write_feature_csv(
    data: &[LabeledExample],
    mode: FeatureMode,
    mut out: impl Write,
) -> Result<()> {
    let mut header = feature_schema(mode).join(",");
    header.push_str(",label\n");
    out.write_all(header.as_bytes())?;
    for ex in data {
        let row: Vec<String> = ex.features.values.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{},{}", row.join(","), u8::from(ex.label))?;
    }
    Ok(())
}
