//! Synthetic expert logs with the statistical shape of a four-expert,
//! twelve-dataset QA benchmark.
//!
//! Per question, each expert is independently correct with its configured
//! accuracy on that dataset. What the router can learn from is planted
//! deliberately:
//!
//! * Question surface (question word, length, number count) follows the
//!   dataset's reasoning type with probability `type_signal`, otherwise a
//!   random type's template.
//! * Correct answers carry a higher mean token log-probability
//!   (`confidence_gap`); each expert also has a fixed log-probability bias,
//!   so raw probabilities are not comparable across experts.
//! * With probability `agreement_boost` per question, every correct expert
//!   emits the canonical gold string; otherwise each correct expert emits
//!   its own gold alias, which matches gold under EM but not the other
//!   experts' strings. Each wrong expert copies the question's shared
//!   plausible distractor with probability
//!   `agreement_boost * error_correlation`, otherwise it draws from the
//!   dataset's distractor pool. With `agreement_boost = 0` agreement
//!   features carry no correctness signal.
//!
//! Rationales and passages are templated filler: they always restate the
//! emitted answer or contain it at a fixed rate, independent of correctness.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qa::{
    Benchmark, Dataset, ExpertId, ExpertPrediction, PredictionSet, Question, ReasoningType, Split,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    pub id: String,
    pub reasoning_type: ReasoningType,
    #[serde(default = "default_train")]
    pub n_train: usize,
    #[serde(default = "default_dev")]
    pub n_dev: usize,
    #[serde(default = "default_test")]
    pub n_test: usize,
    /// Per-expert accuracy in canonical expert order.
    pub accuracy: [f64; 4],
}

fn default_train() -> usize {
    100
}
fn default_dev() -> usize {
    100
}
fn default_test() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub datasets: Vec<SimDataset>,
    pub agreement_boost: f64,
    pub error_correlation: f64,
    pub confidence_gap: f64,
    /// Added to every expert's mean answer log-probability, canonical order.
    pub expert_logprob_bias: [f64; 4],
    pub type_signal: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Single-expert EM rows, in percent: factual, multihop, math, commonsense
/// experts over NQ, TQA, SQuAD, HQA, BeerQA3+, MuSiQue, GSM8K, SVAMP,
/// MultiArith, CSQA, CSQA2.0, QASC.
pub const SINGLE_EXPERT_EM: [[f64; 12]; 4] = [
    [42.8, 72.3, 30.0, 37.0, 27.0, 12.5, 11.8, 53.5, 32.2, 46.6, 62.0, 33.1],
    [34.8, 61.3, 19.0, 34.3, 46.3, 15.5, 37.5, 70.5, 75.9, 55.2, 62.5, 54.1],
    [21.0, 59.8, 13.8, 22.5, 34.0, 7.5, 61.8, 74.5, 92.2, 51.1, 58.0, 57.9],
    [32.5, 64.0, 16.3, 31.3, 38.5, 10.8, 41.5, 72.5, 75.4, 78.4, 65.3, 68.9],
];

pub const DATASET_IDS: [(&str, ReasoningType); 12] = [
    ("nq", ReasoningType::Factual),
    ("tqa", ReasoningType::Factual),
    ("squad", ReasoningType::Factual),
    ("hqa", ReasoningType::Multihop),
    ("beerqa3", ReasoningType::Multihop),
    ("musique", ReasoningType::Multihop),
    ("gsm8k", ReasoningType::Math),
    ("svamp", ReasoningType::Math),
    ("multiarith", ReasoningType::Math),
    ("csqa", ReasoningType::Commonsense),
    ("csqa2", ReasoningType::Commonsense),
    ("qasc", ReasoningType::Commonsense),
];

pub fn default_config() -> SimConfig {
    let datasets = DATASET_IDS
        .iter()
        .enumerate()
        .map(|(d, &(id, t))| SimDataset {
            id: id.to_string(),
            reasoning_type: t,
            n_train: default_train(),
            n_dev: default_dev(),
            n_test: default_test(),
            accuracy: [0, 1, 2, 3].map(|e| SINGLE_EXPERT_EM[e][d] / 100.0),
        })
        .collect();
    SimConfig {
        datasets,
        agreement_boost: 0.3,
        error_correlation: 0.5,
        confidence_gap: 0.2,
        expert_logprob_bias: [0.0, -0.1, 0.3, -0.15],
        type_signal: 0.8,
        seed: 0,
    }
}

impl SimConfig {
    /// Reads TOML (by `.toml` extension) or JSON. Missing fields take
    /// their [`default_config`] values.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: SimConfig = if path.extension().is_some_and(|x| x == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return bad("at least one dataset is required".into());
        }
        let mut ids = HashSet::new();
        for d in &self.datasets {
            if !ids.insert(d.id.as_str()) {
                return bad(format!("duplicate dataset id `{}`", d.id));
            }
            if d.n_train == 0 || d.n_dev == 0 || d.n_test == 0 {
                return bad(format!("dataset `{}` needs at least one question per split", d.id));
            }
            if d.accuracy.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return bad(format!("dataset `{}` has an accuracy outside [0, 1]", d.id));
            }
        }
        for (name, v) in [
            ("agreement_boost", self.agreement_boost),
            ("error_correlation", self.error_correlation),
            ("type_signal", self.type_signal),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(self.confidence_gap >= 0.0 && self.confidence_gap.is_finite()) {
            return bad(format!("confidence_gap = {} must be >= 0", self.confidence_gap));
        }
        if self.expert_logprob_bias.iter().any(|b| !b.is_finite()) {
            return bad("expert_logprob_bias must be finite".into());
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "zi", "pa", "de", "gu"];
const FILLER_WORDS: usize = 600;
const ANSWER_WORDS: usize = 12 * 12 * 12 - FILLER_WORDS;
const ALIAS_SUFFIX: [&str; 4] = ["en", "is", "ar", "os"];
const POOL_SIZE: usize = 150;
const LOGPROB_BASE: f64 = -1.2;
const LOGPROB_SPREAD: f64 = 0.35;

/// Three-syllable pseudo-word; indices below `FILLER_WORDS` are question
/// filler, the rest are answer vocabulary.
fn word(i: usize) -> String {
    let i = i % (12 * 12 * 12);
    format!("{}{}{}", SYLLABLES[i / 144], SYLLABLES[(i / 12) % 12], SYLLABLES[i % 12])
}

fn filler(r: &mut Rng) -> String {
    word(r.random_range(0..FILLER_WORDS))
}

fn answer_token(r: &mut Rng, math: bool) -> String {
    if math {
        r.random_range(2..1000).to_string()
    } else {
        word(FILLER_WORDS + r.random_range(0..ANSWER_WORDS))
    }
}

fn pick<'a>(r: &mut Rng, weighted: &[(&'a str, f64)]) -> &'a str {
    let mut u: f64 = r.random();
    for &(w, p) in weighted {
        if u < p {
            return w;
        }
        u -= p;
    }
    weighted[weighted.len() - 1].0
}

/// Weighted lead words, word-count range, number-count range.
type Surface = (&'static [(&'static str, f64)], (usize, usize), (usize, usize));

fn question_text(r: &mut Rng, surface: ReasoningType) -> (String, Vec<String>) {
    let (qwords, len, numbers): Surface = match surface {
        ReasoningType::Factual => (&[("who", 0.45), ("when", 0.3), ("where", 0.25)], (6, 10), (0, 0)),
        ReasoningType::Multihop => (&[("which", 0.5), ("what", 0.25), ("who", 0.25)], (12, 18), (0, 0)),
        ReasoningType::Math => (&[("how", 0.65), ("what", 0.35)], (10, 16), (2, 4)),
        ReasoningType::Commonsense => (&[("what", 0.45), ("why", 0.3), ("where", 0.25)], (5, 9), (0, 0)),
    };
    let qword = pick(r, qwords);
    let n = r.random_range(len.0..=len.1);
    let mut body: Vec<String> = (0..n).map(|_| filler(r)).collect();
    if surface == ReasoningType::Multihop {
        let at = r.random_range(1..body.len());
        body.insert(at, "and".into());
    }
    let mut nums = Vec::new();
    for _ in 0..r.random_range(numbers.0..=numbers.1) {
        let x = r.random_range(2..100).to_string();
        let at = r.random_range(0..=body.len());
        body.insert(at, x.clone());
        nums.push(x);
    }
    let mut text = String::new();
    let mut chars = qword.chars();
    if let Some(c) = chars.next() {
        text.extend(c.to_uppercase());
        text.push_str(chars.as_str());
    }
    for w in &body {
        text.push(' ');
        text.push_str(w);
    }
    text.push('?');
    (text, nums)
}

fn logprobs(r: &mut Rng, mean: f64, n: usize) -> Vec<f64> {
    let jitter = Normal::new(0.0, 0.1).expect("valid normal");
    (0..n).map(|_| (mean + jitter.sample(r)).min(0.0)).collect()
}

struct QuestionDraft<'a> {
    cfg: &'a SimConfig,
    dataset: &'a SimDataset,
    pool: &'a [String],
}

impl QuestionDraft<'_> {
    fn generate(&self, r: &mut Rng, id: String) -> PredictionSet {
        let t = self.dataset.reasoning_type;
        let math = t == ReasoningType::Math;
        let surface = if r.random::<f64>() < self.cfg.type_signal {
            t
        } else {
            ReasoningType::ALL[r.random_range(0..4)]
        };
        let (text, numbers) = question_text(r, surface);
        let q_tokens: Vec<&str> = text.trim_end_matches('?').split(' ').skip(1).collect();

        let gold = answer_token(r, math);
        let aliases: Vec<String> = ALIAS_SUFFIX.iter().map(|s| format!("{gold}{s}")).collect();
        let shared = loop {
            let d = &self.pool[r.random_range(0..self.pool.len())];
            if *d != gold {
                break d.clone();
            }
        };
        let consensus = r.random::<f64>() < self.cfg.agreement_boost;
        let copy_rate = self.cfg.agreement_boost * self.cfg.error_correlation;
        let spread = Normal::new(0.0, LOGPROB_SPREAD).expect("valid normal");

        let preds = ExpertId::ALL
            .iter()
            .map(|&e| {
                let correct = r.random::<f64>() < self.dataset.accuracy[e.index()];
                let answer = if correct {
                    if consensus { gold.clone() } else { aliases[e.index()].clone() }
                } else if r.random::<f64>() < copy_rate {
                    shared.clone()
                } else {
                    loop {
                        let d = &self.pool[r.random_range(0..self.pool.len())];
                        if *d != gold {
                            break d.clone();
                        }
                    }
                };
                let mean = LOGPROB_BASE
                    + self.cfg.expert_logprob_bias[e.index()]
                    + if correct { self.cfg.confidence_gap } else { 0.0 }
                    + spread.sample(r);
                let n_tokens = r.random_range(1..=3);
                let answer_token_logprobs = logprobs(r, mean, n_tokens);

                let (rationale_text, rationale_token_logprobs) = match e {
                    ExpertId::Multihop | ExpertId::Math => {
                        let mut words: Vec<String> = (0..r.random_range(3..=5))
                            .map(|_| q_tokens[r.random_range(0..q_tokens.len())].to_string())
                            .collect();
                        words.extend((0..r.random_range(4..=8)).map(|_| filler(r)));
                        if e == ExpertId::Math {
                            words.extend(numbers.iter().cloned());
                            words.push(r.random_range(2..1000).to_string());
                        }
                        let text = format!("{} so the answer is {answer}", words.join(" "));
                        let n = text.split_whitespace().count();
                        let lp = logprobs(r, -0.5, n);
                        (Some(text), Some(lp))
                    }
                    _ => (None, None),
                };
                let context_passages = match e {
                    ExpertId::Factual | ExpertId::Commonsense => {
                        let count = if e == ExpertId::Factual { 2 } else { 1 };
                        Some(
                            (0..count)
                                .map(|_| {
                                    let mut w: Vec<String> =
                                        (0..r.random_range(10..=16)).map(|_| filler(r)).collect();
                                    for _ in 0..r.random_range(2..=4) {
                                        w.push(q_tokens[r.random_range(0..q_tokens.len())].to_string());
                                    }
                                    if r.random::<f64>() < 0.5 {
                                        w.push(answer.clone());
                                    }
                                    w.join(" ")
                                })
                                .collect(),
                        )
                    }
                    _ => None,
                };
                ExpertPrediction {
                    question_id: id.clone(),
                    expert: e,
                    answer_text: answer,
                    rationale_text,
                    context_passages,
                    answer_token_logprobs,
                    rationale_token_logprobs,
                }
            })
            .collect();

        let mut gold_answers = vec![gold];
        gold_answers.extend(aliases);
        let question = Question {
            id,
            dataset_id: self.dataset.id.clone(),
            text,
            gold_answers,
            reasoning_type: Some(t),
        };
        PredictionSet::new(question, preds).expect("simulator emits complete sets")
    }
}

fn generate_dataset(cfg: &SimConfig, index: usize) -> Dataset {
    let spec = &cfg.datasets[index];
    let seed = rng::child_seed(cfg.seed, index as u64);
    let mut r = rng::rng(rng::child_seed(seed, u64::MAX));
    let math = spec.reasoning_type == ReasoningType::Math;
    let mut pool = Vec::with_capacity(POOL_SIZE);
    while pool.len() < POOL_SIZE {
        let a = answer_token(&mut r, math);
        if !pool.contains(&a) {
            pool.push(a);
        }
    }
    let draft = QuestionDraft {
        cfg,
        dataset: spec,
        pool: &pool,
    };
    let mut out = Dataset::new(spec.id.clone(), Some(spec.reasoning_type));
    let mut j = 0u64;
    for (split, n) in [(Split::Train, spec.n_train), (Split::Dev, spec.n_dev), (Split::Test, spec.n_test)] {
        for _ in 0..n {
            let mut qr = rng::rng(rng::child_seed(seed, j));
            let ps = draft.generate(&mut qr, format!("{}-{j:05}", spec.id));
            out.split_mut(split).push(ps);
            j += 1;
        }
    }
    out
}

pub fn generate_benchmark(cfg: &SimConfig) -> Result<Benchmark> {
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    let datasets = {
        use rayon::prelude::*;
        (0..cfg.datasets.len())
            .into_par_iter()
            .map(|i| generate_dataset(cfg, i))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let datasets = (0..cfg.datasets.len()).map(|i| generate_dataset(cfg, i)).collect();
    Ok(Benchmark { datasets })
}
