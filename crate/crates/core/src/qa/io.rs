//! Expert-log JSONL ingestion and export.
//!
//! One JSON object per (question, expert) pair. A benchmark on disk is
//! either a single `.jsonl` file or a directory of them, read in filename
//! order.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{
    Benchmark, Dataset, ExpertId, ExpertPrediction, PredictionSet, Question, ReasoningType, Split,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub question_id: String,
    pub dataset_id: String,
    pub split: Split,
    pub reasoning_type: Option<ReasoningType>,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub expert: ExpertId,
    pub answer: String,
    #[serde(default)]
    pub rationale: Option<String>,
    #[serde(default)]
    pub passages: Option<Vec<String>>,
    pub answer_logprobs: Vec<f64>,
    #[serde(default)]
    pub rationale_logprobs: Option<Vec<f64>>,
}

impl LogRecord {
    pub fn from_parts(split: Split, q: &Question, p: &ExpertPrediction) -> Self {
        LogRecord {
            question_id: q.id.clone(),
            dataset_id: q.dataset_id.clone(),
            split,
            reasoning_type: q.reasoning_type,
            question: q.text.clone(),
            gold_answers: q.gold_answers.clone(),
            expert: p.expert,
            answer: p.answer_text.clone(),
            rationale: p.rationale_text.clone(),
            passages: p.context_passages.clone(),
            answer_logprobs: p.answer_token_logprobs.clone(),
            rationale_logprobs: p.rationale_token_logprobs.clone(),
        }
    }

    fn question(&self) -> Question {
        Question {
            id: self.question_id.clone(),
            dataset_id: self.dataset_id.clone(),
            text: self.question.clone(),
            gold_answers: self.gold_answers.clone(),
            reasoning_type: self.reasoning_type,
        }
    }

    fn prediction(&self) -> ExpertPrediction {
        ExpertPrediction {
            question_id: self.question_id.clone(),
            expert: self.expert,
            answer_text: self.answer.clone(),
            rationale_text: self.rationale.clone(),
            context_passages: self.passages.clone(),
            answer_token_logprobs: self.answer_logprobs.clone(),
            rationale_token_logprobs: self.rationale_logprobs.clone(),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.question_id.is_empty() {
            return Err("empty question_id".into());
        }
        if self.question.trim().is_empty() {
            return Err("empty question text".into());
        }
        if self.gold_answers.is_empty() {
            return Err("gold_answers must be non-empty".into());
        }
        self.prediction().validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Location {
    file: PathBuf,
    line: usize,
}

impl Location {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Ingest {
            file: self.file.clone(),
            line: self.line,
            message: message.into(),
        }
    }
}

struct Pending {
    first: Location,
    split: Split,
    question: Question,
    predictions: Vec<ExpertPrediction>,
}

fn log_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!(
            "no .jsonl files under {}",
            path.display()
        )));
    }
    Ok(files)
}

/// Reads and validates a benchmark. Every error names the file and line of
/// the offending record.
pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Benchmark> {
    let path = path.as_ref();
    let mut pending: IndexMap<String, Pending> = IndexMap::new();
    let mut dataset_order: IndexMap<String, ()> = IndexMap::new();

    for file in log_files(path)? {
        let reader = BufReader::new(File::open(&file)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let loc = Location {
                file: file.clone(),
                line: idx + 1,
            };
            let rec: LogRecord = serde_json::from_str(&line)
                .map_err(|e| loc.error(format!("malformed record: {e}")))?;
            rec.check().map_err(|m| loc.error(m))?;
            dataset_order.entry(rec.dataset_id.clone()).or_insert(());

            match pending.get_mut(&rec.question_id) {
                None => {
                    pending.insert(
                        rec.question_id.clone(),
                        Pending {
                            first: loc,
                            split: rec.split,
                            question: rec.question(),
                            predictions: vec![rec.prediction()],
                        },
                    );
                }
                Some(p) => {
                    if p.split != rec.split {
                        return Err(loc.error(format!(
                            "partition overlap: question `{}` appears in both {} and {}",
                            rec.question_id, p.split, rec.split
                        )));
                    }
                    if p.question != rec.question() {
                        return Err(loc.error(format!(
                            "inconsistent question fields for `{}` (first seen at line {})",
                            rec.question_id, p.first.line
                        )));
                    }
                    if p.predictions.iter().any(|x| x.expert == rec.expert) {
                        return Err(loc.error(format!(
                            "duplicate {} prediction for question `{}`",
                            rec.expert, rec.question_id
                        )));
                    }
                    p.predictions.push(rec.prediction());
                }
            }
        }
    }

    if pending.is_empty() {
        return Err(Error::Empty(format!("no records in {}", path.display())));
    }

    let mut datasets: IndexMap<String, Dataset> = dataset_order
        .keys()
        .map(|id| (id.clone(), Dataset::new(id.clone(), None)))
        .collect();
    let mut labels: HashMap<String, Vec<Option<ReasoningType>>> = HashMap::new();
    for (_, p) in pending {
        labels
            .entry(p.question.dataset_id.clone())
            .or_default()
            .push(p.question.reasoning_type);
        let dataset_id = p.question.dataset_id.clone();
        let ps = PredictionSet::new(p.question, p.predictions).map_err(|e| {
            let msg = match e {
                Error::Contract(m) => m,
                other => other.to_string(),
            };
            p.first.error(msg)
        })?;
        datasets[&dataset_id].split_mut(p.split).push(ps);
    }
    for d in datasets.values_mut() {
        let ls = &labels[&d.id];
        if let Some(first) = ls[0] {
            if ls.iter().all(|l| *l == Some(first)) {
                d.reasoning_type = Some(first);
            }
        }
    }
    Ok(Benchmark {
        datasets: datasets.into_values().collect(),
    })
}

fn file_stem(idx: usize, id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{idx:04}_{safe}.jsonl")
}

/// Writes one JSONL file per dataset into `dir`, in an order that
/// [`load_benchmark`] reproduces exactly.
pub fn save_benchmark(bench: &Benchmark, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(bench.datasets.len());
    for (idx, d) in bench.datasets.iter().enumerate() {
        let path = dir.join(file_stem(idx, &d.id));
        let mut w = BufWriter::new(File::create(&path)?);
        for split in Split::ALL {
            for ps in d.split(split) {
                for p in ps.predictions() {
                    serde_json::to_writer(&mut w, &LogRecord::from_parts(split, &ps.question, p))?;
                    w.write_all(b"\n")?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
