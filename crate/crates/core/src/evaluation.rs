//! Flags versus human labels.
//!
//! Label file format (CSV, header required, booleans as `0`/`1`):
//!
//! ```text
//! utterance_index,speaker,is_duplicate,is_parasite
//! 12,SPEAKER_00,0,1
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::duplicate::DuplicateScore;
use crate::parasite::ParasiteFlags;
use crate::transcript::Transcript;

pub const LABEL_HEADER: [&str; 4] = ["utterance_index", "speaker", "is_duplicate", "is_parasite"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluationError {
    #[error("labels reference unknown utterances: {0:?}")]
    DanglingLabels(Vec<u64>),
    #[error("utterances labeled more than once: {0:?}")]
    DuplicateLabels(Vec<u64>),
    #[error("label speaker does not match transcript for utterances: {0:?}")]
    SpeakerMismatch(Vec<u64>),
    #[error("no labels")]
    NoLabels,
    #[error("label file line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("confusion matrix bookkeeping mismatch for {0}")]
    Bookkeeping(Task),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub utterance_index: u64,
    pub speaker: String,
    pub is_duplicate: bool,
    pub is_parasite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Duplicates,
    Parasite,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Duplicates => "duplicates",
            Self::Parasite => "parasite",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: Task,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl TaskMetrics {
    /// Derives the metrics from confusion counts. Zero denominators give 0.
    pub fn from_counts(task: Task, tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            task,
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub labeled: usize,
    pub duplicates: TaskMetrics,
    pub parasite: TaskMetrics,
}

/// Per-utterance binary predictions for both tasks. Utterances missing from a
/// map are predicted negative.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub duplicates: BTreeMap<u64, bool>,
    pub parasite: BTreeMap<u64, bool>,
}

impl Predictions {
    pub fn from_flags(scores: &[DuplicateScore], parasite: &[ParasiteFlags]) -> Self {
        Self {
            duplicates: scores
                .iter()
                .map(|s| (s.utterance_index, s.flagged))
                .collect(),
            parasite: parasite
                .iter()
                .flat_map(|f| f.entries.iter())
                .map(|e| (e.utterance_index, e.flagged))
                .collect(),
        }
    }

    fn get(&self, task: Task, index: u64) -> bool {
        let map = match task {
            Task::Duplicates => &self.duplicates,
            Task::Parasite => &self.parasite,
        };
        map.get(&index).copied().unwrap_or(false)
    }
}

fn validate(t: &Transcript, labels: &[GroundTruthLabel]) -> Result<(), EvaluationError> {
    if labels.is_empty() {
        return Err(EvaluationError::NoLabels);
    }
    let mut seen = BTreeSet::new();
    let mut repeated = BTreeSet::new();
    let mut dangling = BTreeSet::new();
    let mut mismatched = BTreeSet::new();
    for l in labels {
        if !seen.insert(l.utterance_index) {
            repeated.insert(l.utterance_index);
        }
        match t.get(l.utterance_index) {
            None => {
                dangling.insert(l.utterance_index);
            }
            Some(u) if u.speaker != l.speaker => {
                mismatched.insert(l.utterance_index);
            }
            Some(_) => {}
        }
    }
    if !dangling.is_empty() {
        return Err(EvaluationError::DanglingLabels(dangling.into_iter().collect()));
    }
    if !repeated.is_empty() {
        return Err(EvaluationError::DuplicateLabels(repeated.into_iter().collect()));
    }
    if !mismatched.is_empty() {
        return Err(EvaluationError::SpeakerMismatch(mismatched.into_iter().collect()));
    }
    Ok(())
}

fn task_metrics(
    task: Task,
    predictions: &Predictions,
    labels: &[GroundTruthLabel],
) -> Result<TaskMetrics, EvaluationError> {
    let truth = |l: &GroundTruthLabel| match task {
        Task::Duplicates => l.is_duplicate,
        Task::Parasite => l.is_parasite,
    };
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for l in labels {
        match (predictions.get(task, l.utterance_index), truth(l)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    // Recount the margins independently and check they balance.
    let predicted_pos = labels
        .iter()
        .filter(|l| predictions.get(task, l.utterance_index))
        .count() as u64;
    let actual_pos = labels.iter().filter(|l| truth(l)).count() as u64;
    let total = labels.len() as u64;
    if tp + fp != predicted_pos
        || tp + fn_ != actual_pos
        || tp + fp + tn + fn_ != total
        || tn + fn_ != total - predicted_pos
    {
        return Err(EvaluationError::Bookkeeping(task));
    }
    Ok(TaskMetrics::from_counts(task, tp, fp, tn, fn_))
}

/// Confusion-matrix metrics over the labeled utterances of `t`.
pub fn evaluate(
    t: &Transcript,
    predictions: &Predictions,
    labels: &[GroundTruthLabel],
) -> Result<EvaluationReport, EvaluationError> {
    validate(t, labels)?;
    Ok(EvaluationReport {
        labeled: labels.len(),
        duplicates: task_metrics(Task::Duplicates, predictions, labels)?,
        parasite: task_metrics(Task::Parasite, predictions, labels)?,
    })
}

fn parse_bool(field: &str, line: u64, column: &str) -> Result<bool, EvaluationError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(EvaluationError::Parse {
            line,
            reason: format!("{column} must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Reads a label file. An empty file, or one with only the header, is an error.
pub fn parse_labels<R: Read>(raw: R) -> Result<Vec<GroundTruthLabel>, EvaluationError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let headers = reader.headers().map_err(|e| EvaluationError::Parse {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(EvaluationError::NoLabels);
    }
    if headers.iter().ne(LABEL_HEADER) {
        return Err(EvaluationError::Parse {
            line: 1,
            reason: format!("expected header {:?}", LABEL_HEADER.join(",")),
        });
    }
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| EvaluationError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let utterance_index = record[0].parse().map_err(|_| EvaluationError::Parse {
            line,
            reason: format!("bad utterance index {:?}", &record[0]),
        })?;
        if record[1].is_empty() {
            return Err(EvaluationError::Parse {
                line,
                reason: "empty speaker".into(),
            });
        }
        labels.push(GroundTruthLabel {
            utterance_index,
            speaker: record[1].to_string(),
            is_duplicate: parse_bool(&record[2], line, "is_duplicate")?,
            is_parasite: parse_bool(&record[3], line, "is_parasite")?,
        });
    }
    if labels.is_empty() {
        return Err(EvaluationError::NoLabels);
    }
    Ok(labels)
}

/// Writes labels in the file format read by [`parse_labels`].
pub fn write_labels(labels: &[GroundTruthLabel]) -> String {
    let mut out = LABEL_HEADER.join(",");
    out.push('\n');
    for l in labels {
        out.push_str(&format!(
            "{},{},{},{}\n",
            l.utterance_index,
            l.speaker,
            u8::from(l.is_duplicate),
            u8::from(l.is_parasite)
        ));
    }
    out
}
