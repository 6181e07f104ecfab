//! Duplicate-communication scores.
//!
//! Each utterance is compared with every utterance the same speaker started in
//! the preceding `window_s` seconds; its score is the highest absolute cosine
//! similarity found, and it is flagged once that score reaches the threshold.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_sim, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::transcript::{speaker_view, window_before, SpeakerView, Transcript, Utterance};
use crate::Error;

pub const DEFAULT_WINDOW_S: f64 = 15.0;
pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDuplicateConfig")]
pub struct DuplicateConfig {
    pub window_s: f64,
    pub threshold: f64,
}

#[derive(Deserialize)]
struct RawDuplicateConfig {
    window_s: f64,
    threshold: f64,
}

impl TryFrom<RawDuplicateConfig> for DuplicateConfig {
    type Error = Error;

    fn try_from(raw: RawDuplicateConfig) -> Result<Self, Error> {
        Self::new(raw.window_s, raw.threshold)
    }
}

impl Default for DuplicateConfig {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl DuplicateConfig {
    pub fn new(window_s: f64, threshold: f64) -> Result<Self, Error> {
        if !(window_s.is_finite() && window_s > 0.0) {
            return Err(Error::Config(format!("window must be > 0 s, got {window_s}")));
        }
        check_threshold(threshold)?;
        Ok(Self {
            window_s,
            threshold,
        })
    }
}

pub(crate) fn check_threshold(threshold: f64) -> Result<(), Error> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateScore {
    pub utterance_index: u64,
    pub speaker: String,
    pub score: f64,
    /// Prior utterance achieving the score; `None` when the window was empty.
    pub best_match_index: Option<u64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateSummary {
    pub count: usize,
    pub flagged_count: usize,
    pub flagged_ratio: f64,
    pub mean_score: f64,
}

fn best_in_window<'a>(
    target: &EmbeddingVector,
    window: impl IntoIterator<Item = (u64, &'a EmbeddingVector)>,
) -> Result<(f64, Option<u64>), EmbeddingError> {
    let mut best: Option<(f64, u64)> = None;
    for (index, embedding) in window {
        let sim = cosine_sim(target, embedding)?;
        // Strict comparison keeps the earliest utterance on ties.
        if best.is_none_or(|(score, _)| sim > score) {
            best = Some((sim, index));
        }
    }
    Ok(best.map_or((0.0, None), |(score, index)| (score, Some(index))))
}

fn make_score(u: &Utterance, score: f64, best: Option<u64>, cfg: &DuplicateConfig) -> DuplicateScore {
    DuplicateScore {
        utterance_index: u.index,
        speaker: u.speaker.clone(),
        score,
        best_match_index: best,
        flagged: score >= cfg.threshold,
    }
}

/// Scores a single utterance against its own window.
pub fn score_utterance<P: EmbeddingProvider + ?Sized>(
    v: &SpeakerView<'_>,
    u: &Utterance,
    cfg: &DuplicateConfig,
    p: &P,
) -> Result<DuplicateScore, Error> {
    let window = window_before(v, u, cfg.window_s)?;
    if window.is_empty() {
        return Ok(make_score(u, 0.0, None, cfg));
    }
    let attach = |utterance_index: u64| {
        move |source: EmbeddingError| Error::Utterance {
            utterance_index,
            source,
        }
    };
    let target = p.embed(&u.text).map_err(attach(u.index))?;
    let mut embedded = Vec::with_capacity(window.len());
    for s in &window {
        embedded.push((s.index, p.embed(&s.text).map_err(attach(s.index))?));
    }
    let (score, best) = best_in_window(&target, embedded.iter().map(|(i, e)| (*i, e)))
        .map_err(attach(u.index))?;
    Ok(make_score(u, score, best, cfg))
}

fn embed_view<P: EmbeddingProvider + ?Sized>(
    v: &SpeakerView<'_>,
    p: &P,
) -> Result<Vec<EmbeddingVector>, Error> {
    let texts: Vec<&str> = v.utterances().iter().map(|u| u.text.as_str()).collect();
    p.embed_batch(&texts).map_err(|e| match e {
        EmbeddingError::Batch { failures } => Error::Aggregate(
            failures
                .into_iter()
                .map(|(pos, source)| Error::Utterance {
                    utterance_index: v.utterances().get(pos).map_or(pos as u64, |u| u.index),
                    source,
                })
                .collect(),
        ),
        other => Error::Embedding(other),
    })
}

fn score_view<P: EmbeddingProvider + ?Sized>(
    v: &SpeakerView<'_>,
    cfg: &DuplicateConfig,
    p: &P,
) -> Result<Vec<DuplicateScore>, Error> {
    let embeddings = embed_view(v, p)?;
    let position: HashMap<u64, usize> = v
        .utterances()
        .iter()
        .enumerate()
        .map(|(pos, u)| (u.index, pos))
        .collect();
    let mut scores = Vec::with_capacity(v.len());
    let mut failures = Vec::new();
    for (pos, u) in v.utterances().iter().enumerate() {
        let window = window_before(v, u, cfg.window_s)?;
        let pairs = window.iter().map(|s| (s.index, &embeddings[position[&s.index]]));
        match best_in_window(&embeddings[pos], pairs) {
            Ok((score, best)) => scores.push(make_score(u, score, best, cfg)),
            Err(source) => failures.push(Error::Utterance {
                utterance_index: u.index,
                source,
            }),
        }
    }
    if failures.is_empty() {
        Ok(scores)
    } else {
        Err(Error::Aggregate(failures))
    }
}

/// One score per utterance, in transcript order. Each utterance is embedded once.
pub fn score_transcript<P: EmbeddingProvider + ?Sized>(
    t: &Transcript,
    cfg: &DuplicateConfig,
    p: &P,
) -> Result<Vec<DuplicateScore>, Error> {
    let mut by_index: HashMap<u64, DuplicateScore> = HashMap::with_capacity(t.len());
    let mut failures = Vec::new();
    for speaker in t.speakers() {
        let view = speaker_view(t, speaker)?;
        match score_view(&view, cfg, p) {
            Ok(scores) => by_index.extend(scores.into_iter().map(|s| (s.utterance_index, s))),
            Err(Error::Aggregate(errs)) => failures.extend(errs),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Aggregate(failures));
    }
    Ok(t.utterances()
        .iter()
        .map(|u| by_index.remove(&u.index).expect("every utterance scored"))
        .collect())
}

/// Per-speaker rollup of duplicate scores.
pub fn duplicate_summary(scores: &[DuplicateScore]) -> BTreeMap<String, DuplicateSummary> {
    let mut acc: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for s in scores {
        let entry = acc.entry(s.speaker.clone()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(s.flagged);
        entry.2 += s.score;
    }
    acc.into_iter()
        .map(|(speaker, (count, flagged_count, total))| {
            (
                speaker,
                DuplicateSummary {
                    count,
                    flagged_count,
                    flagged_ratio: flagged_count as f64 / count as f64,
                    mean_score: total / count as f64,
                },
            )
        })
        .collect()
}
