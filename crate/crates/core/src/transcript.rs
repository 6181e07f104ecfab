//! Speaker-diarized transcript logs.
//!
//! A log is line oriented. Every non-blank line has the shape
//!
//! ```text
//! 012 - [113.055:113.855] SPEAKER_00 Zyra is doing golem.
//! ```
//!
//! i.e. an ordinal, a `[start:end]` span in seconds, a speaker label and the
//! sentence text. Digit counts are free (`074.86`, `0074.4` are both fine).

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

const LINE_PATTERN: &str = r"^\s*(\d+)\s*-\s*\[([0-9.]+):([0-9.]+)\]\s+(\S+)\s+(.+)$";

fn line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(LINE_PATTERN).expect("static pattern"))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TranscriptError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: start {start_s} is after end {end_s}")]
    InvertedSpan { line: usize, start_s: f64, end_s: f64 },
    #[error("line {line}: empty utterance text")]
    EmptyText { line: usize },
    #[error("line {line}: index {index} does not follow previous index {previous}")]
    IndexOrder {
        line: usize,
        index: u64,
        previous: u64,
    },
    #[error("unknown speaker {0:?}")]
    UnknownSpeaker(String),
    #[error("utterance {index} is not part of the view for {speaker:?}")]
    NotInView { index: u64, speaker: String },
    #[error("window length must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("read failed: {0}")]
    Io(String),
}

impl TranscriptError {
    /// Line number the error refers to, when it came from parsing.
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Parse { line, .. }
            | Self::InvertedSpan { line, .. }
            | Self::EmptyText { line }
            | Self::IndexOrder { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker: String,
    pub text: String,
}

impl Utterance {
    /// Builds an utterance, checking the span and text invariants.
    pub fn new(
        index: u64,
        start_s: f64,
        end_s: f64,
        speaker: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self, TranscriptError> {
        let utterance = Self {
            index,
            start_s,
            end_s,
            speaker: speaker.into(),
            text: text.into().trim().to_string(),
        };
        utterance.validate(0)?;
        Ok(utterance)
    }

    fn validate(&self, line: usize) -> Result<(), TranscriptError> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) || self.start_s < 0.0 {
            return Err(TranscriptError::Parse {
                line,
                reason: format!("invalid timestamps {}:{}", self.start_s, self.end_s),
            });
        }
        if self.start_s > self.end_s {
            return Err(TranscriptError::InvertedSpan {
                line,
                start_s: self.start_s,
                end_s: self.end_s,
            });
        }
        if self.text.trim().is_empty() {
            return Err(TranscriptError::EmptyText { line });
        }
        if self.text.contains(['\n', '\r']) {
            return Err(TranscriptError::Parse {
                line,
                reason: "utterance text spans several lines".to_string(),
            });
        }
        if self.speaker.is_empty() || self.speaker.chars().any(char::is_whitespace) {
            return Err(TranscriptError::Parse {
                line,
                reason: format!("invalid speaker label {:?}", self.speaker),
            });
        }
        Ok(())
    }

    /// Renders the utterance back into log-line form.
    pub fn to_log_line(&self) -> String {
        format!(
            "{:03} - [{}:{}] {} {}",
            self.index, self.start_s, self.end_s, self.speaker, self.text
        )
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_log_line())
    }
}

/// An ordered conversation. Indices are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Utterance>", into = "Vec<Utterance>")]
pub struct Transcript {
    utterances: Vec<Utterance>,
    speakers: BTreeSet<String>,
}

impl Transcript {
    pub fn from_utterances(utterances: Vec<Utterance>) -> Result<Self, TranscriptError> {
        let mut previous: Option<u64> = None;
        for (pos, u) in utterances.iter().enumerate() {
            u.validate(pos + 1)?;
            if let Some(prev) = previous {
                if u.index <= prev {
                    return Err(TranscriptError::IndexOrder {
                        line: pos + 1,
                        index: u.index,
                        previous: prev,
                    });
                }
            }
            previous = Some(u.index);
        }
        let speakers = utterances.iter().map(|u| u.speaker.clone()).collect();
        Ok(Self {
            utterances,
            speakers,
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn speakers(&self) -> &BTreeSet<String> {
        &self.speakers
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, index: u64) -> Option<&Utterance> {
        self.utterances
            .binary_search_by_key(&index, |u| u.index)
            .ok()
            .map(|pos| &self.utterances[pos])
    }

    /// Serializes back to the log format accepted by [`parse_transcript`].
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            out.push_str(&u.to_log_line());
            out.push('\n');
        }
        out
    }

    /// All utterances, any speaker, that started in `[u.start_s - window_s, u.start_s)`
    /// and precede `u` in the log.
    pub fn context_before(&self, u: &Utterance, window_s: f64) -> Vec<&Utterance> {
        self.utterances
            .iter()
            .take_while(|s| s.index < u.index)
            .filter(|s| in_window(s, u, window_s))
            .collect()
    }
}

impl TryFrom<Vec<Utterance>> for Transcript {
    type Error = TranscriptError;

    fn try_from(utterances: Vec<Utterance>) -> Result<Self, Self::Error> {
        Self::from_utterances(utterances)
    }
}

impl From<Transcript> for Vec<Utterance> {
    fn from(t: Transcript) -> Self {
        t.utterances
    }
}

/// A transcript restricted to one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerView<'t> {
    speaker: String,
    utterances: Vec<&'t Utterance>,
}

impl<'t> SpeakerView<'t> {
    pub fn speaker(&self) -> &str {
        &self.speaker
    }

    pub fn utterances(&self) -> &[&'t Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    fn position_of(&self, u: &Utterance) -> Option<usize> {
        self.utterances
            .binary_search_by_key(&u.index, |s| s.index)
            .ok()
            .filter(|&pos| self.utterances[pos] == u)
    }
}

/// Outcome of a lenient parse: the good lines plus the errors for every skipped one.
#[derive(Debug, Clone, Default)]
pub struct LenientParse {
    pub transcript: Transcript,
    pub skipped: Vec<TranscriptError>,
}

impl LenientParse {
    pub fn skip_count(&self) -> usize {
        self.skipped.len()
    }
}

fn parse_line(line_no: usize, line: &str) -> Result<Utterance, TranscriptError> {
    let caps = line_regex()
        .captures(line)
        .ok_or_else(|| TranscriptError::Parse {
            line: line_no,
            reason: "expected `NNN - [START:END] SPEAKER text`".to_string(),
        })?;
    let index = caps[1].parse::<u64>().map_err(|e| TranscriptError::Parse {
        line: line_no,
        reason: format!("bad index: {e}"),
    })?;
    let seconds = |s: &str, what: &str| {
        s.parse::<f64>().map_err(|_| TranscriptError::Parse {
            line: line_no,
            reason: format!("bad {what} timestamp {s:?}"),
        })
    };
    let start_s = seconds(&caps[2], "start")?;
    let end_s = seconds(&caps[3], "end")?;
    let utterance = Utterance {
        index,
        start_s,
        end_s,
        speaker: caps[4].to_string(),
        text: caps[5].trim().to_string(),
    };
    utterance.validate(line_no)?;
    Ok(utterance)
}

fn parse_lines<R: BufRead>(
    raw: R,
    lenient: bool,
) -> Result<(Vec<Utterance>, Vec<TranscriptError>), TranscriptError> {
    let mut utterances: Vec<Utterance> = Vec::new();
    let mut skipped = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| TranscriptError::Io(e.to_string()))?;
        // `lines()` already strips "\n" and "\r\n"; a lone trailing '\r' can remain on odd inputs.
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(line_no, line).and_then(|u| match utterances.last() {
            Some(prev) if u.index <= prev.index => Err(TranscriptError::IndexOrder {
                line: line_no,
                index: u.index,
                previous: prev.index,
            }),
            _ => Ok(u),
        });
        match parsed {
            Ok(u) => utterances.push(u),
            Err(e) if lenient => skipped.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok((utterances, skipped))
}

/// Parses a transcript log, failing on the first bad line.
pub fn parse_transcript<R: BufRead>(raw: R) -> Result<Transcript, TranscriptError> {
    let (utterances, _) = parse_lines(raw, false)?;
    Transcript::from_utterances(utterances)
}

/// Parses a transcript log, skipping bad lines and reporting them.
pub fn parse_transcript_lenient<R: BufRead>(raw: R) -> Result<LenientParse, TranscriptError> {
    let (utterances, skipped) = parse_lines(raw, true)?;
    Ok(LenientParse {
        transcript: Transcript::from_utterances(utterances)?,
        skipped,
    })
}

pub fn parse_transcript_str(raw: &str) -> Result<Transcript, TranscriptError> {
    parse_transcript(raw.as_bytes())
}

pub fn speaker_view<'t>(
    t: &'t Transcript,
    speaker: &str,
) -> Result<SpeakerView<'t>, TranscriptError> {
    if !t.speakers.contains(speaker) {
        return Err(TranscriptError::UnknownSpeaker(speaker.to_string()));
    }
    Ok(SpeakerView {
        speaker: speaker.to_string(),
        utterances: t.utterances.iter().filter(|u| u.speaker == speaker).collect(),
    })
}

// Half-open on the right so an utterance never matches itself or a same-time peer.
fn in_window(s: &Utterance, u: &Utterance, window_s: f64) -> bool {
    s.start_s >= u.start_s - window_s && s.start_s < u.start_s
}

/// Prior utterances of the same speaker that started within `window_s` seconds
/// before `u` started.
pub fn window_before<'t>(
    v: &SpeakerView<'t>,
    u: &Utterance,
    window_s: f64,
) -> Result<Vec<&'t Utterance>, TranscriptError> {
    if window_s.is_nan() || window_s <= 0.0 {
        return Err(TranscriptError::InvalidWindow(window_s));
    }
    let pos = v.position_of(u).ok_or_else(|| TranscriptError::NotInView {
        index: u.index,
        speaker: v.speaker.clone(),
    })?;
    Ok(v.utterances[..pos]
        .iter()
        .copied()
        .filter(|s| in_window(s, u, window_s))
        .collect())
}
