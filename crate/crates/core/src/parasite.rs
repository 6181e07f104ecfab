//! Parasite-communication scores.
//!
//! Every utterance of a speaker is compared with each phrasing of a lexicon of
//! unwanted communication styles ("I think", "Maybe", ...). The resulting
//! phrasing x utterance grid is the interference matrix; a column whose maximum
//! reaches the threshold marks its utterance as parasite.
//!
//! Short utterances ("Okay.", "Yes.") carry little meaning on their own. When
//! refinement is enabled their embedding is recomputed with the preceding
//! conversation as context, pooling only the utterance's own tokens.

use std::collections::BTreeSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::duplicate::{check_threshold, DEFAULT_THRESHOLD};
use crate::embedding::{
    cosine_sim, ContextualRequest, EmbeddingError, EmbeddingProvider, EmbeddingVector,
};
use crate::transcript::{speaker_view, Transcript};
use crate::Error;

const DEFAULT_LEXICON: &str = include_str!("../data/parasite_phrasings.txt");

/// Ordered, duplicate-free, non-empty list of phrasings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ParasiteLexicon {
    phrasings: Vec<String>,
}

impl ParasiteLexicon {
    pub fn new(phrasings: Vec<String>) -> Result<Self, Error> {
        if phrasings.is_empty() {
            return Err(Error::Lexicon("no phrasings".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &phrasings {
            if p.trim().is_empty() {
                return Err(Error::Lexicon("empty phrasing".into()));
            }
            if !seen.insert(p.as_str()) {
                return Err(Error::Lexicon(format!("duplicate phrasing {p:?}")));
            }
        }
        Ok(Self { phrasings })
    }

    /// Reads the lexicon file format: one phrasing per line, `#` comments and
    /// blank lines ignored, surrounding whitespace trimmed.
    pub fn parse(raw: &str) -> Result<Self, Error> {
        Self::new(
            raw.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Lexicon(format!("{}: {e}", path.display())))?;
        Self::parse(&raw)
    }

    pub fn phrasings(&self) -> &[String] {
        &self.phrasings
    }

    pub fn len(&self) -> usize {
        self.phrasings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrasings.is_empty()
    }
}

impl Default for ParasiteLexicon {
    /// The twelve phrasings curated with professional coaches.
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl TryFrom<Vec<String>> for ParasiteLexicon {
    type Error = Error;

    fn try_from(phrasings: Vec<String>) -> Result<Self, Error> {
        Self::new(phrasings)
    }
}

impl From<ParasiteLexicon> for Vec<String> {
    fn from(l: ParasiteLexicon) -> Self {
        l.phrasings
    }
}

/// How the target's token embeddings are pooled during refinement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRefinementConfig")]
pub struct RefinementConfig {
    pub enabled: bool,
    /// Utterances with at most this many tokens are refined.
    pub max_target_tokens: usize,
    pub context_window_s: f64,
    pub pooling: Pooling,
}

#[derive(Deserialize)]
struct RawRefinementConfig {
    enabled: bool,
    max_target_tokens: usize,
    context_window_s: f64,
    #[serde(default)]
    pooling: Pooling,
}

impl TryFrom<RawRefinementConfig> for RefinementConfig {
    type Error = Error;

    fn try_from(raw: RawRefinementConfig) -> Result<Self, Error> {
        Self::new(raw.enabled, raw.max_target_tokens, raw.context_window_s)
            .map(|c| Self { pooling: raw.pooling, ..c })
    }
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_target_tokens: 2,
            context_window_s: 15.0,
            pooling: Pooling::Mean,
        }
    }
}

impl RefinementConfig {
    pub fn new(enabled: bool, max_target_tokens: usize, context_window_s: f64) -> Result<Self, Error> {
        if max_target_tokens == 0 {
            return Err(Error::Config("max_target_tokens must be positive".into()));
        }
        if !(context_window_s.is_finite() && context_window_s > 0.0) {
            return Err(Error::Config(format!(
                "refinement context window must be > 0 s, got {context_window_s}"
            )));
        }
        Ok(Self {
            enabled,
            max_target_tokens,
            context_window_s,
            pooling: Pooling::Mean,
        })
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

/// Number of tokens used by the refinement trigger: runs of word characters and
/// runs of punctuation each count as one token (`"Okay."` has two).
pub fn count_tokens(text: &str) -> usize {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Space,
        Word,
        Punct,
    }
    let class = |c: char| {
        if c.is_whitespace() {
            Class::Space
        } else if c.is_alphanumeric() || c == '_' {
            Class::Word
        } else {
            Class::Punct
        }
    };
    let mut count = 0;
    let mut prev = Class::Space;
    for c in text.chars() {
        let cur = class(c);
        if cur != Class::Space && cur != prev {
            count += 1;
        }
        prev = cur;
    }
    count
}

/// Phrasing x utterance similarity grid for one speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMatrix {
    pub speaker: String,
    pub phrasings: Vec<String>,
    pub utterance_indices: Vec<u64>,
    /// `cells[j][k]`: phrasing `j` against utterance `utterance_indices[k]`.
    pub cells: Vec<Vec<f64>>,
    pub refined_columns: BTreeSet<u64>,
}

impl InterferenceMatrix {
    pub fn rows(&self) -> usize {
        self.phrasings.len()
    }

    pub fn cols(&self) -> usize {
        self.utterance_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0 || self.cols() == 0
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(move |row| row[k])
    }

    /// Column maximum and the earliest phrasing row achieving it.
    pub fn column_max(&self, k: usize) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (j, v) in self.column(k).enumerate() {
            if best.is_none_or(|(m, _)| v > m) {
                best = Some((v, j));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParasiteFlag {
    pub utterance_index: u64,
    pub max_score: f64,
    pub argmax_phrasing: String,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParasiteFlags {
    pub speaker: String,
    pub threshold: f64,
    pub phrasings: Vec<String>,
    pub entries: Vec<ParasiteFlag>,
}

impl ParasiteFlags {
    pub fn flagged_count(&self) -> usize {
        self.entries.iter().filter(|e| e.flagged).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSummary {
    pub speaker: String,
    pub total_utterances: usize,
    pub flagged_count: usize,
    pub parasite_ratio: f64,
    /// Share of flagged utterances whose closest phrasing is each lexicon entry,
    /// in lexicon order. Empty when nothing was flagged.
    pub phrasing_distribution: IndexMap<String, f64>,
}

/// Similarity of one sentence with one phrasing, both embedded plainly.
pub fn pair_score<P: EmbeddingProvider + ?Sized>(
    sentence: &str,
    phrasing: &str,
    p: &P,
) -> Result<f64, Error> {
    let s = p.embed(sentence)?;
    let ph = p.embed(phrasing)?;
    Ok(cosine_sim(&s, &ph)?)
}

/// Builds the interference matrix of `speaker`.
///
/// Phrasings are always embedded plainly. An utterance is refined when
/// refinement is on, it has at most `max_target_tokens` tokens, and at least one
/// utterance (any speaker) started in the `context_window_s` seconds before it.
pub fn interference_matrix<P: EmbeddingProvider + ?Sized>(
    t: &Transcript,
    speaker: &str,
    lex: &ParasiteLexicon,
    rcfg: &RefinementConfig,
    p: &P,
) -> Result<InterferenceMatrix, Error> {
    let view = speaker_view(t, speaker)?;
    if rcfg.enabled && !p.supports_contextual() {
        return Err(Error::Embedding(EmbeddingError::Capability {
            provider: p.name().to_string(),
            capability: "contextual embedding",
        }));
    }

    let mut phrasing_vecs = Vec::with_capacity(lex.len());
    for phrasing in lex.phrasings() {
        phrasing_vecs.push(p.embed(phrasing).map_err(|source| Error::Phrasing {
            phrasing: phrasing.clone(),
            source,
        })?);
    }

    let mut refined_columns = BTreeSet::new();
    let mut columns: Vec<EmbeddingVector> = Vec::with_capacity(view.len());
    let mut failures = Vec::new();
    for u in view.utterances() {
        let context: Vec<String> = if rcfg.enabled && count_tokens(&u.text) <= rcfg.max_target_tokens {
            t.context_before(u, rcfg.context_window_s)
                .into_iter()
                .map(|s| s.text.clone())
                .collect()
        } else {
            Vec::new()
        };
        let embedded = if context.is_empty() {
            p.embed(&u.text)
        } else {
            refined_columns.insert(u.index);
            ContextualRequest::new(context, u.text.clone()).and_then(|req| p.embed_contextual(&req))
        };
        match embedded {
            Ok(v) => columns.push(v),
            Err(source) => failures.push(Error::Utterance {
                utterance_index: u.index,
                source,
            }),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Aggregate(failures));
    }

    let mut cells = vec![vec![0.0; columns.len()]; phrasing_vecs.len()];
    for (j, ph) in phrasing_vecs.iter().enumerate() {
        for (k, col) in columns.iter().enumerate() {
            cells[j][k] = cosine_sim(ph, col).map_err(|source| Error::Cell {
                phrasing: j,
                utterance_index: view.utterances()[k].index,
                source,
            })?;
        }
    }

    Ok(InterferenceMatrix {
        speaker: speaker.to_string(),
        phrasings: lex.phrasings().to_vec(),
        utterance_indices: view.utterances().iter().map(|u| u.index).collect(),
        cells,
        refined_columns,
    })
}

/// Flags every column whose maximum reaches `threshold`.
pub fn flag_parasites(m: &InterferenceMatrix, threshold: f64) -> Result<ParasiteFlags, Error> {
    check_threshold(threshold)?;
    let entries = if m.rows() == 0 {
        Vec::new()
    } else {
        (0..m.cols())
            .map(|k| {
                let (max_score, j) = m.column_max(k).expect("matrix has rows");
                ParasiteFlag {
                    utterance_index: m.utterance_indices[k],
                    max_score,
                    argmax_phrasing: m.phrasings[j].clone(),
                    flagged: max_score >= threshold,
                }
            })
            .collect()
    };
    Ok(ParasiteFlags {
        speaker: m.speaker.clone(),
        threshold,
        phrasings: m.phrasings.clone(),
        entries,
    })
}

/// [`flag_parasites`] at the default 0.6 threshold.
pub fn flag_parasites_default(m: &InterferenceMatrix) -> ParasiteFlags {
    flag_parasites(m, DEFAULT_THRESHOLD).expect("default threshold is valid")
}

pub fn interference_summary(
    f: &ParasiteFlags,
    total_utterances: usize,
) -> Result<InterferenceSummary, Error> {
    if total_utterances < f.entries.len() {
        return Err(Error::Config(format!(
            "total of {total_utterances} utterances is below the {} flagged entries",
            f.entries.len()
        )));
    }
    let flagged_count = f.flagged_count();
    let mut phrasing_distribution = IndexMap::new();
    if flagged_count > 0 {
        for phrasing in &f.phrasings {
            let n = f
                .entries
                .iter()
                .filter(|e| e.flagged && &e.argmax_phrasing == phrasing)
                .count();
            phrasing_distribution.insert(phrasing.clone(), n as f64 / flagged_count as f64);
        }
    }
    let parasite_ratio = if total_utterances == 0 {
        0.0
    } else {
        flagged_count as f64 / total_utterances as f64
    };
    Ok(InterferenceSummary {
        speaker: f.speaker.clone(),
        total_utterances,
        flagged_count,
        parasite_ratio,
        phrasing_distribution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MockProvider;
    use crate::transcript::parse_transcript_str;

    const APPENDIX_C: &str = include_str!("../tests/fixtures/appendix_c.log");

    #[test]
    fn default_lexicon() {
        let lex = ParasiteLexicon::default();
        assert_eq!(lex.len(), 12);
        assert_eq!(lex.phrasings()[0], "I think");
        assert_eq!(lex.phrasings()[7], "Hmmmmmmmmm");
        assert_eq!(lex.phrasings()[11], "Can I engage ?");
    }

    #[test]
    fn lexicon_validation() {
        assert!(ParasiteLexicon::parse("# only a comment\n\n").is_err());
        assert!(ParasiteLexicon::parse("Maybe\nMaybe\n").is_err());
        assert!(ParasiteLexicon::new(vec![" ".into()]).is_err());
        let lex = ParasiteLexicon::parse("  Maybe \r\n# x\nI think\n").unwrap();
        assert_eq!(lex.phrasings(), ["Maybe", "I think"]);
    }

    #[test]
    fn token_counts() {
        assert_eq!(count_tokens("Okay."), 2);
        assert_eq!(count_tokens("Yes."), 2);
        assert_eq!(count_tokens("Okay"), 1);
        assert_eq!(count_tokens("Nice try."), 3);
        assert_eq!(count_tokens("If we can... Could"), 5);
        assert_eq!(count_tokens("   "), 0);
    }

    #[test]
    fn appendix_c_shape() {
        let t = parse_transcript_str(APPENDIX_C).unwrap();
        let m = interference_matrix(
            &t,
            "SPEAKER_00",
            &ParasiteLexicon::default(),
            &RefinementConfig::default(),
            &MockProvider::default(),
        )
        .unwrap();
        assert_eq!((m.rows(), m.cols()), (12, 23));
        assert!(m.cells.iter().flatten().all(|c| (0.0..=1.0).contains(c)));
        // "Okay." (017) has two tokens and a preceding utterance at 350.3 s.
        assert!(m.refined_columns.contains(&17));
        assert_eq!(m.refined_columns.len(), 1);
    }

    #[test]
    fn identical_phrasing_scores_one() {
        let t = parse_transcript_str("000 - [0:1] A Maybe\n001 - [2:3] A We go now.\n").unwrap();
        let m = interference_matrix(
            &t,
            "A",
            &ParasiteLexicon::default(),
            &RefinementConfig::disabled(),
            &MockProvider::default(),
        )
        .unwrap();
        assert!((m.cells[4][0] - 1.0).abs() < 1e-6);
        let flags = flag_parasites(&m, 0.6).unwrap();
        assert!(flags.entries[0].flagged);
        assert_eq!(flags.entries[0].argmax_phrasing, "Maybe");
    }

    #[test]
    fn first_utterance_is_not_refined() {
        let t = parse_transcript_str("000 - [0:1] A Okay.\n001 - [2:3] A Okay.\n").unwrap();
        let m = interference_matrix(
            &t,
            "A",
            &ParasiteLexicon::default(),
            &RefinementConfig::default(),
            &MockProvider::default(),
        )
        .unwrap();
        assert_eq!(m.refined_columns.iter().copied().collect::<Vec<_>>(), [1]);
    }

    struct PlainOnly(MockProvider);

    impl EmbeddingProvider for PlainOnly {
        fn name(&self) -> &str {
            "plain-only"
        }
        fn dimension(&self) -> usize {
            self.0.dimension()
        }
        fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
            self.0.embed(text)
        }
    }

    #[test]
    fn refinement_needs_capability() {
        let t = parse_transcript_str("000 - [0:1] A Okay.\n").unwrap();
        let lex = ParasiteLexicon::default();
        let p = PlainOnly(MockProvider::default());
        let err = interference_matrix(&t, "A", &lex, &RefinementConfig::default(), &p).unwrap_err();
        assert!(matches!(err, Error::Embedding(EmbeddingError::Capability { .. })));
        assert!(interference_matrix(&t, "A", &lex, &RefinementConfig::disabled(), &p).is_ok());
        assert!(matches!(
            interference_matrix(&t, "B", &lex, &RefinementConfig::disabled(), &p),
            Err(Error::Transcript(_))
        ));
    }

    fn matrix(cells: Vec<Vec<f64>>) -> InterferenceMatrix {
        let rows = cells.len();
        let cols = cells.first().map_or(0, Vec::len);
        InterferenceMatrix {
            speaker: "S".into(),
            phrasings: (0..rows).map(|j| format!("p{j}")).collect(),
            utterance_indices: (0..cols as u64).collect(),
            cells,
            refined_columns: BTreeSet::new(),
        }
    }

    #[test]
    fn flags_follow_column_max() {
        let m = matrix(vec![vec![0.0, 0.59, 0.7], vec![0.0, 0.2, 0.7], vec![0.0, 0.6, 0.1]]);
        let f = flag_parasites(&m, 0.6).unwrap();
        assert!(!f.entries[0].flagged);
        assert_eq!(f.entries[0].max_score, 0.0);
        assert!(f.entries[1].flagged);
        assert_eq!(f.entries[1].argmax_phrasing, "p2");
        assert_eq!(f.entries[2].argmax_phrasing, "p0");
        assert!(flag_parasites(&m, 0.0).is_err());
        assert!(flag_parasites(&matrix(vec![]), 0.6).unwrap().entries.is_empty());
    }

    #[test]
    fn summary_ratios() {
        let f = ParasiteFlags {
            speaker: "SPEAKER_00".into(),
            threshold: 0.6,
            phrasings: vec!["We should".into(), "Can we ?".into(), "Maybe".into()],
            entries: (0..23)
                .map(|i| ParasiteFlag {
                    utterance_index: i,
                    max_score: if i < 9 { 0.7 } else { 0.3 },
                    argmax_phrasing: if i == 0 { "We should" } else { "Can we ?" }.into(),
                    flagged: i < 9,
                })
                .collect(),
        };
        let s = interference_summary(&f, 23).unwrap();
        assert_eq!(s.parasite_ratio, 9.0 / 23.0);
        assert!((s.parasite_ratio - 0.3913).abs() < 1e-4);
        assert!((s.phrasing_distribution["We should"] - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(s.phrasing_distribution["Maybe"], 0.0);
        assert!((s.phrasing_distribution.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(interference_summary(&f, 5).is_err());

        let none = ParasiteFlags { entries: vec![], ..f };
        let s = interference_summary(&none, 0).unwrap();
        assert_eq!(s.parasite_ratio, 0.0);
        assert!(s.phrasing_distribution.is_empty());
    }

    #[test]
    fn pair_score_ordering_with_mock() {
        let p = MockProvider::default();
        let s1 = pair_score("I think we can't, boys", "I think", &p).unwrap();
        let s2 = pair_score("We can't", "I think", &p).unwrap();
        assert!(s1 > s2);
        assert!((pair_score("Maybe", "Maybe", &p).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn refinement_config_validation() {
        assert!(RefinementConfig::new(true, 0, 15.0).is_err());
        assert!(RefinementConfig::new(true, 2, 0.0).is_err());
        let json = r#"{"enabled":true,"max_target_tokens":2,"context_window_s":15.0}"#;
        let cfg: RefinementConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg, RefinementConfig::default());
    }
}
