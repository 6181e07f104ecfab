//! Analysis reports.
//!
//! The structured form is a single JSON document (schema in `docs/report-schema.md`
//! at the repository root). The tabular form is a set of CSV tables: comma
//! delimited, strings quoted, numbers bare, LF line endings.

mod plot;

pub use plot::{color_for, heatmap_svg, score_plot_svg};

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::duplicate::{
    duplicate_summary, score_transcript, DuplicateConfig, DuplicateScore, DuplicateSummary,
};
use crate::embedding::EmbeddingProvider;
use crate::evaluation::{evaluate, EvaluationError, EvaluationReport, GroundTruthLabel, Predictions};
use crate::parasite::{
    flag_parasites, interference_matrix, interference_summary, InterferenceMatrix,
    InterferenceSummary, ParasiteFlags, ParasiteLexicon, RefinementConfig,
};
use crate::transcript::Transcript;
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything that determines the scores besides the transcript and provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub duplicates: DuplicateConfig,
    pub parasite_threshold: f64,
    pub refinement: RefinementConfig,
    pub lexicon: ParasiteLexicon,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            duplicates: DuplicateConfig::default(),
            parasite_threshold: crate::duplicate::DEFAULT_THRESHOLD,
            refinement: RefinementConfig::default(),
            lexicon: ParasiteLexicon::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub transcript_id: String,
    pub provider: String,
    pub dimension: usize,
    pub utterance_count: usize,
    pub speakers: Vec<String>,
    pub config: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerParasiteReport {
    pub matrix: InterferenceMatrix,
    pub flags: ParasiteFlags,
    pub summary: InterferenceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub duplicate_scores: Vec<DuplicateScore>,
    pub duplicate_summary: BTreeMap<String, DuplicateSummary>,
    pub parasite: Vec<SpeakerParasiteReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
}

impl AnalysisReport {
    pub fn parasite_flags(&self) -> Vec<ParasiteFlags> {
        self.parasite.iter().map(|p| p.flags.clone()).collect()
    }

    /// Evaluates the report's flags against `labels` and stores the metrics.
    pub fn attach_evaluation(
        &mut self,
        t: &Transcript,
        labels: &[GroundTruthLabel],
    ) -> Result<&EvaluationReport, EvaluationError> {
        let predictions = Predictions::from_flags(&self.duplicate_scores, &self.parasite_flags());
        Ok(self.evaluation.insert(evaluate(t, &predictions, labels)?))
    }
}

/// Runs duplicate and parasite scoring over every speaker of `t`.
pub fn analyze<P: EmbeddingProvider + ?Sized>(
    transcript_id: &str,
    t: &Transcript,
    cfg: &AnalysisConfig,
    p: &P,
) -> Result<AnalysisReport, Error> {
    let duplicate_scores = score_transcript(t, &cfg.duplicates, p)?;
    let mut parasite = Vec::with_capacity(t.speakers().len());
    for speaker in t.speakers() {
        let matrix = interference_matrix(t, speaker, &cfg.lexicon, &cfg.refinement, p)?;
        let flags = flag_parasites(&matrix, cfg.parasite_threshold)?;
        let summary = interference_summary(&flags, matrix.cols())?;
        parasite.push(SpeakerParasiteReport {
            matrix,
            flags,
            summary,
        });
    }
    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        metadata: ReportMetadata {
            transcript_id: transcript_id.to_string(),
            provider: p.name().to_string(),
            dimension: p.dimension(),
            utterance_count: t.len(),
            speakers: t.speakers().iter().cloned().collect(),
            config: cfg.clone(),
        },
        duplicate_summary: duplicate_summary(&duplicate_scores),
        duplicate_scores,
        parasite,
        evaluation: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Structured,
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    /// File name, including the `.csv` extension.
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Document {
    Structured(String),
    Tabular(Vec<Table>),
}

impl Document {
    /// Writes the document under `dir`, returning the files written. On error
    /// the files written so far are removed.
    pub fn write_to(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        let files: Vec<(String, &str)> = match self {
            Self::Structured(json) => vec![("report.json".to_string(), json.as_str())],
            Self::Tabular(tables) => tables
                .iter()
                .map(|t| (t.name.clone(), t.content.as_str()))
                .collect(),
        };
        write_files(dir, &files)
    }
}

/// Writes `(name, content)` pairs under `dir`, all or nothing.
pub fn write_files(dir: &Path, files: &[(String, &str)]) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, content) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

/// File-name-safe form of a speaker label.
pub fn file_stem(speaker: &str) -> String {
    speaker
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(name: String, w: csv::Writer<Vec<u8>>) -> Result<Table, Error> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(Table {
        name,
        content: String::from_utf8(bytes).expect("csv output is utf-8"),
    })
}

fn row<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I) -> Result<(), Error>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields)
        .map_err(|e| Error::Config(format!("csv write: {e}")))
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// The heatmap as a CSV table: phrasings down the first column, utterance
/// indices across the header.
pub fn heatmap_table(m: &InterferenceMatrix) -> Result<Table, Error> {
    let mut w = csv_writer();
    let mut head = vec!["phrasing".to_string()];
    head.extend(m.utterance_indices.iter().map(|i| format!("{i:03}")));
    row(&mut w, &head)?;
    for (phrasing, cells) in m.phrasings.iter().zip(&m.cells) {
        let mut r = vec![phrasing.clone()];
        r.extend(cells.iter().map(|&c| num(c)));
        row(&mut w, &r)?;
    }
    finish(format!("heatmap_{}.csv", file_stem(&m.speaker)), w)
}

fn tabular(r: &AnalysisReport) -> Result<Vec<Table>, Error> {
    let mut tables = Vec::new();

    let mut w = csv_writer();
    row(&mut w, ["utterance_index", "speaker", "score", "best_match_index", "flagged"])?;
    for s in &r.duplicate_scores {
        row(
            &mut w,
            [
                s.utterance_index.to_string(),
                s.speaker.clone(),
                num(s.score),
                s.best_match_index.map(|i| i.to_string()).unwrap_or_default(),
                u8::from(s.flagged).to_string(),
            ],
        )?;
    }
    tables.push(finish("duplicate_scores.csv".into(), w)?);

    let mut w = csv_writer();
    row(&mut w, ["speaker", "count", "flagged_count", "flagged_ratio", "mean_score"])?;
    for (speaker, s) in &r.duplicate_summary {
        row(
            &mut w,
            [
                speaker.clone(),
                s.count.to_string(),
                s.flagged_count.to_string(),
                num(s.flagged_ratio),
                num(s.mean_score),
            ],
        )?;
    }
    tables.push(finish("duplicate_summary.csv".into(), w)?);

    let mut w = csv_writer();
    row(
        &mut w,
        ["speaker", "utterance_index", "max_score", "argmax_phrasing", "flagged", "refined"],
    )?;
    for p in &r.parasite {
        for e in &p.flags.entries {
            row(
                &mut w,
                [
                    p.flags.speaker.clone(),
                    e.utterance_index.to_string(),
                    num(e.max_score),
                    e.argmax_phrasing.clone(),
                    u8::from(e.flagged).to_string(),
                    u8::from(p.matrix.refined_columns.contains(&e.utterance_index)).to_string(),
                ],
            )?;
        }
    }
    tables.push(finish("parasite_flags.csv".into(), w)?);

    let mut w = csv_writer();
    row(&mut w, ["speaker", "total_utterances", "flagged_count", "parasite_ratio"])?;
    for p in &r.parasite {
        let s = &p.summary;
        row(
            &mut w,
            [
                s.speaker.clone(),
                s.total_utterances.to_string(),
                s.flagged_count.to_string(),
                num(s.parasite_ratio),
            ],
        )?;
    }
    tables.push(finish("interference_summary.csv".into(), w)?);

    let mut w = csv_writer();
    row(&mut w, ["speaker", "phrasing", "share"])?;
    for p in &r.parasite {
        for (phrasing, share) in &p.summary.phrasing_distribution {
            row(&mut w, [p.summary.speaker.clone(), phrasing.clone(), num(*share)])?;
        }
    }
    tables.push(finish("phrasing_distribution.csv".into(), w)?);

    for p in &r.parasite {
        tables.push(heatmap_table(&p.matrix)?);
    }

    if let Some(eval) = &r.evaluation {
        tables.push(metrics_table(eval)?);
    }
    Ok(tables)
}

pub fn metrics_table(eval: &EvaluationReport) -> Result<Table, Error> {
    let mut w = csv_writer();
    row(
        &mut w,
        ["task", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1"],
    )?;
    for m in [&eval.duplicates, &eval.parasite] {
        row(
            &mut w,
            [
                m.task.to_string(),
                m.tp.to_string(),
                m.fp.to_string(),
                m.tn.to_string(),
                m.fn_.to_string(),
                num(m.accuracy),
                num(m.precision),
                num(m.recall),
                num(m.f1),
            ],
        )?;
    }
    finish("metrics.csv".into(), w)
}

pub fn emit_report(r: &AnalysisReport, format: ReportFormat) -> Result<Document, Error> {
    match format {
        ReportFormat::Structured => serde_json::to_string_pretty(r)
            .map(|mut s| {
                s.push('\n');
                Document::Structured(s)
            })
            .map_err(|e| Error::Config(format!("report serialization: {e}"))),
        ReportFormat::Tabular => tabular(r).map(Document::Tabular),
    }
}

/// Parses a structured report produced by [`emit_report`].
pub fn parse_report(json: &str) -> Result<AnalysisReport, serde_json::Error> {
    serde_json::from_str(json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MockProvider;
    use crate::transcript::parse_transcript_str;

    const APPENDIX_A: &str = include_str!("../../tests/fixtures/appendix_a.log");
    const APPENDIX_C: &str = include_str!("../../tests/fixtures/appendix_c.log");

    fn report_for(raw: &str) -> AnalysisReport {
        let t = parse_transcript_str(raw).unwrap();
        analyze("t", &t, &AnalysisConfig::default(), &MockProvider::default()).unwrap()
    }

    fn table<'a>(doc: &'a Document, name: &str) -> &'a Table {
        match doc {
            Document::Tabular(tables) => tables.iter().find(|t| t.name == name).unwrap(),
            _ => panic!("not tabular"),
        }
    }

    #[test]
    fn empty_transcript_report() {
        let r = report_for("");
        assert!(r.duplicate_scores.is_empty() && r.parasite.is_empty());
        let doc = emit_report(&r, ReportFormat::Tabular).unwrap();
        assert_eq!(
            table(&doc, "duplicate_scores.csv").content,
            "\"utterance_index\",\"speaker\",\"score\",\"best_match_index\",\"flagged\"\n"
        );
        let Document::Structured(json) = emit_report(&r, ReportFormat::Structured).unwrap() else {
            panic!()
        };
        assert_eq!(parse_report(&json).unwrap(), r);
    }

    #[test]
    fn appendix_a_scores_table() {
        let doc = emit_report(&report_for(APPENDIX_A), ReportFormat::Tabular).unwrap();
        let scores = &table(&doc, "duplicate_scores.csv").content;
        assert_eq!(scores.lines().count(), 26);
        assert_eq!(scores.lines().filter(|l| l.contains("\"SPEAKER_01\"")).count(), 25);
        assert!(!scores.contains('\r'));
    }

    #[test]
    fn appendix_c_heatmap_table() {
        let doc = emit_report(&report_for(APPENDIX_C), ReportFormat::Tabular).unwrap();
        let heat = &table(&doc, "heatmap_SPEAKER_00.csv").content;
        let mut rdr = csv::Reader::from_reader(heat.as_bytes());
        assert_eq!(rdr.headers().unwrap().len(), 24);
        let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 12);
        assert_eq!(&rows[0][0], "I think");
        assert!(rows.iter().all(|r| r.len() == 24));
    }

    #[test]
    fn structured_round_trip() {
        let r = report_for(APPENDIX_C);
        let Document::Structured(json) = emit_report(&r, ReportFormat::Structured).unwrap() else {
            panic!()
        };
        assert_eq!(parse_report(&json).unwrap(), r);
    }

    #[test]
    fn config_snapshot_reproduces_run() {
        let t = parse_transcript_str(APPENDIX_A).unwrap();
        let r = report_for(APPENDIX_A);
        let Document::Structured(json) = emit_report(&r, ReportFormat::Structured).unwrap() else {
            panic!()
        };
        let cfg = parse_report(&json).unwrap().metadata.config;
        let again = analyze("t", &t, &cfg, &MockProvider::default()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn write_files_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![
            ("a.csv".to_string(), "x"),
            ("missing/b.csv".to_string(), "y"),
        ];
        assert!(write_files(dir.path(), &files).is_err());
        assert!(!dir.path().join("a.csv").exists());
    }

    #[test]
    fn speaker_file_stems() {
        assert_eq!(file_stem("SPEAKER_00"), "SPEAKER_00");
        assert_eq!(file_stem("Jane Doe/1"), "Jane_Doe_1");
    }
}
