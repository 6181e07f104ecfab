use std::path::{Path, PathBuf};

use commscore::embedding::{CachedProvider, EmbeddingProvider, MockProvider, SidecarProvider};
use commscore::evaluation::{parse_labels, EvaluationReport};
use commscore::parasite::{flag_parasites, interference_matrix};
use commscore::report::{
    analyze, emit_report, file_stem, heatmap_svg, heatmap_table, metrics_table, score_plot_svg,
    write_files, AnalysisReport, Document, ReportFormat,
};
use commscore::transcript::{parse_transcript_str, speaker_view, Transcript};

use crate::config::{OutputFormat, ProviderKind, RunConfig, CACHE_FILE};
use crate::error::{CliError, Written};

pub fn provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    let endpoint = || cfg.endpoint.as_deref().unwrap_or_default();
    Ok(match cfg.provider {
        ProviderKind::Mock => Box::new(MockProvider::default()),
        ProviderKind::Sidecar => Box::new(SidecarProvider::connect(endpoint())?),
        ProviderKind::CachedSidecar => Box::new(CachedProvider::open(
            SidecarProvider::connect(endpoint())?,
            cfg.cache_dir.join(CACHE_FILE),
        )?),
    })
}

fn load_transcript(path: &Path) -> Result<Transcript, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_transcript_str(&raw).map_err(|e| CliError::transcript(path, e))
}

fn transcript_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn run_analysis(path: &Path, cfg: &RunConfig) -> Result<(Transcript, AnalysisReport), CliError> {
    let t = load_transcript(path)?;
    let analysis = cfg.analysis_config()?;
    let p = provider(cfg)?;
    let report = analyze(&transcript_id(path), &t, &analysis, &p)?;
    Ok((t, report))
}

/// Writes everything in one go; nothing is left behind on failure.
fn write_all(dir: &Path, files: Vec<(String, String)>) -> Result<Written, CliError> {
    let borrowed: Vec<(String, &str)> = files.iter().map(|(n, c)| (n.clone(), c.as_str())).collect();
    let existed = dir.exists();
    match write_files(dir, &borrowed) {
        Ok(paths) => Ok(Written(paths)),
        Err(e) => {
            if !existed {
                let _ = std::fs::remove_dir(dir);
            }
            Err(CliError::io(dir, e))
        }
    }
}

fn report_files(r: &AnalysisReport, cfg: &RunConfig) -> Result<Vec<(String, String)>, CliError> {
    let mut files = Vec::new();
    if cfg.wants(OutputFormat::Json) {
        if let Document::Structured(json) = emit_report(r, ReportFormat::Structured)? {
            files.push(("report.json".to_string(), json));
        }
    }
    if cfg.wants(OutputFormat::Csv) {
        if let Document::Tabular(tables) = emit_report(r, ReportFormat::Tabular)? {
            files.extend(tables.into_iter().map(|t| (t.name, t.content)));
        }
    }
    if cfg.wants(OutputFormat::Svg) {
        files.push((
            "duplicate_scores.svg".into(),
            score_plot_svg(&r.duplicate_scores, cfg.duplicate_threshold),
        ));
        for sp in r.parasite.iter().filter(|sp| !sp.matrix.is_empty()) {
            files.push((
                format!("heatmap_{}.svg", file_stem(&sp.matrix.speaker)),
                heatmap_svg(&sp.matrix, cfg.parasite_threshold)?,
            ));
        }
    }
    Ok(files)
}

pub fn analyze_cmd(path: &Path, cfg: &RunConfig) -> Result<Written, CliError> {
    let (_, report) = run_analysis(path, cfg)?;
    write_all(&cfg.out, report_files(&report, cfg)?)
}

pub fn evaluate_cmd(path: &Path, labels_path: &Path, cfg: &RunConfig) -> Result<(EvaluationReport, Written), CliError> {
    let raw = std::fs::read(labels_path).map_err(|e| CliError::io(labels_path, e))?;
    let labels = parse_labels(raw.as_slice()).map_err(|e| CliError::labels(labels_path, e))?;
    let (t, mut report) = run_analysis(path, cfg)?;
    let eval = report
        .attach_evaluation(&t, &labels)
        .map_err(|e| CliError::labels(labels_path, e))?
        .clone();
    let mut files = report_files(&report, cfg)?;
    if cfg.wants(OutputFormat::Json) {
        let mut json = serde_json::to_string_pretty(&eval).expect("metrics serialize");
        json.push('\n');
        files.push(("evaluation.json".into(), json));
    }
    if cfg.wants(OutputFormat::Csv) && !files.iter().any(|(n, _)| n == "metrics.csv") {
        let table = metrics_table(&eval)?;
        files.push((table.name, table.content));
    }
    Ok((eval, write_all(&cfg.out, files)?))
}

pub fn heatmap_cmd(path: &Path, speaker: &str, cfg: &RunConfig) -> Result<Written, CliError> {
    let t = load_transcript(path)?;
    speaker_view(&t, speaker).map_err(|e| CliError::transcript(path, e))?;
    let analysis = cfg.analysis_config()?;
    let p = provider(cfg)?;
    let m = interference_matrix(&t, speaker, &analysis.lexicon, &analysis.refinement, &p)?;
    let stem = format!("heatmap_{}", file_stem(speaker));
    let mut files = Vec::new();
    if cfg.wants(OutputFormat::Json) {
        let flags = flag_parasites(&m, cfg.parasite_threshold)?;
        let doc = serde_json::json!({ "matrix": m, "flags": flags });
        let mut json = serde_json::to_string_pretty(&doc).expect("matrix serializes");
        json.push('\n');
        files.push((format!("{stem}.json"), json));
    }
    if cfg.wants(OutputFormat::Csv) {
        files.push((format!("{stem}.csv"), heatmap_table(&m)?.content));
    }
    if cfg.wants(OutputFormat::Svg) {
        files.push((format!("{stem}.svg"), heatmap_svg(&m, cfg.parasite_threshold)?));
    }
    write_all(&cfg.out, files)
}

pub fn metrics_text(eval: &EvaluationReport) -> String {
    let mut out = format!("labeled utterances: {}\n", eval.labeled);
    out.push_str("task        tp    fp    tn    fn  accuracy  precision  recall      f1\n");
    for m in [&eval.duplicates, &eval.parasite] {
        out.push_str(&format!(
            "{:<10} {:>4}  {:>4}  {:>4}  {:>4}  {:>7.2}%  {:>8.2}%  {:>5.2}%  {:>5.2}%\n",
            m.task.to_string(),
            m.tp,
            m.fp,
            m.tn,
            m.fn_,
            m.accuracy * 100.0,
            m.precision * 100.0,
            m.recall * 100.0,
            m.f1 * 100.0
        ));
    }
    out
}

pub fn default_config_path() -> Option<PathBuf> {
    let p = PathBuf::from("commscore.toml");
    p.exists().then_some(p)
}
