use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use commscore::evaluation::{write_labels, GroundTruthLabel};
use commscore::report::parse_report;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn commscore(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commscore"))
        .args(args)
        .current_dir(cwd)
        .env_remove("COMMSCORE_SIDECAR_ENDPOINT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let log = fixture("appendix_a.log");
    let o = commscore(&["analyze", path_str(&log), "--provider", "mock"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("commscore-out");
    for f in ["report.json", "duplicate_scores.svg", "heatmap_SPEAKER_01.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join("duplicate_scores.csv").exists());
    let report = parse_report(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.metadata.transcript_id, "appendix_a");
    assert_eq!(report.metadata.utterance_count, 25);
    assert_eq!(report.duplicate_scores.len(), 25);
    assert!(report.evaluation.is_none());
}

#[test]
fn analyze_csv_with_explicit_settings() {
    let dir = tempfile::tempdir().unwrap();
    let log = fixture("appendix_a.log");
    let o = commscore(
        &["analyze", path_str(&log), "--window", "15", "--threshold", "0.6", "--format", "csv", "--out", "o"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = std::fs::read_dir(dir.path().join("o"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for f in ["duplicate_scores.csv", "parasite_flags.csv", "heatmap_SPEAKER_01.csv"] {
        assert!(names.iter().any(|n| n == f), "{names:?}");
    }
    assert!(!names.iter().any(|n| n.ends_with(".json") || n.ends_with(".svg")));
}

#[test]
fn missing_transcript_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = commscore(&["analyze", "no/such/game.log"], dir.path());
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("no/such/game.log"), "{}", stderr(&o));
    assert!(!dir.path().join("commscore-out").exists());
}

#[test]
fn malformed_transcript_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.log"), "000 - [1.0:2.0] A hello\nnot a line\n").unwrap();
    let o = commscore(&["analyze", "bad.log"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(commscore(&["analyze"], dir.path()).status.code(), Some(2));
    assert_eq!(commscore(&["frobnicate"], dir.path()).status.code(), Some(2));
    let log = fixture("appendix_a.log");
    let o = commscore(&["analyze", path_str(&log), "--format", "pdf"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(commscore(&["--help"], dir.path()).status.success());
}

#[test]
fn invalid_threshold_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = fixture("appendix_a.log");
    let o = commscore(&["analyze", path_str(&log), "--duplicate-threshold", "1.2"], dir.path());
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn unreachable_sidecar_is_provider_error() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let log = fixture("appendix_a.log");
    let endpoint = format!("http://127.0.0.1:{port}");
    let o = commscore(&["analyze", path_str(&log), "--provider", "sidecar", "--endpoint", &endpoint], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!dir.path().join("commscore-out").exists());
    let o = commscore(&["analyze", path_str(&log), "--provider", "sidecar"], dir.path());
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn failed_write_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // A directory where the last output file should go makes that write fail.
    std::fs::create_dir_all(out.join("heatmap_SPEAKER_01.svg")).unwrap();
    let log = fixture("appendix_a.log");
    let o = commscore(&["analyze", path_str(&log), "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(!out.join("report.json").exists());
    assert!(!out.join("duplicate_scores.svg").exists());
}

#[test]
fn evaluate_planted_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = commscore(
        &[
            "evaluate",
            path_str(&fixture("planted.log")),
            path_str(&fixture("planted_labels.csv")),
            "--format",
            "json,csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("labeled utterances: 129"), "{text}");
    let line = text.lines().find(|l| l.starts_with("duplicates")).unwrap();
    for want in ["14", "24", "88", "3", "79.07%", "36.84%", "82.35%", "50.91%"] {
        assert!(line.split_whitespace().any(|f| f == want), "{want} not in {line}");
    }
    let out = dir.path().join("commscore-out");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("\"task\",\"tp\""), "{metrics}");
    assert!(metrics.contains("\"duplicates\",14,24,88,3,"), "{metrics}");
    let report = parse_report(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.evaluation.unwrap().duplicates.tp, 14);
    assert!(out.join("evaluation.json").is_file());
}

#[test]
fn evaluate_rejects_empty_labels() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let o = commscore(&["evaluate", path_str(&fixture("appendix_a.log")), "empty.csv"], dir.path());
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
    assert!(stderr(&o).contains("empty.csv"));
    assert!(!dir.path().join("commscore-out").exists());

    std::fs::write(dir.path().join("dangling.csv"), "utterance_index,speaker,is_duplicate,is_parasite\n99,SPEAKER_01,1,0\n").unwrap();
    let o = commscore(&["evaluate", path_str(&fixture("appendix_a.log")), "dangling.csv"], dir.path());
    assert_eq!(o.status.code(), Some(6));

    std::fs::write(dir.path().join("bad.csv"), "utterance_index,speaker,is_duplicate,is_parasite\n0,SPEAKER_01,yes,0\n").unwrap();
    let o = commscore(&["evaluate", path_str(&fixture("appendix_a.log")), "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let log = fixture("appendix_a.log");
    assert!(commscore(&["analyze", path_str(&log), "--format", "json"], dir.path()).status.success());
    let report = parse_report(&std::fs::read_to_string(dir.path().join("commscore-out/report.json")).unwrap()).unwrap();
    let flags = &report.parasite[0].flags.entries;
    let labels: Vec<GroundTruthLabel> = report
        .duplicate_scores
        .iter()
        .map(|s| GroundTruthLabel {
            utterance_index: s.utterance_index,
            speaker: s.speaker.clone(),
            is_duplicate: s.flagged,
            is_parasite: flags.iter().any(|f| f.utterance_index == s.utterance_index && f.flagged),
        })
        .collect();
    assert!(labels.iter().any(|l| l.is_duplicate) && labels.iter().any(|l| l.is_parasite));
    std::fs::write(dir.path().join("labels.csv"), write_labels(&labels)).unwrap();
    let o = commscore(&["evaluate", path_str(&log), "labels.csv", "--out", "e", "--format", "json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e/evaluation.json")).unwrap()).unwrap();
    for task in ["duplicates", "parasite"] {
        for metric in ["accuracy", "precision", "recall", "f1"] {
            assert_eq!(eval[task][metric], 1.0, "{task} {metric}");
        }
    }
}

#[test]
fn heatmap_appendix_c() {
    let dir = tempfile::tempdir().unwrap();
    let log = fixture("appendix_c.log");
    let o = commscore(&["heatmap", path_str(&log), "--speaker", "SPEAKER_00", "--format", "svg,csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("commscore-out");
    let svg = std::fs::read_to_string(out.join("heatmap_SPEAKER_00.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="cell"#).count(), 12 * 23);
    assert_eq!(svg.matches(r#"class="row-label""#).count(), 12);
    assert_eq!(svg.matches(r#"class="col-label""#).count(), 23);
    assert!(svg.contains(">017*</text>"));
    let csv = std::fs::read_to_string(out.join("heatmap_SPEAKER_00.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);

    let o = commscore(
        &["heatmap", path_str(&log), "--speaker", "SPEAKER_00", "--no-refinement", "--out", "plain", "--format", "svg"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let plain = std::fs::read_to_string(dir.path().join("plain/heatmap_SPEAKER_00.svg")).unwrap();
    assert_eq!(plain.matches(r#"class="cell"#).count(), 276);
    assert!(!plain.contains("*</text>"));
    assert!(plain.contains(">017</text>"));
}

#[test]
fn heatmap_unknown_speaker() {
    let dir = tempfile::tempdir().unwrap();
    let o = commscore(&["heatmap", path_str(&fixture("appendix_c.log")), "--speaker", "SPEAKER_09"], dir.path());
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).contains("SPEAKER_09"));
    assert!(!dir.path().join("commscore-out").exists());
}

#[test]
fn custom_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("lex.txt"), "# mine\nPush base\nOkay\n").unwrap();
    let o = commscore(
        &["heatmap", path_str(&fixture("appendix_c.log")), "--speaker", "SPEAKER_00", "--lexicon", "lex.txt", "--format", "svg"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(dir.path().join("commscore-out/heatmap_SPEAKER_00.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="cell"#).count(), 2 * 23);
    let o = commscore(&["analyze", path_str(&fixture("appendix_c.log")), "--lexicon", "none.txt"], dir.path());
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn config_precedence_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("commscore.toml"),
        "window_s = 20.0\nparasite_threshold = 0.7\nendpoint = \"http://file:1\"\n[refinement]\nenabled = false\n",
    )
    .unwrap();
    let o = commscore(&["print-config"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("window_s = 20.0"), "{text}");
    assert!(text.contains("parasite_threshold = 0.7"));
    assert!(text.contains("duplicate_threshold = 0.6"));
    assert!(text.contains("enabled = false"));
    assert!(text.contains("endpoint = \"http://file:1\""));

    let o = commscore(&["print-config", "--window", "5", "--refinement"], dir.path());
    let text = stdout(&o);
    assert!(text.contains("window_s = 5.0") && text.contains("enabled = true"), "{text}");

    let o = Command::new(env!("CARGO_BIN_EXE_commscore"))
        .args(["print-config"])
        .current_dir(dir.path())
        .env("COMMSCORE_SIDECAR_ENDPOINT", "http://env:2")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("endpoint = \"http://env:2\""));

    std::fs::write(dir.path().join("other.toml"), "windw_s = 1.0\n").unwrap();
    let o = commscore(&["print-config", "--config", "other.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("other.toml"));
}
