//! Standalone SVG renderings of heatmaps and duplicate-score bars.
//!
//! Output is a pure function of the inputs: no timestamps, ids or randomness.

use std::fmt::Write;

use crate::duplicate::DuplicateScore;
use crate::parasite::InterferenceMatrix;
use crate::Error;

const CELL_W: f64 = 40.0;
const CELL_H: f64 = 24.0;
const CHAR_W: f64 = 7.0;
const HIGHLIGHT: &str = "#00ffff";

// Viridis anchors at 0, 0.25, 0.5, 0.75, 1.
const RAMP: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Maps a score in `[0, 1]` to a hex colour.
pub fn color_for(score: f64) -> String {
    let x = score.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let t = x - i as f64;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );
}

/// Phrasing x utterance heatmap. The maximum of each column is outlined in cyan
/// when it reaches `threshold`.
pub fn heatmap_svg(m: &InterferenceMatrix, threshold: f64) -> Result<String, Error> {
    if m.is_empty() {
        return Err(Error::Config("cannot plot an empty interference matrix".into()));
    }
    let label_w = m
        .phrasings
        .iter()
        .map(|p| p.chars().count())
        .max()
        .unwrap_or(0) as f64
        * CHAR_W
        + 16.0;
    let top = 40.0;
    let grid_w = m.cols() as f64 * CELL_W;
    let grid_h = m.rows() as f64 * CELL_H;
    let width = label_w + grid_w + 20.0;
    let height = top + grid_h + 60.0;
    let title = format!("Interference heatmap of {}", m.speaker);

    let mut out = String::new();
    header(&mut out, width, height, &title);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(&title)
    );

    let highlighted: Vec<Option<usize>> = (0..m.cols())
        .map(|k| {
            m.column_max(k)
                .filter(|(max, _)| *max >= threshold)
                .map(|(_, j)| j)
        })
        .collect();

    for (j, phrasing) in m.phrasings.iter().enumerate() {
        let y = top + j as f64 * CELL_H;
        let _ = writeln!(
            out,
            r#"<text class="row-label" x="{:.1}" y="{:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            label_w - 6.0,
            y + CELL_H / 2.0,
            escape(phrasing)
        );
        for (k, &score) in m.cells[j].iter().enumerate() {
            let x = label_w + k as f64 * CELL_W;
            let hl = highlighted[k] == Some(j);
            let (class, stroke) = if hl {
                ("cell highlight", format!(r#" stroke="{HIGHLIGHT}" stroke-width="3""#))
            } else {
                ("cell", String::new())
            };
            let _ = writeln!(
                out,
                r#"<rect class="{class}" x="{x:.1}" y="{y:.1}" width="{CELL_W:.1}" height="{CELL_H:.1}" fill="{}"{stroke}><title>{} / {:03}: {score:.4}</title></rect>"#,
                color_for(score),
                escape(phrasing),
                m.utterance_indices[k],
            );
            let ink = if score > 0.6 { "black" } else { "white" };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" dominant-baseline="middle" font-size="9" fill="{ink}">{score:.2}</text>"#,
                x + CELL_W / 2.0,
                y + CELL_H / 2.0
            );
        }
    }

    let label_y = top + grid_h + 14.0;
    for (k, index) in m.utterance_indices.iter().enumerate() {
        let mark = if m.refined_columns.contains(index) { "*" } else { "" };
        let _ = writeln!(
            out,
            r#"<text class="col-label" x="{:.1}" y="{label_y:.1}" text-anchor="middle">{index:03}{mark}</text>"#,
            label_w + (k as f64 + 0.5) * CELL_W
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{label_w:.1}" y="{:.1}" font-size="10">column max &#8805; {threshold:.2} outlined; * embedding refined with context</text>"#,
        label_y + 24.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// One bar per utterance, grouped by speaker in order of first appearance,
/// with a dashed line at `threshold`.
pub fn score_plot_svg(scores: &[DuplicateScore], threshold: f64) -> String {
    let mut groups: Vec<(&str, Vec<&DuplicateScore>)> = Vec::new();
    for s in scores {
        match groups.iter_mut().find(|(sp, _)| *sp == s.speaker) {
            Some((_, v)) => v.push(s),
            None => groups.push((&s.speaker, vec![s])),
        }
    }
    let bar_w = 14.0;
    let gap = 30.0;
    let left = 50.0;
    let top = 40.0;
    let plot_h = 240.0;
    let bars_w: f64 = groups
        .iter()
        .map(|(_, v)| v.len() as f64 * bar_w + gap)
        .sum::<f64>()
        .max(200.0);
    let width = left + bars_w + 20.0;
    let height = top + plot_h + 70.0;
    let base = top + plot_h;

    let mut out = String::new();
    header(&mut out, width, height, "Duplicate communication scores");
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">Duplicate communication scores</text>"#,
        width / 2.0
    );
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{left:.1}" y1="{top:.1}" x2="{left:.1}" y2="{base:.1}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{left:.1}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="black"/>"#,
        width - 20.0
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = base - v * plot_h;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end" dominant-baseline="middle">{v:.1}</text>"#,
            left - 6.0
        );
    }

    let mut x = left + gap / 2.0;
    for (speaker, group) in &groups {
        let start = x;
        for s in group {
            let h = s.score.clamp(0.0, 1.0) * plot_h;
            let fill = if s.flagged { "#d62728" } else { "#1f77b4" };
            let _ = writeln!(
                out,
                r#"<rect class="bar" x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{fill}"><title>{} {:03}: {:.4}</title></rect>"#,
                x + 1.0,
                base - h,
                bar_w - 2.0,
                escape(speaker),
                s.utterance_index,
                s.score
            );
            x += bar_w;
        }
        let _ = writeln!(
            out,
            r#"<text class="group-label" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (start + x) / 2.0,
            base + 18.0,
            escape(speaker)
        );
        x += gap;
    }

    let ty = base - threshold.clamp(0.0, 1.0) * plot_h;
    let _ = writeln!(
        out,
        r##"<line class="threshold" x1="{left:.1}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#d62728" stroke-dasharray="6 4"/>"##,
        width - 20.0
    );
    out.push_str("</svg>\n");
    out
}
