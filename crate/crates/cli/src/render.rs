//! Plain-text tables in the layout of the paper's results tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use emogaze::io::LabelDim;
use emogaze::model::MetricsReport;
use emogaze::stats::report::{Block, CorrelationRow, LmeRow, StatsReport};
use emogaze::stats::AgreementResult;
use serde::{Deserialize, Serialize};

pub const NO_RESULTS: &str = "no results";

/// One evaluated model on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// `network` or `svm`.
    pub model: String,
    pub variant: String,
    pub title: String,
    pub label: LabelDim,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dropout_rate: Option<f64>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsFile {
    pub split: String,
    pub rows: Vec<MetricsRow>,
}

/// Paper convention: anything below 0.001 is printed as "< 0.001".
pub fn fmt_p(p: f64) -> String {
    if p.is_nan() {
        "n/a".into()
    } else if p < 0.001 {
        "< 0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn fmt_coef(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.3}")
    }
}

fn table(out: &mut String, title: &str, header: &[String], rows: &[Vec<String>]) {
    let n = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |out: &mut String, cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate().take(n) {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[i]);
            }
        }
        let _ = writeln!(out, "{}", s.trim_end());
    };
    let _ = writeln!(out, "{title}");
    line(out, header);
    let total: usize = widths.iter().sum::<usize>() + 2 * (n.saturating_sub(1));
    let _ = writeln!(out, "{}", "-".repeat(total));
    for r in rows {
        line(out, r);
    }
    let _ = writeln!(out);
}

/// Pivot: one row per `row_key`, one column per label dimension.
fn pivot<'a>(
    out: &mut String,
    title: &str,
    corner: &str,
    items: impl Iterator<Item = (&'a str, &'a str, String)>,
    footnote: Option<&str>,
) {
    let mut rows: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), String> = BTreeMap::new();
    for (r, c, v) in items {
        if !rows.iter().any(|x| x == r) {
            rows.push(r.to_string());
        }
        cells.insert((r.to_string(), c.to_string()), v);
    }
    let mut header = vec![corner.to_string()];
    header.extend(LabelDim::ALL.iter().map(|d| d.title().to_string()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.clone()];
            v.extend(LabelDim::ALL.iter().map(|d| {
                let label = d.name();
                let binned = format!("{label}_binned");
                cells
                    .get(&(r.clone(), label.to_string()))
                    .or_else(|| cells.get(&(r.clone(), binned)))
                    .cloned()
                    .unwrap_or_else(|| "-".into())
            }));
            v
        })
        .collect();
    table(out, title, &header, &body);
    if let Some(f) = footnote {
        let _ = writeln!(out, "{f}\n");
    }
}

fn skipped<R>(out: &mut String, block: &Block<R>) {
    for s in &block.skipped {
        let _ = writeln!(out, "  skipped {}: {}", s.test, s.reason);
    }
    if !block.skipped.is_empty() {
        let _ = writeln!(out);
    }
}

fn correlation_block(out: &mut String, block: &Block<CorrelationRow>, corner: &str) {
    if block.rows.is_empty() && block.skipped.is_empty() {
        return;
    }
    pivot(
        out,
        &block.title,
        corner,
        block.rows.iter().map(|r| (r.x.as_str(), r.y.as_str(), format!("{} ({})", fmt_coef(r.r), fmt_p(r.p)))),
        Some("cells: Pearson r over participant means (p)"),
    );
    skipped(out, block);
}

fn lme_block(out: &mut String, block: &Block<LmeRow>) {
    if block.rows.is_empty() && block.skipped.is_empty() {
        return;
    }
    pivot(
        out,
        &block.title,
        "Predictor",
        block
            .rows
            .iter()
            .map(|r| (r.predictor.as_str(), r.outcome.as_str(), format!("{} ({})", fmt_coef(r.beta1), fmt_p(r.p_bonferroni)))),
        Some(&format!("cells: slope (Bonferroni p, m = {})", block.m)),
    );
    skipped(out, block);
}

pub fn render_stats(report: &StatsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Statistics: {} trials, {} participants\n", report.n_trials, report.n_participants);
    if report.is_empty() {
        let _ = writeln!(out, "{NO_RESULTS}: no test could be computed on this feature table\n");
        return out;
    }
    correlation_block(&mut out, &report.trait_labels, "Trait");
    if !report.stimulus_conditional.rows.is_empty() {
        let mut by_stim: BTreeMap<String, Vec<&CorrelationRow>> = BTreeMap::new();
        for r in &report.stimulus_conditional.rows {
            let key = r.stimulus.map_or_else(String::new, |s| s.to_string());
            by_stim.entry(key).or_default().push(r);
        }
        for (stim, rows) in by_stim {
            pivot(
                &mut out,
                &format!("{} ({stim})", report.stimulus_conditional.title),
                "Trait",
                rows.into_iter()
                    .map(|r| (r.x.as_str(), r.y.as_str(), format!("{} ({})", fmt_coef(r.r), fmt_p(r.p)))),
                None,
            );
        }
    }
    skipped(&mut out, &report.stimulus_conditional);
    correlation_block(&mut out, &report.eye_labels, "Eye metric");
    lme_block(&mut out, &report.lme_pupil);
    lme_block(&mut out, &report.lme_regions_binned);
    lme_block(&mut out, &report.lme_regions);
    lme_block(&mut out, &report.lme_traits);
    out
}

pub fn render_metrics(title: &str, file: &MetricsFile) -> String {
    let mut out = String::new();
    if file.rows.is_empty() {
        let _ = writeln!(out, "{title}\n{NO_RESULTS}\n");
        return out;
    }
    let header: Vec<String> = ["Model", "Label", "LR", "Dropout", "F1 low", "F1 medium", "F1 high", "Macro F1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = file
        .rows
        .iter()
        .map(|r| {
            let f = r.report.per_class_f1;
            vec![
                r.title.clone(),
                r.label.title().to_string(),
                r.learning_rate.map_or("-".into(), |v| format!("{v}")),
                r.dropout_rate.map_or("-".into(), |v| format!("{v}")),
                format!("{:.2}", f.low),
                format!("{:.2}", f.medium),
                format!("{:.2}", f.high),
                format!("{:.2}", r.report.macro_f1),
            ]
        })
        .collect();
    table(&mut out, &format!("{title} ({} split)", file.split), &header, &rows);
    out
}

pub fn render_agreement(a: &AgreementResult) -> String {
    let mut out = String::new();
    let header: Vec<String> = ["Label", "Agreement", "Clips", "Ratings", "Tied clips"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = a
        .dimensions
        .iter()
        .map(|d| {
            vec![
                d.label.title().to_string(),
                format!("{:.1}%", d.agreement),
                d.clips.to_string(),
                d.ratings.to_string(),
                d.tied_clips.to_string(),
            ]
        })
        .collect();
    table(&mut out, "Rater agreement with the modal bin per clip", &header, &rows);
    let _ = writeln!(out, "tie rule: {}\n", a.tie_rule);
    out
}
