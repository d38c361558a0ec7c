//! Report tables and their SVG rendering.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tremor_core::experiment::{ExperimentReport, REPORT_COLUMNS};

use crate::files::{read_text, write_csv};
use crate::{CliError, CliResult};

pub const ROC_COLUMNS: [&str; 3] = ["model", "fpr", "tpr"];

/// One row of the experiment report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub condition: String,
    pub train_regions: String,
    pub test_region: String,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub accuracy: f64,
    pub threshold: f64,
}

impl ReportRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.condition.clone(),
            self.train_regions.clone(),
            self.test_region.clone(),
            format!("{:.4}", self.auc_mean),
            format!("{:.4}", self.auc_std),
            format!("{:.4}", self.accuracy),
            format!("{:.2}", self.threshold),
        ]
    }
}

impl From<&ExperimentReport> for ReportRow {
    fn from(r: &ExperimentReport) -> Self {
        // Round through the CSV text so CSV and JSON outputs agree.
        let f = r.csv_fields();
        let num = |s: &str| s.parse::<f64>().expect("formatted number");
        ReportRow {
            condition: f[0].clone(),
            train_regions: f[1].clone(),
            test_region: f[2].clone(),
            auc_mean: num(&f[3]),
            auc_std: num(&f[4]),
            accuracy: num(&f[5]),
            threshold: num(&f[6]),
        }
    }
}

/// A named ROC polyline from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocSeries {
    pub model: String,
    pub points: Vec<(f64, f64)>,
}

/// Label of a per-seed ROC curve in experiment outputs.
pub fn roc_model_name(r: &ExperimentReport, seed: u64) -> String {
    format!("{}:{}:seed{seed}", r.condition.as_str(), r.target)
}

pub fn roc_series(reports: &[ExperimentReport]) -> Vec<RocSeries> {
    reports
        .iter()
        .flat_map(|r| {
            r.seeds.iter().map(move |s| RocSeries {
                model: roc_model_name(r, s.seed),
                points: s.roc.clone(),
            })
        })
        .collect()
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> CliResult<()> {
    write_csv(path, &REPORT_COLUMNS, rows.iter().map(ReportRow::fields))
}

pub fn write_roc_csv(path: &Path, series: &[RocSeries]) -> CliResult<()> {
    let rows = series.iter().flat_map(|s| {
        s.points
            .iter()
            .map(move |&(x, y)| vec![s.model.clone(), format!("{x:.6}"), format!("{y:.6}")])
    });
    write_csv(path, &ROC_COLUMNS, rows)
}

/// Contents of one input file of the `report` command.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportInput {
    Rows(Vec<ReportRow>),
    Roc(Vec<RocSeries>),
    /// A full experiment report: table rows plus per-seed ROC curves.
    Both(Vec<ReportRow>, Vec<RocSeries>),
}

fn malformed(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

/// Reads a report or ROC table, dispatching on the extension and, for CSV,
/// on the header. Headers must match a known schema exactly.
pub fn read_input(path: &Path) -> CliResult<ReportInput> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv_input(path, &text),
        Some("json") => {
            if let Ok(reports) = serde_json::from_str::<Vec<ExperimentReport>>(&text) {
                let rows = reports.iter().map(ReportRow::from).collect();
                return Ok(ReportInput::Both(rows, roc_series(&reports)));
            }
            let rows: Vec<ReportRow> = serde_json::from_str(&text).map_err(|e| malformed(path, e))?;
            Ok(ReportInput::Rows(rows))
        }
        _ => Err(malformed(path, "expected a .csv or .json report")),
    }
}

fn read_csv_input(path: &Path, text: &str) -> CliResult<ReportInput> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| malformed(path, e))?.iter().map(String::from).collect();
    if header == REPORT_COLUMNS {
        let rows = reader
            .deserialize::<ReportRow>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(path, e))?;
        return Ok(ReportInput::Rows(rows));
    }
    if header == ROC_COLUMNS {
        let mut series: Vec<RocSeries> = Vec::new();
        for rec in reader.deserialize::<(String, f64, f64)>() {
            let (model, x, y) = rec.map_err(|e| malformed(path, e))?;
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(malformed(path, format!("ROC point ({x}, {y}) of {model} is outside the unit square")));
            }
            match series.last_mut() {
                Some(s) if s.model == model => s.points.push((x, y)),
                _ => series.push(RocSeries { model, points: vec![(x, y)] }),
            }
        }
        return Ok(ReportInput::Roc(series));
    }
    Err(malformed(
        path,
        format!(
            "unrecognized columns [{}]; expected [{}] or [{}]",
            header.join(", "),
            REPORT_COLUMNS.join(", "),
            ROC_COLUMNS.join(", ")
        ),
    ))
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

// ROC panel geometry.
const ROC_X: f64 = 70.0;
const ROC_Y: f64 = 50.0;
const ROC_SIZE: f64 = 320.0;
// Bar chart geometry.
const BAR_LABEL_X: f64 = 450.0;
const BAR_X: f64 = 760.0;
const BAR_W: f64 = 240.0;
const BAR_ROW: f64 = 22.0;

/// Renders ROC curves (one polyline per model, drawn in unit-square data
/// coordinates) next to a bar chart of mean AUC per report row.
///
/// `generated_at` (Unix seconds) is written as a comment when present.
pub fn render_svg(rows: &[ReportRow], rocs: &[RocSeries], generated_at: Option<u64>) -> String {
    let legend_h = 24.0 + 14.0 * rocs.len() as f64;
    let bars_h = 50.0 + BAR_ROW * rows.len() as f64 + 40.0;
    let height = (ROC_Y + ROC_SIZE + 50.0 + legend_h).max(bars_h).ceil();
    let width = BAR_X + BAR_W + 70.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    if let Some(t) = generated_at {
        let _ = writeln!(s, "<!-- generated at unix time {t} -->");
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    // ROC panel.
    let _ = writeln!(s, r#"<g id="roc">"#);
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">ROC curves</text>"#, ROC_X + ROC_SIZE / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{ROC_X}" y="{ROC_Y}" width="{ROC_SIZE}" height="{ROC_SIZE}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let px = ROC_X + v * ROC_SIZE;
        let py = ROC_Y + ROC_SIZE - v * ROC_SIZE;
        let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{v:.2}</text>"#, ROC_Y + ROC_SIZE + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, ROC_X - 6.0, py + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">False positive rate</text>"#,
        ROC_X + ROC_SIZE / 2.0,
        ROC_Y + ROC_SIZE + 34.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">True positive rate</text>"#,
        ROC_X - 42.0,
        ROC_Y + ROC_SIZE / 2.0,
        ROC_X - 42.0,
        ROC_Y + ROC_SIZE / 2.0
    );
    let _ = writeln!(
        s,
        r#"<g class="curves" transform="translate({ROC_X} {}) scale({ROC_SIZE} -{ROC_SIZE})">"#,
        ROC_Y + ROC_SIZE
    );
    let _ = writeln!(
        s,
        r##"<line x1="0" y1="0" x2="1" y2="1" stroke="#999999" stroke-dasharray="4 4" vector-effect="non-scaling-stroke"/>"##
    );
    for (i, r) in rocs.iter().enumerate() {
        let pts: Vec<String> = r.points.iter().map(|(x, y)| format!("{x:.6},{y:.6}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-model="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5" vector-effect="non-scaling-stroke"/>"#,
            escape(&r.model),
            pts.join(" "),
            PALETTE[i % PALETTE.len()]
        );
    }
    let _ = writeln!(s, "</g>");
    for (i, r) in rocs.iter().enumerate() {
        let y = ROC_Y + ROC_SIZE + 56.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{ROC_X}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/><text x="{}" y="{y}" font-size="10">{}</text>"#,
            y - 4.0,
            ROC_X + 18.0,
            y - 4.0,
            PALETTE[i % PALETTE.len()],
            ROC_X + 24.0,
            escape(&r.model)
        );
    }
    let _ = writeln!(s, "</g>");

    // Bar chart of mean AUC with a one-std whisker.
    let _ = writeln!(s, r#"<g id="bars">"#);
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">Mean AUC by condition</text>"#, BAR_X + BAR_W / 2.0);
    let top = 50.0;
    let bottom = top + BAR_ROW * rows.len() as f64;
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let x = BAR_X + v * BAR_W;
        let _ = writeln!(s, r##"<line x1="{x}" y1="{top}" x2="{x}" y2="{bottom}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.2}</text>"#, bottom + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">AUC</text>"#, BAR_X + BAR_W / 2.0, bottom + 34.0);
    for (i, row) in rows.iter().enumerate() {
        let y = top + BAR_ROW * i as f64;
        let w = row.auc_mean.clamp(0.0, 1.0) * BAR_W;
        let label = format!("{} / {}", row.condition, row.test_region);
        let _ = writeln!(
            s,
            r#"<text x="{BAR_LABEL_X}" y="{}">{}</text>"#,
            y + BAR_ROW * 0.65,
            escape(&label)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{BAR_X}" y="{}" width="{w:.2}" height="{}" fill="#4c72b0"><title>{}: {:.4}</title></rect>"##,
            y + 3.0,
            BAR_ROW - 6.0,
            escape(&label),
            row.auc_mean
        );
        let lo = BAR_X + (row.auc_mean - row.auc_std).clamp(0.0, 1.0) * BAR_W;
        let hi = BAR_X + (row.auc_mean + row.auc_std).clamp(0.0, 1.0) * BAR_W;
        let mid = y + BAR_ROW / 2.0;
        let _ = writeln!(s, r#"<line x1="{lo:.2}" y1="{mid}" x2="{hi:.2}" y2="{mid}" stroke="black"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10">{:.3}</text>"#,
            BAR_X + BAR_W + 6.0,
            y + BAR_ROW * 0.65,
            row.auc_mean
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}
