//! Evaluation report: per-run and mean per-class accuracies, confusion
//! matrices, and renderings as a text table, JSON lines or CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    /// Percent correct per class; `None` when the class has no test videos.
    pub per_class: Vec<Option<f64>>,
    pub overall: f64,
}

fn trace_and_total(confusion: &[Vec<u64>]) -> (u64, u64) {
    let trace = confusion.iter().enumerate().map(|(i, r)| r[i]).sum();
    let total = confusion.iter().flatten().sum();
    (trace, total)
}

fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64 * 100.0
    }
}

impl RunResult {
    pub fn from_confusion(run: usize, seed: u64, confusion: Vec<Vec<u64>>) -> Self {
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| percent(row[i], n))
            })
            .collect();
        let (trace, total) = trace_and_total(&confusion);
        RunResult {
            run,
            seed,
            confusion,
            per_class,
            overall: percent(trace, total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    pub runs: Vec<RunResult>,
    /// Mean over runs of each class's accuracy (runs without test videos of
    /// that class are skipped).
    pub per_class_mean: Vec<Option<f64>>,
    /// Total correct over total tested, across all runs, in percent.
    pub overall: f64,
    /// Confusion matrices summed over runs.
    pub confusion: Vec<Vec<u64>>,
}

impl ModeReport {
    pub fn from_runs(mode: Mode, runs: Vec<RunResult>) -> Self {
        let classes = runs.first().map(|r| r.confusion.len()).unwrap_or(0);
        let mut confusion = vec![vec![0u64; classes]; classes];
        for r in &runs {
            for (dst, src) in confusion.iter_mut().zip(&r.confusion) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let per_class_mean = (0..classes)
            .map(|c| {
                let vals: Vec<f64> = runs.iter().filter_map(|r| r.per_class[c]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let (trace, total) = trace_and_total(&confusion);
        ModeReport {
            mode,
            runs,
            per_class_mean,
            overall: percent(trace, total),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Original label of each class id.
    pub class_labels: Vec<i64>,
    pub modes: Vec<ModeReport>,
    pub config: BTreeMap<String, String>,
    /// Wall-clock seconds per stage. Only the text table shows these, so the
    /// machine formats stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown report format {:?} (expected table, json or csv)",
                other
            ))),
        }
    }
}

fn mode_title(mode: Mode) -> &'static str {
    match mode {
        Mode::Frame => "Frame",
        Mode::Dft => "DFT",
        Mode::Fused => "Frame+DFT",
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", x))
        .unwrap_or_else(|| "n/a".into())
}

pub fn emit_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(report),
        ReportFormat::Json => render_json_lines(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_table(report: &EvaluationReport) -> String {
    let width = 10;
    let mut out = String::new();
    let runs = report.modes.first().map(|m| m.runs.len()).unwrap_or(0);
    let _ = writeln!(out, "Prediction accuracy (%), mean over {} run(s)", runs);
    let _ = write!(out, "{:<12}", "Category");
    for m in &report.modes {
        let _ = write!(out, "{:>width$}", mode_title(m.mode));
    }
    out.push('\n');
    for (c, label) in report.class_labels.iter().enumerate() {
        let _ = write!(out, "{:<12}", label);
        for m in &report.modes {
            let _ = write!(out, "{:>width$}", cell(m.per_class_mean[c]));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<12}", "Overall");
    for m in &report.modes {
        let _ = write!(out, "{:>width$}", cell(Some(m.overall)));
    }
    out.push('\n');
    for (stage, secs) in &report.timings {
        let _ = writeln!(out, "# {}: {:.3} s", stage, secs);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct JsonHeader {
    class_labels: Vec<i64>,
    config: BTreeMap<String, String>,
}

/// First line: class labels and config. Then one line per mode.
fn render_json_lines(report: &EvaluationReport) -> String {
    let header = JsonHeader {
        class_labels: report.class_labels.clone(),
        config: report.config.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("serializable");
    out.push('\n');
    for m in &report.modes {
        out.push_str(&serde_json::to_string(m).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn parse_json_report(text: &str) -> Result<EvaluationReport> {
    let bad = |e: serde_json::Error| Error::Data(format!("invalid json report: {}", e));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: JsonHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Data("empty json report".into()))?,
    )
    .map_err(bad)?;
    let modes = lines
        .map(|l| serde_json::from_str(l).map_err(bad))
        .collect::<Result<Vec<ModeReport>>>()?;
    Ok(EvaluationReport {
        class_labels: header.class_labels,
        modes,
        config: header.config,
        timings: Vec::new(),
    })
}

/// One CSV line. `run` is `None` for the mean-over-runs rows and `class` is
/// `None` for the overall rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub mode: Mode,
    pub run: Option<usize>,
    pub class: Option<i64>,
    pub correct: u64,
    pub total: u64,
    pub accuracy: Option<f64>,
}

pub fn csv_rows(report: &EvaluationReport) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    let mut push_block = |mode: Mode,
                          run: Option<usize>,
                          confusion: &[Vec<u64>],
                          per_class: &[Option<f64>],
                          overall: f64| {
        for (c, row) in confusion.iter().enumerate() {
            rows.push(CsvRow {
                mode,
                run,
                class: Some(report.class_labels[c]),
                correct: row[c],
                total: row.iter().sum(),
                accuracy: per_class[c],
            });
        }
        let (trace, total) = trace_and_total(confusion);
        rows.push(CsvRow {
            mode,
            run,
            class: None,
            correct: trace,
            total,
            accuracy: Some(overall),
        });
    };
    for m in &report.modes {
        for r in &m.runs {
            push_block(m.mode, Some(r.run), &r.confusion, &r.per_class, r.overall);
        }
        push_block(m.mode, None, &m.confusion, &m.per_class_mean, m.overall);
    }
    rows
}

fn render_csv(report: &EvaluationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "run", "class", "correct", "total", "accuracy"])
        .expect("in-memory write");
    for r in csv_rows(report) {
        w.write_record([
            r.mode.to_string(),
            r.run
                .map(|v| v.to_string())
                .unwrap_or_else(|| "mean".into()),
            r.class
                .map(|v| v.to_string())
                .unwrap_or_else(|| "overall".into()),
            r.correct.to_string(),
            r.total.to_string(),
            r.accuracy
                .map(|v| v.to_string())
                .unwrap_or_else(|| "n/a".into()),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn parse_csv_report(text: &str) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let bad =
        |line: usize, what: &str| Error::Data(format!("csv report line {}: bad {}", line, what));
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Data(format!("csv report: {}", e)))?;
        if rec.len() != 6 {
            return Err(bad(line, "field count"));
        }
        out.push(CsvRow {
            mode: rec[0].parse()?,
            run: match &rec[1] {
                "mean" => None,
                v => Some(v.parse().map_err(|_| bad(line, "run"))?),
            },
            class: match &rec[2] {
                "overall" => None,
                v => Some(v.parse().map_err(|_| bad(line, "class"))?),
            },
            correct: rec[3].parse().map_err(|_| bad(line, "correct"))?,
            total: rec[4].parse().map_err(|_| bad(line, "total"))?,
            accuracy: match &rec[5] {
                "n/a" => None,
                v => Some(v.parse().map_err(|_| bad(line, "accuracy"))?),
            },
        });
    }
    Ok(out)
}
