use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Table,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format {other:?} (expected table, json or csv)")),
        }
    }
}

const UNDEFINED: &str = "—";

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |v| format!("{:.1}", v * 100.0))
}

fn raw(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn rows(r: &EvalReport) -> [(&'static str, Option<f64>); 5] {
    let m = &r.metrics;
    [
        ("Accuracy", Some(m.accuracy)),
        ("Precision", m.precision),
        ("Recall", m.recall),
        ("F1-score", m.f1),
        ("AUC", m.auc),
    ]
}

/// Renders one or more reports.
///
/// * `table` — a Parameters / Value (%) table per model, then (for two or
///   more models) a comparison block with one row per model in input order.
/// * `json` — an array of report objects.
/// * `csv` — one row per model with raw fractions; undefined values are empty.
pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> Result<String, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut out = String::new();
    match format {
        ReportFormat::Table => {
            for r in reports {
                let c = &r.confusion;
                let _ = writeln!(out, "Evaluation of {}", r.model);
                out.push_str("| Parameters | Value (%) |\n|---|---|\n");
                for (name, v) in rows(r) {
                    let _ = writeln!(out, "| {name} | {} |", percent(v));
                }
                let _ = writeln!(out, "TP={} TN={} FP={} FN={}\n", c.tp, c.tn, c.fp, c.fn_);
            }
            if reports.len() > 1 {
                out.push_str("Comparison\n| Model | Accuracy | Precision | Recall | F1-score | AUC |\n");
                out.push_str("|---|---|---|---|---|---|\n");
                for r in reports {
                    let cells: Vec<String> = rows(r).iter().map(|(_, v)| percent(*v)).collect();
                    let _ = writeln!(out, "| {} | {} |", r.model, cells.join(" | "));
                }
            }
        }
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(reports)?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut write = |rec: Vec<String>| w.write_record(rec).expect("writing to memory");
            write(["model", "accuracy", "precision", "recall", "f1", "auc", "tp", "tn", "fp", "fn"].map(String::from).to_vec());
            for r in reports {
                let m = &r.metrics;
                let c = &r.confusion;
                let mut rec = vec![r.model.clone(), m.accuracy.to_string()];
                rec.extend([m.precision, m.recall, m.f1, m.auc].map(raw));
                rec.extend([c.tp, c.tn, c.fp, c.fn_].map(|n| n.to_string()));
                write(rec);
            }
            out = String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv is utf-8");
        }
    }
    Ok(out)
}
