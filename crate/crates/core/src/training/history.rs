use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(rename = "train_acc")]
    pub train_accuracy: f64,
    #[serde(rename = "val_acc")]
    pub val_accuracy: f64,
}

/// One record per completed epoch, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Epoch (1-based) with the highest validation accuracy; earliest wins ties.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.records {
            if best.is_none_or(|b| r.val_accuracy > b.val_accuracy) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    /// `epoch,train_loss,val_loss,train_acc,val_acc`, values in shortest
    /// round-trip form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, TrainError> {
        let mut r = csv::Reader::from_reader(reader);
        let records = r.deserialize().collect::<Result<Vec<EpochRecord>, _>>()?;
        Ok(Self { records })
    }

    /// Two side-by-side line plots: loss and accuracy against epoch, each with
    /// a training and a validation series.
    pub fn to_svg(&self) -> String {
        const W: f64 = 420.0;
        const H: f64 = 300.0;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
            2.0 * W,
            H
        );
        svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        svg.push('\n');
        let loss: Vec<(f64, f64)> = self.records.iter().map(|r| (r.train_loss, r.val_loss)).collect();
        let acc: Vec<(f64, f64)> = self
            .records
            .iter()
            .map(|r| (r.train_accuracy, r.val_accuracy))
            .collect();
        panel(&mut svg, 0.0, W, H, "Loss", &loss, None);
        panel(&mut svg, W, W, H, "Accuracy", &acc, Some((0.0, 1.0)));
        svg.push_str("</svg>\n");
        svg
    }
}

fn panel(
    svg: &mut String,
    x0: f64,
    width: f64,
    height: f64,
    y_label: &str,
    series: &[(f64, f64)],
    fixed: Option<(f64, f64)>,
) {
    let (left, right, top, bottom) = (x0 + 60.0, x0 + width - 20.0, 30.0, height - 45.0);
    let (mut lo, mut hi) = fixed.unwrap_or_else(|| {
        series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(a, b)| {
            (lo.min(a).min(b), hi.max(a).max(b))
        })
    });
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let n = series.len().max(2) - 1;
    let px = |i: usize| left + (right - left) * i as f64 / n as f64;
    let py = |v: f64| bottom - (bottom - top) * (v - lo) / (hi - lo);

    let _ = writeln!(
        svg,
        r#"<polyline points="{left:.2},{top:.2} {left:.2},{bottom:.2} {right:.2},{bottom:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Epochs</text>"#,
        (left + right) / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{y_label}</text>"#,
        x0 + 18.0,
        (top + bottom) / 2.0,
        x0 + 18.0,
        (top + bottom) / 2.0
    );
    for (v, anchor) in [(lo, bottom), (hi, top)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            left - 4.0,
            anchor + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        right,
        bottom + 16.0,
        series.len()
    );
    for (k, (name, colour)) in [("training", "#1f77b4"), ("validation", "#d62728")].iter().enumerate() {
        let pts: Vec<String> = series
            .iter()
            .enumerate()
            .map(|(i, pair)| {
                let v = if k == 0 { pair.0 } else { pair.1 };
                format!("{:.2},{:.2}", px(i), py(v))
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" fill="{colour}">{y_label} ({name})</text>"#,
            left + 8.0 + 150.0 * k as f64,
            top - 10.0
        );
    }
}
