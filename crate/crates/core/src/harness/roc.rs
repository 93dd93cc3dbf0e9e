use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub threshold: f64,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
}

/// ROC curve of "declared independent at score ≥ threshold".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocTable {
    /// One row per distinct score, thresholds descending, so both rates
    /// are non-decreasing down the table.
    pub rows: Vec<RocRow>,
    pub auc: f64,
}

impl RocTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["threshold", "tpr", "fpr"])?;
        for r in &self.rows {
            w.write_record([
                r.threshold.to_string(),
                r.true_positive_rate.to_string(),
                r.false_positive_rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sweeps thresholds over the distinct scores. `labels[i]` is true when
/// relation `i` is truly independent (the positive class); a higher score
/// means more evidence of independence. The AUC is the trapezoid area under
/// the curve through (0, 0) and every row, which counts tied scores as half.
pub fn roc_sweep(labels: &[bool], scores: &[f64]) -> Result<RocTable> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "ROC scores",
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            context: format!("ROC score {bad}"),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut rows = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tpr, mut prev_fpr, mut auc) = (0.0, 0.0, 0.0);
    let mut idx = 0;
    while idx < order.len() {
        let threshold = scores[order[idx]];
        while idx < order.len() && scores[order[idx]] == threshold {
            if labels[order[idx]] {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let tpr = tp as f64 / positives as f64;
        let fpr = fp as f64 / negatives as f64;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        (prev_tpr, prev_fpr) = (tpr, fpr);
        rows.push(RocRow {
            threshold,
            true_positive_rate: tpr,
            false_positive_rate: fpr,
        });
    }
    Ok(RocTable { rows, auc })
}
