use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::SampleBlock;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub id_column: String,
    pub time_column: String,
    pub label_column: String,
    /// Number of time steps kept per feature.
    pub window: usize,
    /// Spacing between kept time steps, counted back from the last one.
    pub stride: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            id_column: "id".into(),
            time_column: "t".into(),
            label_column: "label".into(),
            window: 10,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    /// One sample per kept entity; feature `i` is the window of column `feature_names[i]`.
    pub dataset: Dataset<f64>,
    pub feature_names: Vec<String>,
    /// Entity ids in sample order.
    pub entities: Vec<String>,
    /// Entities with too little history for the window.
    pub dropped: Vec<String>,
}

struct Entity {
    rows: Vec<(f64, Vec<f64>, f64)>,
}

/// Flattens per-entity time series into fixed-width feature blocks.
///
/// Rows are grouped by the id column and ordered by the time column. For
/// each feature column, an entity contributes the values at the last time
/// step and the `window − 1` steps before it spaced `stride` apart, oldest
/// first. The label at the last time step becomes the binary target
/// (nonzero means 1). Entities are emitted in order of first appearance.
pub fn ingest_timeseries<R: Read>(reader: R, cfg: &IngestConfig) -> Result<Ingested> {
    if cfg.window == 0 || cfg.stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Malformed {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (id_col, time_col, label_col) = (find(&cfg.id_column)?, find(&cfg.time_column)?, find(&cfg.label_column)?);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|j| ![id_col, time_col, label_col].contains(j))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Malformed {
            line: 1,
            message: "no feature columns".into(),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut entities: BTreeMap<String, Entity> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Malformed {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let number = |j: usize| -> Result<f64> {
            let field = rec[j].trim();
            field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Malformed {
                line,
                message: format!("column `{}`: `{field}` is not a finite number", headers[j]),
            })
        };
        let id = rec[id_col].trim().to_string();
        let time = number(time_col)?;
        let label = number(label_col)?;
        let values = feature_cols.iter().map(|&j| number(j)).collect::<Result<Vec<_>>>()?;
        let entity = entities.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Entity { rows: Vec::new() }
        });
        entity.rows.push((time, values, label));
    }

    let span = (cfg.window - 1) * cfg.stride + 1;
    let m = feature_cols.len();
    let mut blocks: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut labels = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for id in order {
        let mut rows = entities.remove(&id).map(|e| e.rows).unwrap_or_default();
        if rows.len() < span {
            dropped.push(id);
            continue;
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let last = rows.len() - 1;
        let steps: Vec<usize> = (0..cfg.window).rev().map(|w| last - w * cfg.stride).collect();
        for (i, block) in blocks.iter_mut().enumerate() {
            block.extend(steps.iter().map(|&t| rows[t].1[i]));
        }
        labels.push(if rows[last].2 != 0.0 { 1.0 } else { 0.0 });
        kept.push(id);
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no entity has the {span} time steps the window needs"
        )));
    }
    if !dropped.is_empty() {
        log::info!("dropped {} entities with fewer than {span} time steps", dropped.len());
    }
    let n = kept.len();
    let features = blocks
        .into_iter()
        .map(|b| SampleBlock::new(n, cfg.window, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ingested {
        dataset: Dataset::new(features, SampleBlock::from_column(&labels)?)?,
        feature_names: feature_cols.iter().map(|&j| headers[j].clone()).collect(),
        entities: kept,
        dropped,
    })
}
