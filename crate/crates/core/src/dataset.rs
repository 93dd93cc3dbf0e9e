//! Feature-block datasets and their CSV form.
//!
//! Columns are named `x<i>_<j>` for coordinate `j` of feature block `i`
//! (both zero-based) plus a target column, `y` by default. Any other column
//! is carried along untouched as an extra.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::SampleBlock;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub features: Vec<SampleBlock<T>>,
    pub target: SampleBlock<T>,
    pub target_kind: TargetKind,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Vec<SampleBlock<T>>, target: SampleBlock<T>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("dataset needs at least one feature".into()));
        }
        for f in &features {
            if f.n() != target.n() {
                return Err(Error::DimensionMismatch {
                    context: "feature sample count",
                    expected: target.n(),
                    actual: f.n(),
                });
            }
        }
        let binary = target.dim() == 1
            && target.values().iter().all(|&v| v == T::zero() || v == T::one());
        Ok(Self {
            features,
            target,
            target_kind: if binary {
                TargetKind::Binary
            } else {
                TargetKind::Continuous
            },
        })
    }

    pub fn n(&self) -> usize {
        self.target.n()
    }

    pub fn m(&self) -> usize {
        self.features.len()
    }

    pub fn feature_dims(&self) -> Vec<usize> {
        self.features.iter().map(SampleBlock::dim).collect()
    }

    /// Horizontal concatenation of the listed feature blocks, in the given order.
    pub fn stack(&self, indices: &[usize]) -> Result<Option<SampleBlock<T>>> {
        if indices.is_empty() {
            return Ok(None);
        }
        let blocks: Vec<&SampleBlock<T>> = indices.iter().map(|&i| &self.features[i]).collect();
        SampleBlock::hstack(&blocks).map(Some)
    }
}

/// A numeric CSV table held column-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Malformed {
                line: 1,
                message: "missing header row".into(),
            });
        }
        let mut columns = vec![Vec::new(); headers.len()];
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
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Malformed {
                    line,
                    message: format!("column `{}`: `{field}` is not a number", headers[j]),
                })?;
                columns[j].push(v);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| self.columns[j].as_slice())
    }

    /// Columns selected by exact name, or by block prefix: `x3` picks
    /// `x3_0, x3_1, …`. Several selectors may be joined with commas.
    pub fn select(&self, selector: &str) -> Result<SampleBlock<f64>> {
        let mut picked: Vec<usize> = Vec::new();
        for part in selector.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some(j) = self.headers.iter().position(|h| h == part) {
                picked.push(j);
                continue;
            }
            let prefix = format!("{part}_");
            let mut block: Vec<(usize, usize)> = self
                .headers
                .iter()
                .enumerate()
                .filter_map(|(j, h)| {
                    h.strip_prefix(&prefix)
                        .and_then(|rest| rest.parse::<usize>().ok())
                        .map(|coord| (coord, j))
                })
                .collect();
            if block.is_empty() {
                return Err(Error::InvalidArgument(format!("no column matches `{part}`")));
            }
            block.sort_unstable();
            picked.extend(block.into_iter().map(|(_, j)| j));
        }
        if picked.is_empty() {
            return Err(Error::InvalidArgument("empty column selection".into()));
        }
        let n = self.n_rows();
        let mut values = Vec::with_capacity(n * picked.len());
        for i in 0..n {
            values.extend(picked.iter().map(|&j| self.columns[j][i]));
        }
        SampleBlock::new(n, picked.len(), values)
    }

    /// Interprets `x<i>_<j>` columns as feature blocks and `target` as the target.
    pub fn to_dataset(&self, target: &str) -> Result<Dataset<f64>> {
        let y = self
            .column(target)
            .ok_or_else(|| Error::InvalidArgument(format!("no target column `{target}`")))?;
        let mut blocks: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
        for (j, h) in self.headers.iter().enumerate() {
            if let Some((block, coord)) = parse_feature_header(h) {
                if blocks.entry(block).or_default().insert(coord, j).is_some() {
                    return Err(Error::Malformed {
                        line: 1,
                        message: format!("duplicate column `{h}`"),
                    });
                }
            }
        }
        let keys: Vec<usize> = blocks.keys().copied().collect();
        if keys.is_empty() || keys != (0..keys.len()).collect::<Vec<_>>() {
            return Err(Error::Malformed {
                line: 1,
                message: "feature blocks must be numbered x0, x1, … without gaps".into(),
            });
        }
        let n = self.n_rows();
        let mut features = Vec::with_capacity(keys.len());
        for coords in blocks.values() {
            let cols: Vec<usize> = coords.values().copied().collect();
            if coords.keys().copied().ne(0..cols.len()) {
                return Err(Error::Malformed {
                    line: 1,
                    message: "feature coordinates must be numbered _0, _1, … without gaps".into(),
                });
            }
            let mut values = Vec::with_capacity(n * cols.len());
            for i in 0..n {
                values.extend(cols.iter().map(|&j| self.columns[j][i]));
            }
            features.push(SampleBlock::new(n, cols.len(), values)?);
        }
        Dataset::new(features, SampleBlock::from_column(y)?)
    }
}

fn parse_feature_header(h: &str) -> Option<(usize, usize)> {
    let rest = h.strip_prefix('x')?;
    let (block, coord) = rest.split_once('_')?;
    Some((block.parse().ok()?, coord.parse().ok()?))
}

/// Writes `x<i>_<j>` columns, `y`, then any extra columns. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_dataset_csv<W: Write>(
    dataset: &Dataset<f64>,
    extras: &[(&str, &[f64])],
    writer: W,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<String> = Vec::new();
    for (i, f) in dataset.features.iter().enumerate() {
        header.extend((0..f.dim()).map(|j| format!("x{i}_{j}")));
    }
    header.push("y".into());
    header.extend(extras.iter().map(|(name, _)| name.to_string()));
    wtr.write_record(&header)?;
    for (name, col) in extras {
        if col.len() != dataset.n() {
            return Err(Error::DimensionMismatch {
                context: "extra column length",
                expected: dataset.n(),
                actual: col.len(),
            })
            .map_err(|e| Error::InvalidArgument(format!("column `{name}`: {e}")));
        }
    }
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..dataset.n() {
        record.clear();
        for f in &dataset.features {
            record.extend(f.row(i).iter().map(|v| v.to_string()));
        }
        record.push(dataset.target.row(i)[0].to_string());
        record.extend(extras.iter().map(|(_, col)| col[i].to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}
