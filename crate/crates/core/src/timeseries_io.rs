//! Series container, return/standardization transforms, and CSV/JSON I/O.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DybmError, Result};
use crate::scalar::Scalar;

/// Timestamped sequence of N-dimensional observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame<T> {
    timestamps: Vec<String>,
    names: Vec<String>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> SeriesFrame<T> {
    /// Builds a frame, checking lengths, widths and finiteness.
    pub fn new(timestamps: Vec<String>, names: Vec<String>, values: Vec<Vec<T>>) -> Result<Self> {
        if values.is_empty() {
            return Err(DybmError::Shape(
                "series must hold at least one observation".into(),
            ));
        }
        if timestamps.len() != values.len() {
            return Err(DybmError::Shape(format!(
                "{} timestamps for {} observations",
                timestamps.len(),
                values.len()
            )));
        }
        let dim = names.len();
        if dim == 0 {
            return Err(DybmError::Shape(
                "series needs at least one dimension".into(),
            ));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != dim {
                return Err(DybmError::Row {
                    row: i + 1,
                    message: format!("expected {dim} values, found {}", row.len()),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DybmError::Row {
                    row: i + 1,
                    message: "non-finite value".into(),
                });
            }
        }
        Ok(Self {
            timestamps,
            names,
            values,
        })
    }

    /// One-dimensional frame with integer timestamps `0..n`, zero-padded so
    /// they also increase as strings.
    pub fn from_values(name: &str, values: &[T]) -> Result<Self> {
        let width = values.len().saturating_sub(1).to_string().len();
        let timestamps = (0..values.len()).map(|i| format!("{i:0width$}")).collect();
        Self::new(
            timestamps,
            vec![name.to_string()],
            values.iter().map(|&v| vec![v]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    /// Values of a single dimension in time order.
    pub fn column(&self, j: usize) -> Vec<T> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Concatenates two frames with the same columns.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.names != other.names {
            return Err(DybmError::Shape(
                "cannot concatenate frames with different columns".into(),
            ));
        }
        let mut timestamps = self.timestamps.clone();
        timestamps.extend(other.timestamps.iter().cloned());
        let mut values = self.values.clone();
        values.extend(other.values.iter().cloned());
        Ok(Self {
            timestamps,
            names: self.names.clone(),
            values,
        })
    }
}

/// Per-dimension scale used by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalingInfo<T> {
    pub std: Vec<T>,
    pub mean: Vec<T>,
    /// Subtract `mean` before scaling. Off by default.
    #[serde(default)]
    pub center: bool,
}

impl<T: Scalar> ScalingInfo<T> {
    /// Population mean and standard deviation of every dimension.
    pub fn from_series(series: &SeriesFrame<T>) -> Result<Self> {
        if series.len() < 2 {
            return Err(DybmError::Degenerate(
                "standardization needs at least 2 observations".into(),
            ));
        }
        let n = T::from_count(series.len());
        let mut mean = Vec::with_capacity(series.dim());
        let mut std = Vec::with_capacity(series.dim());
        for j in 0..series.dim() {
            let col = series.column(j);
            let m = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
            mean.push(m);
            std.push(var.sqrt());
        }
        let info = Self {
            std,
            mean,
            center: false,
        };
        info.validate()?;
        Ok(info)
    }

    fn validate(&self) -> Result<()> {
        if let Some(j) = self
            .std
            .iter()
            .position(|&s| !(s > T::zero()) || !s.is_finite())
        {
            return Err(DybmError::Degenerate(format!(
                "zero standard deviation in dimension {j}"
            )));
        }
        Ok(())
    }
}

/// Reads a price CSV with a header row and one date column.
///
/// The date column is the one named `date` (any case), otherwise the first
/// column. `value_columns` selects the value columns; empty means every
/// non-date column. Row numbers in errors count data rows from 1.
pub fn load_price_csv<T: Scalar>(
    path: impl AsRef<Path>,
    value_columns: &[&str],
) -> Result<SeriesFrame<T>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| DybmError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| DybmError::Csv {
            path: shown.clone(),
            message: e.to_string(),
        })?
        .clone();
    let date_idx = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("date"))
        .unwrap_or(0);

    let (names, idx): (Vec<String>, Vec<usize>) = if value_columns.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != date_idx)
            .map(|(i, h)| (h.to_string(), i))
            .unzip()
    } else {
        let mut names = Vec::new();
        let mut idx = Vec::new();
        for &col in value_columns {
            let i = headers
                .iter()
                .position(|h| h == col)
                .ok_or_else(|| DybmError::Csv {
                    path: shown.clone(),
                    message: format!("missing column '{col}'"),
                })?;
            names.push(col.to_string());
            idx.push(i);
        }
        (names, idx)
    };
    if names.is_empty() {
        return Err(DybmError::Csv {
            path: shown,
            message: "no value columns".into(),
        });
    }

    let mut timestamps: Vec<String> = Vec::new();
    let mut values = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| DybmError::Row {
            row,
            message: e.to_string(),
        })?;
        let date = record
            .get(date_idx)
            .ok_or_else(|| DybmError::Row {
                row,
                message: "missing date cell".into(),
            })?
            .to_string();
        if let Some(prev) = timestamps.last() {
            if date.as_str() <= prev.as_str() {
                return Err(DybmError::Row {
                    row,
                    message: format!("date '{date}' does not follow '{prev}'"),
                });
            }
        }
        let mut obs = Vec::with_capacity(idx.len());
        for (&i, name) in idx.iter().zip(&names) {
            let cell = record.get(i).ok_or_else(|| DybmError::Row {
                row,
                message: format!("missing cell for '{name}'"),
            })?;
            let v: T = cell.parse().map_err(|_| DybmError::Row {
                row,
                message: format!("cannot parse '{cell}' in column '{name}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(DybmError::Row {
                    row,
                    message: format!("non-finite value in column '{name}'"),
                });
            }
            obs.push(v);
        }
        timestamps.push(date);
        values.push(obs);
    }
    if values.is_empty() {
        return Err(DybmError::Csv {
            path: shown,
            message: "no data rows".into(),
        });
    }
    SeriesFrame::new(timestamps, names, values)
}

/// Simple returns `(p_t − p_{t−1}) / p_{t−1}`, stamped with the later date.
pub fn to_returns<T: Scalar>(prices: &SeriesFrame<T>) -> Result<SeriesFrame<T>> {
    if prices.len() < 2 {
        return Err(DybmError::Degenerate(
            "returns need at least 2 prices".into(),
        ));
    }
    let mut values = Vec::with_capacity(prices.len() - 1);
    for (t, pair) in prices.values.windows(2).enumerate() {
        let mut row = Vec::with_capacity(prices.dim());
        for (&prev, &next) in pair[0].iter().zip(&pair[1]) {
            if prev == T::zero() {
                return Err(DybmError::ZeroPrice { index: t });
            }
            row.push((next - prev) / prev);
        }
        values.push(row);
    }
    SeriesFrame::new(
        prices.timestamps[1..].to_vec(),
        prices.names.clone(),
        values,
    )
}

/// Divides every dimension by its standard deviation.
///
/// With `stats = None` the population statistics of `series` are used;
/// pass the training statistics to scale held-out data consistently.
pub fn standardize<T: Scalar>(
    series: &SeriesFrame<T>,
    stats: Option<&ScalingInfo<T>>,
) -> Result<(SeriesFrame<T>, ScalingInfo<T>)> {
    let info = match stats {
        Some(s) => {
            if s.std.len() != series.dim() || s.mean.len() != series.dim() {
                return Err(DybmError::Shape(format!(
                    "scaling info has {} dimensions, series has {}",
                    s.std.len(),
                    series.dim()
                )));
            }
            s.validate()?;
            s.clone()
        }
        None => ScalingInfo::from_series(series)?,
    };
    let values = series
        .values
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let v = if info.center { v - info.mean[j] } else { v };
                    v / info.std[j]
                })
                .collect()
        })
        .collect();
    let out = SeriesFrame::new(series.timestamps.clone(), series.names.clone(), values)?;
    Ok((out, info))
}

/// Splits into the first `train_len` points and the remainder.
pub fn split<T: Scalar>(
    series: &SeriesFrame<T>,
    train_len: usize,
) -> Result<(SeriesFrame<T>, SeriesFrame<T>)> {
    if train_len == 0 || train_len >= series.len() {
        return Err(DybmError::InvalidParameter(format!(
            "train_len must lie in 1..{}, got {train_len}",
            series.len()
        )));
    }
    let part = |range: std::ops::Range<usize>| SeriesFrame {
        timestamps: series.timestamps[range.clone()].to_vec(),
        names: series.names.clone(),
        values: series.values[range].to_vec(),
    };
    Ok((part(0..train_len), part(train_len..series.len())))
}

/// Writes `date,<names...>` followed by one row per observation.
pub fn write_series_csv<T: Scalar>(series: &SeriesFrame<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|e| DybmError::Csv {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| DybmError::Csv {
        path: shown.clone(),
        message: e.to_string(),
    };
    let mut header = vec!["date".to_string()];
    header.extend(series.names.iter().cloned());
    writer.write_record(&header).map_err(csv_err)?;
    for (ts, row) in series.timestamps.iter().zip(&series.values) {
        let mut rec = vec![ts.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&rec).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| DybmError::Io {
        path: shown,
        source,
    })
}

/// Writes a flat `{name: number}` JSON object.
pub fn write_report_json(report: &BTreeMap<String, f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some((k, _)) = report.iter().find(|(_, v)| !v.is_finite()) {
        return Err(DybmError::Diverged(format!(
            "report entry '{k}' is not finite"
        )));
    }
    write_json(report, path)
}

pub(crate) fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let shown = path.display().to_string();
    let file = File::create(path).map_err(|source| DybmError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|source| DybmError::Io {
            path: shown,
            source,
        })
}

/// Reads any JSON document produced by this crate.
pub fn read_json<S: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<S> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DybmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
