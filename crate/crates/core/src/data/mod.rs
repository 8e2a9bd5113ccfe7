//! Tables, CSV ingestion, chronological splits, windowing and z-scoring.

mod synthetic;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, FilmError, Result};

pub use synthetic::{
    desk_series, gen_ar_unitary, gen_lipschitz, gen_sine_trend, ArTrajectory, SineComponent, UnitaryAr, DESK_LENGTH,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    pub timestamps: Vec<String>,
    /// `L x D`
    pub values: Array2<f64>,
    pub column_names: Vec<String>,
}

impl TimeSeriesTable {
    pub fn new(timestamps: Vec<String>, values: Array2<f64>, column_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return invalid("table needs at least one row");
        }
        if timestamps.len() != values.nrows() || column_names.len() != values.ncols() {
            return invalid(format!(
                "table is {}x{} but has {} timestamps and {} column names",
                values.nrows(),
                values.ncols(),
                timestamps.len(),
                column_names.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FilmError::NonFinite {
                index: i,
                detail: "table values must be finite".into(),
            });
        }
        Ok(Self {
            timestamps,
            values,
            column_names,
        })
    }

    /// Single-column table with integer timestamps.
    pub fn from_series(name: &str, series: &[f64]) -> Result<Self> {
        let values = Array2::from_shape_vec((series.len(), 1), series.to_vec()).expect("shape");
        Self::new((0..series.len()).map(|i| i.to_string()).collect(), values, vec![name.to_string()])
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| FilmError::InvalidArgument(format!("no column named `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = self.values.select(Axis(1), &idx);
        Ok(Self {
            timestamps: self.timestamps.clone(),
            values,
            column_names: names.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn rows(&self, start: usize, end: usize) -> Self {
        Self {
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values.slice(s![start..end, ..]).to_owned(),
            column_names: self.column_names.clone(),
        }
    }
}

/// Reads a CSV whose first column is a timestamp and the rest are numbers.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeriesTable> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<TimeSeriesTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let parse_err = |line: u64, detail: String| FilmError::Parse { line: line as usize, detail };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.len() < 2 || header.iter().all(|h| h.trim().is_empty()) {
        return Err(parse_err(1, "header must name a timestamp column and at least one value column".into()));
    }
    let width = header.len();
    let column_names: Vec<String> = header.iter().skip(1).map(|h| h.trim().to_string()).collect();

    let mut timestamps = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, found {}", rec.len())));
        }
        timestamps.push(rec[0].to_string());
        for (j, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}`: `{cell}` is not a number", header[j].trim())))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{}`: non-finite value `{cell}`", header[j].trim())));
            }
            flat.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    let values = Array2::from_shape_vec((timestamps.len(), width - 1), flat).expect("rectangular");
    TimeSeriesTable::new(timestamps, values, column_names)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| !(r > 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return invalid(format!("split ratios must be positive and sum to 1, got {parts:?}"));
        }
        Ok(())
    }

    /// Row boundaries `(floor(train L), floor((train + val) L))`.
    pub fn boundaries(&self, len: usize) -> (usize, usize) {
        // the slack absorbs representation error such as 0.7 + 0.1 < 0.8
        let cut = |r: f64| ((r * len as f64) + 1e-9).floor() as usize;
        (cut(self.train), cut(self.train + self.val))
    }
}

pub fn split(table: &TimeSeriesTable, spec: &SplitSpec) -> Result<(TimeSeriesTable, TimeSeriesTable, TimeSeriesTable)> {
    spec.validate()?;
    let len = table.len();
    if len < 10 {
        return invalid(format!("splitting needs at least 10 rows, got {len}"));
    }
    let (a, b) = spec.boundaries(len);
    Ok((table.rows(0, a), table.rows(a, b), table.rows(b, len)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
    pub origin_index: usize,
}

pub fn windows(table: &TimeSeriesTable, input_len: usize, horizon: usize, stride: usize) -> Result<Vec<WindowSample>> {
    window_origins(table.len(), input_len, horizon, stride)?
        .map(|o| {
            Ok(WindowSample {
                input: table.values.slice(s![o..o + input_len, ..]).to_owned(),
                target: table.values.slice(s![o + input_len..o + input_len + horizon, ..]).to_owned(),
                origin_index: o,
            })
        })
        .collect()
}

/// Window origins `0, stride, ..` with `origin + input_len + horizon <= len`.
pub fn window_origins(
    len: usize,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<std::iter::StepBy<std::ops::RangeInclusive<usize>>> {
    if stride == 0 || input_len == 0 || horizon == 0 {
        return invalid("window length, horizon and stride must be positive");
    }
    if input_len + horizon > len {
        return invalid(format!(
            "window of {input_len} + {horizon} samples is longer than the {len}-row table"
        ));
    }
    Ok((0..=len - input_len - horizon).step_by(stride))
}

/// Per-channel z-score fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

const SCALER_TAG: &str = "film-scaler v1";

impl Scaler {
    /// Population statistics; a std below `1e-12` is replaced by 1.
    pub fn fit(values: ArrayView2<'_, f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return invalid("cannot fit a scaler on an empty table");
        }
        let mean = values.mean_axis(Axis(0)).expect("non-empty");
        let std = values.var_axis(Axis(0), 0.0).mapv(|v| {
            let s = v.sqrt();
            if s < 1e-12 {
                1.0
            } else {
                s
            }
        });
        Ok(Self { mean, std })
    }

    pub fn transform(&self, values: ArrayView2<'_, f64>) -> Array2<f64> {
        (&values - &self.mean) / &self.std
    }

    pub fn inverse(&self, values: ArrayView2<'_, f64>) -> Array2<f64> {
        &values * &self.std + &self.mean
    }

    pub fn transform_table(&self, table: &TimeSeriesTable) -> Result<TimeSeriesTable> {
        if table.channels() != self.mean.len() {
            return invalid(format!(
                "scaler has {} channels, table has {}",
                self.mean.len(),
                table.channels()
            ));
        }
        Ok(TimeSeriesTable {
            values: self.transform(table.values.view()),
            ..table.clone()
        })
    }

    /// Text form with exact bit patterns.
    pub fn to_text(&self) -> String {
        let mut out = format!("{SCALER_TAG}\n");
        for (m, s) in self.mean.iter().zip(&self.std) {
            writeln!(out, "{:016x} {:016x}", m.to_bits(), s.to_bits()).expect("string write");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SCALER_TAG) {
            return Err(FilmError::Format(format!("scaler text must start with `{SCALER_TAG}`")));
        }
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || FilmError::Parse {
                line: i + 2,
                detail: format!("expected two hex words, got `{line}`"),
            };
            let mut parts = line.split_whitespace();
            let mut word = || -> Result<f64> {
                let w = parts.next().ok_or_else(bad)?;
                Ok(f64::from_bits(u64::from_str_radix(w, 16).map_err(|_| bad())?))
            };
            mean.push(word()?);
            std.push(word()?);
        }
        Ok(Self {
            mean: Array1::from(mean),
            std: Array1::from(std),
        })
    }
}

/// Fits on `train` and returns the scaler plus every table transformed,
/// `train` first.
pub fn standardize(train: &TimeSeriesTable, others: &[&TimeSeriesTable]) -> Result<(Scaler, Vec<TimeSeriesTable>)> {
    let scaler = Scaler::fit(train.values.view())?;
    let mut out = vec![scaler.transform_table(train)?];
    for t in others {
        out.push(scaler.transform_table(t)?);
    }
    Ok((scaler, out))
}
