//! Signal capture files and their conversion into fixed-rate signal matrices.
//!
//! Two CSV layouts are accepted:
//!
//! * **wide**: header `time,<signal_1>,...,<signal_N>`, one row per timestamp,
//!   an empty cell meaning the signal was not transmitted at that instant;
//! * **long**: header `time,signal,value`, one sample per row.
//!
//! Both are UTF-8, comma-delimited, with `.` as decimal separator. Lines
//! starting with `#` are ignored.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FREQUENCY_HZ: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    WideCsv,
    LongCsv,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" | "wide_csv" => Ok(InputFormat::WideCsv),
            "long" | "long_csv" => Ok(InputFormat::LongCsv),
            other => Err(Error::InvalidParameter(format!(
                "unknown input format {other:?} (expected wide or long)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "snake_case")]
pub enum CaptureLabel {
    Benign,
    Attack { kind: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSignal {
    pub signal_id: String,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
}

impl RawSignal {
    /// Builds a signal from unordered samples, sorting them by time.
    ///
    /// Fails if two samples share a timestamp.
    pub fn from_samples(signal_id: impl Into<String>, mut samples: Vec<(f64, f64)>) -> Result<Self> {
        let signal_id = signal_id.into();
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateTimestamp {
                path: Default::default(),
                signal: signal_id,
                timestamp: w[0].0,
            });
        }
        let (timestamps, values) = samples.into_iter().unzip();
        Ok(RawSignal {
            signal_id,
            timestamps,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn first_time(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn last_time(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalCapture {
    pub capture_id: String,
    pub signals: Vec<RawSignal>,
    pub source_path: String,
    pub label: CaptureLabel,
}

impl SignalCapture {
    pub fn with_label(mut self, label: CaptureLabel) -> Self {
        self.label = label;
        self
    }

    pub fn signal(&self, signal_id: &str) -> Option<&RawSignal> {
        self.signals.iter().find(|s| s.signal_id == signal_id)
    }

    /// Writes the capture in the wide layout. Timestamps are the union over
    /// all signals; cells without a sample are left empty.
    pub fn write_wide_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut times: Vec<f64> = self
            .signals
            .iter()
            .flat_map(|s| s.timestamps.iter().copied())
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();

        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend(self.signals.iter().map(|s| s.signal_id.clone()));
        writer.write_record(&header)?;

        let mut cursors = vec![0usize; self.signals.len()];
        let mut row = Vec::with_capacity(header.len());
        for &t in &times {
            row.clear();
            row.push(format!("{t}"));
            for (signal, cursor) in self.signals.iter().zip(cursors.iter_mut()) {
                if *cursor < signal.len() && signal.timestamps[*cursor] == t {
                    row.push(format!("{}", signal.values[*cursor]));
                    *cursor += 1;
                } else {
                    row.push(String::new());
                }
            }
            writer.write_record(&row)?;
        }
        writer.flush()
    }
}

/// Reads a capture file. The capture id is the file stem and the label
/// defaults to benign.
pub fn parse_capture(path: &Path, format: InputFormat) -> Result<SignalCapture> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let capture_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_reader(file, &capture_id, path, format)
}

pub fn parse_reader<R: Read>(
    reader: R,
    capture_id: &str,
    path: &Path,
    format: InputFormat,
) -> Result<SignalCapture> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);

    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        parse_err(line, e.to_string())
    };

    let header: Vec<String> = csv_reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.first().map(String::as_str) != Some("time") {
        return Err(parse_err(1, "first header column must be `time`".into()));
    }

    let mut order: Vec<String> = Vec::new();
    let mut samples: HashMap<String, Vec<(f64, f64)>> = HashMap::new();

    match format {
        InputFormat::WideCsv => {
            for (i, name) in header.iter().enumerate().skip(1) {
                if name.is_empty() || header[..i].contains(name) {
                    return Err(parse_err(1, format!("bad or duplicate signal column {name:?}")));
                }
                order.push(name.clone());
                samples.insert(name.clone(), Vec::new());
            }
            for record in csv_reader.records() {
                let record = record.map_err(csv_err)?;
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let t = parse_number(&record[0], "time").map_err(|m| parse_err(line, m))?;
                for (cell, name) in record.iter().skip(1).zip(&order) {
                    if cell.is_empty() {
                        continue;
                    }
                    let v = parse_number(cell, name).map_err(|m| parse_err(line, m))?;
                    samples.get_mut(name).expect("column registered").push((t, v));
                }
            }
        }
        InputFormat::LongCsv => {
            if header.len() != 3 || header[1] != "signal" || header[2] != "value" {
                return Err(parse_err(1, "long format header must be `time,signal,value`".into()));
            }
            for record in csv_reader.records() {
                let record = record.map_err(csv_err)?;
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                let t = parse_number(&record[0], "time").map_err(|m| parse_err(line, m))?;
                let name = &record[1];
                if name.is_empty() {
                    return Err(parse_err(line, "empty signal name".into()));
                }
                let v = parse_number(&record[2], name).map_err(|m| parse_err(line, m))?;
                samples
                    .entry(name.to_owned())
                    .or_insert_with(|| {
                        order.push(name.to_owned());
                        Vec::new()
                    })
                    .push((t, v));
            }
        }
    }

    let mut signals = Vec::with_capacity(order.len());
    for name in order {
        let series = samples.remove(&name).unwrap_or_default();
        if series.is_empty() {
            continue;
        }
        let signal = RawSignal::from_samples(name, series).map_err(|e| match e {
            Error::DuplicateTimestamp {
                signal, timestamp, ..
            } => Error::DuplicateTimestamp {
                path: path.to_path_buf(),
                signal,
                timestamp,
            },
            other => other,
        })?;
        signals.push(signal);
    }
    if signals.is_empty() {
        return Err(Error::EmptyCapture(path.to_path_buf()));
    }

    Ok(SignalCapture {
        capture_id: capture_id.to_owned(),
        signals,
        source_path: path.display().to_string(),
        label: CaptureLabel::Benign,
    })
}

fn parse_number(cell: &str, column: &str) -> std::result::Result<f64, String> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value {cell:?} in column {column:?}")),
        Err(_) => Err(format!("non-numeric value {cell:?} in column {column:?}")),
    }
}

/// A capture resampled onto a common uniform grid, pruned of constant
/// signals, with every row centered and scaled to unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMatrix {
    pub capture_id: String,
    pub signal_ids: Vec<String>,
    pub frequency_hz: f64,
    pub grid: Vec<f64>,
    pub data: Vec<Vec<f64>>,
    pub dropped_constant: Vec<String>,
}

impl SignalMatrix {
    pub fn n_signals(&self) -> usize {
        self.signal_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.grid.len()
    }
}

/// Uniform grid over the intersection of all signals' observed spans.
pub fn common_grid(capture: &SignalCapture, frequency_hz: f64) -> Result<Vec<f64>> {
    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    if capture.signals.is_empty() {
        return Err(Error::EmptyCapture(capture.source_path.clone().into()));
    }
    let start = capture
        .signals
        .iter()
        .map(RawSignal::first_time)
        .fold(f64::NEG_INFINITY, f64::max);
    let end = capture
        .signals
        .iter()
        .map(RawSignal::last_time)
        .fold(f64::INFINITY, f64::min);

    let points = if end < start {
        0
    } else {
        ((end - start) * frequency_hz + 1e-9).floor() as usize + 1
    };
    if points < 2 {
        return Err(Error::InsufficientOverlap {
            capture_id: capture.capture_id.clone(),
            points,
        });
    }
    Ok((0..points)
        .map(|k| start + k as f64 / frequency_hz)
        .collect())
}

/// Piecewise-linear interpolation of `signal` at each (ascending) grid time.
///
/// Grid times must lie within the signal's span; a time overshooting either
/// end by rounding takes the boundary sample.
pub fn interpolate_onto(signal: &RawSignal, grid: &[f64]) -> Vec<f64> {
    let ts = &signal.timestamps;
    let vs = &signal.values;
    let last = ts.len() - 1;
    let mut j = 0usize;
    grid.iter()
        .map(|&t| {
            if t <= ts[0] {
                return vs[0];
            }
            if t >= ts[last] {
                return vs[last];
            }
            while ts[j + 1] < t {
                j += 1;
            }
            let (t0, t1) = (ts[j], ts[j + 1]);
            let (v0, v1) = (vs[j], vs[j + 1]);
            if t == t1 {
                v1
            } else {
                v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
            }
        })
        .collect()
}

pub(crate) fn is_constant(row: &[f64]) -> bool {
    let (lo, hi) = row
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo < 1e-12 * hi.abs().max(1.0)
}

/// Resamples, prunes constant rows, then centers and unit-normalizes.
pub fn resample(capture: &SignalCapture, frequency_hz: f64) -> Result<SignalMatrix> {
    let grid = common_grid(capture, frequency_hz)?;

    let mut signal_ids = Vec::new();
    let mut data = Vec::new();
    let mut dropped_constant = Vec::new();
    for signal in &capture.signals {
        let mut row = interpolate_onto(signal, &grid);
        if is_constant(&row) {
            dropped_constant.push(signal.signal_id.clone());
            continue;
        }
        center_and_normalize(&mut row);
        signal_ids.push(signal.signal_id.clone());
        data.push(row);
    }
    if data.is_empty() {
        return Err(Error::DegenerateCapture(capture.capture_id.clone()));
    }

    Ok(SignalMatrix {
        capture_id: capture.capture_id.clone(),
        signal_ids,
        frequency_hz,
        grid,
        data,
        dropped_constant,
    })
}

fn center_and_normalize(row: &mut [f64]) {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter_mut().for_each(|v| *v -= mean);
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    row.iter_mut().for_each(|v| *v /= norm);
}
