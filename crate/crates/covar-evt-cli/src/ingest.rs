//! Price/loss CSV ingestion and date alignment.

use std::fmt;
use std::path::Path;

/// How the value column of an input file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesMode {
    /// Strictly positive price levels; losses are `-100·Δlog(P)` (percent).
    Prices,
    /// Values are already losses and pass through unchanged.
    Losses,
}

impl std::str::FromStr for SeriesMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "prices" => Ok(SeriesMode::Prices),
            "losses" => Ok(SeriesMode::Losses),
            other => Err(format!("unknown mode '{other}' (expected prices|losses)")),
        }
    }
}

/// A dated loss series produced by [`ingest`].
#[derive(Debug, Clone)]
pub struct LossSeries {
    pub dates: Vec<String>,
    pub losses: Vec<f64>,
}

#[derive(Debug)]
pub struct IngestError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path, self.line, self.message)
    }
}

impl std::error::Error for IngestError {}

fn err(path: &Path, line: usize, message: impl Into<String>) -> IngestError {
    IngestError {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Read a `(date, value)` CSV and return the loss series.
///
/// The first line is treated as a header when its value column does not
/// parse as a number. Dates must be strictly increasing; prices must be
/// strictly positive in price mode. In price mode the series starts at the
/// second date (losses are percent negative log returns of consecutive
/// prices).
pub fn ingest(path: &Path, mode: SeriesMode) -> Result<LossSeries, IngestError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| err(path, 0, format!("cannot read file: {e}")))?;
    let mut dates: Vec<String> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split(',');
        let date = parts
            .next()
            .ok_or_else(|| err(path, line_no, "missing date column"))?
            .trim();
        let value_str = parts
            .next()
            .ok_or_else(|| err(path, line_no, "missing value column"))?
            .trim();
        if parts.next().is_some() {
            return Err(err(path, line_no, "expected exactly two columns (date,value)"));
        }
        let value: f64 = match value_str.parse() {
            Ok(v) => v,
            Err(_) if idx == 0 => continue, // header row
            Err(_) => {
                return Err(err(path, line_no, format!("cannot parse value '{value_str}'")));
            }
        };
        if !value.is_finite() {
            return Err(err(path, line_no, "non-finite value"));
        }
        if mode == SeriesMode::Prices && value <= 0.0 {
            return Err(err(path, line_no, format!("non-positive price {value}")));
        }
        if let Some(prev) = dates.last() {
            if date <= prev.as_str() {
                return Err(err(
                    path,
                    line_no,
                    format!("dates not strictly increasing: '{date}' after '{prev}'"),
                ));
            }
        }
        dates.push(date.to_string());
        values.push(value);
    }
    if values.len() < 2 {
        return Err(err(path, 0, "need at least two data rows"));
    }
    match mode {
        SeriesMode::Losses => Ok(LossSeries { dates, losses: values }),
        SeriesMode::Prices => {
            let losses: Vec<f64> = values
                .windows(2)
                .map(|w| -100.0 * (w[1].ln() - w[0].ln()))
                .collect();
            Ok(LossSeries {
                dates: dates[1..].to_vec(),
                losses,
            })
        }
    }
}

/// Inner-join two dated series; returns the aligned pair and the number of
/// rows dropped from each input.
pub fn inner_join(a: &LossSeries, b: &LossSeries) -> (Vec<String>, Vec<f64>, Vec<f64>, usize, usize) {
    let set_b: std::collections::HashSet<&str> = b.dates.iter().map(|s| s.as_str()).collect();
    let index_b: std::collections::HashMap<&str, usize> = b
        .dates
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut dates = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, d) in a.dates.iter().enumerate() {
        if set_b.contains(d.as_str()) {
            dates.push(d.clone());
            xs.push(a.losses[i]);
            ys.push(b.losses[index_b[d.as_str()]]);
        }
    }
    let dropped_a = a.dates.len() - dates.len();
    let dropped_b = b.dates.len() - dates.len();
    (dates, xs, ys, dropped_a, dropped_b)
}
