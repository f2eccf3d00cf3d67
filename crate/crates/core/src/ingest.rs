//! Loading, validating and pairing measurement series.
//!
//! The on-disk format is plain UTF-8 text with one numeric literal per line.
//! Lines whose first non-blank character is `#` are comments and blank lines
//! are skipped. Order is significant: it carries the serial dependence.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::{Error, Result, Scalar};

/// Measurement unit. Metadata only, never used in arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Ns,
    Cycles,
    #[default]
    Unitless,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Ns => "ns",
            Unit::Cycles => "cycles",
            Unit::Unitless => "unitless",
        })
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ns" => Ok(Unit::Ns),
            "cycles" => Ok(Unit::Cycles),
            "unitless" | "none" => Ok(Unit::Unitless),
            other => Err(format!("unknown unit {other:?} (expected ns, cycles or unitless)")),
        }
    }
}

/// Ordered timing observations of one input class.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries<T> {
    values: Vec<T>,
    label: String,
    unit: Unit,
}

impl<T: Scalar> MeasurementSeries<T> {
    /// Validates that the series is nonempty and every value is finite.
    pub fn new(values: Vec<T>, label: impl Into<String>, unit: Unit) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            values,
            label: label.into(),
            unit,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Applies `f` to every value, keeping label and unit.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(
            self.values.iter().map(|&v| f(v)).collect(),
            self.label.clone(),
            self.unit,
        )
    }

    fn truncated(mut self, n: usize) -> Self {
        self.values.truncate(n);
        self
    }
}

/// Parses the text format. `label` is attached to the resulting series.
pub fn parse_series<T: Scalar>(text: &str, label: &str, unit: Unit) -> Result<MeasurementSeries<T>> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: T = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            content: line.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                content: line.to_string(),
            });
        }
        values.push(v);
    }
    MeasurementSeries::new(values, label, unit)
}

/// Reads a series from `path`. The label defaults to the file stem.
pub fn load_series<T: Scalar>(path: impl AsRef<Path>, unit: Unit) -> Result<MeasurementSeries<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_series(&text, &label, unit)
}

/// Renders a series in the text format, with a two-line comment header.
pub fn render_series<T: Scalar>(series: &MeasurementSeries<T>) -> String {
    let mut out = String::with_capacity(series.len() * 20 + 64);
    out.push_str(&format!("# label: {}\n# unit: {}\n", series.label, series.unit));
    for v in &series.values {
        out.push_str(&v.to_text());
        out.push('\n');
    }
    out
}

pub fn write_series<T: Scalar>(series: &MeasurementSeries<T>, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(render_series(series).as_bytes())
}

/// Two series of equal length whose index `i` is the pairing key.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample<T> {
    x: MeasurementSeries<T>,
    y: MeasurementSeries<T>,
}

impl<T: Scalar> PairedSample<T> {
    pub fn x(&self) -> &MeasurementSeries<T> {
        &self.x
    }

    pub fn y(&self) -> &MeasurementSeries<T> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn unit(&self) -> Unit {
        self.x.unit
    }

    /// The same pair with the roles of `x` and `y` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }

    /// Applies `f` to every value of both series.
    pub fn map(&self, f: impl Fn(T) -> T + Copy) -> Result<Self> {
        Ok(Self {
            x: self.x.map(f)?,
            y: self.y.map(f)?,
        })
    }

    /// Convenience constructor from raw value vectors.
    pub fn from_values(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        pair(
            MeasurementSeries::new(x, "x", Unit::Unitless)?,
            MeasurementSeries::new(y, "y", Unit::Unitless)?,
            false,
        )
    }
}

/// Pairs two series. Unequal lengths are an error unless `truncate` is set,
/// in which case both are cut to the shorter length.
pub fn pair<T: Scalar>(x: MeasurementSeries<T>, y: MeasurementSeries<T>, truncate: bool) -> Result<PairedSample<T>> {
    if x.unit != y.unit {
        return Err(Error::UnitMismatch {
            x: x.unit.to_string(),
            y: y.unit.to_string(),
        });
    }
    let (nx, ny) = (x.len(), y.len());
    if nx == ny {
        return Ok(PairedSample { x, y });
    }
    if !truncate {
        return Err(Error::LengthMismatch { x: nx, y: ny });
    }
    let n = nx.min(ny);
    Ok(PairedSample {
        x: x.truncated(n),
        y: y.truncated(n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Discrete,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Continuous => "continuous",
            Kind::Discrete => "discrete",
        })
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" => Ok(Kind::Continuous),
            "discrete" => Ok(Kind::Discrete),
            other => Err(format!("unknown data kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DataKind {
    pub kind: Kind,
    pub distinct_count: usize,
}

/// Largest pooled distinct count still treated as discrete data.
pub fn discrete_limit(n: usize) -> usize {
    16.max(2 * n / 20)
}

/// Discrete iff the number of distinct values across both series is at most
/// `max(16, floor(0.05 * 2n))`.
pub fn classify_data_kind<T: Scalar>(pair: &PairedSample<T>) -> DataKind {
    let distinct: HashSet<u64> = pair
        .x
        .values
        .iter()
        .chain(&pair.y.values)
        // -0.0 and 0.0 compare equal and must count once
        .map(|v| (v.as_f64() + 0.0).to_bits())
        .collect();
    let distinct_count = distinct.len();
    let kind = if distinct_count <= discrete_limit(pair.n()) {
        Kind::Discrete
    } else {
        Kind::Continuous
    };
    DataKind { kind, distinct_count }
}
