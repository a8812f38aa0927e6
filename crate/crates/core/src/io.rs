//! CSV datasets and point clouds, canonical JSON.
//!
//! Dataset header: `y1..ym, x_1_1..x_1_n, …, x_m_1..x_m_n`, one row per
//! sample with `X_k` flattened channel-major. Point clouds use `x,y,z`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, Vector3};
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::ellipsoid::Point;
use crate::error::{Error, Result};
use crate::types::{Dataset, Sample};

fn csv_err(e: csv::Error) -> Error {
    Error::Input(format!("csv: {e}"))
}

fn parse_field(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Input(format!("row {row}, column {col}: '{s}' is not a number")))
}

/// Splits a dataset header into `(m, n)` after checking every column name.
fn dataset_shape(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let m = names.iter().take_while(|h| h.starts_with('y')).count();
    if m == 0 {
        return Err(Error::Input("dataset header must start with y1".into()));
    }
    for (i, name) in names[..m].iter().enumerate() {
        if *name != format!("y{}", i + 1) {
            return Err(Error::Input(format!("expected column y{}, found '{name}'", i + 1)));
        }
    }
    let rest = names.len() - m;
    if rest == 0 || rest % m != 0 {
        return Err(Error::Input(format!("{rest} regressor columns do not split into {m} channels")));
    }
    let n = rest / m;
    for i in 0..m {
        for j in 0..n {
            let want = format!("x_{}_{}", i + 1, j + 1);
            let got = names[m + i * n + j];
            if got != want {
                return Err(Error::Input(format!("expected column {want}, found '{got}'")));
            }
        }
    }
    Ok((m, n))
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let (m, n) = dataset_shape(&header)?;
    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let vals: Vec<f64> = rec
            .iter()
            .zip(header.iter())
            .map(|(v, h)| parse_field(v, row + 1, h))
            .collect::<Result<_>>()?;
        if vals.len() != m + m * n {
            return Err(Error::Input(format!("row {} has {} fields, expected {}", row + 1, vals.len(), m + m * n)));
        }
        samples.push(Sample::new(DMatrix::from_row_slice(m, n, &vals[m..]), DVector::from_column_slice(&vals[..m])));
    }
    if samples.is_empty() {
        return Err(Error::Input("dataset has no rows".into()));
    }
    Dataset::new(samples)
}

pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let (m, n) = (data.outputs(), data.params());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=m).map(|i| format!("y{i}")).collect();
    for i in 1..=m {
        header.extend((1..=n).map(|j| format!("x_{i}_{j}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for s in data.samples() {
        let mut row: Vec<String> = s.y.iter().map(|v| format_f64(*v)).collect();
        for i in 0..m {
            row.extend(s.x.row(i).iter().map(|v| format_f64(*v)));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Input(e.to_string()))
}

pub fn read_points<R: Read>(reader: R) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["x", "y", "z"] {
        return Err(Error::Input(format!("point cloud header must be x,y,z, found {}", header.join(","))));
    }
    let mut pts = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 3 {
            return Err(Error::Input(format!("row {} has {} fields, expected 3", row + 1, rec.len())));
        }
        let c = |i: usize| parse_field(&rec[i], row + 1, &header[i]);
        let p = Vector3::new(c(0)?, c(1)?, c(2)?);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("row {} is not finite", row + 1)));
        }
        pts.push(p);
    }
    Ok(pts)
}

pub fn write_points<W: Write>(points: &[Point], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y", "z"]).map_err(csv_err)?;
    for p in points {
        w.write_record(p.iter().map(|v| format_f64(*v))).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Input(e.to_string()))
}

/// Seventeen significant digits in scientific notation.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Compact layout except for floats.
struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Sorted keys, floats with 17 significant digits, trailing newline.
/// Parsing the output and emitting it again reproduces it byte for byte.
pub fn canonical_json(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter);
    serde::Serialize::serialize(&sort_keys(value), &mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("utf-8")
}

fn sort_keys(v: &Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.iter().map(sort_keys).collect()),
        other => other.clone(),
    }
}

pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Input(format!("json: {e}")))
}
