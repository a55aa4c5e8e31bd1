//! CSV form of [`DataSeries`]:
//!
//! ```text
//! # x=phi
//! # y=noise_ratio
//! # scale=db
//! # gaps=empty y marks the oscillation threshold
//! x,y
//! 0,-6.01
//! 3.14159,
//! ```

use std::io::{self, Read, Write};

use cfamp_core::experiments::{DataPoint, DataSeries, Scale};

use crate::netlist::fmt_f64;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Series(#[from] cfamp_core::Error),
}

/// Writes `series` with its labels, scale and any extra `meta` pairs as
/// `# key=value` lines ahead of the header.
pub fn write_series<W: Write>(mut w: W, series: &DataSeries, meta: &[(&str, String)]) -> Result<(), DataError> {
    writeln!(w, "# x={}", series.x_label)?;
    writeln!(w, "# y={}", series.y_label)?;
    writeln!(w, "# scale={}", series.scale.as_str())?;
    if series.gaps().next().is_some() {
        writeln!(w, "# gaps=empty y marks the oscillation threshold")?;
    }
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    let with_err = series.points().iter().any(|p| p.yerr.is_some());
    let mut out = csv::Writer::from_writer(w);
    if with_err {
        out.write_record(["x", "y", "yerr"])?;
    } else {
        out.write_record(["x", "y"])?;
    }
    let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for p in series.points() {
        if with_err {
            out.write_record([fmt_f64(p.x), cell(p.y), cell(p.yerr)])?;
        } else {
            out.write_record([fmt_f64(p.x), cell(p.y)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Metadata lines of a CSV file, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Reads a series. Rows are sorted by `x`; the scale comes from the
/// `scale` metadata key and defaults to linear.
pub fn read_series<R: Read>(mut r: R) -> Result<(DataSeries, Metadata), DataError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut meta = Metadata::default();
    for line in text.lines() {
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.0.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (xi, yi) = match (col("x"), col("y")) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(DataError::Format { line: 1, message: "header must name columns x and y".into() }),
    };
    let ei = col("yerr");

    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize, required: bool| -> Result<Option<f64>, DataError> {
            match rec.get(i).unwrap_or("") {
                "" if !required => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|_| DataError::Format { line, message: format!("invalid number `{s}`") }),
            }
        };
        let x = num(xi, true)?.expect("required");
        points.push(DataPoint { x, y: num(yi, false)?, yerr: ei.map(|i| num(i, false)).transpose()?.flatten() });
    }
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    let scale = match meta.get("scale") {
        Some("db") => Scale::Db,
        Some("linear") | None => Scale::Linear,
        Some(other) => return Err(DataError::Format { line: 1, message: format!("unknown scale `{other}`") }),
    };
    let x_label = meta.get("x").unwrap_or("x").to_string();
    let y_label = meta.get("y").unwrap_or("y").to_string();
    Ok((DataSeries::new(points, x_label, y_label, scale)?, meta))
}
