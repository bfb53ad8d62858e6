use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::dataset::{Dataset, Metric};
use crate::error::{invalid, Error, Result};
use crate::io::ByteReader;

/// On-disk vector formats.
///
/// * `fvecs`: records of `(d: i32 LE, d x f32 LE)`.
/// * `bvecs`: records of `(d: i32 LE, d x u8)`.
/// * `csv`: one vector per row, no header, uniform column count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Fvecs,
    Bvecs,
    Csv,
}

impl VectorFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(|e| e.parse().ok())
    }
}

impl FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvecs" => Ok(VectorFormat::Fvecs),
            "bvecs" => Ok(VectorFormat::Bvecs),
            "csv" => Ok(VectorFormat::Csv),
            other => invalid(format!("unknown vector format '{other}'")),
        }
    }
}

pub fn load_vectors(path: &Path, format: VectorFormat, metric: Metric) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    let (points, d) = read_vectors(file, format)?;
    Dataset::new(points, d, metric)
}

/// Parses vectors into a row-major buffer and its dimension.
pub fn read_vectors<R: Read>(mut reader: R, format: VectorFormat) -> Result<(Vec<f64>, usize)> {
    let (points, d) = match format {
        VectorFormat::Fvecs | VectorFormat::Bvecs => {
            let mut buf = Vec::new();
            reader.read_to_end(&mut buf)?;
            read_binary(&buf, format == VectorFormat::Fvecs)?
        }
        VectorFormat::Csv => read_csv(reader)?,
    };
    if points.is_empty() {
        return invalid("input contains no vectors");
    }
    Ok((points, d))
}

fn read_binary(buf: &[u8], float: bool) -> Result<(Vec<f64>, usize)> {
    let mut r = ByteReader::new(buf);
    let mut points = Vec::new();
    let mut dim = None;
    let mut record = 0usize;
    while r.remaining() > 0 {
        let at = r.offset();
        let d = r.u32("record header")? as i32;
        if d <= 0 {
            return Err(Error::Format(format!(
                "record {record} at byte offset {at} declares dimension {d}"
            )));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Format(format!(
                    "record {record} has dimension {d}, expected {expected}"
                )))
            }
            _ => {}
        }
        if float {
            let body = r.take(4 * d, "fvecs record")?;
            points.extend(
                body.chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))),
            );
        } else {
            let body = r.take(d, "bvecs record")?;
            points.extend(body.iter().map(|&b| f64::from(b)));
        }
        record += 1;
    }
    Ok((points, dim.unwrap_or(0)))
}

fn read_csv<R: Read>(reader: R) -> Result<(Vec<f64>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut dim = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        match dim {
            None => dim = Some(rec.len()),
            Some(expected) if expected != rec.len() => {
                return Err(Error::Format(format!(
                    "row {row} has {} columns, expected {expected}",
                    rec.len()
                )))
            }
            _ => {}
        }
        for (col, field) in rec.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| {
                Error::Format(format!("row {row}, column {col}: cannot parse '{field}'"))
            })?;
            points.push(x);
        }
    }
    Ok((points, dim.unwrap_or(0)))
}

/// Writes a row-major buffer. `fvecs` narrows to f32; `bvecs` requires
/// integer values in `0..=255`; `csv` round-trips f64 exactly.
pub fn write_vectors(path: &Path, format: VectorFormat, points: &[f64], d: usize) -> Result<()> {
    if d == 0 || points.len() % d != 0 {
        return invalid(format!("buffer of {} values is not a multiple of d = {d}", points.len()));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    match format {
        VectorFormat::Fvecs => {
            for row in points.chunks_exact(d) {
                w.write_all(&(d as i32).to_le_bytes())?;
                for &x in row {
                    w.write_all(&(x as f32).to_le_bytes())?;
                }
            }
        }
        VectorFormat::Bvecs => {
            for (r, row) in points.chunks_exact(d).enumerate() {
                w.write_all(&(d as i32).to_le_bytes())?;
                for &x in row {
                    if !(0.0..=255.0).contains(&x) || x.fract() != 0.0 {
                        return invalid(format!("row {r}: value {x} does not fit in a byte"));
                    }
                    w.write_all(&[x as u8])?;
                }
            }
        }
        VectorFormat::Csv => {
            let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            for row in points.chunks_exact(d) {
                cw.write_record(row.iter().map(|x| x.to_string()))?;
            }
            cw.flush()?;
            return Ok(());
        }
    }
    w.flush()?;
    Ok(())
}
