//! CSV dataset format: header `id,age,group,f0,...,f{D-1}`, comma separated,
//! `.` decimal point, UTF-8, LF line endings. Floats are written in Rust's
//! shortest round-trip decimal form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Sample, MAX_INGEST_AGE};
use crate::error::{JamError, Result};

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| JamError::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let wrap = |e: csv::Error| JamError::Csv {
        row: 0,
        message: e.to_string(),
    };
    let mut header = vec!["id".to_string(), "age".to_string(), "group".to_string()];
    header.extend((0..dataset.input_dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(wrap)?;
    let mut row = Vec::with_capacity(header.len());
    for s in dataset.samples() {
        row.clear();
        row.push(s.id.clone());
        row.push(s.age.to_string());
        row.push(s.group.to_string());
        row.extend(s.features.iter().map(f64::to_string));
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| JamError::Csv {
        row: 0,
        message: e.to_string(),
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| JamError::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

/// Parses a dataset. Row numbers in errors are 1-based file lines, the header
/// being line 1.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = r
        .headers()
        .map_err(|e| JamError::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let input_dim = check_header(&header)?;
    let width = input_dim + 3;
    let mut samples = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| JamError::Csv {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(JamError::Csv {
                row,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let num = |col: usize, name: &str| -> Result<f64> {
            let cell = &record[col];
            let v: f64 = cell.trim().parse().map_err(|_| JamError::Csv {
                row,
                message: format!("column `{name}`: `{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(JamError::Csv {
                    row,
                    message: format!("column `{name}`: value `{cell}` is not finite"),
                });
            }
            Ok(v)
        };
        let age = num(1, "age")?;
        if !(0.0..MAX_INGEST_AGE).contains(&age) {
            return Err(JamError::Csv {
                row,
                message: format!("age {age} outside [0, {MAX_INGEST_AGE})"),
            });
        }
        let group: u32 = record[2].trim().parse().map_err(|_| JamError::Csv {
            row,
            message: format!(
                "column `group`: `{}` is not a non-negative integer",
                &record[2]
            ),
        })?;
        let features = (0..input_dim)
            .map(|j| num(3 + j, &header[3 + j]))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            id: record[0].to_string(),
            age,
            group,
            features,
        });
    }
    Dataset::new(input_dim, samples)
}

fn check_header(header: &csv::StringRecord) -> Result<usize> {
    let missing = |name: String| JamError::Csv {
        row: 1,
        message: format!("missing column `{name}`"),
    };
    for (i, name) in ["id", "age", "group"].iter().enumerate() {
        if header.get(i) != Some(*name) {
            return Err(missing(name.to_string()));
        }
    }
    let input_dim = header.len().saturating_sub(3);
    if input_dim == 0 {
        return Err(missing("f0".into()));
    }
    for j in 0..input_dim {
        let expected = format!("f{j}");
        if header[3 + j] != expected {
            return Err(missing(expected));
        }
    }
    Ok(input_dim)
}
