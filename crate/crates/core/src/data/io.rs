//! Matrix file formats.
//!
//! * CSV: comma separated, `.` decimal point, no header, one point per line.
//! * IDX: big-endian magic `00 00 <type> <ndims>` followed by `ndims` u32
//!   dimensions, as used by MNIST. Every item is flattened to one row.
//! * raw-f32: little-endian `u64 n`, `u64 dim`, then `n * dim` f32 values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::DataMatrix;
use crate::embedding::Embedding;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Idx,
    RawF32,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "idx" | "idx-images" => Ok(Format::Idx),
            "raw-f32" | "f32" => Ok(Format::RawF32),
            _ => Err(Error::invalid(format!("unknown matrix format `{s}`"))),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_str()?;
        if name.ends_with(".csv") || name.ends_with(".txt") {
            Some(Format::Csv)
        } else if name.ends_with(".f32") || name.ends_with(".raw") {
            Some(Format::RawF32)
        } else if name.contains("idx") || name.ends_with("ubyte") {
            Some(Format::Idx)
        } else {
            None
        }
    }
}

pub fn load_matrix(path: &Path, format: Format) -> Result<DataMatrix> {
    match format {
        Format::Csv => read_csv(path),
        Format::Idx => {
            let (n, dim, values) = read_idx(path, true)?;
            DataMatrix::new(n, dim, values)
        }
        Format::RawF32 => read_raw_f32(path),
    }
}

/// Loads several IDX image files and stacks their rows, e.g. the MNIST
/// train and test sets into one 70 000-row matrix.
pub fn load_idx_many(paths: &[&Path]) -> Result<DataMatrix> {
    let mut all = Vec::new();
    let mut total = 0;
    let mut width = None;
    for path in paths {
        let (n, dim, values) = read_idx(path, true)?;
        if *width.get_or_insert(dim) != dim {
            return Err(Error::parse(
                path,
                "header",
                format!("item size {dim} differs from earlier files"),
            ));
        }
        total += n;
        all.extend(values);
    }
    DataMatrix::new(total, width.unwrap_or(0), all)
}

/// Reads integer labels from an IDX label file (`ndims = 1`) or from text
/// with one label per line.
pub fn load_labels(path: &Path) -> Result<Vec<i64>> {
    let mut head = [0u8; 4];
    let is_idx = File::open(path)?.read_exact(&mut head).is_ok() && head[0] == 0 && head[1] == 0;
    if is_idx {
        let (_, _, values) = read_idx(path, false)?;
        return Ok(values.into_iter().map(|v| v as i64).collect());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| {
            Error::parse(
                path,
                format!("line {}", lineno + 1),
                format!("bad label `{t}`"),
            )
        })?;
        labels.push(v as i64);
    }
    Ok(labels)
}

fn read_csv(path: &Path) -> Result<DataMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut values = Vec::new();
    let mut dim = None;
    let mut n = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (col, field) in line.split(',').enumerate() {
            let pos = || format!("line {}, column {}", lineno + 1, col + 1);
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    path,
                    pos(),
                    format!("cannot parse `{}` as a number", field.trim()),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, pos(), "non-finite value"));
            }
            values.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(Error::parse(
                    path,
                    format!("line {}", lineno + 1),
                    format!("ragged row: expected {d} columns, found {count}"),
                ))
            }
            _ => {}
        }
        n += 1;
    }
    DataMatrix::new(n, dim.unwrap_or(0), values)
}

fn read_idx(path: &Path, want_matrix: bool) -> Result<(usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::parse(
            path,
            "byte 0",
            "magic number mismatch: not an IDX file",
        ));
    }
    let (dtype, ndims) = (bytes[2], bytes[3] as usize);
    let width = match dtype {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        _ => {
            return Err(Error::parse(
                path,
                "byte 2",
                format!("unknown IDX element type 0x{dtype:02x}"),
            ))
        }
    };
    if ndims == 0 || (want_matrix && ndims < 2) {
        return Err(Error::parse(
            path,
            "byte 3",
            format!("magic number mismatch: expected a multi-dimensional IDX file, found {ndims} dimension(s)"),
        ));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::parse(path, "header", "truncated dimension list"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|k| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize)
        .collect();
    let n = dims[0];
    let dim: usize = dims[1..].iter().product();
    let expected = header + n * dim * width;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            format!("byte {}", bytes.len().min(expected)),
            format!(
                "expected {expected} bytes for dimensions {dims:?}, found {}",
                bytes.len()
            ),
        ));
    }
    let body = &bytes[header..];
    let values: Vec<f64> = match dtype {
        0x08 => body.iter().map(|&b| b as f64).collect(),
        0x09 => body.iter().map(|&b| b as i8 as f64).collect(),
        0x0B => body
            .chunks_exact(2)
            .map(|c| i16::from_be_bytes([c[0], c[1]]) as f64)
            .collect(),
        0x0C => body
            .chunks_exact(4)
            .map(|c| i32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        0x0D => body
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        _ => body
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::parse(
            path,
            format!("item {}", pos / dim.max(1)),
            "non-finite value",
        ));
    }
    Ok((n, dim.max(1), values))
}

pub fn read_raw_f32(path: &Path) -> Result<DataMatrix> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(Error::parse(path, "byte 0", "truncated raw-f32 header"));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(16))
        .ok_or_else(|| Error::parse(path, "header", "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            "header",
            format!(
                "header says {n}x{dim} ({expected} bytes) but file has {} bytes",
                bytes.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(n * dim);
    for (k, c) in bytes[16..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::parse(
                path,
                format!("row {}, column {}", k / dim, k % dim),
                "non-finite value",
            ));
        }
        values.push(v as f64);
    }
    DataMatrix::new(n, dim, values)
}

/// Writes `rows x dim` values in the raw-f32 layout.
pub fn write_raw_f32(
    path: &Path,
    rows: usize,
    dim: usize,
    values: impl IntoIterator<Item = f64>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(dim as u64).to_le_bytes())?;
    let mut count = 0;
    for v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
        count += 1;
    }
    if count != rows * dim {
        return Err(Error::Shape {
            expected: format!("{} values", rows * dim),
            got: format!("{count} values"),
        });
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, x: &DataMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_embedding_csv(path: &Path, y: &Embedding) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in y.coords() {
        writeln!(w, "{:?},{:?}", p[0], p[1])?;
    }
    w.flush()?;
    Ok(())
}
