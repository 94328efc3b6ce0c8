//! Dense matrix files.
//!
//! EMX1 layout: the ASCII magic `EMX1`, then `rows` and `cols` as
//! little-endian `u64`, then `rows * cols` little-endian `f64` in row-major
//! order. CSV files hold one matrix row per line with no header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

pub const EMX1_MAGIC: &[u8; 4] = b"EMX1";

pub fn write_emx1<W: Write>(mut w: W, m: MatRef<'_, f64>) -> Result<()> {
    w.write_all(EMX1_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_emx1<R: Read>(mut r: R) -> Result<Mat<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for an EMX1 header".into()))?;
    if &magic != EMX1_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected EMX1")));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut word)
            .map_err(|_| Error::Format("truncated EMX1 header".into()))?;
        Ok(u64::from_le_bytes(word))
    };
    let rows = next_u64(&mut r)? as usize;
    let cols = next_u64(&mut r)? as usize;
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("EMX1 dimensions {rows}x{cols} overflow")))?;
    let mut bytes = Vec::new();
    (&mut r).take(len as u64).read_to_end(&mut bytes)?;
    if bytes.len() != len {
        return Err(Error::Format(format!(
            "EMX1 payload has {} bytes, expected {len} for {rows}x{cols}",
            bytes.len()
        )));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after EMX1 payload".into()));
    }
    let at = |i: usize, j: usize| {
        let o = 8 * (i * cols + j);
        f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap())
    };
    Ok(Mat::from_fn(rows, cols, at))
}

pub fn save_emx1(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    write_emx1(BufWriter::new(File::create(path)?), m)
}

pub fn load_emx1(path: &Path) -> Result<Mat<f64>> {
    read_emx1(BufReader::new(File::open(path)?))
}

/// Writes `m` as CSV using the shortest round-tripping float representation.
pub fn write_csv<W: Write>(w: W, m: MatRef<'_, f64>) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut row = Vec::with_capacity(m.ncols());
    for i in 0..m.nrows() {
        row.clear();
        row.extend((0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Mat<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: cannot parse {f:?}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn save_csv(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), m)
}

pub fn load_csv(path: &Path) -> Result<Mat<f64>> {
    read_csv(BufReader::new(File::open(path)?))
}

/// Loads a matrix, choosing the format from the extension (`.csv` or EMX1
/// for anything else).
pub fn load_matrix(path: &Path) -> Result<Mat<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => load_csv(path),
        _ => load_emx1(path),
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
