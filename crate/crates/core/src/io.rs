//! Binary field snapshots and CSV series and verdict files.
//!
//! Snapshot layout, little-endian:
//!
//! ```text
//! b"MAFL" | u32 version = 1 | u32 n | u32 res | f64 period | f64 t | u64 step_count
//! | res^(2n) f64 values, row-major, last axis fastest
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::functionals::{FunctionalSeries, SeriesRow};
use crate::grid::{PotentialField, TorusGrid};
use crate::verify::VerdictReport;

pub const MAGIC: &[u8; 4] = b"MAFL";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub step_count: u64,
    pub field: PotentialField,
}

pub fn encode_snapshot(field: &PotentialField, t: f64, step_count: u64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&(g.res() as u32).to_le_bytes());
    out.extend_from_slice(&g.period().to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&step_count.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<Snapshot> {
    let bad = |reason: String| Error::BadSnapshot { path: path.to_path_buf(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing MAFL magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u32_at(8) as usize;
    let res = u32_at(12) as usize;
    let period = f64_at(16);
    let t = f64_at(24);
    let step_count = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let grid = TorusGrid::new(n, res, period).map_err(|e| bad(e.to_string()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(bad(format!("expected {} value bytes, found {}", 8 * grid.len(), body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let field = PotentialField::from_values(grid, values)?;
    Ok(Snapshot { t, step_count, field })
}

pub fn write_snapshot(path: impl AsRef<Path>, field: &PotentialField, t: f64, step_count: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_snapshot(field, t, step_count))?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_snapshot(&bytes, path)
}

pub fn write_series_csv(path: impl AsRef<Path>, series: &FunctionalSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if series.rows().is_empty() {
        w.write_record(crate::functionals::SERIES_COLUMNS)?;
    }
    for r in series.rows() {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<FunctionalSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize::<SeriesRow>().collect::<std::result::Result<Vec<_>, _>>()?;
    FunctionalSeries::from_rows(rows)
}

pub fn write_verdicts_csv(path: impl AsRef<Path>, reports: &[VerdictReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_verdicts_csv(path: impl AsRef<Path>) -> Result<Vec<VerdictReport>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Human-readable summary, one line per check.
pub fn verdict_summary(reports: &[VerdictReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&r.line());
        s.push('\n');
    }
    s
}

/// `snap_t<time>.mafl`, with the time printed exactly enough to be unique.
pub fn snapshot_name(t: f64) -> String {
    format!("snap_t{t:.9}.mafl")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = TorusGrid::new(2, 8, 1.5).unwrap();
        let f = PotentialField::from_fn(g, |x| (x[0] * 7.1 + x[3]).sin() / 3.0 + 1e-300);
        let bytes = encode_snapshot(&f, 0.123456789, 42);
        let s = decode_snapshot(&bytes, Path::new("mem")).unwrap();
        assert_eq!(s.t.to_bits(), 0.123456789f64.to_bits());
        assert_eq!(s.step_count, 42);
        assert!(s.field.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(*s.field.grid(), g);
    }

    #[test]
    fn corrupted_snapshots_are_rejected() {
        let g = TorusGrid::unit(1, 8).unwrap();
        let bytes = encode_snapshot(&PotentialField::zeros(g), 0.0, 0);
        let p = Path::new("mem");
        assert!(decode_snapshot(&bytes[..10], p).is_err());
        assert!(decode_snapshot(&bytes[..bytes.len() - 8], p).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(decode_snapshot(&b, p).is_err());
        let mut b = bytes;
        b[4] = 9;
        assert!(decode_snapshot(&b, p).is_err());
    }
}
