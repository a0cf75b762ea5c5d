//! File formats: demand-field CSV, metrics CSV, run manifest and the binary
//! wire format for local and global summaries.
//!
//! Summary layout (all integers `u64`, all reals IEEE-754 `f64`, little-endian):
//!
//! ```text
//! LSUM: b"LSUM" | u32 version | n | vec[n] | mat[n*n] (column-major)
//! GSUM: b"GSUM" | u32 version | n | c | ids[c] | vec[n] | mat[n*n] (column-major)
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::field::DemandField;
use crate::fusion::{GlobalSummary, LocalSummary, SupportSet, VehicleId};
use crate::sim::{MetricsRow, RunResult};

pub const FORMAT_VERSION: u32 = 1;
const LOCAL_TAG: &[u8; 4] = b"LSUM";
const GLOBAL_TAG: &[u8; 4] = b"GSUM";

pub const METRICS_HEADER: &str = "step,rmse,kld,avg_cruise,avg_wait,total_pickups,wall_time_ms";

/// Version string recorded in manifests.
pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads a demand field from CSV with header `row,col,demand` and an optional
/// `supply` column. Grid dimensions default to one past the largest row and
/// column indices.
pub fn load_field(path: &Path, dims: Option<(usize, usize)>) -> Result<DemandField> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_supply = match names.as_slice() {
        ["row", "col", "demand"] => false,
        ["row", "col", "demand", "supply"] => true,
        _ => return Err(parse_err(1, format!("expected header row,col,demand[,supply], got {}", names.join(",")))),
    };
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", names.len(), record.len())));
        }
        let index = |i: usize| -> Result<usize> {
            record[i].parse().map_err(|_| parse_err(line, format!("bad {} index {:?}", names[i], &record[i])))
        };
        let real = |i: usize| -> Result<f64> {
            record[i].parse().map_err(|_| parse_err(line, format!("bad {} value {:?}", names[i], &record[i])))
        };
        let (r, c, y) = (index(0)?, index(1)?, real(2)?);
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::Invalid(format!("line {line}: demand must be finite and non-negative, got {y}")));
        }
        let s = if with_supply { Some(real(3)?) } else { None };
        cells.push((r, c, y, s));
    }
    if cells.is_empty() {
        return Err(Error::Invalid(format!("{} lists no regions", path.display())));
    }
    let (rows, cols) = match dims {
        Some(d) => d,
        None => (
            cells.iter().map(|c| c.0).max().expect("non-empty") + 1,
            cells.iter().map(|c| c.1).max().expect("non-empty") + 1,
        ),
    };
    DemandField::from_cells(rows, cols, &cells)
}

/// Writes a field in the format read by [`load_field`], supply included.
pub fn write_field(path: &Path, field: &DemandField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "col", "demand", "supply"])?;
    for (r, c, y, s) in field.cells() {
        w.write_record([r.to_string(), c.to_string(), y.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one metrics row per step under [`METRICS_HEADER`].
pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

/// Per-run record within a manifest.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub policy: String,
    pub vehicles: usize,
    pub steps: usize,
    pub metrics_file: String,
    pub final_metrics: MetricsRow,
    pub unserved_users: usize,
    pub unserved_mean_wait: f64,
    pub failed_walks: usize,
    pub fallback_walks: usize,
    pub observed_regions: usize,
}

impl RunRecord {
    pub fn new(cfg: &RunConfig, result: &RunResult, metrics_file: &str) -> Self {
        Self {
            policy: result.policy.to_string(),
            vehicles: cfg.vehicles,
            steps: cfg.steps,
            metrics_file: metrics_file.to_string(),
            final_metrics: result.final_row().clone(),
            unserved_users: result.unserved_users,
            unserved_mean_wait: result.unserved_mean_wait,
            failed_walks: result.failed_walks,
            fallback_walks: result.fallback_walks,
            observed_regions: result.observed_regions,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub runs: Vec<RunRecord>,
    /// `(vehicles, steps)` pairs when the run swept the fleet-size grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalability_grid: Option<Vec<(usize, usize)>>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_reals<'a>(out: &mut Vec<u8>, xs: impl IntoIterator<Item = &'a f64>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn header(out: &mut Vec<u8>, tag: &[u8; 4]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
}

pub fn encode_local(s: &LocalSummary) -> Vec<u8> {
    let n = s.vec.len();
    let mut out = Vec::with_capacity(16 + 8 * (n + n * n));
    header(&mut out, LOCAL_TAG);
    put_u64(&mut out, n as u64);
    put_reals(&mut out, s.vec.iter());
    put_reals(&mut out, s.mat.iter());
    out
}

pub fn encode_global(s: &GlobalSummary) -> Vec<u8> {
    let n = s.vec.len();
    let mut out = Vec::with_capacity(24 + 8 * (s.contributors.len() + n + n * n));
    header(&mut out, GLOBAL_TAG);
    put_u64(&mut out, n as u64);
    put_u64(&mut out, s.contributors.len() as u64);
    for id in &s.contributors {
        put_u64(&mut out, id.0 as u64);
    }
    put_reals(&mut out, s.vec.iter());
    put_reals(&mut out, s.mat.iter());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Invalid(format!("summary truncated: need {n} bytes at offset {}", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn header(&mut self, tag: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != tag {
            return Err(Error::Invalid(format!("expected {:?} tag, got {:?}", tag, got)));
        }
        let version = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Invalid(format!("unsupported summary format version {version}")));
        }
        Ok(())
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // every counted item needs at least 8 more bytes
        if n > (self.bytes.len() / 8) as u64 {
            return Err(Error::Invalid(format!("length prefix {n} exceeds the message size")));
        }
        Ok(n as usize)
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Invalid("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Invalid(format!("{} trailing bytes after summary", self.bytes.len() - self.at)));
        }
        Ok(())
    }
}

fn vec_and_mat(c: &mut Cursor<'_>, n: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let vec = DVector::from_vec(c.reals(n)?);
    let sq = n.checked_mul(n).ok_or_else(|| Error::Invalid("length overflow".into()))?;
    let mat = DMatrix::from_vec(n, n, c.reals(sq)?);
    Ok((vec, mat))
}

pub fn decode_local(bytes: &[u8]) -> Result<LocalSummary> {
    let mut c = Cursor { bytes, at: 0 };
    c.header(LOCAL_TAG)?;
    let n = c.len()?;
    let (vec, mat) = vec_and_mat(&mut c, n)?;
    c.finish()?;
    Ok(LocalSummary { vec, mat })
}

/// Decodes a global summary and refactors its matrix against `support`.
pub fn decode_global(bytes: &[u8], support: &SupportSet) -> Result<GlobalSummary> {
    let mut c = Cursor { bytes, at: 0 };
    c.header(GLOBAL_TAG)?;
    let n = c.len()?;
    let count = c.len()?;
    let mut contributors = BTreeSet::new();
    for _ in 0..count {
        let id = c.u64()? as usize;
        if id == 0 || !contributors.insert(VehicleId(id)) {
            return Err(Error::Invalid(format!("bad or repeated contributor id {id}")));
        }
    }
    let (vec, mat) = vec_and_mat(&mut c, n)?;
    c.finish()?;
    GlobalSummary::from_wire(vec, mat, contributors, support)
}
