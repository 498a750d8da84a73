//! Binary array files (traces, spectra, scan archives) and CSV output.
//!
//! Every array file is a 24-byte header followed by little-endian `f64`s:
//!
//! ```text
//! magic [8]  u32 n  u32 N  u64 len
//! ```
//!
//! `len` is the number of values that follow: the trace length `T` for a
//! trace, `n` for a spectrum and `N * n` for a scan archive.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulator::{ScanRealization, Trace};
use crate::solver::IterRecord;

pub const TRACE_MAGIC: [u8; 8] = *b"ATOFTRC1";
pub const SPECTRUM_MAGIC: [u8; 8] = *b"ATOFSPC1";
pub const SCANS_MAGIC: [u8; 8] = *b"ATOFSCN1";

const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayHeader {
    pub magic: [u8; 8],
    pub n: u32,
    pub num_scans: u32,
    pub len: u64,
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("{what} = {v} does not fit the file header")))
}

pub fn write_array<W: Write>(mut out: W, magic: [u8; 8], n: usize, num_scans: usize, data: &[f64]) -> Result<()> {
    let mut head = [0u8; HEADER_LEN];
    head[..8].copy_from_slice(&magic);
    head[8..12].copy_from_slice(&to_u32(n, "n")?.to_le_bytes());
    head[12..16].copy_from_slice(&to_u32(num_scans, "N")?.to_le_bytes());
    head[16..].copy_from_slice(&(data.len() as u64).to_le_bytes());
    out.write_all(&head)?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Reads an array file whose magic must equal `magic`.
pub fn read_array<R: Read>(mut input: R, magic: [u8; 8]) -> Result<(ArrayHeader, Vec<f64>)> {
    let mut head = [0u8; HEADER_LEN];
    input.read_exact(&mut head).map_err(|_| Error::Format("file shorter than the 24-byte header".into()))?;
    let found: [u8; 8] = head[..8].try_into().expect("8 bytes");
    if found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(&magic)
        )));
    }
    let header = ArrayHeader {
        magic: found,
        n: u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")),
        num_scans: u32::from_le_bytes(head[12..16].try_into().expect("4 bytes")),
        len: u64::from_le_bytes(head[16..].try_into().expect("8 bytes")),
    };
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let expected = usize::try_from(header.len).ok().and_then(|l| l.checked_mul(8));
    if expected != Some(body.len()) {
        return Err(Error::Format(format!("header promises {} values but payload has {} bytes", header.len, body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, data))
}

pub fn write_trace<W: Write, T: Scalar>(out: W, trace: &Trace<T>) -> Result<()> {
    let y: Vec<f64> = trace.y.iter().map(|v| v.as_f64()).collect();
    write_array(out, TRACE_MAGIC, trace.n, trace.num_scans, &y)
}

pub fn read_trace<R: Read>(input: R) -> Result<Trace<f64>> {
    let (h, y) = read_array(input, TRACE_MAGIC)?;
    let (n, num_scans) = (h.n as usize, h.num_scans as usize);
    if n == 0 || num_scans == 0 {
        return Err(Error::Format("trace header has n = 0 or N = 0".into()));
    }
    if y.len() < n {
        return Err(Error::Format(format!("trace of {} samples is shorter than one scan of {n}", y.len())));
    }
    Ok(Trace { y, n, num_scans })
}

/// Writes a spectrum; `num_scans` is the scan count it was estimated from.
pub fn write_spectrum<W: Write, T: Scalar>(out: W, x: &[T], num_scans: usize) -> Result<()> {
    let x: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    write_array(out, SPECTRUM_MAGIC, x.len(), num_scans, &x)
}

/// Reads a spectrum and the scan count stored with it.
pub fn read_spectrum<R: Read>(input: R) -> Result<(Vec<f64>, usize)> {
    let (h, x) = read_array(input, SPECTRUM_MAGIC)?;
    if h.n as usize != x.len() {
        return Err(Error::Format(format!("spectrum header n = {} but {} values", h.n, x.len())));
    }
    Ok((x, h.num_scans as usize))
}

pub fn write_scans<W: Write, T: Scalar>(out: W, scans: &[ScanRealization<T>]) -> Result<()> {
    let n = scans.first().map_or(0, |s| s.x.len());
    if let Some(bad) = scans.iter().find(|s| s.x.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: bad.x.len() });
    }
    let flat: Vec<f64> = scans.iter().flat_map(|s| s.x.iter().map(|v| v.as_f64())).collect();
    write_array(out, SCANS_MAGIC, n, scans.len(), &flat)
}

pub fn read_scans<R: Read>(input: R) -> Result<Vec<ScanRealization<f64>>> {
    let (h, flat) = read_array(input, SCANS_MAGIC)?;
    let (n, num_scans) = (h.n as usize, h.num_scans as usize);
    if n.checked_mul(num_scans) != Some(flat.len()) {
        return Err(Error::Format(format!("scan archive {num_scans} x {n} holds {} values", flat.len())));
    }
    if n == 0 {
        return Ok(vec![ScanRealization { x: vec![] }; num_scans]);
    }
    Ok(flat.chunks_exact(n).map(|c| ScanRealization { x: c.to_vec() }).collect())
}

/// Cost history as `iter,theta,cost,max_delta`.
pub fn write_cost_history<W: Write, T: Scalar>(mut out: W, rows: &[IterRecord<T>]) -> Result<()> {
    writeln!(out, "iter,theta,cost,max_delta")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iter, r.theta, r.cost, r.max_delta)?;
    }
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| with_path(e, path))?))
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
