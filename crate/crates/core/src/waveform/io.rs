//! Sample files: interleaved little-endian `f32` I/Q pairs plus a text
//! sidecar (`<file>.hdr`) holding `sample_rate=` and `count=` lines.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

pub fn write_iq(path: &Path, samples: &[Complex64], sample_rate: f64) -> Result<()> {
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), format!("sample_rate={sample_rate}\ncount={}\n", samples.len()))?;
    Ok(())
}

pub fn read_iq(path: &Path) -> Result<(Vec<Complex64>, f64)> {
    let header = fs::read_to_string(sidecar_path(path))?;
    let mut rate = None;
    let mut count = None;
    for (i, line) in header.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Parse { line: i + 1, reason: format!("bad header line `{line}`") };
        let (k, v) = line.split_once('=').ok_or_else(bad)?;
        match k.trim() {
            "sample_rate" => rate = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
            "count" => count = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    let rate = rate.ok_or(Error::Parse { line: 0, reason: "missing sample_rate".into() })?;
    let count = count.ok_or(Error::Parse { line: 0, reason: "missing count".into() })?;
    let bytes = fs::read(path)?;
    if bytes.len() != count * 8 {
        return Err(Error::Parse { line: 0, reason: format!("expected {} bytes, found {}", count * 8, bytes.len()) });
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    let samples = bytes.chunks_exact(8).map(|c| Complex64::new(f(&c[..4]), f(&c[4..]))).collect();
    Ok((samples, rate))
}
