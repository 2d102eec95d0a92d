//! CSV, spectral JSON and raw binary writers.

use std::io::Write;
use std::path::Path;

use kpz_core::spectral::to_physical;
use kpz_core::SpectralField;
use serde::Serialize;

use crate::CliError;

pub const DUMP_MAGIC: &[u8; 4] = b"KPZF";

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Headed CSV of plain numeric rows.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    w.write_record(header).map_err(|e| CliError::io(path, e.into()))?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string())).map_err(|e| CliError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Rows `checkpoint, t, x, u1..ud` on `4K` equispaced points per snapshot.
pub fn physical_rows(times: &[f64], snapshots: &[SpectralField]) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let d = snapshots.first().map_or(1, |s| s.dim());
    let mut header = vec!["checkpoint".to_string(), "t".to_string(), "x".to_string()];
    header.extend((1..=d).map(|a| format!("u{a}")));
    let mut rows = Vec::new();
    for (i, (t, s)) in times.iter().zip(snapshots).enumerate() {
        let m = 4 * s.max_mode().max(1);
        let p = to_physical(s, m)?;
        for j in 0..m {
            let mut r = vec![i as f64, *t, j as f64 / m as f64];
            r.extend(p.iter().map(|c| c[j]));
            rows.push(r);
        }
    }
    Ok((header, rows))
}

/// Little-endian dump: `"KPZF"`, then `d`, `K`, `count` as `u32`, then for
/// each sample, component and `k = 0..=K` the pair `(Re, Im)` as `f64`.
pub fn write_dump(path: &Path, samples: &[SpectralField]) -> Result<(), CliError> {
    let (d, k) = samples.first().map_or((0, 0), |s| (s.dim(), s.max_mode()));
    let mut buf = Vec::with_capacity(16 + samples.len() * d * (k + 1) * 16);
    buf.extend_from_slice(DUMP_MAGIC);
    for v in [d, k, samples.len()] {
        let v = u32::try_from(v).map_err(|_| CliError::Schema("dump too large".into()))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for s in samples {
        for z in s.coeffs() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&buf).map_err(|e| CliError::io(path, e))
}

/// `(d, K, samples)`, each sample the `(Re, Im)` pairs in file order.
pub type Dump = (usize, usize, Vec<Vec<(f64, f64)>>);

/// Inverse of [`write_dump`].
pub fn read_dump(bytes: &[u8]) -> Option<Dump> {
    if bytes.len() < 16 || &bytes[..4] != DUMP_MAGIC {
        return None;
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (d, k, n) = (word(4), word(8), word(12));
    let per = d * (k + 1);
    if bytes.len() != 16 + n * per * 16 {
        return None;
    }
    let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let samples = (0..n)
        .map(|s| (0..per).map(|j| {
            let o = 16 + (s * per + j) * 16;
            (f(o), f(o + 8))
        }).collect())
        .collect();
    Some((d, k, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn dump_layout() {
        let s = SpectralField::from_fn(2, 3, |a, k| Complex64::new(a as f64, if k == 0 { 0.0 } else { k as f64 }));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        write_dump(&p, &[s.clone(), s]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 2 * 4 * 16);
        let (d, k, samples) = read_dump(&bytes).unwrap();
        assert_eq!((d, k, samples.len()), (2, 3, 2));
        assert_eq!(samples[0][5], (1.0, 1.0));
    }
}
