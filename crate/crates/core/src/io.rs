//! Binary snapshot files and their text sidecars.
//!
//! Layout: the bytes `FRAC`, then `N`, `K`, `Qr` as little-endian `u32`, then the
//! `NK × Qr` entries row by row as little-endian `f64` real/imaginary pairs. The
//! sidecar `<file>.meta` is a scenario file carrying the configuration, noise
//! variance, phase settings and the transmitted frame.

use std::path::{Path, PathBuf};

use crate::error::{FracError, Result};
use crate::linalg::{CMat, C64};
use crate::scenario::{NoiseSpec, Scenario};
use crate::signal::Snapshot;

pub const MAGIC: &[u8; 4] = b"FRAC";

pub fn encode_matrix(y: &CMat, n: usize, k: usize) -> Result<Vec<u8>> {
    if y.nrows() != n * k {
        return Err(FracError::DimensionMismatch(format!("{} rows is not N*K = {}", y.nrows(), n * k)));
    }
    let mut out = Vec::with_capacity(16 + 16 * y.len());
    out.extend_from_slice(MAGIC);
    for d in [n, k, y.ncols()] {
        let d = u32::try_from(d).map_err(|_| FracError::Overflow(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            out.extend_from_slice(&y[(i, j)].re.to_le_bytes());
            out.extend_from_slice(&y[(i, j)].im.to_le_bytes());
        }
    }
    Ok(out)
}

/// Returns `(Y, N, K)`.
pub fn decode_matrix(bytes: &[u8]) -> Result<(CMat, usize, usize)> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(FracError::Parse("not a FRAC snapshot (bad magic)".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (n, k, qr) = (dim(0), dim(1), dim(2));
    let rows = n.checked_mul(k).ok_or_else(|| FracError::Overflow("N*K".into()))?;
    let expected =
        rows.checked_mul(qr).and_then(|e| e.checked_mul(16)).ok_or_else(|| FracError::Overflow("payload".into()))?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(FracError::Parse(format!("payload has {} bytes, header implies {expected}", payload.len())));
    }
    let f = |off: usize| f64::from_le_bytes(payload[off..off + 8].try_into().expect("8 bytes"));
    let y = CMat::from_fn(rows, qr, |i, j| {
        let off = 16 * (i * qr + j);
        C64::new(f(off), f(off + 8))
    });
    Ok((y, n, k))
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Write the snapshot and its sidecar. `scenario` supplies targets and seed.
pub fn write_snapshot(path: &Path, snap: &Snapshot, scenario: &Scenario, sigma2: f64) -> Result<()> {
    std::fs::write(path, encode_matrix(&snap.y, snap.cfg.n, snap.cfg.k)?)?;
    let meta = Scenario {
        cfg: snap.cfg,
        noise: NoiseSpec::Sigma2(sigma2),
        pm_levels: snap.pm_levels,
        pm_on: snap.pm_on,
        frame: Some(snap.frame.clone()),
        ..scenario.clone()
    };
    std::fs::write(meta_path(path), meta.to_text())?;
    Ok(())
}

/// Read a snapshot and its sidecar; returns the snapshot and the sidecar scenario.
pub fn read_snapshot(path: &Path) -> Result<(Snapshot, Scenario)> {
    let (y, n, k) = decode_matrix(&std::fs::read(path)?)?;
    let meta = Scenario::parse(&std::fs::read_to_string(meta_path(path))?)?;
    let frame = meta.frame.clone().ok_or_else(|| FracError::Parse("sidecar lacks the transmitted frame".into()))?;
    if n != meta.cfg.n || k != meta.cfg.k || y.ncols() != meta.cfg.qr {
        return Err(FracError::DimensionMismatch(format!(
            "file is N={n}, K={k}, Qr={} but the sidecar says N={}, K={}, Qr={}",
            y.ncols(),
            meta.cfg.n,
            meta.cfg.k,
            meta.cfg.qr
        )));
    }
    let snap = Snapshot { y, cfg: meta.cfg, frame, pm_levels: meta.pm_levels, pm_on: meta.pm_on };
    Ok((snap, meta))
}
