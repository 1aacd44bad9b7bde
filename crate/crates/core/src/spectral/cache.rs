//! Flat binary eigenbasis records.
//!
//! Layout, little-endian: `n: u64`, `k: u64`, `k` eigenvalues as `f64`, then
//! `Φ` column-major as `n·k` `f64`. Files are keyed by mesh content hash and `k`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::SpectralBasis;
use crate::mesh::{MassMatrix, Mesh};
use crate::{Error, Result};

pub fn encode(basis: &SpectralBasis) -> Vec<u8> {
    let (n, k) = (basis.n(), basis.k());
    let mut out = Vec::with_capacity(16 + 8 * k * (n + 1));
    out.extend((n as u64).to_le_bytes());
    out.extend((k as u64).to_le_bytes());
    for v in &basis.eigenvalues {
        out.extend(v.to_le_bytes());
    }
    for v in basis.phi.as_slice() {
        out.extend(v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], mass: MassMatrix) -> Result<SpectralBasis> {
    let bad = |msg: &str| Error::Parse {
        line: 0,
        msg: format!("spectral record: {msg}"),
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
    let (n, k) = (word(0) as usize, word(1) as usize);
    let expected = n
        .checked_mul(k)
        .and_then(|nk| nk.checked_add(k))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(16))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    if mass.n() != n {
        return Err(Error::Dimension(format!(
            "spectral record has {n} vertices, mass matrix {}",
            mass.n()
        )));
    }
    let floats: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let eigenvalues = floats[..k].to_vec();
    let phi = DMatrix::from_column_slice(n, k, &floats[k..]);
    Ok(SpectralBasis {
        phi,
        eigenvalues,
        mass,
    })
}

pub fn cache_path(dir: &Path, mesh: &Mesh, k: usize) -> PathBuf {
    dir.join(format!("{}_k{k}.spec", mesh.content_hash()))
}

/// Loads the basis for `mesh` from `dir` when present, otherwise computes and stores it.
pub fn load_or_compute(
    dir: &Path,
    mesh: &Mesh,
    mass: &MassMatrix,
    k: usize,
    compute: impl FnOnce() -> Result<SpectralBasis>,
) -> Result<SpectralBasis> {
    let path = cache_path(dir, mesh, k);
    if let Ok(bytes) = fs::read(&path) {
        match decode(&bytes, mass.clone()) {
            Ok(basis) if basis.k() == k => return Ok(basis),
            Ok(_) | Err(_) => log::warn!("ignoring unusable cache file {}", path.display()),
        }
    }
    let basis = compute()?;
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    fs::write(&path, encode(&basis)).map_err(Error::io(&path))?;
    Ok(basis)
}
