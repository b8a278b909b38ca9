//! PIRD v1: a per-voxel displacement distribution with its label space.
//!
//! ```text
//! "PIRD"  version:u32=1  d:u32  dims:d×u32  K:u32
//! displacements: K×d i32
//! probs: voxels×K f32, voxel-major, K contiguous per voxel
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CategoricalField, DisplacementSet};

use super::{read_file, write_atomic};

const MAGIC: &[u8; 4] = b"PIRD";
const VERSION: u32 = 1;
/// Per-voxel sums further than this from one are rejected.
const REJECT_TOL: f64 = 1e-3;
/// Per-voxel sums further than this from one are logged.
const WARN_TOL: f64 = 1e-5;

pub fn encode_dist_field(field: &CategoricalField, set: &DisplacementSet) -> Result<Vec<u8>> {
    if field.k() != set.len() || field.shape().ndim() != set.dim() {
        return Err(Error::ShapeMismatch(format!(
            "field has K = {} over {} axes, displacement set has K = {} of dimension {}",
            field.k(),
            field.shape().ndim(),
            set.len(),
            set.dim()
        )));
    }
    let d = set.dim();
    let k = set.len();
    let mut out = Vec::with_capacity(16 + 4 * d + 4 * k * d + 4 * field.probs().len());
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend((d as u32).to_le_bytes());
    for &n in field.dims() {
        out.extend((n as u32).to_le_bytes());
    }
    out.extend((k as u32).to_le_bytes());
    for v in set.iter() {
        for &c in v {
            out.extend(c.to_le_bytes());
        }
    }
    for &p in field.probs() {
        out.extend((p as f32).to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn u32(&mut self, expected_total: usize) -> Result<u32> {
        let b = self.bytes.get(self.pos..self.pos + 4).ok_or(Error::TruncatedPayload {
            path: self.path.to_path_buf(),
            expected: expected_total.max(self.pos + 4),
            actual: self.bytes.len(),
        })?;
        self.pos += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_dist_field(bytes: &[u8], path: &Path) -> Result<(CategoricalField, DisplacementSet)> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut cur = Cursor { bytes, pos: 4, path };
    let version = cur.u32(0)?;
    if version != VERSION {
        return Err(Error::VersionUnsupported {
            path: path.to_path_buf(),
            version,
        });
    }
    let d = cur.u32(0)? as usize;
    if !(d == 2 || d == 3) {
        return Err(malformed(format!("dimensionality {d}")));
    }
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        dims.push(cur.u32(0)? as usize);
    }
    let k = cur.u32(0)? as usize;
    let voxels = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| malformed(format!("grid {dims:?} overflows")))?;
    let expected = voxels
        .checked_mul(k)
        .and_then(|n| n.checked_add(k * d))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(cur.pos))
        .ok_or_else(|| malformed("payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::ChecksumOfLengthFailed {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    let mut vectors = Vec::with_capacity(k);
    for _ in 0..k {
        let v: Vec<i32> = (0..d)
            .map(|_| cur.u32(expected).map(|x| x as i32))
            .collect::<Result<_>>()?;
        vectors.push(v);
    }
    let set = DisplacementSet::new(d, &vectors).map_err(|e| malformed(e.to_string()))?;

    let probs: Vec<f64> = bytes[cur.pos..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if k == 0 {
        return Err(malformed("K is zero".into()));
    }
    for (voxel, row) in probs.chunks_exact(k).enumerate() {
        let sum: f64 = row.iter().sum();
        let in_range = row.iter().all(|p| (0.0..=1.0).contains(p));
        let err = (sum - 1.0).abs();
        if !in_range || !(err <= REJECT_TOL) {
            return Err(Error::DistributionInvalid {
                path: path.to_path_buf(),
                voxel,
                sum,
            });
        }
        if err > WARN_TOL {
            log::warn!("{}: voxel {voxel} probabilities sum to {sum}", path.display());
        }
    }
    let field = CategoricalField::with_tolerance(dims, k, probs, REJECT_TOL).map_err(|e| malformed(e.to_string()))?;
    Ok((field, set))
}

pub fn write_dist_field(field: &CategoricalField, set: &DisplacementSet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_dist_field(field, set)?)
}

pub fn read_dist_field(path: impl AsRef<Path>) -> Result<(CategoricalField, DisplacementSet)> {
    let path = path.as_ref();
    decode_dist_field(&read_file(path)?, path)
}
