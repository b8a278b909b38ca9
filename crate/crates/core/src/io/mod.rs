//! File formats: binary PGM images, PIRD distribution fields and PPM heatmaps.
//!
//! Every file is written to a temporary sibling first and renamed into place,
//! so readers never observe a partially written output.

mod heatmap;
mod pgm;
mod pird;

use std::io::Write;
use std::path::Path;

pub use heatmap::{heat_color, render_heatmap, write_heatmap, HeatmapStyle, Normalization};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use pird::{decode_dist_field, encode_dist_field, read_dist_field, write_dist_field};

use crate::error::{Error, Result};

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    // Temporary files are created owner-only; outputs get the usual mode.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
