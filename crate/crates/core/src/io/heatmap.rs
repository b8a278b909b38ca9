use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Shape;

use super::write_atomic;

/// Black → red → yellow → white at t = 0, 1/3, 2/3, 1.
const ANCHORS: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [255.0, 0.0, 0.0],
    [255.0, 255.0, 0.0],
    [255.0, 255.0, 255.0],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Divide by `log2(K)`; for entropies over K labels.
    ByMaxEntropy { k: usize },
    /// Divide by the largest value in the field.
    ByFieldMax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapStyle {
    pub normalization: Normalization,
}

/// Color of a normalized value; `t` is clamped to `[0, 1]` and NaN maps to black.
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let s = t * 3.0;
    let seg = (s.floor() as usize).min(2);
    let f = s - seg as f64;
    let (a, b) = (ANCHORS[seg], ANCHORS[seg + 1]);
    // f64::round rounds half away from zero
    std::array::from_fn(|c| (a[c] + (b[c] - a[c]) * f).round() as u8)
}

/// Colors every value of a field according to `style`.
pub fn render_heatmap(values: &[f64], style: &HeatmapStyle) -> Vec<[u8; 3]> {
    let scale = match style.normalization {
        Normalization::ByMaxEntropy { k } => (k.max(1) as f64).log2(),
        Normalization::ByFieldMax => values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max),
    };
    values
        .iter()
        .map(|&v| heat_color(if scale > 0.0 { v / scale } else { 0.0 }))
        .collect()
}

fn encode_ppm(rows: usize, cols: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    out.extend(pixels.iter().flatten());
    out
}

fn slice_path(path: &Path, index: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_z{index:03}.{}", ext.to_string_lossy()),
        None => format!("{stem}_z{index:03}"),
    };
    path.with_file_name(name)
}

/// Writes a P6 PPM heatmap of a 2D field. A 3D field is written one file per
/// slice along the first axis, with a `_zNNN` suffix. Returns the paths written.
pub fn write_heatmap(
    values: &[f64],
    dims: &[usize],
    style: &HeatmapStyle,
    path: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let shape = Shape::new(dims.to_vec())?;
    if values.len() != shape.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for grid {dims:?}",
            values.len()
        )));
    }
    // normalization is global so slices share one color scale
    let pixels = render_heatmap(values, style);
    let path = path.as_ref();
    match dims {
        [rows, cols] => {
            write_atomic(path, &encode_ppm(*rows, *cols, &pixels))?;
            Ok(vec![path.to_path_buf()])
        }
        [slices, rows, cols] => {
            let per = rows * cols;
            (0..*slices)
                .map(|z| {
                    let p = slice_path(path, z);
                    write_atomic(&p, &encode_ppm(*rows, *cols, &pixels[z * per..(z + 1) * per]))?;
                    Ok(p)
                })
                .collect()
        }
        _ => unreachable!("Shape is 2D or 3D"),
    }
}
