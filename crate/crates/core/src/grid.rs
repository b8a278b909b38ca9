//! Images, deformation fields, interpolation and displacement label spaces.
//!
//! Every grid is stored row-major: the last axis varies fastest. A 2D image of
//! `dims = [rows, cols]` is addressed by `(row, col)`. Spacing is one unit per
//! voxel along every axis and displacements are measured in voxels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the per-voxel unit sum of a [`CategoricalField`].
pub const UNIT_SUM_TOL: f64 = 1e-6;

/// Shape of a 2D or 3D voxel grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if !(dims.len() == 2 || dims.len() == 3) {
            return Err(Error::InvalidImage(format!(
                "grids must be 2D or 3D, got {} axes",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidImage(format!("zero-length axis in {dims:?}")));
        }
        Ok(Shape { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Linear offset of a unit step along each axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for a in (0..self.dims.len() - 1).rev() {
            strides[a] = strides[a + 1] * self.dims[a + 1];
        }
        strides
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, &n)| acc * n + c)
    }

    /// Writes the coordinates of linear voxel `index` into `out`.
    pub fn coords_into(&self, mut index: usize, out: &mut [usize]) {
        for a in (0..self.dims.len()).rev() {
            out[a] = index % self.dims[a];
            index /= self.dims[a];
        }
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        self.coords_into(index, &mut out);
        out
    }

    pub fn contains(&self, coords: &[isize]) -> bool {
        coords.iter().zip(&self.dims).all(|(&c, &n)| c >= 0 && (c as usize) < n)
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(shape: Shape) -> Self {
        shape.dims
    }
}

/// A scalar image on a 2D or 3D grid with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    shape: Shape,
    values: Vec<f64>,
}

impl ScalarImage {
    pub fn new(dims: impl Into<Vec<usize>>, values: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if values.len() != shape.len() {
            return Err(Error::InvalidImage(format!(
                "{} values for a grid of {} voxels",
                values.len(),
                shape.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite value at voxel {i}")));
        }
        Ok(ScalarImage { shape, values })
    }

    pub fn from_fn(dims: impl Into<Vec<usize>>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let mut coords = vec![0; shape.ndim()];
        let values = (0..shape.len())
            .map(|i| {
                shape.coords_into(i, &mut coords);
                f(&coords)
            })
            .collect();
        ScalarImage::new(shape.dims, values)
    }

    pub fn constant(dims: impl Into<Vec<usize>>, value: f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.len();
        ScalarImage::new(shape.dims, vec![value; n])
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn ndim(&self) -> usize {
        self.shape.ndim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.values[self.shape.index(coords)]
    }

    /// `(min, max)` over all voxels.
    pub fn intensity_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Ordered set of distinct integer displacement vectors. Index `k` is stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplacementSet {
    d: usize,
    vectors: Vec<i32>,
}

impl DisplacementSet {
    pub fn new(d: usize, vectors: &[Vec<i32>]) -> Result<Self> {
        if !(d == 2 || d == 3) {
            return Err(Error::InvalidDisplacementSet(format!(
                "dimensionality must be 2 or 3, got {d}"
            )));
        }
        if vectors.is_empty() {
            return Err(Error::InvalidDisplacementSet("K must be at least 1".into()));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != d) {
            return Err(Error::InvalidDisplacementSet(format!(
                "vector {v:?} does not have {d} components"
            )));
        }
        let mut sorted: Vec<&Vec<i32>> = vectors.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidDisplacementSet(format!("duplicate vector {:?}", w[0])));
        }
        Ok(DisplacementSet {
            d,
            vectors: vectors.concat(),
        })
    }

    /// All integer vectors with infinity norm at most `radius`, in
    /// lexicographic order (first component slowest).
    pub fn cube(d: usize, radius: u32) -> Result<Self> {
        if !(d == 2 || d == 3) {
            return Err(Error::InvalidDisplacementSet(format!(
                "dimensionality must be 2 or 3, got {d}"
            )));
        }
        let r = radius as i32;
        let side = 2 * radius as usize + 1;
        let k = side.pow(d as u32);
        let mut vectors = Vec::with_capacity(k * d);
        for idx in 0..k {
            let mut rem = idx;
            let start = vectors.len();
            vectors.resize(start + d, 0);
            for a in (0..d).rev() {
                vectors[start + a] = (rem % side) as i32 - r;
                rem /= side;
            }
        }
        Ok(DisplacementSet { d, vectors })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of displacement labels `K`.
    pub fn len(&self) -> usize {
        self.vectors.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, k: usize) -> &[i32] {
        &self.vectors[k * self.d..(k + 1) * self.d]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[i32]> + '_ {
        self.vectors.chunks_exact(self.d)
    }

    pub fn zero_index(&self) -> Option<usize> {
        self.iter().position(|v| v.iter().all(|&c| c == 0))
    }

    /// Largest absolute component over all vectors.
    pub fn radius(&self) -> u32 {
        self.vectors.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }
}

/// Builds the cubic displacement label space of the given radius.
pub fn make_displacement_set(d: usize, radius: u32) -> Result<DisplacementSet> {
    DisplacementSet::cube(d, radius)
}

/// Real displacement vector (in voxels) attached to every voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    shape: Shape,
    vectors: Vec<f64>,
}

impl DeformationField {
    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.len() * shape.ndim();
        Ok(DeformationField {
            shape,
            vectors: vec![0.0; n],
        })
    }

    /// `vectors` holds `ndim` components per voxel, voxel-major.
    pub fn new(dims: impl Into<Vec<usize>>, vectors: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if vectors.len() != shape.len() * shape.ndim() {
            return Err(Error::InvalidField(format!(
                "{} components for {} voxels of dimension {}",
                vectors.len(),
                shape.len(),
                shape.ndim()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite displacement".into()));
        }
        Ok(DeformationField { shape, vectors })
    }

    pub fn from_fn(dims: impl Into<Vec<usize>>, mut f: impl FnMut(&[usize], &mut [f64])) -> Result<Self> {
        let mut field = DeformationField::zeros(dims)?;
        let d = field.shape.ndim();
        let mut coords = vec![0; d];
        for (i, out) in field.vectors.chunks_exact_mut(d).enumerate() {
            field.shape.coords_into(i, &mut coords);
            f(&coords, out);
        }
        if field.vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite displacement".into()));
        }
        Ok(field)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn get(&self, voxel: usize) -> &[f64] {
        let d = self.shape.ndim();
        &self.vectors[voxel * d..(voxel + 1) * d]
    }

    /// Largest absolute displacement component anywhere in the field.
    pub fn max_abs_component(&self) -> f64 {
        self.vectors.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-voxel categorical distribution over `K` displacement labels,
/// stored voxel-major with the `K` probabilities of a voxel contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalField {
    shape: Shape,
    k: usize,
    probs: Vec<f64>,
}

impl CategoricalField {
    pub fn new(dims: impl Into<Vec<usize>>, k: usize, probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(dims, k, probs, UNIT_SUM_TOL)
    }

    /// Like [`CategoricalField::new`] with an explicit unit-sum tolerance.
    pub fn with_tolerance(dims: impl Into<Vec<usize>>, k: usize, probs: Vec<f64>, tol: f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if k == 0 {
            return Err(Error::InvalidField("K must be at least 1".into()));
        }
        if probs.len() != shape.len() * k {
            return Err(Error::InvalidField(format!(
                "{} probabilities for {} voxels x {} labels",
                probs.len(),
                shape.len(),
                k
            )));
        }
        for (voxel, p) in probs.chunks_exact(k).enumerate() {
            if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::InvalidField(format!(
                    "voxel {voxel}: probability {x} outside [0, 1]"
                )));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidField(format!(
                    "voxel {voxel}: probabilities sum to {sum}"
                )));
            }
        }
        Ok(CategoricalField { shape, k, probs })
    }

    pub fn uniform(dims: impl Into<Vec<usize>>, k: usize) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.len();
        CategoricalField::new(shape.dims, k, vec![1.0 / k as f64; n * k])
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    /// Number of labels.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn voxels(&self) -> usize {
        self.shape.len()
    }

    pub fn at(&self, voxel: usize) -> &[f64] {
        &self.probs[voxel * self.k..(voxel + 1) * self.k]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.probs.chunks_exact(self.k)
    }

    pub fn max_abs_diff(&self, other: &CategoricalField) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// What [`sample_interpolated`] does with positions outside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    Error,
    ClampToEdge,
}

/// Multilinear interpolation of `img` at a real position given in voxel
/// coordinates (axis order matches `img.dims()`).
pub fn sample_interpolated(img: &ScalarImage, pos: &[f64], policy: BoundaryPolicy) -> Result<f64> {
    let d = img.ndim();
    if pos.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "position has {} components, image has {d} axes",
            pos.len()
        )));
    }
    let dims = img.dims();
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..d {
        let hi = (dims[a] - 1) as f64;
        let mut x = pos[a];
        if !x.is_finite() || x < 0.0 || x > hi {
            match policy {
                BoundaryPolicy::ClampToEdge if x.is_finite() => x = x.clamp(0.0, hi),
                _ => return Err(Error::OutOfBounds { pos: pos.to_vec() }),
            }
        }
        let b = if dims[a] == 1 {
            0
        } else {
            (x.floor() as usize).min(dims[a] - 2)
        };
        base[a] = b;
        frac[a] = x - b as f64;
    }
    let strides = img.shape().strides();
    let origin: usize = (0..d).map(|a| base[a] * strides[a]).sum();
    let values = img.values();
    let mut acc = 0.0;
    // a locally constant neighbourhood returns its value exactly
    let mut shared: Option<f64> = None;
    let mut constant = true;
    for corner in 0..1usize << d {
        let mut weight = 1.0;
        let mut offset = origin;
        for a in 0..d {
            if corner >> a & 1 == 1 {
                weight *= frac[a];
                offset += strides[a];
            } else {
                weight *= 1.0 - frac[a];
            }
        }
        if weight != 0.0 {
            let v = values[offset];
            constant &= *shared.get_or_insert(v) == v;
            acc += weight * v;
        }
    }
    Ok(match shared {
        Some(v) if constant => v,
        _ => acc,
    })
}

/// Backward warp: `out(v) = img(v + def(v))`, clamped at the borders.
pub fn warp_image(img: &ScalarImage, def: &DeformationField) -> Result<ScalarImage> {
    if img.shape() != def.shape() {
        return Err(Error::DimMismatch {
            expected: img.dims().to_vec(),
            actual: def.shape().dims().to_vec(),
        });
    }
    let d = img.ndim();
    let mut coords = vec![0; d];
    let mut pos = vec![0.0; d];
    let mut values = Vec::with_capacity(img.len());
    for i in 0..img.len() {
        img.shape().coords_into(i, &mut coords);
        for (a, u) in def.get(i).iter().enumerate() {
            pos[a] = coords[a] as f64 + u;
        }
        values.push(sample_interpolated(img, &pos, BoundaryPolicy::ClampToEdge)?);
    }
    ScalarImage::new(img.dims().to_vec(), values)
}

/// Label of one candidate displacement at one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub label: f64,
    pub in_bounds: bool,
}

/// Intensities of `moving` at `v + d_k` for every displacement `d_k`.
///
/// Candidates that leave the grid are flagged and carry the edge-clamped value.
pub fn candidate_labels(moving: &ScalarImage, voxel: &[usize], set: &DisplacementSet) -> Result<Vec<Candidate>> {
    let mut out = Vec::with_capacity(set.len());
    candidate_labels_into(moving, voxel, set, &mut out)?;
    Ok(out)
}

pub(crate) fn candidate_labels_into(
    moving: &ScalarImage,
    voxel: &[usize],
    set: &DisplacementSet,
    out: &mut Vec<Candidate>,
) -> Result<()> {
    let d = moving.ndim();
    if set.dim() != d || voxel.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "image has {d} axes, displacements {} and voxel {}",
            set.dim(),
            voxel.len()
        )));
    }
    let dims = moving.dims();
    if voxel.iter().zip(dims).any(|(&c, &n)| c >= n) {
        return Err(Error::ShapeMismatch(format!("voxel {voxel:?} outside {dims:?}")));
    }
    let strides = moving.shape().strides();
    let values = moving.values();
    out.clear();
    for disp in set.iter() {
        let mut offset = 0;
        let mut in_bounds = true;
        for a in 0..d {
            let t = voxel[a] as i64 + disp[a] as i64;
            let clamped = t.clamp(0, dims[a] as i64 - 1);
            in_bounds &= clamped == t;
            offset += clamped as usize * strides[a];
        }
        out.push(Candidate {
            label: values[offset],
            in_bounds,
        });
    }
    Ok(())
}
