//! Transformation-space versus label-space uncertainty.
//!
//! A voxel's displacement `R_T` follows the categorical distribution `P(v)`.
//! The label it receives, `R_L = I(R_T)`, is a deterministic function of the
//! displacement, so its law is the pushforward of `P(v)` through the candidate
//! labels. Summary statistics of `P(v)` (its entropy, say) describe `R_T`;
//! they say little about `R_L`, which is what a reader of the registered image
//! actually depends on. This module computes both sides and the two competing
//! point estimates: the label of the most probable displacement and the most
//! probable label.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{candidate_labels_into, CategoricalField, DisplacementSet, ScalarImage, UNIT_SUM_TOL};
use crate::rwir::argmax_first;

/// Shannon entropy in bits, with `0 · log 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::NotADistribution("empty vector".into()));
    }
    if let Some(x) = p.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::NotADistribution(format!("entry {x}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > UNIT_SUM_TOL {
        return Err(Error::NotADistribution(format!("entries sum to {sum}")));
    }
    Ok(entropy_bits(p))
}

fn entropy_bits(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum();
    h.max(0.0)
}

/// Relative slack on bin edges so interpolation round-off just below an
/// edge (49.999999999999993 for 50) does not land in the lower bin.
const BIN_EDGE_SLACK: f64 = 1e-9;

/// Maps a label to the center of its bin `[w·n, w·(n+1))`; `bin_width == 0`
/// is the identity.
pub fn bin_label(label: f64, bin_width: f64) -> f64 {
    if bin_width > 0.0 {
        bin_width * (label / bin_width + BIN_EDGE_SLACK).floor() + bin_width / 2.0
    } else {
        label
    }
}

/// Distribution of the label a voxel receives: atoms sorted by strictly
/// increasing label, all with positive mass summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    atoms: Vec<(f64, f64)>,
}

impl LabelDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::NotADistribution("no atoms".into()));
        }
        if atoms.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::NotADistribution("labels must be strictly increasing".into()));
        }
        if atoms.iter().any(|&(l, p)| !l.is_finite() || !(p > 0.0 && p <= 1.0)) {
            return Err(Error::NotADistribution("atom mass outside (0, 1]".into()));
        }
        let sum: f64 = atoms.iter().map(|a| a.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotADistribution(format!("atoms sum to {sum}")));
        }
        Ok(LabelDistribution { atoms })
    }

    /// `(label, probability)` pairs, ascending by label.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Probability of `label`, zero when it is not an atom.
    pub fn mass_of(&self, label: f64) -> f64 {
        self.atoms.iter().find(|a| a.0 == label).map_or(0.0, |a| a.1)
    }
}

/// Accumulates the probability of every displacement onto its label.
///
/// With `bin_width > 0` labels are first snapped to bin centers. Input mass is
/// renormalized, so fields read back from single-precision storage still give
/// atoms summing to one.
pub fn pushforward(p: &[f64], labels: &[f64], bin_width: f64) -> Result<LabelDistribution> {
    let mut pairs = Vec::with_capacity(p.len());
    pushforward_into(p, labels, bin_width, &mut pairs)?;
    Ok(LabelDistribution { atoms: pairs })
}

fn pushforward_into(p: &[f64], labels: &[f64], bin_width: f64, atoms: &mut Vec<(f64, f64)>) -> Result<()> {
    if p.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: labels.len(),
        });
    }
    if !(bin_width >= 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "bin_width",
            reason: format!("must be non-negative, got {bin_width}"),
        });
    }
    if p.iter().any(|x| !(*x >= 0.0)) || labels.iter().any(|l| !l.is_finite()) {
        return Err(Error::NotADistribution("negative mass or non-finite label".into()));
    }
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NotADistribution("zero total mass".into()));
    }
    atoms.clear();
    atoms.extend(
        labels
            .iter()
            .zip(p)
            .filter(|(_, &q)| q > 0.0)
            .map(|(&l, &q)| (bin_label(l, bin_width), q)),
    );
    // stable, so equal labels keep their index order and sums are reproducible
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut write = 0;
    for read in 0..atoms.len() {
        if write > 0 && atoms[write - 1].0 == atoms[read].0 {
            atoms[write - 1].1 += atoms[read].1;
        } else {
            atoms[write] = atoms[read];
            write += 1;
        }
    }
    atoms.truncate(write);
    if total != 1.0 {
        atoms.iter_mut().for_each(|a| a.1 /= total);
    }
    Ok(())
}

/// Entropy of the label distribution, in bits.
pub fn label_entropy(ld: &LabelDistribution) -> f64 {
    let probs: Vec<f64> = ld.atoms.iter().map(|a| a.1).collect();
    entropy_bits(&probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMoments {
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
}

pub fn label_moments(ld: &LabelDistribution) -> LabelMoments {
    let mean: f64 = ld.atoms.iter().map(|&(l, p)| p * l).sum();
    let variance: f64 = ld
        .atoms
        .iter()
        .map(|&(l, p)| p * (l - mean) * (l - mean))
        .sum::<f64>()
        .max(0.0);
    LabelMoments {
        mean,
        variance,
        std: variance.sqrt(),
    }
}

/// Weighted lower quantile: the smallest label whose cumulative mass reaches `t`.
pub fn label_quantile(ld: &LabelDistribution, t: f64) -> f64 {
    let mut cum = 0.0;
    for &(l, p) in &ld.atoms {
        cum += p;
        if cum >= t - 1e-12 {
            return l;
        }
    }
    ld.atoms.last().map_or(f64::NAN, |a| a.0)
}

/// `q(0.75) − q(0.25)` under the weighted lower-quantile convention.
pub fn label_iqr(ld: &LabelDistribution) -> f64 {
    label_quantile(ld, 0.75) - label_quantile(ld, 0.25)
}

/// Most likely label; ties go to the smallest label.
pub fn mli(ld: &LabelDistribution) -> f64 {
    let mut best = ld.atoms[0];
    for &atom in &ld.atoms[1..] {
        if atom.1 > best.1 {
            best = atom;
        }
    }
    best.0
}

/// Label of the most probable displacement; ties go to the smallest index.
pub fn mode_label(p: &[f64], labels: &[f64]) -> Result<f64> {
    if p.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: labels.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::NotADistribution("empty vector".into()));
    }
    Ok(labels[argmax_first(p)])
}

/// Per-voxel uncertainty and correspondence maps, all on the grid of the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyMaps {
    pub dims: Vec<usize>,
    /// Entropy of `P(v)` in bits.
    pub transform_entropy: Vec<f64>,
    /// Entropy of the pushforward label distribution in bits.
    pub label_entropy: Vec<f64>,
    pub label_mean: Vec<f64>,
    pub label_variance: Vec<f64>,
    pub label_std: Vec<f64>,
    pub label_iqr: Vec<f64>,
    /// Label of the transformation mode (unbinned).
    pub mode_label: Vec<f64>,
    /// Most likely label (a bin center when binning is on).
    pub mli: Vec<f64>,
    /// MLI differs from the (binned) mode label.
    pub disagreement: Vec<bool>,
}

impl UncertaintyMaps {
    pub fn count_disagreement(&self) -> usize {
        self.disagreement.iter().filter(|&&d| d).count()
    }
}

struct VoxelStats {
    transform_entropy: f64,
    label_entropy: f64,
    moments: LabelMoments,
    iqr: f64,
    mode_label: f64,
    mli: f64,
    disagreement: bool,
}

fn voxel_stats(p: &[f64], labels: &[f64], bin_width: f64, atoms: &mut Vec<(f64, f64)>) -> Result<VoxelStats> {
    pushforward_into(p, labels, bin_width, atoms)?;
    let ld = LabelDistribution {
        atoms: std::mem::take(atoms),
    };
    let mode = mode_label(p, labels)?;
    let most_likely = mli(&ld);
    let stats = VoxelStats {
        transform_entropy: entropy_bits(p),
        label_entropy: label_entropy(&ld),
        moments: label_moments(&ld),
        iqr: label_iqr(&ld),
        mode_label: mode,
        mli: most_likely,
        disagreement: most_likely != bin_label(mode, bin_width),
    };
    *atoms = ld.atoms;
    Ok(stats)
}

/// Computes every uncertainty map for a solved field against the moving image.
///
/// Disagreement compares the MLI against the mode label snapped to the same
/// bin, so binning alone never produces a disagreement.
pub fn compute_uncertainty_maps(
    field: &CategoricalField,
    moving: &ScalarImage,
    set: &DisplacementSet,
    bin_width: f64,
) -> Result<UncertaintyMaps> {
    if field.shape() != moving.shape() || field.k() != set.len() || set.dim() != moving.ndim() {
        return Err(Error::ShapeMismatch(format!(
            "field {:?} with K = {}, moving image {:?}, {} displacements of dimension {}",
            field.dims(),
            field.k(),
            moving.dims(),
            set.len(),
            set.dim()
        )));
    }
    let shape = field.shape();
    let per_voxel = |i: usize| -> Result<VoxelStats> {
        let mut coords = vec![0; shape.ndim()];
        shape.coords_into(i, &mut coords);
        let mut candidates = Vec::with_capacity(set.len());
        candidate_labels_into(moving, &coords, set, &mut candidates)?;
        let labels: Vec<f64> = candidates.iter().map(|c| c.label).collect();
        let mut atoms = Vec::with_capacity(set.len());
        voxel_stats(field.at(i), &labels, bin_width, &mut atoms)
    };

    #[cfg(feature = "parallel")]
    let stats: Result<Vec<VoxelStats>> = (0..shape.len()).into_par_iter().map(per_voxel).collect();
    #[cfg(not(feature = "parallel"))]
    let stats: Result<Vec<VoxelStats>> = (0..shape.len()).map(per_voxel).collect();
    let stats = stats?;

    Ok(UncertaintyMaps {
        dims: shape.dims().to_vec(),
        transform_entropy: stats.iter().map(|s| s.transform_entropy).collect(),
        label_entropy: stats.iter().map(|s| s.label_entropy).collect(),
        label_mean: stats.iter().map(|s| s.moments.mean).collect(),
        label_variance: stats.iter().map(|s| s.moments.variance).collect(),
        label_std: stats.iter().map(|s| s.moments.std).collect(),
        label_iqr: stats.iter().map(|s| s.iqr).collect(),
        mode_label: stats.iter().map(|s| s.mode_label).collect(),
        mli: stats.iter().map(|s| s.mli).collect(),
        disagreement: stats.iter().map(|s| s.disagreement).collect(),
    })
}
