//! Random-walker regularized estimation of per-voxel displacement distributions.
//!
//! Each label `k` gets an independent quadratic problem
//!
//! ```text
//! min_p  Σ_edges w_ij (p(i) − p(j))²  +  γ Σ_i (p(i) − u_k(i))²
//! ```
//!
//! whose normal equations are the SPD system `(L + γI) p_k = γ u_k`, with `L`
//! the combinatorial Laplacian of the 4/6-neighbour lattice. Because the unary
//! probabilities sum to one per voxel and `(L + γI)·1 = γ·1`, the K solutions
//! also sum to one per voxel, and the discrete maximum principle keeps each of
//! them inside `[0, 1]`.

use nalgebra::DMatrix;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{candidate_labels_into, CategoricalField, DisplacementSet, ScalarImage, Shape};

/// Floor applied to raw unary weights before normalization.
pub const UNARY_FLOOR: f64 = 1e-12;
/// Raw solution entries in `[-NEGATIVE_CLAMP, 0)` are set to zero; anything
/// lower is reported as an error.
pub const NEGATIVE_CLAMP: f64 = 1e-8;
/// Largest grid accepted by [`rwir_solve_dense_oracle`].
pub const DENSE_ORACLE_LIMIT: usize = 256;

/// Data term: a categorical field whose rows sum to one within `1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField(CategoricalField);

impl UnaryField {
    pub fn new(dims: impl Into<Vec<usize>>, k: usize, probs: Vec<f64>) -> Result<Self> {
        CategoricalField::with_tolerance(dims, k, probs, 1e-9).map(UnaryField)
    }

    pub fn as_field(&self) -> &CategoricalField {
        &self.0
    }

    pub fn into_field(self) -> CategoricalField {
        self.0
    }

    pub fn k(&self) -> usize {
        self.0.k()
    }

    pub fn shape(&self) -> &Shape {
        self.0.shape()
    }
}

/// Gaussian intensity-difference likelihood of every candidate displacement.
///
/// Out-of-bounds candidates get raw weight zero. All raw weights are floored at
/// [`UNARY_FLOOR`] and each voxel is normalized to sum one.
pub fn unary_likelihood(
    fixed: &ScalarImage,
    moving: &ScalarImage,
    set: &DisplacementSet,
    sigma: f64,
) -> Result<UnaryField> {
    if fixed.shape() != moving.shape() {
        return Err(Error::DimMismatch {
            expected: fixed.dims().to_vec(),
            actual: moving.dims().to_vec(),
        });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("must be positive and finite, got {sigma}"),
        });
    }
    let k = set.len();
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let shape = fixed.shape();
    let mut coords = vec![0; shape.ndim()];
    let mut candidates = Vec::with_capacity(k);
    let mut probs = Vec::with_capacity(shape.len() * k);
    for (i, &f) in fixed.values().iter().enumerate() {
        shape.coords_into(i, &mut coords);
        candidate_labels_into(moving, &coords, set, &mut candidates)?;
        if !candidates.iter().any(|c| c.in_bounds) {
            return Err(Error::AllCandidatesOutOfBounds { voxel: i });
        }
        let start = probs.len();
        probs.extend(candidates.iter().map(|c| {
            let w = if c.in_bounds {
                let r = f - c.label;
                (-r * r * inv_two_var).exp()
            } else {
                0.0
            };
            w.max(UNARY_FLOOR)
        }));
        let sum: f64 = probs[start..].iter().sum();
        probs[start..].iter_mut().for_each(|p| *p /= sum);
    }
    UnaryField::new(shape.dims().to_vec(), k, probs)
}

/// Positive weights on the edges of the 4-neighbour (2D) or 6-neighbour (3D)
/// lattice.
///
/// Weights are stored per axis: entry `i` of axis `a` is the weight of the
/// edge between voxel `i` and its successor along `a`, or zero when `i` sits on
/// the last slice of that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWeights {
    shape: Shape,
    axes: Vec<Vec<f64>>,
}

impl LatticeWeights {
    /// Builds weights from `f(i, j)` evaluated on every edge `i < j`.
    pub fn from_fn(shape: &Shape, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = shape.len();
        let strides = shape.strides();
        let mut coords = vec![0; shape.ndim()];
        let mut axes = vec![vec![0.0; n]; shape.ndim()];
        for i in 0..n {
            shape.coords_into(i, &mut coords);
            for (a, axis) in axes.iter_mut().enumerate() {
                if coords[a] + 1 < shape.dims()[a] {
                    let w = f(i, i + strides[a]);
                    if !(w > 0.0 && w.is_finite()) {
                        return Err(Error::InvalidParameter {
                            name: "edge weight",
                            reason: format!("edge ({i}, {}) has weight {w}", i + strides[a]),
                        });
                    }
                    axis[i] = w;
                }
            }
        }
        Ok(LatticeWeights {
            shape: shape.clone(),
            axes,
        })
    }

    pub fn uniform(shape: &Shape, w: f64) -> Result<Self> {
        Self::from_fn(shape, |_, _| w)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Weight of the edge from `voxel` to its successor along `axis`.
    pub fn edge(&self, axis: usize, voxel: usize) -> Option<f64> {
        let w = self.axes[axis][voxel];
        (w > 0.0).then_some(w)
    }

    /// Iterates `(i, j, w)` over all edges, axis by axis.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let strides = self.shape.strides();
        self.axes.iter().zip(strides).flat_map(|(axis, s)| {
            axis.iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(move |(i, &w)| (i, i + s, w))
        })
    }

    /// Weighted degree of every voxel.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.shape.len()];
        for (i, j, w) in self.edges() {
            deg[i] += w;
            deg[j] += w;
        }
        deg
    }

    pub fn min_weight(&self) -> Option<f64> {
        self.edges().map(|(_, _, w)| w).reduce(f64::min)
    }

    /// `y = (L + γI) x`.
    fn apply(&self, gamma: f64, x: &[f64], y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = gamma * xi;
        }
        for (axis, s) in self.axes.iter().zip(self.shape.strides()) {
            for (i, &w) in axis.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let flow = w * (x[i] - x[i + s]);
                y[i] += flow;
                y[i + s] -= flow;
            }
        }
    }
}

/// Image-adaptive random-walker weights `exp(−β ΔI²) + w_min` on the fixed image.
pub fn edge_weights(fixed: &ScalarImage, beta: f64, w_min: f64) -> Result<LatticeWeights> {
    if !(w_min > 0.0 && w_min.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "w_min",
            reason: format!("must be positive, got {w_min}"),
        });
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("must be non-negative, got {beta}"),
        });
    }
    let v = fixed.values();
    LatticeWeights::from_fn(fixed.shape(), |i, j| {
        let diff = v[i] - v[j];
        (-beta * diff * diff).exp() + w_min
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Data-fidelity weight.
    pub gamma: f64,
    /// Tolerance on the 2-norm of the residual of `(L/γ + I) p = u`, the
    /// system divided by γ. Its smallest eigenvalue is at least 1, so this
    /// also bounds the error of every solution entry.
    pub cg_tol: f64,
    /// Iteration cap; `None` means ten times the voxel count.
    pub cg_max_iter: Option<usize>,
    /// Solve labels one after another on the calling thread.
    pub deterministic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gamma: 1.0,
            cg_tol: 1e-8,
            cg_max_iter: None,
            deterministic: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be positive, got {}", self.gamma),
            });
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "cg_tol",
                reason: format!("must be positive, got {}", self.cg_tol),
            });
        }
        if self.cg_max_iter == Some(0) {
            return Err(Error::InvalidParameter {
                name: "cg_max_iter",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Unprocessed per-label solutions, before clamping and renormalization.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub shape: Shape,
    /// `labels[k][i]` is the solution for label `k` at voxel `i`.
    pub labels: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
}

impl RawSolution {
    /// `Σ_k p_k(i)` for every voxel.
    pub fn voxel_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.shape.len()];
        for p in &self.labels {
            sums.iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        sums
    }

    /// Clamps tiny negatives and renormalizes every voxel.
    pub fn finalize(&self) -> Result<CategoricalField> {
        let n = self.shape.len();
        let k = self.labels.len();
        let mut probs = vec![0.0; n * k];
        for (label, p) in self.labels.iter().enumerate() {
            for (voxel, &x) in p.iter().enumerate() {
                if x < -NEGATIVE_CLAMP || !x.is_finite() {
                    return Err(Error::NegativeProbability { label, voxel, value: x });
                }
                probs[voxel * k + label] = x.max(0.0);
            }
        }
        for row in probs.chunks_exact_mut(k) {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
        }
        CategoricalField::new(self.shape.dims().to_vec(), k, probs)
    }
}

fn check_shapes(unary: &UnaryField, weights: &LatticeWeights) -> Result<()> {
    if unary.shape() != weights.shape() {
        return Err(Error::ShapeMismatch(format!(
            "unary field is {:?}, weights are {:?}",
            unary.shape().dims(),
            weights.shape().dims()
        )));
    }
    Ok(())
}

fn label_column(unary: &UnaryField, k: usize) -> Vec<f64> {
    unary.as_field().iter().map(|row| row[k]).collect()
}

/// Jacobi-preconditioned conjugate gradients on `(L + γI) x = b`, started
/// from `x0`, until `‖r‖ / γ ≤ tol`. Returns the solution and the iteration count.
#[allow(clippy::too_many_arguments)]
fn pcg(
    weights: &LatticeWeights,
    gamma: f64,
    diag: &[f64],
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
    label: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let mut x = x0;
    let mut ap = vec![0.0; n];
    weights.apply(gamma, &x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / gamma;
    let mut iter = 0;
    while res > tol {
        if iter == max_iter {
            return Err(Error::CgDidNotConverge {
                label,
                residual: res,
                iterations: iter,
            });
        }
        weights.apply(gamma, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / gamma;
        iter += 1;
    }
    Ok((x, iter))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the K label systems and returns them untouched.
pub fn rwir_solve_raw(unary: &UnaryField, weights: &LatticeWeights, opts: &SolverOptions) -> Result<RawSolution> {
    opts.validate()?;
    check_shapes(unary, weights)?;
    let n = unary.shape().len();
    let gamma = opts.gamma;
    let max_iter = opts.cg_max_iter.unwrap_or(10 * n);
    let diag: Vec<f64> = weights.degrees().iter().map(|d| d + gamma).collect();

    let solve = |k: usize| -> Result<(Vec<f64>, usize)> {
        let u = label_column(unary, k);
        let b: Vec<f64> = u.iter().map(|x| gamma * x).collect();
        pcg(weights, gamma, &diag, &b, u, opts.cg_tol, max_iter, k)
    };

    #[cfg(feature = "parallel")]
    let solved: Result<Vec<_>> = if opts.deterministic {
        (0..unary.k()).map(solve).collect()
    } else {
        (0..unary.k()).into_par_iter().map(solve).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let solved: Result<Vec<_>> = (0..unary.k()).map(solve).collect();

    let (labels, iterations) = solved?.into_iter().unzip();
    Ok(RawSolution {
        shape: unary.shape().clone(),
        labels,
        iterations,
    })
}

/// Per-voxel displacement distribution regularized by the lattice weights.
pub fn rwir_solve(unary: &UnaryField, weights: &LatticeWeights, opts: &SolverOptions) -> Result<CategoricalField> {
    rwir_solve_raw(unary, weights, opts)?.finalize()
}

/// Dense Cholesky solve of the same systems; a correctness oracle for small grids.
pub fn rwir_solve_dense_oracle_raw(unary: &UnaryField, weights: &LatticeWeights, gamma: f64) -> Result<RawSolution> {
    check_shapes(unary, weights)?;
    let shape = unary.shape();
    let n = shape.len();
    if n > DENSE_ORACLE_LIMIT {
        return Err(Error::InstanceTooLarge {
            voxels: n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    // assemble from neighbour coordinates rather than the stride layout
    let mut a = DMatrix::<f64>::identity(n, n) * gamma;
    let mut coords = vec![0; shape.ndim()];
    for i in 0..n {
        shape.coords_into(i, &mut coords);
        for axis in 0..shape.ndim() {
            if coords[axis] + 1 == shape.dims()[axis] {
                continue;
            }
            let mut next = coords.clone();
            next[axis] += 1;
            let j = shape.index(&next);
            let w = weights.edge(axis, i).expect("interior edge has a weight");
            a[(i, i)] += w;
            a[(j, j)] += w;
            a[(i, j)] -= w;
            a[(j, i)] -= w;
        }
    }
    let k = unary.k();
    let rhs = DMatrix::from_fn(n, k, |i, l| gamma * unary.as_field().at(i)[l]);
    let chol = a.cholesky().ok_or_else(|| Error::InvalidParameter {
        name: "gamma",
        reason: "system matrix is not positive definite".into(),
    })?;
    let sol = chol.solve(&rhs);
    let labels = (0..k).map(|l| sol.column(l).iter().copied().collect()).collect();
    Ok(RawSolution {
        shape: shape.clone(),
        labels,
        iterations: vec![0; k],
    })
}

pub fn rwir_solve_dense_oracle(unary: &UnaryField, weights: &LatticeWeights, gamma: f64) -> Result<CategoricalField> {
    rwir_solve_dense_oracle_raw(unary, weights, gamma)?.finalize()
}

/// Index of the most probable displacement per voxel; ties go to the smallest index.
pub fn mode_field(field: &CategoricalField, set: &DisplacementSet) -> Result<Vec<usize>> {
    if field.k() != set.len() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} labels, displacement set has {}",
            field.k(),
            set.len()
        )));
    }
    Ok(field.iter().map(argmax_first).collect())
}

pub(crate) fn argmax_first(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in p.iter().enumerate().skip(1) {
        if x > p[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_displacement_set;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(dims: &[usize]) -> Shape {
        Shape::new(dims.to_vec()).unwrap()
    }

    fn random_unary(rng: &mut ChaCha8Rng, dims: &[usize], k: usize) -> UnaryField {
        let n: usize = dims.iter().product();
        let mut probs = Vec::with_capacity(n * k);
        for _ in 0..n {
            let row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = row.iter().sum();
            probs.extend(row.iter().map(|x| x / s));
        }
        UnaryField::new(dims.to_vec(), k, probs).unwrap()
    }

    fn random_weights(rng: &mut ChaCha8Rng, dims: &[usize]) -> LatticeWeights {
        LatticeWeights::from_fn(&shape(dims), |_, _| rng.gen_range(1e-3..2.0)).unwrap()
    }

    #[test]
    fn unary_dominant_candidate() {
        // voxel (0, 0) of a 1x3 row: candidate (0, 1) matches, the others are 60 away
        let fixed = ScalarImage::new(vec![1, 3], vec![100.0, 0.0, 0.0]).unwrap();
        let moving = ScalarImage::new(vec![1, 3], vec![40.0, 100.0, 160.0]).unwrap();
        let set = DisplacementSet::new(2, &[vec![0, 0], vec![0, 1], vec![0, 2]]).unwrap();
        let u = unary_likelihood(&fixed, &moving, &set, 0.1).unwrap();
        assert!(u.as_field().at(0)[1] >= 1.0 - 1e-9);
    }

    #[test]
    fn unary_constant_images_are_uniform() {
        let img = ScalarImage::constant(vec![5, 4], 80.0).unwrap();
        let set = make_displacement_set(2, 1).unwrap();
        let u = unary_likelihood(&img, &img, &set, 10.0).unwrap();
        // interior voxels see nine in-bounds candidates
        let interior = img.shape().index(&[2, 1]);
        for &p in u.as_field().at(interior) {
            assert_abs_diff_eq!(p, 1.0 / 9.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn unary_two_candidate_values() {
        let fixed = ScalarImage::new(vec![1, 2], vec![100.0, 100.0]).unwrap();
        let moving = ScalarImage::new(vec![1, 2], vec![100.0, 110.0]).unwrap();
        let set = DisplacementSet::new(2, &[vec![0, 0], vec![0, 1]]).unwrap();
        let u = unary_likelihood(&fixed, &moving, &set, 10.0).unwrap();
        // frozen: 1 / (1 + e^-0.5) and e^-0.5 / (1 + e^-0.5)
        assert_abs_diff_eq!(u.as_field().at(0)[0], 0.622_459_331, epsilon = 1e-4);
        assert_abs_diff_eq!(u.as_field().at(0)[1], 0.377_540_669, epsilon = 1e-4);
    }

    #[test]
    fn unary_errors() {
        let a = ScalarImage::constant(vec![2, 2], 0.0).unwrap();
        let b = ScalarImage::constant(vec![2, 3], 0.0).unwrap();
        let set = make_displacement_set(2, 1).unwrap();
        assert!(matches!(
            unary_likelihood(&a, &b, &set, 1.0),
            Err(Error::DimMismatch { .. })
        ));
        assert!(unary_likelihood(&a, &a, &set, 0.0).is_err());
        let far = DisplacementSet::new(2, &[vec![5, 5], vec![-5, 5]]).unwrap();
        assert!(matches!(
            unary_likelihood(&a, &a, &far, 1.0),
            Err(Error::AllCandidatesOutOfBounds { voxel: 0 })
        ));
    }

    #[test]
    fn edge_weight_values() {
        let constant = ScalarImage::constant(vec![3, 3], 12.0).unwrap();
        let w = edge_weights(&constant, 0.05, 1e-6).unwrap();
        assert_eq!(w.edges().count(), 12);
        assert!(w.edges().all(|(_, _, w)| w == 1.0 + 1e-6));

        let ramp = ScalarImage::from_fn(vec![3, 3], |c| 40.0 * c[1] as f64).unwrap();
        let w = edge_weights(&ramp, 0.0, 1e-6).unwrap();
        assert!(w.edges().all(|(_, _, w)| w == 1.0 + 1e-6));

        let step = ScalarImage::new(vec![1, 2], vec![0.0, 10.0]).unwrap();
        let w = edge_weights(&step, 0.05, 1e-6).unwrap();
        // e^-5 + 1e-6
        assert_abs_diff_eq!(w.edge(1, 0).unwrap(), 0.006_738_947, epsilon = 1e-9);
        assert!(edge_weights(&step, 0.05, 0.0).is_err());
    }

    #[test]
    fn single_voxel_returns_unary() {
        let u = UnaryField::new(vec![1, 1], 3, vec![0.2, 0.5, 0.3]).unwrap();
        let w = LatticeWeights::uniform(&shape(&[1, 1]), 1.0).unwrap();
        let p = rwir_solve(&u, &w, &SolverOptions::default()).unwrap();
        assert_eq!(p.probs(), u.as_field().probs());
        let q = rwir_solve_dense_oracle(&u, &w, 1.0).unwrap();
        assert_abs_diff_eq!(q.max_abs_diff(u.as_field()), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_voxel_hand_solution() {
        // (L + I) = [[2, -1], [-1, 2]]; u_1 = (1, 0) gives (2/3, 1/3)
        let u = UnaryField::new(vec![1, 2], 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w = LatticeWeights::uniform(&shape(&[1, 2]), 1.0).unwrap();
        let opts = SolverOptions {
            gamma: 1.0,
            ..SolverOptions::default()
        };
        for p in [
            rwir_solve(&u, &w, &opts).unwrap(),
            rwir_solve_dense_oracle(&u, &w, 1.0).unwrap(),
        ] {
            assert_abs_diff_eq!(p.at(0)[0], 2.0 / 3.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.at(1)[0], 1.0 / 3.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.at(0)[1], 1.0 / 3.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.at(1)[1], 2.0 / 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn large_gamma_recovers_unary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_unary(&mut rng, &[6, 5], 9);
        let w = random_weights(&mut rng, &[6, 5]);
        let opts = SolverOptions {
            gamma: 1e8,
            ..SolverOptions::default()
        };
        let p = rwir_solve(&u, &w, &opts).unwrap();
        assert!(p.max_abs_diff(u.as_field()) <= 1e-6);
        let q = rwir_solve_dense_oracle(&u, &w, 1e8).unwrap();
        assert!(q.max_abs_diff(u.as_field()) <= 1e-6);
    }

    #[test]
    fn uniform_unary_stays_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = UnaryField::new(vec![4, 4], 4, vec![0.25; 64]).unwrap();
        let w = random_weights(&mut rng, &[4, 4]);
        for gamma in [0.01, 1.0, 100.0] {
            let opts = SolverOptions {
                gamma,
                ..SolverOptions::default()
            };
            let p = rwir_solve(&u, &w, &opts).unwrap();
            assert!(p.probs().iter().all(|&x| x == 0.25));
            let q = rwir_solve_dense_oracle(&u, &w, gamma).unwrap();
            assert!(q.probs().iter().all(|&x| (x - 0.25).abs() < 1e-12));
        }
    }

    #[test]
    fn oracle_guard_and_shape_checks() {
        let u = UnaryField::new(vec![17, 16], 1, vec![1.0; 272]).unwrap();
        let w = LatticeWeights::uniform(u.shape(), 1.0).unwrap();
        assert!(matches!(
            rwir_solve_dense_oracle(&u, &w, 1.0),
            Err(Error::InstanceTooLarge { voxels: 272, .. })
        ));
        let w2 = LatticeWeights::uniform(&shape(&[16, 17]), 1.0).unwrap();
        assert!(matches!(
            rwir_solve(&u, &w2, &SolverOptions::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_unary(&mut rng, &[8, 8], 3);
        let w = random_weights(&mut rng, &[8, 8]);
        let opts = SolverOptions {
            gamma: 0.01,
            cg_tol: 1e-14,
            cg_max_iter: Some(1),
            deterministic: true,
        };
        assert!(matches!(rwir_solve(&u, &w, &opts), Err(Error::CgDidNotConverge { .. })));
    }

    #[test]
    fn deterministic_runs_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_unary(&mut rng, &[10, 9], 9);
        let w = random_weights(&mut rng, &[10, 9]);
        let opts = SolverOptions {
            deterministic: true,
            ..SolverOptions::default()
        };
        let a = rwir_solve(&u, &w, &opts).unwrap();
        let b = rwir_solve(&u, &w, &opts).unwrap();
        assert_eq!(a, b);
        let parallel = rwir_solve(
            &u,
            &w,
            &SolverOptions {
                deterministic: false,
                ..opts
            },
        )
        .unwrap();
        assert_eq!(a, parallel);
    }

    #[test]
    fn mode_field_tie_breaks() {
        let set = DisplacementSet::new(
            2,
            &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1], vec![2, 0], vec![2, 1]],
        )
        .unwrap();
        let p = CategoricalField::new(vec![1, 1], 6, vec![0.1, 0.1, 0.4, 0.1, 0.1, 0.2]).unwrap();
        assert_eq!(mode_field(&p, &set).unwrap(), vec![2]);
        let two = DisplacementSet::new(2, &[vec![0, 0], vec![0, 1]]).unwrap();
        let p = CategoricalField::new(vec![1, 1], 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(mode_field(&p, &two).unwrap(), vec![0]);
        let p = CategoricalField::uniform(vec![2, 2], 6).unwrap();
        assert_eq!(mode_field(&p, &set).unwrap(), vec![0; 4]);
        assert!(mode_field(&p, &two).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solver_matches_dense_oracle(
            rows in 1usize..9, cols in 1usize..9, k in 1usize..10,
            log_gamma in -2.0f64..2.0, seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = [rows, cols];
            let u = random_unary(&mut rng, &dims, k);
            let w = random_weights(&mut rng, &dims);
            let gamma = 10f64.powf(log_gamma);
            let opts = SolverOptions { gamma, deterministic: true, ..SolverOptions::default() };
            let raw = rwir_solve_raw(&u, &w, &opts).unwrap();
            for s in raw.voxel_sums() {
                prop_assert!((s - 1.0).abs() <= 1e-6);
            }
            for p in &raw.labels {
                prop_assert!(p.iter().all(|&x| (-1e-8..=1.0 + 1e-8).contains(&x)));
            }
            let cg = raw.finalize().unwrap();
            let dense = rwir_solve_dense_oracle(&u, &w, gamma).unwrap();
            prop_assert!(cg.max_abs_diff(&dense) <= 1e-6);
        }

        #[test]
        fn solver_handles_3d_grids(
            d0 in 1usize..4, d1 in 1usize..4, d2 in 1usize..4, seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = [d0, d1, d2];
            let u = random_unary(&mut rng, &dims, 5);
            let w = random_weights(&mut rng, &dims);
            let opts = SolverOptions { gamma: 0.5, ..SolverOptions::default() };
            let cg = rwir_solve(&u, &w, &opts).unwrap();
            let dense = rwir_solve_dense_oracle(&u, &w, 0.5).unwrap();
            prop_assert!(cg.max_abs_diff(&dense) <= 1e-6);
        }
    }
}
