//! Discrete probabilistic image registration and label-space uncertainty.
//!
//! The pipeline: build a displacement label space ([`grid`]), estimate a
//! per-voxel categorical distribution over it with a random-walker solver
//! ([`rwir`]), then push that distribution through the moving image's
//! intensities to measure how uncertain the *registered intensity* actually is
//! ([`uncertainty`]). [`experiments`] holds the worked numeric examples and the
//! synthetic-distortion study; [`io`] the file formats.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod rwir;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::{
    candidate_labels, make_displacement_set, sample_interpolated, warp_image, BoundaryPolicy, Candidate,
    CategoricalField, DeformationField, DisplacementSet, ScalarImage, Shape,
};
pub use rwir::{
    edge_weights, mode_field, rwir_solve, rwir_solve_dense_oracle, unary_likelihood, LatticeWeights, SolverOptions,
    UnaryField,
};
pub use uncertainty::{
    bin_label, compute_uncertainty_maps, label_entropy, label_iqr, label_moments, mli, mode_label, pushforward,
    shannon_entropy, LabelDistribution, UncertaintyMaps,
};
