//! Periodic-box Fourier representation of scalar, vector and tensor fields.

pub mod field;
pub mod grid;
pub mod ops;
pub mod physical;
pub mod random;

pub use field::{l2_distance_across, transfer, Field, ScalarField, TensorField, VectorField};
pub use grid::{modes_for_cutoff, SpectralGrid, DEFAULT_DEALIAS_FRACTION};
pub use ops::{
    bessel, dealias, dealiased_product, divergence_tensor, divergence_vector, gradient_scalar,
    gradient_vector, hs_inner, hs_norm, hs_norm_sq, laplacian, leray_project, linf_norm, truncate,
    truncate_to_grid,
};
pub use random::{random_field, FieldKind, RandomField};
