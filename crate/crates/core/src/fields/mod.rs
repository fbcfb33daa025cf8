//! Periodic grid, field containers and discrete differential/spectral
//! operators that every other module consumes.

mod field;
mod grid;
pub mod interp;
pub mod io;
pub mod spectral;

pub use field::{tensor_product, ScalarField, TensorField, VectorField};
pub use grid::Grid;
pub use spectral::{
    advect, component_range, curl_l2_norm, divergence, gradient, jacobian, l2_norm,
    l2_norm_scalar, laplacian, laplacian_vector, sobolev_inner, sobolev_norm,
    sobolev_norm_scalar, sobolev_norm_tensor, spectral_derivative, sup_norm, sup_norm_scalar,
    tensor_divergence, upsample, upsample_scalar,
};
