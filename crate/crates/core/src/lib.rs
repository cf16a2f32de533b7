//! Geometry and spectral building blocks for point-cloud texturing: meshes,
//! robust Laplacians, truncated eigenbases, heat diffusion and online sampling.

pub mod cholesky;
pub mod error;
pub mod gradients;
pub mod io;
pub mod knn;
pub mod laplacian;
pub mod mesh;
pub mod sampling;
pub mod seeds;
pub mod shapes;
pub mod sparse;
pub mod spectral;
pub mod texture;

pub use error::{Error, Result};
pub use mesh::{Mesh, Vec3};
pub use sparse::{MassMatrix, SparseOperator};
pub use spectral::{Mass, SpectralBasis};
