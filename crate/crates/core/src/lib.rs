//! Spectral shape descriptors (GPS, HKS, WKS) on triangle meshes and a
//! Siamese multilayer perceptron that learns a 15-dimensional embedding in
//! which Euclidean distance acts as a point-correspondence metric for
//! non-isometric shapes.
//!
//! Pipeline:
//!
//! 1. [`mesh`]: load a [`TriMesh`], compute edge-graph geodesics.
//! 2. [`laplace`]: cotangent stiffness + lumped mass, smallest eigenpairs
//!    through a named [`laplace::EigenSolver`].
//! 3. [`descriptors`]: per-vertex GPS / HKS / WKS fields through a named
//!    [`descriptors::DescriptorKernel`].
//! 4. [`corpus`]: registered corpora and contrastive pair sampling.
//! 5. [`siamese`]: the shared-weight branch network, loss, Adam, training.
//! 6. [`eval`]: nearest-neighbour matching and evaluation statistics.
//!
//! [`intrinsic_dim`] is an analysis tool for descriptor populations.

pub mod corpus;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod intrinsic_dim;
pub mod laplace;
pub mod mesh;
pub mod siamese;
pub mod synth;

mod binio;

pub use error::{Error, Result};
pub use mesh::TriMesh;
