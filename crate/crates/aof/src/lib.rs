//! Frequency-domain adversarial perturbation of 3D point clouds.
//!
//! The library decomposes a point cloud's coordinate signals on the eigenbasis
//! of its kNN-graph Laplacian, concentrates an adversarial perturbation in the
//! low-frequency band, and evaluates the resulting attacks against a small
//! differentiable point-cloud classifier, a full-spectrum baseline attack, and
//! the SRS/SOR input-transformation defenses.
//!
//! Modules:
//! - [`pointcloud`]: core data types, XYZ/OFF ingestion, synthetic shape dataset
//! - [`spectral`]: kNN graph, Laplacian, eigendecomposition, frequency split
//! - [`model`]: shared-MLP + max-pool classifier with hand-written gradients
//! - [`attack`]: low-frequency attack, margin losses, full-spectrum baseline
//! - [`defense`]: simple random sampling and statistical outlier removal
//! - [`eval`]: ASR, transferability matrices, sweeps, spectral energy CDFs

pub mod attack;
pub mod optim;
pub mod defense;
pub mod eval;
pub mod model;
pub mod pointcloud;
pub mod spectral;

pub use pointcloud::{LabeledDataset, PointCloud};
pub use spectral::SpectralBasis;
